#include "planevol/model.hpp"

#include "planevol/rng.hpp"

namespace planevol {

void ModelConfig::validate() const {
    if (width < 1 || height < 1) throw DomainError("model: image size must be positive");
    if (planes < 2) throw DomainError("model: planes must be at least 2");
    if (fine_samples < 1) throw DomainError("model: fine_samples must be at least 1");
    if (!(near > 0.0) || !(near < far)) throw DomainError("model: need 0 < near < far");
    if (extractor_hidden < 1) throw DomainError("model: extractor_hidden must be positive");
}

Model::Model(const ModelConfig& config) : config_(config) {
    config_.validate();
    predictor_ = MpiPredictor(store_, config_.mode, plane_depths(config_.near, config_.far, config_.planes),
                              config_.width, config_.height);
    extractor_ = FeatureExtractor(store_, ParamGroup::fine, config_.extractor_hidden);
    decoder_ = FineDecoder(store_, ParamGroup::fine);
}

void Model::initialize(std::uint64_t seed) {
    predictor_.initialize(store_, derive_stream(seed, {1}));
    extractor_.initialize(store_, derive_stream(seed, {2}));
    decoder_.initialize(store_, derive_stream(seed, {3}), config_.fine_sigma_bias);
}

bool Model::trains_in_coarse_stage(std::size_t block) const {
    const ParamBlock& b = store_.block(block);
    if (b.group == ParamGroup::coarse) return true;
    return config_.mode == MpiMode::feedforward && b.name.starts_with("extractor.");
}

}  // namespace planevol
