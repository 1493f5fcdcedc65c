#pragma once

#include <cstdint>

#include "planevol/field.hpp"
#include "planevol/params.hpp"

namespace planevol {

struct ModelConfig {
    int width = 48;
    int height = 48;
    int planes = 32;
    int fine_samples = 16;
    double near = 1.0;
    double far = 40.0 / 9.0;
    MpiMode mode = MpiMode::direct;
    int extractor_hidden = 32;
    double fine_sigma_bias = -3.0;

    void validate() const;  // throws DomainError
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Coarse predictor, feature extractor and fine decoder over one parameter store.
/// Coarse blocks are in the coarse group, extractor and decoder in the fine group.
class Model {
public:
    explicit Model(const ModelConfig& config);

    void initialize(std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    ParameterStore& store() { return store_; }
    const ParameterStore& store() const { return store_; }
    const FeatureExtractor& extractor() const { return extractor_; }
    const FineDecoder& decoder() const { return decoder_; }
    const MpiPredictor& predictor() const { return predictor_; }
    const std::vector<double>& depths() const { return predictor_.depths(); }

    /// The coarse MPI depends on the feature extractor (feedforward, not yet materialized).
    bool coarse_needs_features() const { return !predictor_.uses_grid(store_); }

    /// True for blocks that the coarse stage trains: the coarse group plus, in
    /// feedforward mode, the extractor feeding the head.
    bool trains_in_coarse_stage(std::size_t block) const;

private:
    ModelConfig config_;
    ParameterStore store_;
    FeatureExtractor extractor_;
    FineDecoder decoder_;
    MpiPredictor predictor_;
};

}  // namespace planevol
