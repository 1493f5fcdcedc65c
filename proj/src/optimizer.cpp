#include "planevol/optimizer.hpp"

#include <cmath>
#include <string>

#include "planevol/rng.hpp"

namespace planevol {

AdamState::AdamState(const ParameterStore& store) {
    for (const auto& b : store.blocks()) {
        m.emplace_back(b.size(), 0.0);
        v.emplace_back(b.size(), 0.0);
    }
    steps.assign(store.block_count(), 0);
}

bool AdamState::matches(const ParameterStore& store) const {
    if (m.size() != store.block_count() || v.size() != m.size() || steps.size() != m.size()) return false;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i].size() != store.block(i).size() || v[i].size() != m[i].size()) return false;
    }
    return true;
}

void adam_step(ParameterStore& store, AdamState& state, const Gradients& grads, std::span<const double> lr,
               const AdamConfig& config) {
    if (!state.matches(store) || grads.block_count() != store.block_count() || lr.size() != store.block_count()) {
        throw DomainError("adam_step: parameter, gradient and state layouts differ");
    }
    for (std::size_t b = 0; b < store.block_count(); ++b) {
        if (!(lr[b] > 0.0)) continue;
        auto values = store.values(b);
        const auto g = grads.block(b);
        if (g.size() != values.size()) throw DomainError("adam_step: gradient block has the wrong size");
        auto& m = state.m[b];
        auto& v = state.v[b];
        const std::uint64_t t = ++state.steps[b];
        const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < values.size(); ++i) {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            values[i] -= lr[b] * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.epsilon);
        }
    }
}

void adam_step(ParameterStore& store, AdamState& state, const Gradients& grads, double lr, const AdamConfig& config) {
    std::vector<double> rates(store.block_count(), 0.0);
    for (std::size_t b = 0; b < rates.size(); ++b) {
        if (store.block(b).group != ParamGroup::frozen) rates[b] = lr;
    }
    adam_step(store, state, grads, rates, config);
}

void TrainConfig::validate() const {
    if (stage1_steps < 0 || stage2_steps < 0) throw DomainError("train: step counts must be >= 0");
    if (patch < 1) throw DomainError("train: patch must be positive");
    if (!(lr_coarse > 0.0) || !(lr_fine > 0.0)) throw DomainError("train: learning rates must be positive");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw DomainError("train: decay_factor must lie in (0, 1]");
    if (decay_every < 1) throw DomainError("train: decay_every must be positive");
    if (checkpoint_every < 0) throw DomainError("train: checkpoint_every must be >= 0");
    if (!(divergence_threshold > 0.0)) throw DomainError("train: divergence_threshold must be positive");
}

TrainingData build_training_data(const LayeredScene& scene, const Camera& source, const std::vector<Camera>& targets,
                                 const DataConfig& config, std::uint64_t seed) {
    TrainingData data{source, oracle_render(scene, source, source).rgb, {}};
    std::vector<Camera> cams{source};
    cams.insert(cams.end(), targets.begin(), targets.end());
    for (std::size_t v = 0; v < cams.size(); ++v) {
        ViewData view{cams[v], oracle_render(scene, source, cams[v]).rgb, {}, {}};
        view.teacher = teacher_disparity(scene, source, cams[v], config.noise_level, derive_stream(seed, {0x7eacu, v}),
                                         config.teacher_smoothing);
        if (config.points_per_view > 0) {
            view.points = sample_point_cloud(scene, source, cams[v], config.points_per_view,
                                             derive_stream(seed, {0x9c10u, v}));
        }
        data.views.push_back(std::move(view));
    }
    return data;
}

Trainer::Trainer(Model& model, const TrainingData& data, const TrainConfig& config, const LossWeights& weights,
                 std::uint64_t seed)
    : model_(model), data_(data), config_(config), weights_(weights), seed_(seed), adam_(model.store()) {
    config_.validate();
    if (data_.views.empty()) throw DomainError("Trainer: no training views");
    for (const auto& v : data_.views) {
        if (v.camera.width() < config_.patch || v.camera.height() < config_.patch) {
            throw DomainError("Trainer: patch is larger than a training view");
        }
    }
}

Patch Trainer::patch_for(std::uint64_t step) const {
    CounterRng rng(derive_stream(seed_, {0xba7cu, step}));
    Patch p;
    p.view = static_cast<std::size_t>(rng.below(data_.views.size()));
    const Camera& cam = data_.views[p.view].camera;
    p.width = p.height = config_.patch;
    p.x0 = static_cast<int>(rng.below(cam.width() - config_.patch + 1));
    p.y0 = static_cast<int>(rng.below(cam.height() - config_.patch + 1));
    return p;
}

double Trainer::learning_rate(std::uint64_t step, ParamGroup group) const {
    const auto s1 = static_cast<std::uint64_t>(config_.stage1_steps);
    const std::uint64_t in_stage = step < s1 ? step : step - s1;
    const double base = group == ParamGroup::coarse ? config_.lr_coarse : config_.lr_fine;
    return base * std::pow(config_.decay_factor, static_cast<double>(in_stage / config_.decay_every));
}

StepLog Trainer::run_step() {
    if (done()) throw DomainError("Trainer: schedule already finished");
    StepLog log;
    log.step = step_;
    log.stage = stage();
    log.patch = patch_for(step_);
    ParameterStore& store = model_.store();

    if (log.stage == 2 && model_.coarse_needs_features()) {
        const FeatureMap f = model_.extractor().forward(store, data_.source_image);
        model_.predictor().materialize(store, f);
    }

    StepOptions opt;
    opt.seed = seed_;
    opt.iteration = step_;
    opt.objective = log.stage == 1 ? Objective::coarse : Objective::fine_joint;
    StepResult r;
    try {
        r = evaluate_patch(model_, data_, log.patch, weights_, opt);
    } catch (const NumericalError& e) {
        throw DivergenceError("step " + std::to_string(step_) + ": " + e.what());
    }
    log.report = r.report;
    log.objective = r.objective;
    if (!std::isfinite(r.objective) || r.objective > config_.divergence_threshold) {
        throw DivergenceError("step " + std::to_string(step_) + ": objective " + std::to_string(r.objective) +
                              " exceeds the divergence threshold");
    }

    std::vector<double> rates(store.block_count(), 0.0);
    for (std::size_t b = 0; b < rates.size(); ++b) {
        const ParamGroup g = store.block(b).group;
        if (log.stage == 1 && model_.trains_in_coarse_stage(b)) rates[b] = learning_rate(step_, ParamGroup::coarse);
        if (log.stage == 1 && g == ParamGroup::fine && model_.trains_in_coarse_stage(b)) {
            rates[b] = learning_rate(step_, ParamGroup::fine);
        }
        if (log.stage == 2 && g == ParamGroup::fine) rates[b] = learning_rate(step_, ParamGroup::fine);
    }
    log.learning_rate = learning_rate(step_, log.stage == 1 ? ParamGroup::coarse : ParamGroup::fine);
    adam_step(store, adam_, r.grads, rates);
    ++step_;
    return log;
}

void Trainer::restore(std::uint64_t step, AdamState adam) {
    if (!adam.matches(model_.store())) throw DomainError("Trainer: optimizer state does not match the model");
    step_ = step;
    adam_ = std::move(adam);
}

}  // namespace planevol
