#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "planevol/losses.hpp"
#include "planevol/model.hpp"
#include "planevol/params.hpp"
#include "planevol/pipeline.hpp"
#include "planevol/scene_oracle.hpp"

namespace planevol {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second moments per parameter and a step counter per block.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::vector<std::uint64_t> steps;

    AdamState() = default;
    explicit AdamState(const ParameterStore& store);
    bool matches(const ParameterStore& store) const;

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam on every block with lr[block] > 0; other blocks (and
/// their moments) stay untouched. Throws DomainError on layout mismatch.
void adam_step(ParameterStore& store, AdamState& state, const Gradients& grads, std::span<const double> lr,
               const AdamConfig& config = {});
/// Same learning rate for all non-frozen blocks.
void adam_step(ParameterStore& store, AdamState& state, const Gradients& grads, double lr,
               const AdamConfig& config = {});

struct TrainConfig {
    int stage1_steps = 2000;
    int stage2_steps = 2000;
    int patch = 24;
    double lr_coarse = 0.05;
    double lr_fine = 3e-3;
    double decay_factor = 0.5;
    int decay_every = 800;
    int checkpoint_every = 500;
    double divergence_threshold = 1e3;

    void validate() const;  // throws DomainError
    int total_steps() const { return stage1_steps + stage2_steps; }
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct DataConfig {
    double noise_level = 0.02;
    int points_per_view = 64;
    int teacher_smoothing = 0;
    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

/// Oracle renders, teacher maps and point clouds for the source view followed
/// by every target view.
TrainingData build_training_data(const LayeredScene& scene, const Camera& source, const std::vector<Camera>& targets,
                                 const DataConfig& config, std::uint64_t seed);

struct StepLog {
    std::uint64_t step = 0;  // 0-based index of the step just taken
    int stage = 1;
    Patch patch;
    double learning_rate = 0.0;
    LossReport report;
    double objective = 0.0;
};

/// Two-stage schedule: stage 1 fits the coarse MPI on L_c, stage 2 freezes it
/// and fits extractor and decoder on 0.4 L_f + L_j.
class Trainer {
public:
    Trainer(Model& model, const TrainingData& data, const TrainConfig& config, const LossWeights& weights,
            std::uint64_t seed);

    std::uint64_t step() const { return step_; }
    bool done() const { return step_ >= static_cast<std::uint64_t>(config_.total_steps()); }
    int stage() const { return step_ < static_cast<std::uint64_t>(config_.stage1_steps) ? 1 : 2; }

    /// Random patch (and view) used by a given step.
    Patch patch_for(std::uint64_t step) const;
    double learning_rate(std::uint64_t step, ParamGroup group) const;

    /// Takes one step. Throws DivergenceError (state left at the last good
    /// step) when the objective exceeds the threshold or is not finite.
    StepLog run_step();

    const AdamState& adam() const { return adam_; }
    /// Restores a saved position (step count and optimizer moments).
    void restore(std::uint64_t step, AdamState adam);

private:
    Model& model_;
    const TrainingData& data_;
    TrainConfig config_;
    LossWeights weights_;
    std::uint64_t seed_;
    std::uint64_t step_ = 0;
    AdamState adam_;
};

}  // namespace planevol
