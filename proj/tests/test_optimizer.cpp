#include <cmath>

#include "doctest.h"
#include "planevol/checks.hpp"
#include "planevol/optimizer.hpp"
#include "planevol/scene_oracle.hpp"

using namespace planevol;

namespace {

struct Fixture {
    ModelConfig mc;
    Model model;
    TrainingData data;

    explicit Fixture(int size = 16, std::uint64_t seed = 3)
        : mc(config(size)), model(mc), data(make_data(size, seed)) {
        model.initialize(seed);
    }

    static TrainingData make_data(int size, std::uint64_t seed) {
        const LayeredScene scene = scene_preset("three-planes", size, size);
        const CameraRig rig = default_rig(size, size, 4);
        return build_training_data(scene, rig.source, rig.targets, DataConfig{}, seed);
    }

    static ModelConfig config(int size) {
        ModelConfig c;
        c.width = c.height = size;
        c.planes = 16;
        c.fine_samples = 8;
        c.extractor_hidden = 8;
        return c;
    }
};

TrainConfig short_schedule(int s1, int s2, int patch) {
    TrainConfig t;
    t.stage1_steps = s1;
    t.stage2_steps = s2;
    t.patch = patch;
    return t;
}

}  // namespace

TEST_SUITE("optimizer") {
    TEST_CASE("blocks the loss ignores get zero gradient") {
        Fixture f;
        StepOptions opt;
        opt.objective = Objective::coarse;
        const StepResult r = evaluate_patch(f.model, f.data, Patch{1, 0, 0, 12, 12}, LossWeights{}, opt);
        const ParameterStore& store = f.model.store();
        for (std::size_t b = 0; b < store.block_count(); ++b) {
            if (store.block(b).group != ParamGroup::fine) continue;
            for (double g : r.grads.block(b)) CHECK(g == 0.0);
        }
        CHECK(r.grads.max_abs() > 0.0);
    }

    TEST_CASE("full pipeline gradients at 8 probes") {
        const SuiteResult r = check_gradients(4, 8, 11);
        INFO(r.detail);
        CHECK(r.passed);
    }

    TEST_CASE("gradients add across patches") {
        Fixture f;
        StepOptions opt;
        const StepResult a = evaluate_patch(f.model, f.data, Patch{1, 0, 0, 12, 12}, LossWeights{}, opt);
        const StepResult b = evaluate_patch(f.model, f.data, Patch{2, 4, 4, 12, 12}, LossWeights{}, opt);
        Gradients sum = a.grads;
        sum += b.grads;
        for (std::size_t k = 0; k < sum.block_count(); ++k) {
            for (std::size_t i = 0; i < sum.block(k).size(); ++i) {
                CHECK(std::abs(sum.block(k)[i] - (a.grads.block(k)[i] + b.grads.block(k)[i])) <= 1e-12);
            }
        }
    }

    TEST_CASE("gradients do not depend on heap layout") {
        Fixture f;
        StepOptions opt;
        opt.objective = Objective::fine_joint;
        const StepResult first = evaluate_patch(f.model, f.data, Patch{1, 0, 0, 12, 12}, LossWeights{}, opt);
        std::vector<std::vector<double>> shift;
        for (int k = 1; k < 5; ++k) {
            // Odd-sized allocations move later buffers to other alignments.
            shift.emplace_back(3 * k, 1.0);
            const StepResult again = evaluate_patch(f.model, f.data, Patch{1, 0, 0, 12, 12}, LossWeights{}, opt);
            for (std::size_t b = 0; b < first.grads.block_count(); ++b) {
                CHECK(std::equal(first.grads.block(b).begin(), first.grads.block(b).end(),
                                 again.grads.block(b).begin()));
            }
        }
    }

    TEST_CASE("adam with zero gradient leaves parameters alone") {
        ParameterStore store;
        store.add("w", {5}, ParamGroup::coarse, 0.3);
        const ParameterStore before = store;
        AdamState state(store);
        Gradients g(store);
        adam_step(store, state, g, 0.1);
        CHECK(store == before);
    }

    TEST_CASE("first adam step moves by about lr sign(g)") {
        ParameterStore store;
        store.add("w", {3}, ParamGroup::coarse, 1.0);
        AdamState state(store);
        Gradients g(store);
        g.block(0)[0] = 2.0;
        g.block(0)[1] = -0.5;
        g.block(0)[2] = 1e-3;
        adam_step(store, state, g, 0.01);
        for (int i = 0; i < 3; ++i) {
            const double gi = g.block(0)[i];
            CHECK(store.values(0)[i] - 1.0 == doctest::Approx(-0.01 * gi / (std::abs(gi) + 1e-8)).epsilon(1e-12));
        }
    }

    TEST_CASE("frozen blocks are never updated") {
        ParameterStore store;
        store.add("a", {2}, ParamGroup::coarse, 1.0);
        store.add("b", {2}, ParamGroup::frozen, 1.0);
        AdamState state(store);
        Gradients g(store);
        for (std::size_t k = 0; k < 2; ++k)
            for (double& v : g.block(k)) v = 1.0;
        adam_step(store, state, g, 0.1);
        CHECK(store.values(0)[0] != 1.0);
        CHECK(store.values(1)[0] == 1.0);
    }

    TEST_CASE("identical runs are bit-identical") {
        Fixture f1, f2;
        Trainer t1(f1.model, f1.data, short_schedule(4, 3, 12), LossWeights{}, 5);
        Trainer t2(f2.model, f2.data, short_schedule(4, 3, 12), LossWeights{}, 5);
        while (!t1.done()) t1.run_step();
        while (!t2.done()) t2.run_step();
        CHECK(f1.model.store() == f2.model.store());
        CHECK(t1.adam() == t2.adam());
    }

    TEST_CASE("stage 2 leaves coarse parameters bit-identical") {
        Fixture f;
        Trainer t(f.model, f.data, short_schedule(3, 4, 12), LossWeights{}, 6);
        for (int i = 0; i < 3; ++i) t.run_step();
        CHECK(t.stage() == 2);
        const ParameterStore after_stage1 = f.model.store();
        while (!t.done()) t.run_step();
        const ParameterStore& store = f.model.store();
        bool fine_moved = false;
        for (std::size_t b = 0; b < store.block_count(); ++b) {
            if (store.block(b).group == ParamGroup::fine) {
                fine_moved = fine_moved || store.block(b).values != after_stage1.block(b).values;
            } else {
                CHECK(store.block(b).values == after_stage1.block(b).values);
            }
        }
        CHECK(fine_moved);
    }

    TEST_CASE("feedforward mode materializes the mpi at the stage boundary") {
        ModelConfig mc = Fixture::config(16);
        mc.mode = MpiMode::feedforward;
        Model model(mc);
        model.initialize(2);
        const LayeredScene scene = scene_preset("three-planes", 16, 16);
        const CameraRig rig = default_rig(16, 16, 2);
        const TrainingData data = build_training_data(scene, rig.source, rig.targets, DataConfig{}, 2);
        Trainer t(model, data, short_schedule(2, 2, 12), LossWeights{}, 2);
        t.run_step();
        t.run_step();
        CHECK(model.coarse_needs_features());
        t.run_step();
        CHECK_FALSE(model.coarse_needs_features());
        const auto span = model.store().values(model.store().find("mpi.raw"));
        const std::vector<double> grid(span.begin(), span.end());
        t.run_step();
        CHECK(std::equal(grid.begin(), grid.end(), model.store().values(model.store().find("mpi.raw")).begin()));
    }

    TEST_CASE("learning rate schedule") {
        Fixture f;
        TrainConfig c = short_schedule(10, 10, 12);
        c.decay_every = 4;
        Trainer t(f.model, f.data, c, LossWeights{}, 1);
        CHECK(t.learning_rate(0, ParamGroup::coarse) == c.lr_coarse);
        CHECK(t.learning_rate(5, ParamGroup::coarse) == c.lr_coarse * 0.5);
        CHECK(t.learning_rate(10, ParamGroup::fine) == c.lr_fine);
        CHECK(t.learning_rate(18, ParamGroup::fine) == c.lr_fine * 0.25);
    }

    TEST_CASE("divergence is reported") {
        Fixture f;
        TrainConfig c = short_schedule(2, 0, 12);
        c.divergence_threshold = 1e-6;
        Trainer t(f.model, f.data, c, LossWeights{}, 1);
        const ParameterStore before = f.model.store();
        CHECK_THROWS_AS(t.run_step(), DivergenceError);
        CHECK(f.model.store() == before);
        CHECK(t.step() == 0);
    }

    TEST_CASE("stage 1 loss falls over 100-step windows") {
        const int size = 48;
        ModelConfig mc;
        Model model(mc);
        model.initialize(7);
        const LayeredScene scene = scene_preset("three-planes", size, size);
        const CameraRig rig = default_rig(size, size);
        const TrainingData data = build_training_data(scene, rig.source, rig.targets, DataConfig{}, 7);
        Trainer t(model, data, short_schedule(400, 0, 24), LossWeights{}, 7);
        std::vector<double> window(4, 0.0);
        for (int i = 0; i < 400; ++i) window[i / 100] += t.run_step().objective / 100.0;
        for (int k = 1; k < 4; ++k) {
            INFO("window " << k << ": " << window[k - 1] << " -> " << window[k]);
            CHECK(window[k] < window[k - 1]);
        }
    }

    TEST_CASE("train config validation") {
        TrainConfig c;
        CHECK_NOTHROW(c.validate());
        c.decay_factor = 1.5;
        CHECK_THROWS_AS(c.validate(), DomainError);
        c = TrainConfig{};
        c.patch = 0;
        CHECK_THROWS_AS(c.validate(), DomainError);
    }
}
