#include <cmath>

#include "doctest.h"
#include "planevol/pipeline.hpp"
#include "planevol/renderer.hpp"
#include "planevol/scene_oracle.hpp"
#include "support.hpp"

using namespace planevol;

namespace {

SampleSet from_tau(const std::vector<double>& tau, const std::vector<std::array<double, 3>>& rgb,
                   const std::vector<double>& t) {
    SampleSet s;
    for (std::size_t i = 0; i < tau.size(); ++i) s.push_back(t[i], rgb[i], tau[i], SampleOrigin::coarse, 1.0);
    return s;
}

}  // namespace

TEST_SUITE("renderer") {
    TEST_CASE("opaque single sample") {
        const ColorResult c = composite_color(from_tau({800.0}, {{0.2, 0.4, 0.6}}, {2.0}));
        CHECK(c.opacity == 1.0);
        CHECK(c.rgb == std::array<double, 3>{0.2, 0.4, 0.6});
    }

    TEST_CASE("empty space") {
        const SampleSet s = from_tau({0, 0, 0}, {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}}, {1, 2, 3});
        const ColorResult c = composite_color(s);
        CHECK(c.opacity == 0.0);
        CHECK(c.rgb == std::array<double, 3>{0, 0, 0});
        const DepthResult d = composite_depth(s);
        CHECK(d.depth == 0.0);
        CHECK(d.disparity == 0.0);
    }

    TEST_CASE("two half-opaque samples") {
        const double l2 = std::log(2.0);
        const std::array<double, 3> c1{0.9, 0.1, 0.3};
        const std::array<double, 3> c2{0.2, 0.7, 0.5};
        const ColorResult c = composite_color(from_tau({l2, l2}, {c1, c2}, {1, 2}));
        CHECK(c.opacity == doctest::Approx(0.75).epsilon(1e-15));
        for (int k = 0; k < 3; ++k) CHECK(c.rgb[k] == doctest::Approx(0.5 * c1[k] + 0.25 * c2[k]).epsilon(1e-15));
        CHECK(c.weights[0] == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(c.weights[1] == doctest::Approx(0.25).epsilon(1e-15));
    }

    TEST_CASE("depth is the weighted mean") {
        CHECK(composite_depth(from_tau({800.0}, {{0, 0, 0}}, {2.0})).depth == 2.0);
        // w = (0.5, 0.5): alpha_1 = 0.5 then an opaque sample.
        const DepthResult d = composite_depth(from_tau({std::log(2.0), 800.0}, {{0, 0, 0}, {0, 0, 0}}, {1.0, 3.0}));
        CHECK(d.depth == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(d.disparity == doctest::Approx(0.5).epsilon(1e-15));
    }

    TEST_CASE("weight backward matches finite differences") {
        CounterRng rng(3);
        const std::size_t n = 12;
        std::vector<double> tau(n), gw(n), t(n);
        std::vector<std::array<double, 3>> rgb(n);
        for (std::size_t i = 0; i < n; ++i) {
            tau[i] = 2 * rng.uniform();
            gw[i] = rng.normal();
            t[i] = 1.0 + i;
        }
        auto loss = [&](const std::vector<double>& x) {
            const Composite c = composite_tau(x, rgb, t);
            double s = 0;
            for (std::size_t i = 0; i < n; ++i) s += gw[i] * c.weights[i];
            return s;
        };
        const Composite c = composite_tau(tau, rgb, t);
        std::vector<double> gt(n, 0.0);
        composite_weights_backward(tau, c, gw, gt);
        for (std::size_t k = 0; k < n; ++k) {
            auto up = tau, dn = tau;
            up[k] += 1e-6;
            dn[k] -= 1e-6;
            CHECK(gt[k] == doctest::Approx((loss(up) - loss(dn)) / 2e-6).epsilon(1e-6));
        }
    }

    TEST_CASE("branch names") {
        CHECK(branch_from_string("joint") == Branch::joint);
        CHECK(std::string(to_string(Branch::fine)) == "fine");
        CHECK_THROWS_AS(branch_from_string("dense"), DomainError);
    }

    TEST_CASE("one opaque plane renders its colour and disparity") {
        ModelConfig mc;
        mc.width = mc.height = 12;
        mc.planes = 8;
        Model model(mc);
        model.initialize(1);
        MultiPlaneImage mpi(model.depths(), 12, 12);
        const int k = 5;
        for (int y = 0; y < 12; ++y) {
            for (int x = 0; x < 12; ++x) {
                mpi.at(k, x, y, 0) = 0.3;
                mpi.at(k, x, y, 1) = 0.6;
                mpi.at(k, x, y, 2) = 0.8;
                mpi.at(k, x, y, 3) = 1e3;
            }
        }
        testing::load_direct_mpi(model, mpi);
        const Camera cam = centered_camera(12, 12, 12);
        const Image src(12, 12, 3, 0.5);
        const RenderedView v = render_view(model, src, cam, cam, Branch::coarse);
        for (int y = 0; y < 12; ++y) {
            for (int x = 0; x < 12; ++x) {
                CHECK(v.rgb.at(x, y, 0) == doctest::Approx(0.3).epsilon(1e-12));
                CHECK(v.rgb.at(x, y, 1) == doctest::Approx(0.6).epsilon(1e-12));
                CHECK(v.rgb.at(x, y, 2) == doctest::Approx(0.8).epsilon(1e-12));
                CHECK(v.disparity.at(x, y) == doctest::Approx(1.0 / model.depths()[k]).epsilon(1e-12));
            }
        }
    }

    TEST_CASE("silent fine samples leave the joint branch equal to coarse") {
        ModelConfig mc;
        mc.width = mc.height = 16;
        Model model(mc);
        model.initialize(2);
        CounterRng rng(4);
        for (double& v : model.store().values(model.store().find("mpi.raw"))) v += rng.normal();
        testing::silence_decoder(model);
        const CameraRig rig = default_rig(16, 16, 2);
        const Image src = oracle_render(scene_preset("three-planes", 16, 16), rig.source, rig.source).rgb;
        const Branch both[] = {Branch::coarse, Branch::joint};
        const auto views = render_branches(model, src, rig.source, rig.targets[1], both);
        double worst = 0.0;
        for (std::size_t i = 0; i < views[0].rgb.size(); ++i) {
            worst = std::max(worst, std::abs(views[0].rgb.data()[i] - views[1].rgb.data()[i]));
        }
        for (std::size_t i = 0; i < views[0].depth.size(); ++i) {
            worst = std::max(worst, std::abs(views[0].depth.data()[i] - views[1].depth.data()[i]));
        }
        CHECK(worst <= 1e-12);
    }

    TEST_CASE("renders do not depend on batch size or thread count") {
        ModelConfig mc;
        mc.width = mc.height = 16;
        Model model(mc);
        model.initialize(3);
        const CameraRig rig = default_rig(16, 16, 2);
        const Image src = oracle_render(scene_preset("three-planes", 16, 16), rig.source, rig.source).rgb;
        RenderOptions a;
        a.seed = 9;
        RenderOptions b = a;
        b.batch_size = 7;
        const RenderedView va = render_view(model, src, rig.source, rig.targets[0], Branch::joint, a);
        const RenderedView vb = render_view(model, src, rig.source, rig.targets[0], Branch::joint, b);
        CHECK(va.rgb == vb.rgb);
        CHECK(va.depth == vb.depth);
    }
}
