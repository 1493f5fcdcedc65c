#include <cmath>

#include "doctest.h"
#include "planevol/losses.hpp"
#include "planevol/scene_oracle.hpp"

using namespace planevol;

namespace {

SceneLayer flat_layer(int w, int h, double z, std::array<double, 3> rgb, double alpha) {
    SceneLayer l{z, Image(w, h, 3), Image(w, h, 1, alpha)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) l.rgb.at(x, y, c) = rgb[c];
    return l;
}

}  // namespace

TEST_SUITE("scene_oracle") {
    TEST_CASE("single opaque constant layer") {
        LayeredScene s{16, 16, {flat_layer(16, 16, 2.0, {0.2, 0.5, 0.7}, 1.0)}, {0, 0, 0}, 10.0};
        const Camera cam = centered_camera(16, 16, 16);
        const OracleView v = oracle_render(s, cam, cam);
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) {
                CHECK(v.rgb.at(x, y, 1) == 0.5);
                CHECK(v.depth.at(x, y) == 2.0);
                CHECK(v.disparity.at(x, y) == 0.5);
            }
        }
    }

    TEST_CASE("two half-transparent layers over the background") {
        const std::array<double, 3> c1{0.9, 0.1, 0.2}, c2{0.1, 0.8, 0.3}, bg{0.3, 0.3, 0.6};
        LayeredScene s{12, 12, {flat_layer(12, 12, 1.0, c1, 0.5), flat_layer(12, 12, 3.0, c2, 0.5)}, bg, 10.0};
        const Camera cam = centered_camera(12, 12, 12);
        const OracleView v = oracle_render(s, cam, cam);
        for (int c = 0; c < 3; ++c) {
            CHECK(v.rgb.at(5, 7, c) == doctest::Approx(0.5 * c1[c] + 0.25 * c2[c] + 0.25 * bg[c]).epsilon(1e-15));
        }
        CHECK(v.opacity.at(5, 7) == doctest::Approx(0.75).epsilon(1e-15));
    }

    TEST_CASE("lateral motion shifts each layer by f b / z") {
        const int w = 48;
        const LayeredScene s = scene_preset("three-planes", w, w);
        const Camera src = centered_camera(w, w, w);
        // b chosen so the far layer (z = 4) moves exactly 2 pixels.
        const double b = 2.0 * 4.0 / w;
        const Camera moved = src.with_pose(Pose::from_center(Vec3(b, 0, 0)));
        const OracleView a = oracle_render(s, src, src);
        const OracleView m = oracle_render(s, src, moved);
        // Bottom-left region shows only the far layer in both views.
        for (int y = 40; y < 46; ++y) {
            for (int x = 2; x < 10; ++x) {
                for (int c = 0; c < 3; ++c) CHECK(std::abs(m.rgb.at(x, y, c) - a.rgb.at(x + 2, y, c)) < 1e-12);
            }
        }
        CHECK(s.layers[2].z == 4.0);
    }

    TEST_CASE("occluder disocclusion band matches parallax") {
        const int w = 48;
        const LayeredScene s = scene_preset("occluder", w, w);
        const Camera src = centered_camera(w, w, w);
        const double b = 9.0 / w;  // band f b (1/1 - 1/4) = 6.75 pixels
        const Camera moved = src.with_pose(Pose::from_center(Vec3(b, 0, 0)));
        const OracleView ref = oracle_render(s, src, src);
        const OracleView v = oracle_render(s, src, moved);
        const int y = w / 2;
        int band = 0;
        for (int x = 0; x < w; ++x) {
            if (std::abs(v.depth.at(x, y) - 4.0) > 1e-9) continue;
            // Background pixel in the moved view: was it hidden in the source view?
            const double xs = x + w * b / 4.0;
            const int xi = static_cast<int>(std::lround(xs));
            if (xi >= 0 && xi < w && ref.opacity.at(xi, y) > 0.999 && ref.depth.at(xi, y) < 1.5) ++band;
        }
        CHECK(std::abs(band - w * b * (1.0 - 0.25)) <= 1.0);
    }

    TEST_CASE("preset definitions") {
        const LayeredScene tp = scene_preset("three-planes", 48, 48);
        REQUIRE(tp.layers.size() == 3);
        CHECK(tp.layers[0].z == 1.0);
        CHECK(tp.layers[1].z == 2.0);
        CHECK(tp.layers[2].z == 4.0);
        const LayeredScene cs = scene_preset("checker-stack", 32, 32);
        const Camera cam = centered_camera(32, 32, 32);
        const OracleView v = oracle_render(cs, cam, cam);
        for (double o : v.opacity.data()) CHECK(o == doctest::Approx(1.0 - std::pow(0.5, 4)).epsilon(1e-15));
        CHECK_THROWS_AS(scene_preset("four-planes", 8, 8), DomainError);
    }

    TEST_CASE("teacher noise") {
        const LayeredScene s = scene_preset("three-planes", 48, 48);
        const CameraRig rig = default_rig(48, 48);
        const OracleView truth = oracle_render(s, rig.source, rig.targets[0]);
        const Image clean = teacher_disparity(s, rig.source, rig.targets[0], 0.0, 5);
        CHECK(clean == truth.disparity);
        const Image n1 = teacher_disparity(s, rig.source, rig.targets[0], 0.05, 5);
        const Image n2 = teacher_disparity(s, rig.source, rig.targets[0], 0.05, 5);
        CHECK(n1 == n2);
        double mean = 0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < n1.size(); ++i) {
            if (truth.disparity.data()[i] <= 0) continue;
            mean += std::log(n1.data()[i] / truth.disparity.data()[i]);
            ++count;
        }
        mean /= count;
        CHECK(std::abs(mean) < 3.0 * 0.05 / std::sqrt(static_cast<double>(count)));
    }

    TEST_CASE("point clouds") {
        const LayeredScene s = scene_preset("three-planes", 48, 48);
        const CameraRig rig = default_rig(48, 48);
        const OracleView truth = oracle_render(s, rig.source, rig.targets[2]);
        const SparsePoints pts = sample_point_cloud(s, rig.source, rig.targets[2], 64, 3);
        CHECK(pts.size() == 64);
        for (const auto& p : pts) {
            CHECK(p.z == truth.depth.at(static_cast<int>(p.x), static_cast<int>(p.y)));
            CHECK(truth.opacity.at(static_cast<int>(p.x), static_cast<int>(p.y)) >= 0.99);
        }
        CHECK(sample_point_cloud(s, rig.source, rig.targets[2], 1, 4).size() == 1);
        CHECK(point_loss(truth.disparity, pts) < 1e-12);
        CHECK_THROWS_AS(sample_point_cloud(s, rig.source, rig.targets[2], 0, 4), DomainError);

        // World positions project back to their pixels.
        for (const auto& p : pts) {
            const Projection pr = project(rig.targets[2], point_to_world(rig.source, rig.targets[2], p));
            CHECK(std::abs(pr.x - p.x) < 1e-9);
            CHECK(std::abs(pr.y - p.y) < 1e-9);
        }
    }

    TEST_CASE("exact mpi needs a plane per layer") {
        const LayeredScene s = scene_preset("checker-stack", 16, 16);
        CHECK_NOTHROW(exact_mpi(s, plane_depths(1.0, 40.0 / 9.0, 32)));
        CHECK_THROWS_AS(exact_mpi(s, plane_depths(1.0, 4.0, 7)), DomainError);
    }

    TEST_CASE("default rig") {
        const CameraRig rig = default_rig(48, 48);
        CHECK(rig.targets.size() == 8);
        CHECK(rig.holdout.size() == 2);
        CHECK(rig.source.fx() == 48.0);
        for (const Camera& c : rig.targets) CHECK(c.center().head<2>().norm() == doctest::Approx(0.06));
        for (const Camera& c : rig.holdout) CHECK(c.center().head<2>().norm() == doctest::Approx(0.045));
    }
}
