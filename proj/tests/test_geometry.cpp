#include <cmath>

#include "doctest.h"
#include "planevol/geometry.hpp"
#include "planevol/rng.hpp"

using namespace planevol;

namespace {

Mat3 rot_y(double a) {
    Mat3 r;
    r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
    return r;
}

}  // namespace

TEST_SUITE("geometry") {
    TEST_CASE("principal point maps to the optical axis") {
        const Camera cam(50, 50, 20, 15, 40, 30);
        const Ray r = make_ray(cam, 20, 15);
        CHECK(r.direction.isApprox(Vec3(0, 0, 1), 1e-15));
        CHECK(r.origin.isZero(0.0));
    }

    TEST_CASE("one focal length off-axis gives a 45 degree ray") {
        const Camera cam(50, 50, 20, 15, 80, 30);
        const Ray r = make_ray(cam, 20 + 50, 15);
        CHECK(r.direction.isApprox(Vec3(1, 0, 1).normalized(), 1e-15));
        CHECK(r.direction.norm() == doctest::Approx(1.0).epsilon(1e-15));
    }

    TEST_CASE("identity pose puts every ray origin at the world origin") {
        const Camera cam(30, 30, 16, 16, 32, 32);
        CounterRng rng(1);
        for (int i = 0; i < 20; ++i) CHECK(make_ray(cam, 32 * rng.uniform(), 32 * rng.uniform()).origin.isZero(0.0));
    }

    TEST_CASE("pixels outside the image are rejected") {
        const Camera cam(30, 30, 16, 16, 32, 32);
        CHECK_THROWS_AS(make_ray(cam, -0.5, 3), DomainError);
        CHECK_THROWS_AS(make_ray(cam, 3, 32), DomainError);
    }

    TEST_CASE("identity warp") {
        const Camera cam(48, 48, 24, 24, 48, 48);
        for (double z : {1.0, 2.5, 7.0}) {
            const PlanePoint p = warp_to_plane(cam, cam, z, 10, 20);
            REQUIRE(p.valid);
            CHECK(p.x == doctest::Approx(10).epsilon(1e-12));
            CHECK(p.y == doctest::Approx(20).epsilon(1e-12));
            CHECK(p.z == z);
        }
    }

    TEST_CASE("lateral translation shifts by f b / z") {
        const double f = 48.0;
        const double b = 0.07;
        const Camera src(f, f, 24, 24, 48, 48);
        const Camera tgt = src.with_pose(Pose::from_center(Vec3(b, 0, 0)));
        for (double z : {1.0, 1.7, 4.0}) {
            const PlanePoint p = warp_to_plane(src, tgt, z, 13.25, 30.5);
            REQUIRE(p.valid);
            CHECK(std::abs(p.x - (13.25 + f * b / z)) < 1e-9);
            CHECK(std::abs(p.y - 30.5) < 1e-9);
        }
    }

    TEST_CASE("warp agrees with an explicit ray-plane intersection") {
        const Camera src(40, 42, 20.5, 18, 40, 36, Pose::from_center(Vec3(0.1, -0.05, 0.02), rot_y(0.03)));
        const Camera tgt(38, 38, 19, 17, 40, 36, Pose::from_center(Vec3(-0.2, 0.1, 0.05), rot_y(-0.05)));
        CounterRng rng(7);
        for (int i = 0; i < 50; ++i) {
            const double x = 40 * rng.uniform();
            const double y = 36 * rng.uniform();
            const double z = 1.0 + 3.0 * rng.uniform();
            const Ray ray = make_ray(tgt, x, y);
            // Solve (R_s (o + t d) + T_s).z = z for t, then project.
            const Vec3 o = src.to_camera(ray.origin);
            const Vec3 d = src.rotation() * ray.direction;
            const double t = (z - o.z()) / d.z();
            const Projection pr = project(src, ray.at(t));
            const PlanePoint p = warp_to_plane(src, tgt, z, x, y);
            REQUIRE(p.valid);
            CHECK(std::abs(p.x - pr.x) < 1e-9);
            CHECK(std::abs(p.y - pr.y) < 1e-9);
            CHECK(std::abs(pr.depth - z) < 1e-9);
        }
    }

    TEST_CASE("plane behind the target camera is an invalid warp") {
        const Camera src(48, 48, 24, 24, 48, 48);
        const Camera tgt = src.with_pose(Pose::from_center(Vec3(0, 0, 2.0)));
        CHECK_FALSE(warp_to_plane(src, tgt, 1.0, 24, 24).valid);
        CHECK(warp_to_plane(src, tgt, 3.0, 24, 24).valid);
    }

    TEST_CASE("projection of the optical axis") {
        const Camera cam(30, 31, 16, 15, 32, 30);
        const Projection p = project(cam, Vec3(0, 0, 3.5));
        CHECK(p.x == 16);
        CHECK(p.y == 15);
        CHECK(p.depth == 3.5);
    }

    TEST_CASE("projection inverts back-projection") {
        const Camera cam(44, 46, 23, 21, 48, 44, Pose::from_center(Vec3(0.3, 0.2, -0.1), rot_y(0.2)));
        CounterRng rng(3);
        for (int i = 0; i < 100; ++i) {
            const double x = 48 * rng.uniform();
            const double y = 44 * rng.uniform();
            const double t = 0.1 + 10 * rng.uniform();
            const Projection p = project(cam, make_ray(cam, x, y).at(t));
            CHECK(std::abs(p.x - x) < 1e-9);
            CHECK(std::abs(p.y - y) < 1e-9);
        }
    }

    TEST_CASE("points behind the camera raise") {
        const Camera cam(30, 30, 16, 16, 32, 32);
        CHECK_THROWS_AS(project(cam, Vec3(0.2, 0.1, -1.0)), BehindCameraError);
        CHECK_FALSE(try_project(cam, Vec3(0, 0, -1.0)).has_value());
    }

    TEST_CASE("source ray rates match finite differences") {
        const Camera src(48, 48, 24, 24, 48, 48);
        const Camera tgt = src.with_pose(Pose::from_center(Vec3(0.05, -0.03, 0.1), rot_y(0.02)));
        const SourceRay ray(src, tgt, 30.5, 11.25);
        const double z = 2.0;
        const double h = 1e-6;
        const PlanePoint p = ray.at_depth(z);
        const PlanePoint up = ray.at_depth(z + h);
        const PlanePoint dn = ray.at_depth(z - h);
        const Vec3 fd = (up.source_point - dn.source_point) / (2 * h);
        CHECK((fd - ray.point_rate()).norm() < 1e-8);
        const auto [dx, dy] = ray.pixel_rate(p);
        CHECK(std::abs(dx - (up.x - dn.x) / (2 * h)) < 1e-6);
        CHECK(std::abs(dy - (up.y - dn.y) / (2 * h)) < 1e-6);
    }

    TEST_CASE("cameras reject bad intrinsics and rotations") {
        CHECK_THROWS_AS(Camera(0, 30, 16, 16, 32, 32), DomainError);
        CHECK_THROWS_AS(Camera(30, 30, 40, 16, 32, 32), DomainError);
        Pose bad;
        bad.rotation(0, 0) = 2.0;
        CHECK_THROWS_AS(Camera(30, 30, 16, 16, 32, 32, bad), DomainError);
    }
}
