#pragma once

#include <optional>

#include <Eigen/Core>

#include "planevol/common.hpp"

// Conventions: right-handed, +z forward in the camera frame, image origin at
// the top-left, pixel centers at integer coordinates. A pose maps world points
// into the camera frame: X_cam = R * X_world + T.

namespace planevol {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    /// Pose of a camera whose center sits at `center` (world) with the given
    /// world-to-camera rotation.
    static Pose from_center(const Vec3& center, const Mat3& rotation = Mat3::Identity());
};

class Camera {
public:
    Camera(double fx, double fy, double cx, double cy, int width, int height, Pose pose = {});

    double fx() const { return fx_; }
    double fy() const { return fy_; }
    double cx() const { return cx_; }
    double cy() const { return cy_; }
    int width() const { return width_; }
    int height() const { return height_; }
    const Pose& pose() const { return pose_; }
    const Mat3& rotation() const { return pose_.rotation; }
    const Vec3& translation() const { return pose_.translation; }

    /// Camera center in world coordinates.
    Vec3 center() const { return -pose_.rotation.transpose() * pose_.translation; }
    Vec3 to_camera(const Vec3& world) const { return pose_.rotation * world + pose_.translation; }
    Vec3 to_world(const Vec3& cam) const { return pose_.rotation.transpose() * (cam - pose_.translation); }

    bool contains(double x, double y) const { return x >= 0.0 && x < width_ && y >= 0.0 && y < height_; }

    /// Same intrinsics, different pose.
    Camera with_pose(const Pose& pose) const { return Camera(fx_, fy_, cx_, cy_, width_, height_, pose); }

    friend bool operator==(const Camera& a, const Camera& b);

private:
    double fx_, fy_, cx_, cy_;
    int width_, height_;
    Pose pose_;
};

/// Pinhole camera with the principal point at the image center and the given
/// horizontal/vertical focal length in pixels.
Camera centered_camera(int width, int height, double focal, Pose pose = {});

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit length
    double t_near;
    double t_far;

    Vec3 at(double t) const { return origin + t * direction; }
};

/// Back-projects pixel (x, y) of `cam` into a world-space ray.
/// Throws DomainError when the pixel is outside [0, width) x [0, height).
Ray make_ray(const Camera& cam, double x, double y, double t_near = 1e-6, double t_far = 1e6);

/// Result of intersecting a target-view ray with a fronto-parallel source plane.
struct PlanePoint {
    bool valid = false;
    double x = 0.0;  // source pixel
    double y = 0.0;
    double z = 0.0;  // source-frame depth of the plane
    Vec3 source_point = Vec3::Zero();  // intersection in the source camera frame
};

/// A target-view ray expressed in the source camera frame, ready for repeated
/// plane intersections. Keeps the world direction for view-dependent inputs.
class SourceRay {
public:
    SourceRay(const Camera& src, const Camera& tgt, double x_t, double y_t);

    /// Intersection with the source plane z = depth; invalid when the ray is
    /// parallel to the plane or the hit lies behind the target camera.
    PlanePoint at_depth(double depth) const;

    /// d(source_point)/d(depth) along the ray (constant per ray).
    Vec3 point_rate() const { return direction_src_ / direction_src_.z(); }

    /// d(source pixel)/d(depth) at a valid intersection.
    std::pair<double, double> pixel_rate(const PlanePoint& p) const;

    const Vec3& origin_src() const { return origin_src_; }
    const Vec3& direction_src() const { return direction_src_; }
    const Vec3& direction_world() const { return direction_world_; }
    const Camera& source() const { return *src_; }

private:
    const Camera* src_;
    Vec3 origin_src_;
    Vec3 direction_src_;
    Vec3 direction_world_;
};

/// Maps target pixel px_t onto the source plane at depth z (the plane-induced
/// homography, realized as a ray-plane intersection).
PlanePoint warp_to_plane(const Camera& src, const Camera& tgt, double z, double x_t, double y_t);

struct Projection {
    double x;
    double y;
    double depth;
};

/// Pinhole projection of a world point; std::nullopt when the point is not in
/// front of the camera.
std::optional<Projection> try_project(const Camera& cam, const Vec3& world);

/// Pinhole projection; throws BehindCameraError when camera-frame z <= 0.
Projection project(const Camera& cam, const Vec3& world);

}  // namespace planevol
