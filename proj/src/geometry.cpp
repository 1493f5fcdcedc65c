#include "planevol/geometry.hpp"

#include <Eigen/LU>
#include <cmath>
#include <string>

namespace planevol {

namespace {

constexpr double kRotationTolerance = 1e-9;
constexpr double kParallelEps = 1e-12;

void check_rotation(const Mat3& r) {
    const double orth = (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(orth <= kRotationTolerance) || !(std::abs(r.determinant() - 1.0) <= kRotationTolerance)) {
        throw DomainError("Camera: rotation must be orthonormal with determinant +1");
    }
}

}  // namespace

Pose Pose::from_center(const Vec3& center, const Mat3& rotation) {
    return Pose{rotation, -rotation * center};
}

Camera::Camera(double fx, double fy, double cx, double cy, int width, int height, Pose pose)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height), pose_(std::move(pose)) {
    if (!(fx > 0.0) || !(fy > 0.0)) throw DomainError("Camera: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw DomainError("Camera: image size must be positive");
    if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
        throw DomainError("Camera: principal point must lie inside the image");
    }
    if (!pose_.translation.allFinite()) throw DomainError("Camera: translation must be finite");
    check_rotation(pose_.rotation);
}

bool operator==(const Camera& a, const Camera& b) {
    return a.fx_ == b.fx_ && a.fy_ == b.fy_ && a.cx_ == b.cx_ && a.cy_ == b.cy_ && a.width_ == b.width_ &&
           a.height_ == b.height_ && a.pose_.rotation == b.pose_.rotation &&
           a.pose_.translation == b.pose_.translation;
}

Camera centered_camera(int width, int height, double focal, Pose pose) {
    return Camera(focal, focal, 0.5 * (width - 1), 0.5 * (height - 1), width, height, std::move(pose));
}

Ray make_ray(const Camera& cam, double x, double y, double t_near, double t_far) {
    if (!cam.contains(x, y)) {
        throw DomainError("make_ray: pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                          ") outside the image");
    }
    if (!(t_near > 0.0) || !(t_near < t_far)) throw DomainError("make_ray: need 0 < t_near < t_far");
    const Vec3 dir_cam((x - cam.cx()) / cam.fx(), (y - cam.cy()) / cam.fy(), 1.0);
    const Vec3 dir = (cam.rotation().transpose() * dir_cam).normalized();
    return Ray{cam.center(), dir, t_near, t_far};
}

SourceRay::SourceRay(const Camera& src, const Camera& tgt, double x_t, double y_t) : src_(&src) {
    const Vec3 dir_cam((x_t - tgt.cx()) / tgt.fx(), (y_t - tgt.cy()) / tgt.fy(), 1.0);
    direction_world_ = (tgt.rotation().transpose() * dir_cam).normalized();
    origin_src_ = src.to_camera(tgt.center());
    direction_src_ = src.rotation() * direction_world_;
}

PlanePoint SourceRay::at_depth(double depth) const {
    PlanePoint p;
    p.z = depth;
    const double dz = direction_src_.z();
    if (std::abs(dz) < kParallelEps) return p;
    const double lambda = (depth - origin_src_.z()) / dz;
    if (!(lambda > 0.0)) return p;
    p.source_point = origin_src_ + lambda * direction_src_;
    p.source_point.z() = depth;
    p.x = src_->fx() * p.source_point.x() / depth + src_->cx();
    p.y = src_->fy() * p.source_point.y() / depth + src_->cy();
    p.valid = true;
    return p;
}

std::pair<double, double> SourceRay::pixel_rate(const PlanePoint& p) const {
    const Vec3 rate = point_rate();
    const double z = p.z;
    const double dx = src_->fx() * (rate.x() * z - p.source_point.x()) / (z * z);
    const double dy = src_->fy() * (rate.y() * z - p.source_point.y()) / (z * z);
    return {dx, dy};
}

PlanePoint warp_to_plane(const Camera& src, const Camera& tgt, double z, double x_t, double y_t) {
    if (!(z > 0.0)) throw DomainError("warp_to_plane: plane depth must be positive");
    return SourceRay(src, tgt, x_t, y_t).at_depth(z);
}

std::optional<Projection> try_project(const Camera& cam, const Vec3& world) {
    const Vec3 p = cam.to_camera(world);
    if (!(p.z() > 0.0)) return std::nullopt;
    return Projection{cam.fx() * p.x() / p.z() + cam.cx(), cam.fy() * p.y() / p.z() + cam.cy(), p.z()};
}

Projection project(const Camera& cam, const Vec3& world) {
    if (auto p = try_project(cam, world)) return *p;
    throw BehindCameraError("project: point is behind the camera");
}

}  // namespace planevol
