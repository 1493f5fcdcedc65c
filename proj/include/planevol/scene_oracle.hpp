#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "planevol/common.hpp"
#include "planevol/field.hpp"
#include "planevol/geometry.hpp"
#include "planevol/losses.hpp"

namespace planevol {

/// Fronto-parallel layer in the reference camera frame. Texels sit on the
/// reference pixel grid and are looked up bilinearly (zero outside).
struct SceneLayer {
    double z = 1.0;
    Image rgb;    // 3 channels
    Image alpha;  // 1 channel
};

struct LayeredScene {
    int width = 0;
    int height = 0;
    std::vector<SceneLayer> layers;  // near to far
    std::array<double, 3> background{0.0, 0.0, 0.0};
    double z_far = 10.0;  // depth assigned to the background

    /// Throws DomainError on unsorted depths, bad texel ranges or shapes.
    void validate() const;
};

/// Depth along the reference camera's z axis, for any view, so every camera
/// shares the units the renderer reports.
struct OracleView {
    Image rgb;
    Image depth;
    Image disparity;
    Image opacity;
};

/// Exact front-to-back compositing of the layers seen through `cam`.
/// `reference` is the camera whose frame the scene lives in. Throws DomainError
/// when `cam` is not in front of the first layer.
OracleView oracle_render(const LayeredScene& scene, const Camera& reference, const Camera& cam);

/// Oracle disparity times exp(eps), eps ~ N(0, noise_level^2) per pixel from
/// `seed`; `smoothing` box-blur passes afterwards.
Image teacher_disparity(const LayeredScene& scene, const Camera& reference, const Camera& cam, double noise_level,
                        std::uint64_t seed, int smoothing = 0);

/// n pixels drawn uniformly (without replacement while possible) among those
/// with oracle opacity >= 0.99; z is the oracle depth there.
/// Throws DomainError when no pixel qualifies or n < 1.
SparsePoints sample_point_cloud(const LayeredScene& scene, const Camera& reference, const Camera& cam, int n,
                                std::uint64_t seed);

/// World-frame position of a point returned by sample_point_cloud.
Vec3 point_to_world(const Camera& reference, const Camera& cam, const SparsePoint& p);

std::vector<std::string> preset_names();

/// "three-planes", "checker-stack" or "occluder" at the given texel resolution.
LayeredScene scene_preset(const std::string& name, int width, int height);

/// MPI reproducing the scene exactly: each layer lands on the plane with the
/// same depth (relative tolerance 1e-9) and stores sigma * delta = -ln(1 - alpha).
/// Throws DomainError if a layer has no plane or an alpha of 1.
MultiPlaneImage exact_mpi(const LayeredScene& scene, const std::vector<double>& depths);

struct CameraRig {
    Camera source;
    std::vector<Camera> targets;
    std::vector<Camera> holdout;
};

/// Source at the origin looking down +z; targets on a ring of radius r moved
/// forward by 2.2 r so their frusta stay inside the source frustum.
/// Focal length equals the image width.
CameraRig default_rig(int width, int height, int targets = 8, double radius = 0.06, int holdout = 2,
                      double holdout_radius = 0.045);

}  // namespace planevol
