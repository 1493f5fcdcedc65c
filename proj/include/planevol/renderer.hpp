#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "planevol/common.hpp"
#include "planevol/sampler.hpp"

namespace planevol {

constexpr double kOpacityEpsilon = 1e-8;

/// Front-to-back compositing of one ray given per-sample optical thickness
/// tau_i = sigma_i * delta_i.
struct Composite {
    std::array<double, 3> rgb{0.0, 0.0, 0.0};
    double opacity = 0.0;
    double depth = 0.0;      // sum_i w_i t_i
    double disparity = 0.0;  // opacity / depth, 0 when opacity <= kOpacityEpsilon
    std::vector<double> weights;
    std::vector<double> transmittance;  // T_i, size n + 1 (T_n is what leaks through)
};

Composite composite_tau(std::span<const double> tau, std::span<const std::array<double, 3>> rgb,
                        std::span<const double> t);
Composite composite(const SampleSet& s);

struct ColorResult {
    std::array<double, 3> rgb;
    double opacity;
    std::vector<double> weights;
};
ColorResult composite_color(const SampleSet& s);

struct DepthResult {
    double depth;
    double disparity;
};
DepthResult composite_depth(const SampleSet& s);

/// Reverse pass of the compositing weights: given dL/dw_i, writes dL/dtau_i.
void composite_weights_backward(std::span<const double> tau, const Composite& c, std::span<const double> grad_w,
                                std::span<double> grad_tau);

/// Collapses dL/d(rgb, opacity, disparity) of a composite into dL/dw_i
/// (added to grad_w), dL/dc_i (added) and dL/dt_i (added, may be empty).
void composite_outputs_backward(const Composite& c, std::span<const std::array<double, 3>> rgb,
                                std::span<const double> t, const std::array<double, 3>& grad_rgb,
                                double grad_opacity, double grad_disparity, std::span<double> grad_w,
                                std::span<std::array<double, 3>> grad_rgb_samples, std::span<double> grad_t);

enum class Branch { coarse, fine, joint };

const char* to_string(Branch b);
Branch branch_from_string(const std::string& s);

struct RenderedView {
    Branch branch = Branch::coarse;
    Image rgb;        // 3 channels
    Image disparity;  // 1 channel
    Image opacity;    // 1 channel
    Image depth;      // 1 channel, sum_i w_i t_i
};

}  // namespace planevol
