#include "planevol/renderer.hpp"

#include <cmath>

namespace planevol {

Composite composite_tau(std::span<const double> tau, std::span<const std::array<double, 3>> rgb,
                        std::span<const double> t) {
    const std::size_t n = tau.size();
    Composite c;
    c.weights.resize(n);
    c.transmittance.resize(n + 1);
    double optical = 0.0;
    c.transmittance[0] = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double alpha = -std::expm1(-tau[i]);
        const double w = c.transmittance[i] * alpha;
        c.weights[i] = w;
        for (int k = 0; k < 3; ++k) c.rgb[k] += w * rgb[i][k];
        c.opacity += w;
        c.depth += w * t[i];
        optical += tau[i];
        c.transmittance[i + 1] = std::exp(-optical);
    }
    c.disparity = c.opacity > kOpacityEpsilon ? c.opacity / c.depth : 0.0;
    return c;
}

Composite composite(const SampleSet& s) {
    std::vector<double> tau(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) tau[i] = s.tau(i);
    return composite_tau(tau, s.rgb, s.t);
}

ColorResult composite_color(const SampleSet& s) {
    Composite c = composite(s);
    return ColorResult{c.rgb, c.opacity, std::move(c.weights)};
}

DepthResult composite_depth(const SampleSet& s) {
    const Composite c = composite(s);
    return DepthResult{c.depth, c.disparity};
}

void composite_weights_backward(std::span<const double> tau, const Composite& c, std::span<const double> grad_w,
                                std::span<double> grad_tau) {
    // dw_i/dtau_k = -w_i for k < i and T_{k+1} for k = i.
    double later = 0.0;
    for (std::size_t k = tau.size(); k-- > 0;) {
        grad_tau[k] = grad_w[k] * c.transmittance[k] * std::exp(-tau[k]) - later;
        later += grad_w[k] * c.weights[k];
    }
}

void composite_outputs_backward(const Composite& c, std::span<const std::array<double, 3>> rgb,
                                std::span<const double> t, const std::array<double, 3>& grad_rgb,
                                double grad_opacity, double grad_disparity, std::span<double> grad_w,
                                std::span<std::array<double, 3>> grad_rgb_samples, std::span<double> grad_t) {
    double g_opacity = grad_opacity;
    double g_depth = 0.0;
    if (c.opacity > kOpacityEpsilon && grad_disparity != 0.0) {
        g_opacity += grad_disparity / c.depth;
        g_depth = -grad_disparity * c.opacity / (c.depth * c.depth);
    }
    for (std::size_t i = 0; i < c.weights.size(); ++i) {
        const double w = c.weights[i];
        grad_w[i] += grad_rgb[0] * rgb[i][0] + grad_rgb[1] * rgb[i][1] + grad_rgb[2] * rgb[i][2] + g_opacity +
                     g_depth * t[i];
        for (int k = 0; k < 3; ++k) grad_rgb_samples[i][k] += w * grad_rgb[k];
        if (!grad_t.empty()) grad_t[i] += g_depth * w;
    }
}

const char* to_string(Branch b) {
    switch (b) {
        case Branch::coarse: return "coarse";
        case Branch::fine: return "fine";
        case Branch::joint: return "joint";
    }
    return "?";
}

Branch branch_from_string(const std::string& s) {
    if (s == "coarse") return Branch::coarse;
    if (s == "fine") return Branch::fine;
    if (s == "joint") return Branch::joint;
    throw DomainError("unknown branch '" + s + "' (expected coarse, fine or joint)");
}

}  // namespace planevol
