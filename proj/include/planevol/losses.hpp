#pragma once

#include <vector>

#include "planevol/common.hpp"

namespace planevol {

/// A pixel of some view with the metric depth seen there.
struct SparsePoint {
    double x;
    double y;
    double z;
};
using SparsePoints = std::vector<SparsePoint>;

/// Mean absolute difference. `grad` (optional) receives dL/da.
double l1_loss(const Image& a, const Image& b, Image* grad = nullptr);

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean SSIM over all positions and channels; Gaussian window, symmetric
/// padding. Throws DomainError if either side is smaller than the window.
double ssim(const Image& a, const Image& b, Image* grad = nullptr);
/// 1 - ssim(a, b); `grad` receives dL/da.
double ssim_loss(const Image& a, const Image& b, Image* grad = nullptr);

/// s = exp(mean(ln D - ln d_ref)) over usable references (both positive).
/// Points are read at the nearest pixel. Throws ScaleError when none is usable.
double align_scale(const Image& disparity, const SparsePoints& points);
double align_scale(const Image& disparity, const Image& reference);

/// Mean |ln(D/s) - ln(1/z)| over usable points.
double point_loss(const Image& disparity, const SparsePoints& points, Image* grad = nullptr);

/// mean|D/s - D*| + lambda_grad * (mean|dx(D/s) - dx D*| + mean|dy(D/s) - dy D*|)
/// with forward differences. With align off, s = 1.
double pseudo_depth_loss(const Image& disparity, const Image& teacher, double lambda_grad, bool align = true,
                         Image* grad = nullptr);

struct LossWeights {
    double ssim = 1.0;
    double point = 1.0;
    double pseudo_depth = 1.0;
    double grad = 20.0;

    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Supervision for one rendered image. Null members are unavailable.
struct BranchTargets {
    const Image* rgb = nullptr;
    const SparsePoints* points = nullptr;
    const Image* teacher = nullptr;
};

struct BranchTerms {
    double l1 = 0.0;
    double ssim = 0.0;
    double point = 0.0;
    double pseudo_depth = 0.0;
    bool has_ssim = false;
    bool has_point = false;
    bool has_pseudo_depth = false;
    double total = 0.0;
};

struct BranchGrads {
    Image rgb;
    Image disparity;
};

/// L1 + w.ssim * SSIM loss + w.point * point loss + w.pseudo_depth * pseudo-depth
/// loss; unavailable terms (no targets, image smaller than the SSIM window,
/// no usable references, zero weight) are left out.
BranchTerms branch_loss(const Image& rgb, const Image& disparity, const BranchTargets& targets,
                        const LossWeights& weights, BranchGrads* grads = nullptr);

constexpr double kFineLossWeight = 0.4;

struct LossReport {
    BranchTerms coarse;
    BranchTerms fine;
    BranchTerms joint;
    bool has_coarse = false;
    bool has_fine = false;
    bool has_joint = false;
    double total = 0.0;  // L_c + 0.4 L_f + L_j over the branches present
};

double weighted_total(const LossReport& r);

double psnr(const Image& a, const Image& b);

struct DepthMetrics {
    double rel = 0.0;
    double log10 = 0.0;
    double rms = 0.0;
    double delta1 = 0.0;
    double delta2 = 0.0;
    double delta3 = 0.0;
};

/// Fits a * depth + b to the ground truth by least squares over pixels where
/// both are positive, then scores the fitted depth.
DepthMetrics depth_metrics(const Image& depth, const Image& gt_depth);

struct Metrics {
    double psnr = 0.0;
    double ssim = 0.0;
    DepthMetrics depth;
};

Metrics metrics(const Image& rgb, const Image& gt_rgb, const Image& depth, const Image& gt_depth);

}  // namespace planevol
