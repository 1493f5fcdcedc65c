#include "planevol/losses.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace planevol {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) throw DomainError(std::string(what) + ": image shapes differ");
}

// n x n matrix applying the 1-D Gaussian window with symmetric padding.
Eigen::MatrixXd window_matrix(int n) {
    constexpr int r = kSsimWindow / 2;
    double g[kSsimWindow];
    double total = 0.0;
    for (int o = -r; o <= r; ++o) total += g[o + r] = std::exp(-0.5 * o * o / (kSsimSigma * kSsimSigma));
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int o = -r; o <= r; ++o) {
            int j = i + o;
            if (j < 0) j = -j - 1;
            if (j >= n) j = 2 * n - j - 1;
            k(i, j) += g[o + r] / total;
        }
    }
    return k;
}

Eigen::MatrixXd channel(const Image& img, int c) {
    Eigen::MatrixXd m(img.height(), img.width());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) m(y, x) = img.at(x, y, c);
    return m;
}

struct Usable {
    std::vector<std::size_t> pixel;
    std::vector<double> log_ratio;
};

int nearest(double v) { return static_cast<int>(std::lround(v)); }

Usable usable_points(const Image& disparity, const SparsePoints& points) {
    Usable u;
    for (const auto& p : points) {
        const int x = nearest(p.x);
        const int y = nearest(p.y);
        if (x < 0 || y < 0 || x >= disparity.width() || y >= disparity.height()) continue;
        const double d = disparity.at(x, y);
        if (!(d > 0.0) || !(p.z > 0.0)) continue;
        u.pixel.push_back(disparity.index(x, y));
        u.log_ratio.push_back(std::log(d) + std::log(p.z));
    }
    return u;
}

Usable usable_dense(const Image& disparity, const Image& reference) {
    require_same_shape(disparity, reference, "align_scale");
    Usable u;
    for (std::size_t i = 0; i < disparity.size(); ++i) {
        const double d = disparity.data()[i];
        const double r = reference.data()[i];
        if (d > 0.0 && r > 0.0) {
            u.pixel.push_back(i);
            u.log_ratio.push_back(std::log(d) - std::log(r));
        }
    }
    return u;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

double l1_loss(const Image& a, const Image& b, Image* grad) {
    require_same_shape(a, b, "l1_loss");
    if (a.empty()) throw DomainError("l1_loss: empty image");
    const double n = static_cast<double>(a.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a.data()[i] - b.data()[i]);
    if (grad) {
        *grad = Image(a.width(), a.height(), a.channels());
        for (std::size_t i = 0; i < a.size(); ++i) grad->data()[i] = sign(a.data()[i] - b.data()[i]) / n;
    }
    return sum / n;
}

double ssim(const Image& a, const Image& b, Image* grad) {
    require_same_shape(a, b, "ssim");
    if (a.width() < kSsimWindow || a.height() < kSsimWindow) {
        throw DomainError("ssim: image is smaller than the 11x11 window");
    }
    const int w = a.width();
    const int h = a.height();
    const Eigen::MatrixXd kx = window_matrix(w);
    const Eigen::MatrixXd ky = window_matrix(h);
    auto filter = [&](const Eigen::MatrixXd& m) -> Eigen::MatrixXd { return ky * m * kx.transpose(); };
    auto filter_t = [&](const Eigen::MatrixXd& m) -> Eigen::MatrixXd { return ky.transpose() * m * kx; };

    const double count = static_cast<double>(w) * h * a.channels();
    double total = 0.0;
    if (grad) *grad = Image(w, h, a.channels());
    for (int c = 0; c < a.channels(); ++c) {
        const Eigen::MatrixXd x = channel(a, c);
        const Eigen::MatrixXd y = channel(b, c);
        const Eigen::MatrixXd mx = filter(x);
        const Eigen::MatrixXd my = filter(y);
        const Eigen::MatrixXd exx = filter(x.cwiseProduct(x));
        const Eigen::MatrixXd eyy = filter(y.cwiseProduct(y));
        const Eigen::MatrixXd exy = filter(x.cwiseProduct(y));
        Eigen::MatrixXd d_mx(h, w), d_exx(h, w), d_exy(h, w);
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const double ux = mx(i, j), uy = my(i, j);
                const double vx = exx(i, j) - ux * ux;
                const double vy = eyy(i, j) - uy * uy;
                const double cxy = exy(i, j) - ux * uy;
                const double a1 = 2.0 * ux * uy + kSsimC1;
                const double a2 = 2.0 * cxy + kSsimC2;
                const double b1 = ux * ux + uy * uy + kSsimC1;
                const double b2 = vx + vy + kSsimC2;
                const double s = a1 * a2 / (b1 * b2);
                total += s;
                if (grad) {
                    // Partials with respect to mu_x, E[x^2] and E[xy].
                    d_mx(i, j) = (2.0 * uy * a2 - 2.0 * uy * a1) / (b1 * b2) - s * 2.0 * ux / b1 + s * 2.0 * ux / b2;
                    d_exx(i, j) = -s / b2;
                    d_exy(i, j) = 2.0 * a1 / (b1 * b2);
                }
            }
        }
        if (grad) {
            const Eigen::MatrixXd g = filter_t(d_mx) + 2.0 * x.cwiseProduct(filter_t(d_exx)) +
                                      y.cwiseProduct(filter_t(d_exy));
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) grad->at(j, i, c) = g(i, j) / count;
        }
    }
    return total / count;
}

double ssim_loss(const Image& a, const Image& b, Image* grad) {
    const double s = ssim(a, b, grad);
    if (grad) {
        for (double& v : grad->data()) v = -v;
    }
    return 1.0 - s;
}

double align_scale(const Image& disparity, const SparsePoints& points) {
    const Usable u = usable_points(disparity, points);
    if (u.pixel.empty()) throw ScaleError("align_scale: no usable reference points");
    return std::exp(mean_of(u.log_ratio));
}

double align_scale(const Image& disparity, const Image& reference) {
    const Usable u = usable_dense(disparity, reference);
    if (u.pixel.empty()) throw ScaleError("align_scale: no usable reference pixels");
    return std::exp(mean_of(u.log_ratio));
}

double point_loss(const Image& disparity, const SparsePoints& points, Image* grad) {
    const Usable u = usable_points(disparity, points);
    if (u.pixel.empty()) throw ScaleError("point_loss: no usable reference points");
    const double n = static_cast<double>(u.pixel.size());
    const double mean = mean_of(u.log_ratio);
    double loss = 0.0;
    double mean_sign = 0.0;
    std::vector<double> signs(u.pixel.size());
    for (std::size_t i = 0; i < u.pixel.size(); ++i) {
        const double r = u.log_ratio[i] - mean;
        loss += std::abs(r);
        signs[i] = sign(r);
        mean_sign += signs[i];
    }
    mean_sign /= n;
    if (grad) {
        *grad = Image(disparity.width(), disparity.height(), 1);
        for (std::size_t i = 0; i < u.pixel.size(); ++i) {
            const std::size_t p = u.pixel[i];
            grad->data()[p] += (signs[i] - mean_sign) / (n * disparity.data()[p]);
        }
    }
    return loss / n;
}

double pseudo_depth_loss(const Image& disparity, const Image& teacher, double lambda_grad, bool align, Image* grad) {
    require_same_shape(disparity, teacher, "pseudo_depth_loss");
    if (disparity.channels() != 1) throw DomainError("pseudo_depth_loss: expected single-channel maps");
    const int w = disparity.width();
    const int h = disparity.height();
    Usable u;
    double scale = 1.0;
    if (align) {
        u = usable_dense(disparity, teacher);
        if (u.pixel.empty()) throw ScaleError("pseudo_depth_loss: no usable reference pixels");
        scale = std::exp(mean_of(u.log_ratio));
    }
    Image aligned(w, h, 1);
    for (std::size_t i = 0; i < aligned.size(); ++i) aligned.data()[i] = disparity.data()[i] / scale;

    // dL/d(aligned) first, then through the scale.
    Image g(w, h, 1);
    const double n = static_cast<double>(w) * h;
    double loss = 0.0;
    for (std::size_t i = 0; i < aligned.size(); ++i) {
        const double r = aligned.data()[i] - teacher.data()[i];
        loss += std::abs(r) / n;
        g.data()[i] += sign(r) / n;
    }
    if (lambda_grad != 0.0) {
        if (w > 1) {
            const double nx = static_cast<double>(w - 1) * h;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x + 1 < w; ++x) {
                    const double r = (aligned.at(x + 1, y) - aligned.at(x, y)) - (teacher.at(x + 1, y) - teacher.at(x, y));
                    loss += lambda_grad * std::abs(r) / nx;
                    const double s = lambda_grad * sign(r) / nx;
                    g.at(x + 1, y) += s;
                    g.at(x, y) -= s;
                }
            }
        }
        if (h > 1) {
            const double ny = static_cast<double>(w) * (h - 1);
            for (int y = 0; y + 1 < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const double r = (aligned.at(x, y + 1) - aligned.at(x, y)) - (teacher.at(x, y + 1) - teacher.at(x, y));
                    loss += lambda_grad * std::abs(r) / ny;
                    const double s = lambda_grad * sign(r) / ny;
                    g.at(x, y + 1) += s;
                    g.at(x, y) -= s;
                }
            }
        }
    }
    if (grad) {
        *grad = Image(w, h, 1);
        double ga = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            grad->data()[i] = g.data()[i] / scale;
            ga += g.data()[i] * aligned.data()[i];
        }
        if (align) {
            // ln s is the mean of ln D over usable pixels.
            const double m = static_cast<double>(u.pixel.size());
            for (std::size_t p : u.pixel) grad->data()[p] -= ga / (m * disparity.data()[p]);
        }
    }
    return loss;
}

BranchTerms branch_loss(const Image& rgb, const Image& disparity, const BranchTargets& targets,
                        const LossWeights& weights, BranchGrads* grads) {
    if (!targets.rgb) throw DomainError("branch_loss: an RGB target is required");
    BranchTerms t;
    Image g;
    t.l1 = l1_loss(rgb, *targets.rgb, grads ? &g : nullptr);
    t.total = t.l1;
    if (grads) {
        grads->rgb = g;
        grads->disparity = Image(disparity.width(), disparity.height(), 1);
    }
    auto add = [](Image& into, const Image& from, double scale) {
        for (std::size_t i = 0; i < into.size(); ++i) into.data()[i] += scale * from.data()[i];
    };
    if (weights.ssim != 0.0 && rgb.width() >= kSsimWindow && rgb.height() >= kSsimWindow) {
        t.ssim = ssim_loss(rgb, *targets.rgb, grads ? &g : nullptr);
        t.has_ssim = true;
        t.total += weights.ssim * t.ssim;
        if (grads) add(grads->rgb, g, weights.ssim);
    }
    if (weights.point != 0.0 && targets.points && !usable_points(disparity, *targets.points).pixel.empty()) {
        t.point = point_loss(disparity, *targets.points, grads ? &g : nullptr);
        t.has_point = true;
        t.total += weights.point * t.point;
        if (grads) add(grads->disparity, g, weights.point);
    }
    if (weights.pseudo_depth != 0.0 && targets.teacher &&
        !usable_dense(disparity, *targets.teacher).pixel.empty()) {
        t.pseudo_depth = pseudo_depth_loss(disparity, *targets.teacher, weights.grad, true, grads ? &g : nullptr);
        t.has_pseudo_depth = true;
        t.total += weights.pseudo_depth * t.pseudo_depth;
        if (grads) add(grads->disparity, g, weights.pseudo_depth);
    }
    return t;
}

double weighted_total(const LossReport& r) {
    double total = 0.0;
    if (r.has_coarse) total += r.coarse.total;
    if (r.has_fine) total += kFineLossWeight * r.fine.total;
    if (r.has_joint) total += r.joint.total;
    return total;
}

double psnr(const Image& a, const Image& b) {
    require_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

DepthMetrics depth_metrics(const Image& depth, const Image& gt_depth) {
    require_same_shape(depth, gt_depth, "depth_metrics");
    double s1 = 0, sd = 0, sg = 0, sdd = 0, sdg = 0;
    for (std::size_t i = 0; i < depth.size(); ++i) {
        const double d = depth.data()[i], g = gt_depth.data()[i];
        if (!(d > 0.0 && g > 0.0)) continue;
        s1 += 1;
        sd += d;
        sg += g;
        sdd += d * d;
        sdg += d * g;
    }
    if (s1 == 0.0) throw ScaleError("depth_metrics: no pixel with positive depth");
    const double det = s1 * sdd - sd * sd;
    double a = 0.0, b = sg / s1;
    if (std::abs(det) > 1e-12 * s1 * sdd) {
        a = (s1 * sdg - sd * sg) / det;
        b = (sg - a * sd) / s1;
    }
    DepthMetrics m;
    for (std::size_t i = 0; i < depth.size(); ++i) {
        const double d0 = depth.data()[i], g = gt_depth.data()[i];
        if (!(d0 > 0.0 && g > 0.0)) continue;
        const double d = std::max(a * d0 + b, 1e-6);
        m.rel += std::abs(d - g) / g;
        m.log10 += std::abs(std::log10(d) - std::log10(g));
        m.rms += (d - g) * (d - g);
        const double ratio = std::max(d / g, g / d);
        m.delta1 += ratio < 1.25;
        m.delta2 += ratio < 1.25 * 1.25;
        m.delta3 += ratio < 1.25 * 1.25 * 1.25;
    }
    m.rel /= s1;
    m.log10 /= s1;
    m.rms = std::sqrt(m.rms / s1);
    m.delta1 /= s1;
    m.delta2 /= s1;
    m.delta3 /= s1;
    return m;
}

Metrics metrics(const Image& rgb, const Image& gt_rgb, const Image& depth, const Image& gt_depth) {
    Metrics m;
    m.psnr = psnr(rgb, gt_rgb);
    m.ssim = ssim(rgb, gt_rgb);
    m.depth = depth_metrics(depth, gt_depth);
    return m;
}

}  // namespace planevol
