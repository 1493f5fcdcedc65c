#include "planevol/pipeline.hpp"

#include <cmath>
#include <optional>
#include <string>

#include "planevol/rng.hpp"

namespace planevol {

namespace {

constexpr int kPosWidth = encoding_width(kPositionFrequencies);
constexpr int kDirWidth = encoding_width(kDirectionFrequencies);

struct Context {
    const Model& model;
    const MultiPlaneImage& mpi;
    std::vector<double> delta_c;
    const FeatureMap* features;
    const Camera& src;
    const Camera& tgt;
    bool fine;
    std::uint64_t seed;
    std::uint64_t iteration;
    std::uint64_t view_tag;
    bool jitter;

    const ParameterStore& store() const { return model.store(); }
    int planes() const { return mpi.planes(); }
    int fine_samples() const { return model.config().fine_samples; }
};

struct FineSample {
    InverseSample inv;
    PlanePoint point;
    BilinearTaps taps;
    bool valid = false;
    double raw[4] = {0.0, 0.0, 0.0, 0.0};
};

struct RayTrace {
    int x = 0;
    int y = 0;
    std::optional<SourceRay> ray;

    std::vector<BilinearTaps> taps_c;
    std::vector<double> tau_c;
    std::vector<std::array<double, 3>> rgb_c;
    Composite coarse;

    WeightPdf pdf;
    double weight_sum = 0.0;
    std::vector<FineSample> fs;
    std::vector<double> t_f, sigma_f, delta_f, tau_f;
    std::vector<std::array<double, 3>> rgb_f;
    Composite fine;

    std::vector<int> order;
    std::vector<double> t_j, delta_j, tau_j;
    std::vector<std::array<double, 3>> rgb_j;
    Composite joint;
};

struct Chunk {
    std::vector<RayTrace> rays;
    FineDecoder::Tape tape;
};

/// Loss gradient arriving at one ray, per branch (coarse, fine, joint).
struct RayGrad {
    std::array<std::array<double, 3>, 3> rgb{};
    std::array<double, 3> disparity{};
};

void require_finite(double v, const char* stage) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value produced by ") + stage);
}

// d(intervals)/d(t) for the rule delta_i = t_{i+1} - t_i, last = mean of the rest.
void intervals_backward(std::span<const double> grad_delta, std::span<double> grad_t) {
    const std::size_t n = grad_delta.size();
    if (n < 2) return;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        grad_t[i + 1] += grad_delta[i];
        grad_t[i] -= grad_delta[i];
    }
    const double g = grad_delta[n - 1] / static_cast<double>(n - 1);
    grad_t[n - 1] += g;
    grad_t[0] -= g;
}

void forward_coarse(const Context& ctx, RayTrace& r) {
    const int d = ctx.planes();
    const auto& depths = ctx.mpi.depths();
    r.taps_c.resize(d);
    r.tau_c.assign(d, 0.0);
    r.rgb_c.assign(d, {0.0, 0.0, 0.0});
    for (int k = 0; k < d; ++k) {
        const PlanePoint p = r.ray->at_depth(depths[k]);
        if (!p.valid) continue;
        r.taps_c[k] = bilinear_taps(ctx.mpi.width(), ctx.mpi.height(), p.x, p.y);
        double v[4];
        gather_bilinear(r.taps_c[k], ctx.mpi.values().subspan(k * ctx.mpi.plane_stride(), ctx.mpi.plane_stride()), 4,
                        v);
        r.rgb_c[k] = {v[0], v[1], v[2]};
        r.tau_c[k] = v[3] * ctx.delta_c[k];
    }
    r.coarse = composite_tau(r.tau_c, r.rgb_c, depths);
}

// Importance samples and their decoder input columns.
void forward_fine_inputs(const Context& ctx, RayTrace& r, Eigen::Ref<Eigen::MatrixXd> columns) {
    const int nf = ctx.fine_samples();
    const auto& depths = ctx.mpi.depths();
    r.pdf = weight_pdf(depths, r.coarse.weights);
    r.weight_sum = 0.0;
    for (double w : r.coarse.weights) r.weight_sum += w;
    const auto cdf = r.pdf.cdf();

    const std::uint64_t pixel = static_cast<std::uint64_t>(r.y) * ctx.tgt.width() + r.x;
    CounterRng rng(derive_stream(ctx.seed, {ctx.iteration, ctx.view_tag, pixel}));
    const auto u = stratified_uniforms(nf, rng, ctx.jitter);

    r.fs.assign(nf, FineSample{});
    r.t_f.resize(nf);
    const Vec3& dir = r.ray->direction_src();
    std::array<double, kFeatureChannels> feature{};
    for (int j = 0; j < nf; ++j) {
        FineSample& s = r.fs[j];
        s.inv = invert_cdf(r.pdf, cdf, u[j]);
        r.t_f[j] = s.inv.t;
        s.point = r.ray->at_depth(s.inv.t);
        auto col = columns.col(j);
        if (!s.point.valid) {
            col.setZero();
            continue;
        }
        s.valid = true;
        s.taps = bilinear_taps(ctx.features->width(), ctx.features->height(), s.point.x, s.point.y);
        gather_bilinear(s.taps, ctx.features->data(), kFeatureChannels, feature);
        build_decoder_input(s.point.source_point, dir, feature, std::span<double>(col.data(), col.size()));
    }
}

void forward_fine_composites(const Context& ctx, RayTrace& r, const double* raw) {
    const int nf = ctx.fine_samples();
    const int d = ctx.planes();
    r.sigma_f.assign(nf, 0.0);
    r.rgb_f.assign(nf, {0.0, 0.0, 0.0});
    for (int j = 0; j < nf; ++j) {
        FineSample& s = r.fs[j];
        if (!s.valid) continue;
        for (int c = 0; c < 4; ++c) s.raw[c] = raw[4 * j + c];
        const RadianceSample q = squash_decoder_output(s.raw);
        r.rgb_f[j] = q.rgb;
        r.sigma_f[j] = q.sigma;
    }
    r.delta_f = intervals_for(r.t_f, ctx.mpi.mean_spacing());
    r.tau_f.resize(nf);
    for (int j = 0; j < nf; ++j) r.tau_f[j] = r.sigma_f[j] * r.delta_f[j];
    r.fine = composite_tau(r.tau_f, r.rgb_f, r.t_f);

    const auto& depths = ctx.mpi.depths();
    r.order = merge_order(depths, r.t_f);
    const std::size_t m = r.order.size();
    r.t_j.resize(m);
    r.rgb_j.resize(m);
    r.tau_j.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const int e = r.order[i];
        r.t_j[i] = e >= 0 ? depths[e] : r.t_f[-e - 1];
    }
    r.delta_j = intervals_for(r.t_j, ctx.mpi.mean_spacing());
    for (std::size_t i = 0; i < m; ++i) {
        const int e = r.order[i];
        if (e >= 0) {
            r.rgb_j[i] = r.rgb_c[e];
            r.tau_j[i] = r.delta_j[i] > 0.0 ? r.tau_c[e] : 0.0;
        } else {
            const int j = -e - 1;
            r.rgb_j[i] = r.rgb_f[j];
            r.tau_j[i] = r.sigma_f[j] * r.delta_j[i];
        }
    }
    (void)d;
    r.joint = composite_tau(r.tau_j, r.rgb_j, r.t_j);
}

void forward_chunk(const Context& ctx, std::span<const std::pair<int, int>> pixels, Chunk& chunk, bool keep_tape) {
    const std::size_t n = pixels.size();
    chunk.rays.assign(n, RayTrace{});
    const int nf = ctx.fine_samples();
    Eigen::MatrixXd inputs;
    if (ctx.fine) inputs.resize(FineDecoder::kInputWidth, static_cast<Eigen::Index>(n) * nf);
    for (std::size_t i = 0; i < n; ++i) {
        RayTrace& r = chunk.rays[i];
        r.x = pixels[i].first;
        r.y = pixels[i].second;
        r.ray.emplace(ctx.src, ctx.tgt, r.x, r.y);
        forward_coarse(ctx, r);
        if (ctx.fine) forward_fine_inputs(ctx, r, inputs.middleCols(static_cast<Eigen::Index>(i) * nf, nf));
    }
    if (!ctx.fine) return;
    const Eigen::MatrixXd raw = ctx.model.decoder().forward(ctx.store(), inputs, keep_tape ? &chunk.tape : nullptr);
    for (std::size_t i = 0; i < n; ++i) {
        forward_fine_composites(ctx, chunk.rays[i], raw.data() + static_cast<Eigen::Index>(i) * nf * 4);
    }
}

void scatter(const BilinearTaps& taps, std::span<double> grid, int channels, int channel, double value) {
    for (int q = 0; q < 4; ++q) {
        if (taps.pixel[q] >= 0) grid[taps.pixel[q] * channels + channel] += taps.weight[q] * value;
    }
}

/// Accumulates into grad_mpi (squashed MPI values), grad_features and the
/// decoder's parameter gradients.
void backward_chunk(const Context& ctx, Chunk& chunk, std::span<const RayGrad> grads_in, std::span<double> grad_mpi,
                    FeatureMap* grad_features, Gradients& grads) {
    const int d = ctx.planes();
    const int nf = ctx.fine_samples();
    const std::size_t n = chunk.rays.size();
    const auto& depths = ctx.mpi.depths();

    struct Pending {
        std::vector<double> g_w_c, dtau_c;
        std::vector<std::array<double, 3>> dc_c;
        std::vector<double> dt_f;
    };
    std::vector<Pending> pend(n);
    Eigen::MatrixXd grad_raw;
    if (ctx.fine) grad_raw = Eigen::MatrixXd::Zero(4, static_cast<Eigen::Index>(n) * nf);

    for (std::size_t i = 0; i < n; ++i) {
        RayTrace& r = chunk.rays[i];
        const RayGrad& g = grads_in[i];
        Pending& p = pend[i];
        p.g_w_c.assign(d, 0.0);
        p.dtau_c.assign(d, 0.0);
        p.dc_c.assign(d, {0.0, 0.0, 0.0});
        composite_outputs_backward(r.coarse, r.rgb_c, depths, g.rgb[0], 0.0, g.disparity[0], p.g_w_c, p.dc_c, {});
        if (!ctx.fine) continue;

        p.dt_f.assign(nf, 0.0);
        std::vector<double> dsigma_f(nf, 0.0);
        std::vector<std::array<double, 3>> dc_f(nf, {0.0, 0.0, 0.0});

        // Fine-only branch.
        {
            std::vector<double> g_w(nf, 0.0), dtau(nf), ddelta(nf);
            composite_outputs_backward(r.fine, r.rgb_f, r.t_f, g.rgb[1], 0.0, g.disparity[1], g_w, dc_f, p.dt_f);
            composite_weights_backward(r.tau_f, r.fine, g_w, dtau);
            for (int j = 0; j < nf; ++j) {
                dsigma_f[j] += dtau[j] * r.delta_f[j];
                ddelta[j] = dtau[j] * r.sigma_f[j];
            }
            intervals_backward(ddelta, p.dt_f);
        }
        // Joint branch.
        {
            const std::size_t m = r.order.size();
            std::vector<double> g_w(m, 0.0), dtau(m), ddelta(m, 0.0), dt(m, 0.0);
            std::vector<std::array<double, 3>> dc(m, {0.0, 0.0, 0.0});
            composite_outputs_backward(r.joint, r.rgb_j, r.t_j, g.rgb[2], 0.0, g.disparity[2], g_w, dc, dt);
            composite_weights_backward(r.tau_j, r.joint, g_w, dtau);
            for (std::size_t q = 0; q < m; ++q) {
                const int e = r.order[q];
                if (e >= 0) {
                    if (r.delta_j[q] > 0.0) p.dtau_c[e] += dtau[q];
                    for (int c = 0; c < 3; ++c) p.dc_c[e][c] += dc[q][c];
                } else {
                    const int j = -e - 1;
                    dsigma_f[j] += dtau[q] * r.delta_j[q];
                    ddelta[q] = dtau[q] * r.sigma_f[j];
                    for (int c = 0; c < 3; ++c) dc_f[j][c] += dc[q][c];
                }
            }
            intervals_backward(ddelta, dt);
            for (std::size_t q = 0; q < m; ++q) {
                if (r.order[q] < 0) p.dt_f[-r.order[q] - 1] += dt[q];
            }
        }
        for (int j = 0; j < nf; ++j) {
            const FineSample& s = r.fs[j];
            if (!s.valid) continue;
            auto col = grad_raw.col(static_cast<Eigen::Index>(i) * nf + j);
            for (int c = 0; c < 3; ++c) {
                const double sg = sigmoid(s.raw[c]);
                col(c) = dc_f[j][c] * sg * (1.0 - sg);
            }
            col(3) = dsigma_f[j] * sigmoid(s.raw[3]);
        }
    }

    Eigen::MatrixXd grad_inputs;
    if (ctx.fine) {
        ctx.model.decoder().backward(ctx.store(), chunk.tape, grad_raw, grads, &grad_inputs);
    }

    std::array<double, kFeatureChannels> dfx{}, dfy{};
    for (std::size_t i = 0; i < n; ++i) {
        RayTrace& r = chunk.rays[i];
        Pending& p = pend[i];
        if (ctx.fine) {
            for (int j = 0; j < nf; ++j) {
                const FineSample& s = r.fs[j];
                if (!s.valid) continue;
                const auto gin = grad_inputs.col(static_cast<Eigen::Index>(i) * nf + j);
                const Vec3 dx = positional_encoding_backward(s.point.source_point, kPositionFrequencies,
                                                             std::span<const double>(gin.data(), kPosWidth));
                double dt = dx.dot(r.ray->point_rate());
                const double* gf = gin.data() + kPosWidth + kDirWidth;
                if (s.taps.any()) {
                    for (int c = 0; c < kFeatureChannels; ++c) {
                        for (int q = 0; q < 4; ++q) {
                            if (s.taps.pixel[q] >= 0 && grad_features) {
                                grad_features->data()[s.taps.pixel[q] * kFeatureChannels + c] += s.taps.weight[q] * gf[c];
                            }
                        }
                    }
                    bilinear_location_grad(s.taps, ctx.features->data(), kFeatureChannels, dfx, dfy);
                    const auto [rx, ry] = r.ray->pixel_rate(s.point);
                    for (int c = 0; c < kFeatureChannels; ++c) dt += gf[c] * (dfx[c] * rx + dfy[c] * ry);
                }
                p.dt_f[j] += dt;
            }
            // Through the inverse CDF into the normalized masses, then the weights.
            if (!r.pdf.uniform_fallback) {
                std::vector<double> dm(d, 0.0);
                for (int j = 0; j < nf; ++j) {
                    const double dt = p.dt_f[j];
                    const InverseSample& inv = r.fs[j].inv;
                    const double mb = r.pdf.masses[inv.bin];
                    if (dt == 0.0 || !(mb > 0.0)) continue;
                    const double width = r.pdf.edges[inv.bin + 1] - r.pdf.edges[inv.bin];
                    dm[inv.bin] -= dt * inv.frac * width / mb;
                    for (std::size_t b = 0; b < inv.bin; ++b) dm[b] -= dt * width / mb;
                }
                double dot = 0.0;
                for (int k = 0; k < d; ++k) dot += dm[k] * r.pdf.masses[k];
                for (int k = 0; k < d; ++k) p.g_w_c[k] += (dm[k] - dot) / r.weight_sum;
            }
        }
        std::vector<double> dtau(d);
        composite_weights_backward(r.tau_c, r.coarse, p.g_w_c, dtau);
        for (int k = 0; k < d; ++k) {
            const double dsigma = (dtau[k] + p.dtau_c[k]) * ctx.delta_c[k];
            auto plane = grad_mpi.subspan(k * ctx.mpi.plane_stride(), ctx.mpi.plane_stride());
            if (dsigma != 0.0) scatter(r.taps_c[k], plane, 4, 3, dsigma);
            for (int c = 0; c < 3; ++c) {
                if (p.dc_c[k][c] != 0.0) scatter(r.taps_c[k], plane, 4, c, p.dc_c[k][c]);
            }
        }
    }
}

std::vector<std::vector<std::pair<int, int>>> split_pixels(const std::vector<std::pair<int, int>>& pixels,
                                                           std::size_t chunk) {
    std::vector<std::vector<std::pair<int, int>>> out;
    for (std::size_t i = 0; i < pixels.size(); i += chunk) {
        out.emplace_back(pixels.begin() + i, pixels.begin() + std::min(pixels.size(), i + chunk));
    }
    return out;
}

struct BranchImages {
    Image rgb;
    Image disparity;
    Image opacity;
    Image depth;
};

BranchImages make_images(int w, int h) { return {Image(w, h, 3), Image(w, h, 1), Image(w, h, 1), Image(w, h, 1)}; }

void store_pixel(BranchImages& img, int x, int y, const Composite& c) {
    for (int k = 0; k < 3; ++k) img.rgb.at(x, y, k) = c.rgb[k];
    img.disparity.at(x, y) = c.disparity;
    img.opacity.at(x, y) = c.opacity;
    img.depth.at(x, y) = c.depth;
}

}  // namespace

StepResult evaluate_patch(const Model& model, const TrainingData& data, const Patch& patch,
                          const LossWeights& weights, const StepOptions& options) {
    if (patch.view >= data.views.size()) throw DomainError("evaluate_patch: view index out of range");
    const ViewData& view = data.views[patch.view];
    if (patch.width < 1 || patch.height < 1 || patch.x0 < 0 || patch.y0 < 0 ||
        patch.x0 + patch.width > view.camera.width() || patch.y0 + patch.height > view.camera.height()) {
        throw DomainError("evaluate_patch: patch outside the view");
    }
    const ParameterStore& store = model.store();
    const bool fine = options.objective != Objective::coarse;
    const bool need_features = fine || model.coarse_needs_features();

    FeatureExtractor::Tape ftape;
    FeatureMap features;
    if (need_features) features = model.extractor().forward(store, data.source_image, options.want_grad ? &ftape : nullptr);
    std::vector<double> raw_mpi;
    const MultiPlaneImage mpi = model.predictor().predict(store, need_features ? &features : nullptr, &raw_mpi);

    Context ctx{model,  mpi,         mpi.intervals(), need_features ? &features : nullptr, data.source, view.camera,
                fine,   options.seed, options.iteration, patch.view, options.jitter};

    std::vector<std::pair<int, int>> pixels;
    for (int y = 0; y < patch.height; ++y)
        for (int x = 0; x < patch.width; ++x) pixels.emplace_back(patch.x0 + x, patch.y0 + y);
    const auto parts = split_pixels(pixels, kRayChunk);
    std::vector<Chunk> chunks(parts.size());
    parallel_for(parts.size(), [&](std::size_t c) { forward_chunk(ctx, parts[c], chunks[c], options.want_grad); });

    // Rendered patches per branch.
    std::array<BranchImages, 3> img{make_images(patch.width, patch.height), make_images(patch.width, patch.height),
                                    make_images(patch.width, patch.height)};
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        for (const RayTrace& r : chunks[c].rays) {
            const int x = r.x - patch.x0, y = r.y - patch.y0;
            store_pixel(img[0], x, y, r.coarse);
            if (fine) {
                store_pixel(img[1], x, y, r.fine);
                store_pixel(img[2], x, y, r.joint);
            }
        }
    }

    const Image gt = view.rgb.crop(patch.x0, patch.y0, patch.width, patch.height);
    Image teacher;
    if (!view.teacher.empty()) teacher = view.teacher.crop(patch.x0, patch.y0, patch.width, patch.height);
    SparsePoints points;
    for (const SparsePoint& p : view.points) {
        const double x = p.x - patch.x0, y = p.y - patch.y0;
        if (std::lround(x) >= 0 && std::lround(y) >= 0 && std::lround(x) < patch.width && std::lround(y) < patch.height) {
            points.push_back(SparsePoint{x, y, p.z});
        }
    }
    BranchTargets targets{&gt, points.empty() ? nullptr : &points, teacher.empty() ? nullptr : &teacher};

    StepResult result;
    std::array<BranchGrads, 3> bgrads;
    const std::array<double, 3> coef{options.objective == Objective::fine_joint ? 0.0 : 1.0, kFineLossWeight, 1.0};
    const bool grad = options.want_grad;
    result.report.coarse = branch_loss(img[0].rgb, img[0].disparity, targets, weights, grad ? &bgrads[0] : nullptr);
    result.report.has_coarse = true;
    if (fine) {
        result.report.fine = branch_loss(img[1].rgb, img[1].disparity, targets, weights, grad ? &bgrads[1] : nullptr);
        result.report.joint = branch_loss(img[2].rgb, img[2].disparity, targets, weights, grad ? &bgrads[2] : nullptr);
        result.report.has_fine = result.report.has_joint = true;
    }
    result.report.total = weighted_total(result.report);
    require_finite(result.report.total, "loss evaluation");
    switch (options.objective) {
        case Objective::coarse: result.objective = result.report.coarse.total; break;
        case Objective::fine_joint:
            result.objective = kFineLossWeight * result.report.fine.total + result.report.joint.total;
            break;
        case Objective::full: result.objective = result.report.total; break;
    }
    if (!grad) return result;

    // Per-ray loss gradients.
    std::vector<RayGrad> ray_grads(pixels.size());
    for (int y = 0; y < patch.height; ++y) {
        for (int x = 0; x < patch.width; ++x) {
            RayGrad& g = ray_grads[static_cast<std::size_t>(y) * patch.width + x];
            for (int b = 0; b < (fine ? 3 : 1); ++b) {
                for (int k = 0; k < 3; ++k) g.rgb[b][k] = coef[b] * bgrads[b].rgb.at(x, y, k);
                g.disparity[b] = coef[b] * bgrads[b].disparity.at(x, y);
            }
        }
    }

    // Each chunk writes private buffers; they are summed in chunk order.
    const std::size_t nchunks = chunks.size();
    std::vector<std::vector<double>> grad_mpi(nchunks);
    std::vector<FeatureMap> grad_feat(nchunks);
    std::vector<Gradients> chunk_grads(nchunks);
    parallel_for(nchunks, [&](std::size_t c) {
        grad_mpi[c].assign(mpi.values().size(), 0.0);
        if (need_features) grad_feat[c] = FeatureMap(features.width(), features.height(), kFeatureChannels);
        chunk_grads[c] = Gradients(store);
        backward_chunk(ctx, chunks[c], std::span<const RayGrad>(ray_grads).subspan(c * kRayChunk, chunks[c].rays.size()),
                       grad_mpi[c], need_features ? &grad_feat[c] : nullptr, chunk_grads[c]);
        chunks[c] = Chunk{};
    });
    result.grads = Gradients(store);
    std::vector<double> total_mpi(mpi.values().size(), 0.0);
    FeatureMap total_feat;
    if (need_features) total_feat = FeatureMap(features.width(), features.height(), kFeatureChannels);
    for (std::size_t c = 0; c < nchunks; ++c) {
        result.grads += chunk_grads[c];
        for (std::size_t i = 0; i < total_mpi.size(); ++i) total_mpi[i] += grad_mpi[c][i];
        if (need_features) {
            for (std::size_t i = 0; i < total_feat.size(); ++i) total_feat.data()[i] += grad_feat[c].data()[i];
        }
    }
    model.predictor().backward(store, need_features ? &features : nullptr, raw_mpi, total_mpi, result.grads,
                               need_features ? &total_feat : nullptr);
    if (need_features) model.extractor().backward(store, ftape, total_feat, result.grads);
    if (!result.grads.all_finite()) throw NumericalError("non-finite value produced by the backward pass");
    return result;
}

std::vector<RenderedView> render_branches(const Model& model, const Image& source_image, const Camera& src,
                                          const Camera& tgt, std::span<const Branch> branches,
                                          const RenderOptions& options) {
    if (options.batch_size < 1) throw DomainError("render: batch_size must be positive");
    const ParameterStore& store = model.store();
    bool fine = false;
    for (Branch b : branches) fine = fine || b != Branch::coarse;
    const bool need_features = fine || model.coarse_needs_features();
    FeatureMap features;
    if (need_features) features = model.extractor().forward(store, source_image);
    const MultiPlaneImage mpi = model.predictor().predict(store, need_features ? &features : nullptr);
    Context ctx{model, mpi, mpi.intervals(), need_features ? &features : nullptr, src, tgt, fine,
                options.seed, options.iteration, options.view_tag, options.jitter};

    const int w = tgt.width(), h = tgt.height();
    std::vector<std::pair<int, int>> pixels;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) pixels.emplace_back(x, y);
    const auto parts = split_pixels(pixels, options.batch_size);
    std::array<BranchImages, 3> img{make_images(w, h), make_images(w, h), make_images(w, h)};
    parallel_for(parts.size(), [&](std::size_t c) {
        Chunk chunk;
        forward_chunk(ctx, parts[c], chunk, false);
        for (const RayTrace& r : chunk.rays) {
            store_pixel(img[0], r.x, r.y, r.coarse);
            if (fine) {
                store_pixel(img[1], r.x, r.y, r.fine);
                store_pixel(img[2], r.x, r.y, r.joint);
            }
        }
    });
    std::vector<RenderedView> out;
    for (Branch b : branches) {
        const BranchImages& i = img[static_cast<int>(b)];
        out.push_back(RenderedView{b, i.rgb, i.disparity, i.opacity, i.depth});
        for (double v : i.rgb.data()) require_finite(v, "render");
    }
    return out;
}

RenderedView render_view(const Model& model, const Image& source_image, const Camera& src, const Camera& tgt,
                         Branch branch, const RenderOptions& options) {
    const Branch b[1] = {branch};
    return render_branches(model, source_image, src, tgt, b, options).front();
}

}  // namespace planevol
