#include "planevol/checks.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "planevol/model.hpp"
#include "planevol/optimizer.hpp"
#include "planevol/pipeline.hpp"
#include "planevol/renderer.hpp"
#include "planevol/rng.hpp"
#include "planevol/sampler.hpp"
#include "planevol/scene_oracle.hpp"

namespace planevol {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

SampleSet random_set(CounterRng& rng) {
    SampleSet s;
    const auto n = static_cast<std::size_t>(1 + rng.below(64));
    double t = 0.5 + rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
        t += 1e-3 + rng.uniform() * 0.2;
        // A mix of empty, thin and nearly opaque samples.
        const double kind = rng.uniform();
        const double sigma = kind < 0.2 ? 0.0 : kind < 0.9 ? rng.uniform() * 5.0 : 50.0 + rng.uniform() * 500.0;
        s.push_back(t, {rng.uniform(), rng.uniform(), rng.uniform()}, sigma);
    }
    assign_intervals(s, 0.1);
    return s;
}

}  // namespace

Fault fault_from_string(const std::string& s) {
    if (s == "none") return Fault::none;
    if (s == "sigma-sign") return Fault::sigma_sign;
    throw DomainError("unknown fault '" + s + "' (expected none or sigma-sign)");
}

SuiteResult check_compositing(std::size_t sets, std::uint64_t seed) {
    const auto t0 = Clock::now();
    SuiteResult r{"compositing oracle", false, "1e-12 abs", "", 0.0};
    CounterRng rng(derive_stream(seed, {0}));
    double worst = 0.0;
    double worst_conservation = 0.0;
    for (std::size_t k = 0; k < sets; ++k) {
        const SampleSet s = random_set(rng);
        const Composite c = composite(s);
        // Reference: running product of (1 - alpha).
        double trans = 1.0;
        double opacity = 0.0;
        double depth = 0.0;
        double tau_sum = 0.0;
        std::array<double, 3> rgb{0.0, 0.0, 0.0};
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double alpha = 1.0 - std::exp(-s.sigma[i] * s.delta[i]);
            const double w = trans * alpha;
            worst = std::max(worst, std::abs(w - c.weights[i]));
            worst = std::max(worst, std::abs(trans - c.transmittance[i]));
            for (int ch = 0; ch < 3; ++ch) rgb[ch] += w * s.rgb[i][ch];
            opacity += w;
            depth += w * s.t[i];
            tau_sum += s.sigma[i] * s.delta[i];
            trans *= 1.0 - alpha;
        }
        for (int ch = 0; ch < 3; ++ch) worst = std::max(worst, std::abs(rgb[ch] - c.rgb[ch]));
        worst = std::max(worst, std::abs(opacity - c.opacity));
        worst = std::max(worst, std::abs(depth - c.depth) / std::max(1.0, s.t.back()));
        double wsum = 0.0;
        for (double w : c.weights) wsum += w;
        worst_conservation = std::max(worst_conservation, std::abs(wsum - (1.0 - std::exp(-tau_sum))));
    }
    r.passed = worst <= 1e-12 && worst_conservation <= 1e-12;
    r.seconds = seconds_since(t0);
    r.detail = fmt("%.0f sets, max reference error %.3g, max conservation error %.3g", static_cast<double>(sets),
                   worst, worst_conservation);
    return r;
}

SuiteResult check_gradients(int size, int coords, std::uint64_t seed) {
    const auto t0 = Clock::now();
    SuiteResult r{"gradient check (" + std::to_string(size) + "x" + std::to_string(size) + ")", false,
                  "rel < 1e-4 (or abs <= 1e-10)", "", 0.0};

    ModelConfig mc;
    mc.width = mc.height = size;
    mc.planes = 8;
    mc.fine_samples = 4;
    mc.extractor_hidden = 4;
    Model model(mc);
    model.initialize(seed);
    // Break the symmetric start so every path carries gradient.
    ParameterStore& store = model.store();
    CounterRng noise(derive_stream(seed, {1}));
    for (auto& v : store.values(store.find("mpi.raw"))) v += 0.5 * noise.normal();
    const std::size_t sigma_bias = model.decoder().bias_block(FineDecoder::kLayers - 1);
    store.values(sigma_bias)[3] = 0.5;

    const LayeredScene scene = scene_preset("three-planes", size, size);
    const CameraRig rig = default_rig(size, size, 2);
    DataConfig dc;
    dc.points_per_view = 6;
    const TrainingData data = build_training_data(scene, rig.source, rig.targets, dc, seed);
    const Patch patch{1, 0, 0, size, size};
    StepOptions opt;
    opt.seed = seed;
    opt.iteration = 3;
    opt.objective = Objective::full;
    const LossWeights weights;
    const StepResult base = evaluate_patch(model, data, patch, weights, opt);

    // Coordinates spread evenly over the three parameter families.
    std::vector<std::vector<std::size_t>> family(3);
    for (std::size_t b = 0; b < store.block_count(); ++b) {
        const std::string& name = store.block(b).name;
        if (store.block(b).group == ParamGroup::frozen) continue;
        if (name.rfind("mpi", 0) == 0) family[0].push_back(b);
        if (name.rfind("extractor", 0) == 0) family[1].push_back(b);
        if (name.rfind("decoder", 0) == 0) family[2].push_back(b);
    }
    StepOptions fd = opt;
    fd.want_grad = false;
    CounterRng pick(derive_stream(seed, {2}));
    double worst_rel = 0.0;
    double worst_abs = 0.0;
    int failures = 0;
    int live = 0;
    std::string worst_at;
    for (int k = 0; k < coords; ++k) {
        const auto& blocks = family[k % 3];
        std::size_t total = 0;
        for (auto b : blocks) total += store.block(b).size();
        std::size_t idx = pick.below(total);
        std::size_t b = 0;
        for (auto cand : blocks) {
            if (idx < store.block(cand).size()) {
                b = cand;
                break;
            }
            idx -= store.block(cand).size();
        }
        double& theta = store.values(b)[idx];
        const double saved = theta;
        // Five-point stencil: the objective is O(10) while some gradients are
        // O(1e-7), so a two-point difference drowns in rounding.
        const double h = 1e-3 * std::max(1.0, std::abs(saved));
        auto at = [&](double offset) {
            theta = saved + offset;
            return evaluate_patch(model, data, patch, weights, fd).objective;
        };
        const double numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        theta = saved;
        const double analytic = base.grads.block(b)[idx];
        const double abs_err = std::abs(numeric - analytic);
        const double rel = abs_err / std::max(std::abs(numeric), std::abs(analytic));
        const bool ok = abs_err <= 1e-10 || rel < 1e-4;
        worst_abs = std::max(worst_abs, abs_err);
        if (std::abs(analytic) > 1e-8) ++live;
        if (!ok) ++failures;
        if ((abs_err > 1e-10 || std::abs(analytic) > 1e-8) && rel > worst_rel) {
            worst_rel = rel;
            worst_at = store.block(b).name + "[" + std::to_string(idx) + "]";
        }
    }
    r.passed = failures == 0;
    r.seconds = seconds_since(t0);
    r.detail = std::to_string(coords) + " coordinates (" + std::to_string(live) + " with |g| > 1e-8), " +
               std::to_string(failures) + " failures, worst rel " + fmt("%.3g", worst_rel) +
               (worst_at.empty() ? "" : " at " + worst_at) + fmt(", worst abs %.3g", worst_abs);
    return r;
}

SuiteResult check_exact_representation(const std::string& preset, int width, int height) {
    const auto t0 = Clock::now();
    SuiteResult r{"exact representation (" + preset + ")", false, "1e-9 abs", "", 0.0};
    const LayeredScene scene = scene_preset(preset, width, height);
    const ModelConfig mc;
    const auto depths = plane_depths(mc.near, mc.far, mc.planes);
    const MultiPlaneImage mpi = exact_mpi(scene, depths);
    const CameraRig rig = default_rig(width, height);
    std::vector<Camera> cams = rig.targets;
    cams.insert(cams.end(), rig.holdout.begin(), rig.holdout.end());
    double worst = 0.0;
    for (const Camera& cam : cams) {
        const OracleView truth = oracle_render(scene, rig.source, cam);
        for (int y = 0; y < cam.height(); ++y) {
            for (int x = 0; x < cam.width(); ++x) {
                const Composite c = composite(coarse_samples(mpi, rig.source, cam, x, y));
                for (int ch = 0; ch < 3; ++ch) worst = std::max(worst, std::abs(c.rgb[ch] - truth.rgb.at(x, y, ch)));
                worst = std::max(worst, std::abs(c.opacity - truth.opacity.at(x, y)));
            }
        }
    }
    r.passed = worst <= 1e-9;
    r.seconds = seconds_since(t0);
    r.detail = std::to_string(cams.size()) + " views, max error " + fmt("%.3g", worst);
    return r;
}

SuiteResult check_importance_sampling(std::size_t samples, int bins, std::uint64_t seed) {
    const auto t0 = Clock::now();
    SuiteResult r{"importance sampling chi-square", false, "p > 0.01, monotone", "", 0.0};
    CounterRng rng(derive_stream(seed, {0}));
    std::vector<double> t;
    std::vector<double> w;
    double depth = 1.0;
    for (int i = 0; i < bins; ++i) {
        depth += 0.05 + rng.uniform() * 0.3;
        t.push_back(depth);
        w.push_back(0.05 + rng.uniform());
    }
    const WeightPdf pdf = weight_pdf(t, w);
    std::vector<double> u(samples);
    for (double& x : u) x = rng.uniform();
    std::sort(u.begin(), u.end());
    const std::vector<double> draws = inverse_transform_sample(pdf, u);

    bool monotone = true;
    for (std::size_t i = 1; i < draws.size(); ++i) monotone = monotone && draws[i] >= draws[i - 1];
    monotone = monotone && draws.front() >= pdf.edges.front() && draws.back() <= pdf.edges.back();

    std::vector<double> counts(pdf.masses.size(), 0.0);
    for (double d : draws) {
        auto it = std::upper_bound(pdf.edges.begin() + 1, pdf.edges.end() - 1, d);
        counts[static_cast<std::size_t>(it - (pdf.edges.begin() + 1))] += 1.0;
    }
    double chi2 = 0.0;
    int used = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const double expected = pdf.masses[k] * static_cast<double>(samples);
        if (expected <= 0.0) continue;
        chi2 += (counts[k] - expected) * (counts[k] - expected) / expected;
        ++used;
    }
    const boost::math::chi_squared dist(used - 1);
    const double p = boost::math::cdf(boost::math::complement(dist, chi2));
    r.passed = p > 0.01 && monotone;
    r.seconds = seconds_since(t0);
    r.detail = fmt("chi2 %.3f on %.0f dof, p = %.4f", chi2, used - 1.0, p) +
               (monotone ? ", monotone" : ", NOT monotone");
    return r;
}

SuiteResult check_conservation(Fault fault, std::uint64_t seed) {
    const auto t0 = Clock::now();
    SuiteResult r{"conservation", false, "w >= 0, T non-increasing, |sum w + T_n - 1| <= 1e-12", "", 0.0};
    const int size = 16;
    ModelConfig mc;
    mc.width = mc.height = size;
    mc.extractor_hidden = 8;
    Model model(mc);
    model.initialize(seed);
    ParameterStore& store = model.store();
    CounterRng noise(derive_stream(seed, {1}));
    for (auto& v : store.values(store.find("mpi.raw"))) v += noise.normal();
    store.values(model.decoder().bias_block(FineDecoder::kLayers - 1))[3] = 1.0;

    const LayeredScene scene = scene_preset("three-planes", size, size);
    const CameraRig rig = default_rig(size, size, 2);
    const Image src_img = oracle_render(scene, rig.source, rig.source).rgb;
    const FeatureMap features = model.extractor().forward(store, src_img);
    const MultiPlaneImage mpi = model.predictor().predict(store, &features);

    double worst = 0.0;
    bool negative = false;
    bool increasing = false;
    std::size_t sets = 0;
    std::vector<double> feature(kFeatureChannels);
    for (const Camera& cam : rig.targets) {
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                SampleSet coarse = coarse_samples(mpi, rig.source, cam, x, y);
                const SourceRay ray(rig.source, cam, x, y);
                CounterRng rng(derive_stream(seed, {2, static_cast<std::uint64_t>(y * size + x)}));
                const auto u = stratified_uniforms(static_cast<std::size_t>(mc.fine_samples), rng);
                const std::vector<double> ts = inverse_transform_sample(weight_pdf(coarse), u);
                Eigen::MatrixXd inputs(FineDecoder::kInputWidth, static_cast<Eigen::Index>(ts.size()));
                for (std::size_t j = 0; j < ts.size(); ++j) {
                    const PlanePoint p = ray.at_depth(ts[j]);
                    std::fill(feature.begin(), feature.end(), 0.0);
                    gather_bilinear(bilinear_taps(size, size, p.x, p.y), features.data(), kFeatureChannels, feature);
                    build_decoder_input(p.source_point, ray.direction_src(), feature,
                                        {inputs.col(static_cast<Eigen::Index>(j)).data(), FineDecoder::kInputWidth});
                }
                const Eigen::MatrixXd raw = model.decoder().forward(store, inputs);
                SampleSet fine;
                for (std::size_t j = 0; j < ts.size(); ++j) {
                    const RadianceSample s = squash_decoder_output({raw.col(static_cast<Eigen::Index>(j)).data(), 4});
                    fine.push_back(ts[j], s.rgb, s.sigma, SampleOrigin::fine);
                }
                assign_intervals(fine, mpi.mean_spacing());
                SampleSet joint = merge_samples(coarse, fine);
                for (SampleSet* s : {&coarse, &fine, &joint}) {
                    if (fault == Fault::sigma_sign) {
                        for (double& sg : s->sigma) sg = -sg;
                    }
                    const Composite c = composite(*s);
                    double sum = 0.0;
                    for (std::size_t i = 0; i < s->size(); ++i) {
                        sum += c.weights[i];
                        negative = negative || c.weights[i] < 0.0;
                        increasing = increasing || c.transmittance[i + 1] > c.transmittance[i];
                    }
                    worst = std::max(worst, std::abs(sum + c.transmittance.back() - 1.0));
                    negative = negative || c.opacity < 0.0 || c.opacity > 1.0;
                    ++sets;
                }
            }
        }
    }
    r.passed = worst <= 1e-12 && !negative && !increasing;
    r.seconds = seconds_since(t0);
    r.detail = std::to_string(sets) + " sets, max |sum w + T_n - 1| " + fmt("%.3g", worst) +
               (negative ? ", negative weight or opacity outside [0,1]" : "") +
               (increasing ? ", transmittance increases" : "") +
               (fault == Fault::none ? "" : " [fault injected]");
    return r;
}

SuiteResult check_scale_invariance(std::uint64_t seed) {
    const auto t0 = Clock::now();
    SuiteResult r{"scale invariance", false, "1e-12 abs", "", 0.0};
    const int w = 24;
    const int h = 20;
    CounterRng rng(derive_stream(seed, {0}));
    Image disp(w, h, 1);
    Image teacher(w, h, 1);
    for (auto& v : disp.data()) v = 0.2 + rng.uniform();
    for (auto& v : teacher.data()) v = 0.2 + rng.uniform();
    SparsePoints pts;
    for (int i = 0; i < 40; ++i) pts.push_back({rng.uniform() * (w - 1), rng.uniform() * (h - 1), 1.0 + 3.0 * rng.uniform()});
    const double p0 = point_loss(disp, pts);
    const double d0 = pseudo_depth_loss(disp, teacher, 20.0);
    double worst = 0.0;
    for (double k : {0.1, 1.0, 10.0}) {
        Image scaled = disp;
        for (auto& v : scaled.data()) v *= k;
        worst = std::max(worst, std::abs(point_loss(scaled, pts) - p0));
        worst = std::max(worst, std::abs(pseudo_depth_loss(scaled, teacher, 20.0) - d0));
    }
    r.passed = worst <= 1e-12;
    r.seconds = seconds_since(t0);
    r.detail = fmt("k in {0.1, 1, 10}, max change %.3g", worst);
    return r;
}

SuiteResult check_loss_weighting(std::uint64_t seed) {
    const auto t0 = Clock::now();
    SuiteResult r{"loss weighting", false, "1e-12 abs", "", 0.0};
    const int size = 16;
    ModelConfig mc;
    mc.width = mc.height = size;
    mc.extractor_hidden = 8;
    Model model(mc);
    model.initialize(seed);
    const LayeredScene scene = scene_preset("three-planes", size, size);
    const CameraRig rig = default_rig(size, size, 2);
    const TrainingData data = build_training_data(scene, rig.source, rig.targets, DataConfig{}, seed);
    StepOptions opt;
    opt.seed = seed;
    opt.want_grad = false;
    const StepResult s = evaluate_patch(model, data, Patch{1, 2, 1, 12, 12}, LossWeights{}, opt);
    const LossReport& rep = s.report;
    const double expected = rep.coarse.total + 0.4 * rep.fine.total + rep.joint.total;
    const double err = std::abs(rep.total - expected);
    r.passed = rep.has_coarse && rep.has_fine && rep.has_joint && err <= 1e-12;
    r.seconds = seconds_since(t0);
    r.detail = fmt("L_c %.6f, L_f %.6f, L_j %.6f", rep.coarse.total, rep.fine.total, rep.joint.total) +
               fmt(", total %.6f, error %.3g", rep.total, err);
    return r;
}

std::vector<SuiteResult> run_all_checks(Fault fault) {
    std::vector<SuiteResult> out;
    out.push_back(check_compositing());
    out.push_back(check_gradients(4));
    out.push_back(check_gradients(12, 32, 3));
    out.push_back(check_exact_representation());
    out.push_back(check_importance_sampling());
    out.push_back(check_conservation(fault));
    out.push_back(check_scale_invariance());
    out.push_back(check_loss_weighting());
    return out;
}

}  // namespace planevol
