#include "planevol/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "planevol/renderer.hpp"

namespace planevol {

void SampleSet::push_back(double depth, const std::array<double, 3>& color, double density, SampleOrigin from,
                          double interval) {
    t.push_back(depth);
    rgb.push_back(color);
    sigma.push_back(density);
    delta.push_back(interval);
    origin.push_back(from);
}

void SampleSet::validate() const {
    const std::size_t n = t.size();
    if (rgb.size() != n || sigma.size() != n || delta.size() != n || origin.size() != n) {
        throw DomainError("SampleSet: field lengths differ");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (i + 1 < n && !(t[i] <= t[i + 1])) throw DomainError("SampleSet: depths not sorted");
        if (!(sigma[i] >= 0.0)) throw DomainError("SampleSet: negative density");
        if (!(delta[i] >= 0.0)) throw DomainError("SampleSet: negative interval");
    }
}

std::vector<double> intervals_for(std::span<const double> t, double single) {
    const std::size_t n = t.size();
    std::vector<double> delta(n);
    if (n == 0) return delta;
    if (n == 1) {
        delta[0] = single;
        return delta;
    }
    for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = t[i + 1] - t[i];
    delta[n - 1] = (t[n - 1] - t[0]) / static_cast<double>(n - 1);
    return delta;
}

void assign_intervals(SampleSet& s, double single) { s.delta = intervals_for(s.t, single); }

SampleSet coarse_samples(const MultiPlaneImage& mpi, const Camera& src, const Camera& tgt, double x_t, double y_t) {
    const SourceRay ray(src, tgt, x_t, y_t);
    const auto delta = mpi.intervals();
    SampleSet s;
    for (int k = 0; k < mpi.planes(); ++k) {
        const double z = mpi.depths()[k];
        const PlanePoint p = ray.at_depth(z);
        RadianceSample r;
        if (p.valid) r = sample_mpi(mpi, k, p.x, p.y);
        s.push_back(z, r.rgb, r.sigma, SampleOrigin::coarse, delta[k]);
    }
    return s;
}

std::vector<double> WeightPdf::cdf() const {
    std::vector<double> c(masses.size() + 1, 0.0);
    for (std::size_t i = 0; i < masses.size(); ++i) c[i + 1] = c[i] + masses[i];
    return c;
}

WeightPdf weight_pdf(std::span<const double> t, std::span<const double> weights) {
    const std::size_t n = t.size();
    if (n == 0 || weights.size() != n) throw DomainError("weight_pdf: need matching nonempty depths and weights");
    WeightPdf pdf;
    pdf.edges.resize(n + 1);
    pdf.edges[0] = t[0];
    for (std::size_t i = 1; i < n; ++i) pdf.edges[i] = 0.5 * (t[i - 1] + t[i]);
    pdf.edges[n] = t[n - 1];

    double total = 0.0;
    for (double w : weights) total += w;
    pdf.masses.resize(n);
    if (!(total >= kPdfFallbackMass)) {
        pdf.uniform_fallback = true;
        std::fill(pdf.masses.begin(), pdf.masses.end(), 1.0 / static_cast<double>(n));
    } else {
        for (std::size_t i = 0; i < n; ++i) pdf.masses[i] = weights[i] / total;
    }
    return pdf;
}

WeightPdf weight_pdf(const SampleSet& s) {
    if (s.empty()) throw DomainError("weight_pdf: empty sample set");
    return weight_pdf(s.t, composite(s).weights);
}

InverseSample invert_cdf(const WeightPdf& pdf, std::span<const double> cdf, double u) {
    const std::size_t n = pdf.masses.size();
    // First bin whose upper cumulative value exceeds u, skipping empty bins.
    std::size_t b = static_cast<std::size_t>(std::upper_bound(cdf.begin() + 1, cdf.end(), u) - (cdf.begin() + 1));
    if (b >= n) b = n - 1;
    while (b > 0 && !(pdf.masses[b] > 0.0)) --b;
    while (b + 1 < n && !(pdf.masses[b] > 0.0)) ++b;
    InverseSample out;
    out.bin = b;
    const double m = pdf.masses[b];
    out.frac = m > 0.0 ? std::clamp((u - cdf[b]) / m, 0.0, 1.0) : 0.5;
    out.t = pdf.edges[b] + out.frac * (pdf.edges[b + 1] - pdf.edges[b]);
    return out;
}

std::vector<double> inverse_transform_sample(const WeightPdf& pdf, std::span<const double> u) {
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (!(u[i] >= 0.0 && u[i] < 1.0)) throw DomainError("inverse_transform_sample: variate outside [0, 1)");
        if (i > 0 && u[i] < u[i - 1]) throw DomainError("inverse_transform_sample: variates must be sorted");
    }
    const auto cdf = pdf.cdf();
    std::vector<double> t(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) t[i] = invert_cdf(pdf, cdf, u[i]).t;
    return t;
}

std::vector<double> stratified_uniforms(std::size_t n, CounterRng& rng, bool jitter) {
    std::vector<double> u(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double xi = jitter ? rng.uniform_open() : 0.5;
        u[j] = (static_cast<double>(j) + xi) / static_cast<double>(n);
    }
    return u;
}

std::vector<int> merge_order(std::span<const double> coarse_t, std::span<const double> fine_t) {
    std::vector<int> order;
    order.reserve(coarse_t.size() + fine_t.size());
    std::size_t i = 0, j = 0;
    while (i < coarse_t.size() || j < fine_t.size()) {
        if (j >= fine_t.size() || (i < coarse_t.size() && coarse_t[i] <= fine_t[j])) {
            order.push_back(static_cast<int>(i++));
        } else {
            order.push_back(-static_cast<int>(++j));
        }
    }
    return order;
}

SampleSet merge_samples(const SampleSet& coarse, const SampleSet& fine) {
    const auto order = merge_order(coarse.t, fine.t);
    SampleSet out;
    for (int e : order) {
        const SampleSet& from = e >= 0 ? coarse : fine;
        const std::size_t i = e >= 0 ? static_cast<std::size_t>(e) : static_cast<std::size_t>(-e - 1);
        out.push_back(from.t[i], from.rgb[i], from.sigma[i], from.origin[i], from.delta[i]);
    }
    const double single = out.empty() ? 0.0 : out.delta[0];
    const auto delta = intervals_for(out.t, single);
    for (std::size_t k = 0; k < out.size(); ++k) {
        if (out.origin[k] == SampleOrigin::coarse && delta[k] != out.delta[k]) {
            out.sigma[k] = delta[k] > 0.0 ? out.sigma[k] * out.delta[k] / delta[k] : 0.0;
        }
        out.delta[k] = delta[k];
    }
    return out;
}

}  // namespace planevol
