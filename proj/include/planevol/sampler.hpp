#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "planevol/field.hpp"
#include "planevol/geometry.hpp"
#include "planevol/rng.hpp"

namespace planevol {

enum class SampleOrigin : std::uint8_t { coarse, fine };

/// Ordered samples along one ray. t is the source-frame depth of each sample.
struct SampleSet {
    std::vector<double> t;
    std::vector<std::array<double, 3>> rgb;
    std::vector<double> sigma;
    std::vector<double> delta;
    std::vector<SampleOrigin> origin;

    std::size_t size() const { return t.size(); }
    bool empty() const { return t.empty(); }
    double tau(std::size_t i) const { return sigma[i] * delta[i]; }

    void push_back(double depth, const std::array<double, 3>& color, double density,
                   SampleOrigin from = SampleOrigin::coarse, double interval = 0.0);

    /// Throws DomainError on unequal lengths, unsorted t or negative sigma.
    void validate() const;
};

/// Interval widths for sorted depths: t[i+1] - t[i], the last one the mean of
/// the others. A single sample gets `single`.
std::vector<double> intervals_for(std::span<const double> t, double single);
void assign_intervals(SampleSet& s, double single);

/// One sample per MPI plane where the target ray crosses it. Invalid warps
/// give black, zero-density samples.
SampleSet coarse_samples(const MultiPlaneImage& mpi, const Camera& src, const Camera& tgt, double x_t, double y_t);

/// Piecewise-constant density over depth. Bin k spans the midpoints around
/// sample k, clamped to the first and last sample.
struct WeightPdf {
    std::vector<double> edges;   // masses.size() + 1
    std::vector<double> masses;  // sum to 1
    bool uniform_fallback = false;

    std::vector<double> cdf() const;  // masses.size() + 1 entries, cdf[0] = 0
};

constexpr double kPdfFallbackMass = 1e-12;

/// Normalized compositing weights of a sample set.
WeightPdf weight_pdf(const SampleSet& s);
/// Same from explicit depths and (unnormalized) weights.
WeightPdf weight_pdf(std::span<const double> t, std::span<const double> weights);

/// Position of one inverted variate: depth, the bin it landed in, and its
/// fractional offset within that bin.
struct InverseSample {
    double t = 0.0;
    std::size_t bin = 0;
    double frac = 0.0;
};

InverseSample invert_cdf(const WeightPdf& pdf, std::span<const double> cdf, double u);

/// Depths for sorted variates in [0, 1). Throws DomainError if u is unsorted
/// or out of range.
std::vector<double> inverse_transform_sample(const WeightPdf& pdf, std::span<const double> u);

/// u_j = (j + xi_j) / n with xi_j drawn from `rng`; with jitter off, xi_j = 0.5.
std::vector<double> stratified_uniforms(std::size_t n, CounterRng& rng, bool jitter = true);

/// Merged position of each input sample: entry i of the merged order is
/// coarse index (value >= 0) or fine index -(value + 1).
std::vector<int> merge_order(std::span<const double> coarse_t, std::span<const double> fine_t);

/// Union sorted by t, coarse first on ties. Intervals are recomputed over the
/// merged order; coarse densities are rescaled so each coarse sample keeps its
/// optical thickness sigma * delta. A coarse sample tied with the next sample
/// gets delta = 0 and so contributes nothing.
SampleSet merge_samples(const SampleSet& coarse, const SampleSet& fine);

}  // namespace planevol
