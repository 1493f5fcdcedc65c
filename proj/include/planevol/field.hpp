#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "planevol/common.hpp"
#include "planevol/geometry.hpp"
#include "planevol/params.hpp"

namespace planevol {

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) { return y + std::log(-std::expm1(-y)); }

/// Plane depths spaced uniformly in disparity: 1/z runs linearly from 1/near
/// to 1/far. Throws DomainError unless 0 < near < far and count >= 2.
std::vector<double> plane_depths(double near, double far, int count);

/// D fronto-parallel RGB-sigma planes on the source pixel grid.
/// Values are stored plane-major, then row, column, channel (r, g, b, sigma).
class MultiPlaneImage {
public:
    MultiPlaneImage() = default;
    MultiPlaneImage(std::vector<double> depths, int width, int height);

    int planes() const { return static_cast<int>(depths_.size()); }
    int width() const { return width_; }
    int height() const { return height_; }
    const std::vector<double>& depths() const { return depths_; }

    std::size_t plane_stride() const { return static_cast<std::size_t>(width_) * height_ * 4; }
    std::size_t offset(int plane, int x, int y) const {
        return plane * plane_stride() + (static_cast<std::size_t>(y) * width_ + x) * 4;
    }
    double& at(int plane, int x, int y, int channel) { return values_[offset(plane, x, y) + channel]; }
    double at(int plane, int x, int y, int channel) const { return values_[offset(plane, x, y) + channel]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    /// Plane intervals: z_{k+1} - z_k, the last one set to the mean of the others.
    std::vector<double> intervals() const;
    /// Mean plane spacing (z_D - z_1) / (D - 1); the unit of MPI density.
    double mean_spacing() const;

    /// Throws DomainError when an invariant is broken (depth order, ranges).
    void validate() const;

private:
    std::vector<double> depths_;
    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

/// Bilinear footprint of a continuous pixel position on a zero-padded grid.
/// Taps falling outside the grid have pixel == -1 and contribute nothing.
struct BilinearTaps {
    std::array<std::ptrdiff_t, 4> pixel{-1, -1, -1, -1};  // (x0,y0) (x1,y0) (x0,y1) (x1,y1)
    std::array<double, 4> weight{0.0, 0.0, 0.0, 0.0};
    double fx = 0.0;  // fractional offsets
    double fy = 0.0;

    bool any() const { return pixel[0] >= 0 || pixel[1] >= 0 || pixel[2] >= 0 || pixel[3] >= 0; }
};

BilinearTaps bilinear_taps(int width, int height, double x, double y);

/// Interpolates `channels` interleaved values at the taps.
void gather_bilinear(const BilinearTaps& taps, std::span<const double> grid, int channels, std::span<double> out);

/// d(value)/dx and d(value)/dy of the bilinear interpolant for each channel.
void bilinear_location_grad(const BilinearTaps& taps, std::span<const double> grid, int channels,
                            std::span<double> d_dx, std::span<double> d_dy);

struct RadianceSample {
    std::array<double, 3> rgb{0.0, 0.0, 0.0};
    double sigma = 0.0;
};

/// Bilinear lookup of plane `plane` (0-based) at source pixel (x, y).
/// Positions off the grid blend with zeros; far outside returns black, sigma 0.
RadianceSample sample_mpi(const MultiPlaneImage& mpi, int plane, double x, double y);

constexpr int kPositionFrequencies = 10;
constexpr int kDirectionFrequencies = 4;
constexpr int encoding_width(int frequencies) { return 3 + 6 * frequencies; }

/// (p, sin(2^0 p), cos(2^0 p), ..., sin(2^{L-1} p), cos(2^{L-1} p)), each
/// block holding the three coordinates.
void positional_encoding(const Vec3& p, int frequencies, std::span<double> out);
std::vector<double> positional_encoding(const Vec3& p, int frequencies = kPositionFrequencies);

/// Chain rule through positional_encoding: returns d(loss)/dp given d(loss)/d(encoding).
Vec3 positional_encoding_backward(const Vec3& p, int frequencies, std::span<const double> grad);

constexpr int kFeatureChannels = 60;

/// H x W x 60 per-pixel features of the source image.
using FeatureMap = Image;

/// Two stacked 3x3 filter banks (3 -> hidden -> 60) with tanh between them.
/// Borders use edge clamping.
class FeatureExtractor {
public:
    FeatureExtractor() = default;
    FeatureExtractor(ParameterStore& store, ParamGroup group, int hidden);

    void initialize(ParameterStore& store, std::uint64_t seed) const;
    int hidden() const { return hidden_; }

    struct Tape {
        Eigen::MatrixXd cols1;   // (3*9) x HW
        Eigen::MatrixXd act1;    // hidden x HW
        Eigen::MatrixXd cols2;   // (hidden*9) x HW
        int width = 0;
        int height = 0;
    };

    FeatureMap forward(const ParameterStore& store, const Image& image, Tape* tape = nullptr) const;
    void backward(const ParameterStore& store, const Tape& tape, const FeatureMap& grad, Gradients& grads) const;

private:
    int hidden_ = 0;
    std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0;
};

/// Fine decoder MLP: 150 inputs, five hidden layers of 64 softplus units, 4 raw
/// outputs squashed to (sigmoid rgb, softplus sigma).
class FineDecoder {
public:
    static constexpr int kInputWidth =
        encoding_width(kPositionFrequencies) + encoding_width(kDirectionFrequencies) + kFeatureChannels;
    static constexpr int kHidden = 64;
    static constexpr int kHiddenLayers = 5;
    static constexpr int kOutputs = 4;
    static constexpr int kLayers = kHiddenLayers + 1;
    /// Columns are always evaluated in blocks of this size (zero padded), so a
    /// sample's result never depends on which other samples share its batch.
    static constexpr Eigen::Index kBlock = 128;

    FineDecoder() = default;
    FineDecoder(ParameterStore& store, ParamGroup group);

    /// Uniform(+-1/sqrt(fan_in)) weights and biases; the density bias starts at
    /// `sigma_bias` so fresh decoders add little opacity.
    void initialize(ParameterStore& store, std::uint64_t seed, double sigma_bias = -3.0) const;

    struct Tape {
        std::array<Eigen::MatrixXd, kLayers> inputs;  // input to each layer (padded columns)
        std::array<Eigen::MatrixXd, kLayers> pre;     // pre-activations
        Eigen::Index columns = 0;
    };

    /// Raw outputs (4 x n) for an input matrix (150 x n).
    Eigen::MatrixXd forward(const ParameterStore& store, const Eigen::MatrixXd& inputs, Tape* tape = nullptr) const;

    /// Accumulates parameter gradients given d(loss)/d(raw outputs); optionally
    /// returns d(loss)/d(inputs).
    void backward(const ParameterStore& store, const Tape& tape, const Eigen::MatrixXd& grad_raw, Gradients& grads,
                  Eigen::MatrixXd* grad_inputs) const;

    std::size_t weight_block(int layer) const { return weights_[layer]; }
    std::size_t bias_block(int layer) const { return biases_[layer]; }

private:
    std::array<std::size_t, kLayers> weights_{};
    std::array<std::size_t, kLayers> biases_{};
};

/// Fills the 150-wide decoder input: [encode(x) | encode(d) | feature].
void build_decoder_input(const Vec3& x, const Vec3& d, std::span<const double> feature, std::span<double> out);

/// Squashes raw decoder outputs into (rgb in [0,1], sigma >= 0).
RadianceSample squash_decoder_output(std::span<const double> raw);

/// Single-point decode. Throws DomainError for a feature of the wrong length or
/// a non-unit direction.
RadianceSample fine_decode(const FineDecoder& decoder, const ParameterStore& store, const Vec3& x, const Vec3& d,
                           std::span<const double> feature);

enum class MpiMode { direct, feedforward };

const char* to_string(MpiMode m);
MpiMode mpi_mode_from_string(const std::string& s);

/// Produces the coarse MPI either from a free parameter grid (direct) or from
/// the feature map through a pointwise linear head (feedforward).
/// Squashing: rgb = sigmoid(raw), sigma = softplus(raw) / mean plane spacing.
/// In feedforward mode a frozen grid can hold a materialized copy of the head's
/// output; once the flag block is set, predict() reads the grid instead.
class MpiPredictor {
public:
    MpiPredictor() = default;
    MpiPredictor(ParameterStore& store, MpiMode mode, std::vector<double> depths, int width, int height);

    void initialize(ParameterStore& store, std::uint64_t seed) const;

    MpiMode mode() const { return mode_; }
    const std::vector<double>& depths() const { return depths_; }
    /// Raw density giving every plane an initial alpha of about 1/D.
    double initial_sigma_raw() const;

    /// True when the MPI comes from the grid block (direct mode, or materialized).
    bool uses_grid(const ParameterStore& store) const;
    /// Copies the head's current raw output into the frozen grid and sets the flag.
    void materialize(ParameterStore& store, const FeatureMap& features) const;

    /// `features` may be null when uses_grid(). `raw` receives pre-squash values.
    MultiPlaneImage predict(const ParameterStore& store, const FeatureMap* features,
                            std::vector<double>* raw = nullptr) const;

    /// Back-propagates d(loss)/d(squashed MPI values) into the predictor's
    /// parameters and, in feedforward mode, into `grad_features`.
    void backward(const ParameterStore& store, const FeatureMap* features, const std::vector<double>& raw,
                  std::span<const double> grad_mpi, Gradients& grads, FeatureMap* grad_features) const;

    std::size_t grid_block() const { return grid_; }

private:
    MpiMode mode_ = MpiMode::direct;
    std::vector<double> depths_;
    int width_ = 0;
    int height_ = 0;
    double density_unit_ = 1.0;
    std::size_t grid_ = 0;
    std::size_t head_w_ = 0;
    std::size_t head_b_ = 0;
    std::size_t flag_ = 0;
};

}  // namespace planevol
