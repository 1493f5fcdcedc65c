#include "planevol/field.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "planevol/rng.hpp"

namespace planevol {

namespace {

// Row sums in a fixed column order. Eigen's vectorized rowwise().sum() picks
// its summation order from the runtime alignment of the data, which breaks
// bit reproducibility between otherwise identical runs.
template <typename Derived>
void add_row_sums(const Eigen::MatrixBase<Derived>& m, Eigen::Map<Eigen::VectorXd>& acc) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) acc[r] += m(r, c);
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

void fill_uniform(std::span<double> values, double bound, CounterRng& rng) {
    for (double& v : values) v = (2.0 * rng.uniform() - 1.0) * bound;
}

// (channels*9) x (width*height) patch matrix with edge clamping.
Eigen::MatrixXd im2col(const double* data, int channels, int width, int height) {
    Eigen::MatrixXd cols(channels * 9, static_cast<Eigen::Index>(width) * height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Eigen::Index p = static_cast<Eigen::Index>(y) * width + x;
            for (int ky = 0; ky < 3; ++ky) {
                const int sy = std::clamp(y + ky - 1, 0, height - 1);
                for (int kx = 0; kx < 3; ++kx) {
                    const int sx = std::clamp(x + kx - 1, 0, width - 1);
                    const double* src = data + (static_cast<std::size_t>(sy) * width + sx) * channels;
                    for (int c = 0; c < channels; ++c) cols(c * 9 + ky * 3 + kx, p) = src[c];
                }
            }
        }
    }
    return cols;
}

// Adjoint of im2col: scatter-adds patch gradients back onto the grid.
void col2im_add(const Eigen::MatrixXd& cols, int channels, int width, int height, double* out) {
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Eigen::Index p = static_cast<Eigen::Index>(y) * width + x;
            for (int ky = 0; ky < 3; ++ky) {
                const int sy = std::clamp(y + ky - 1, 0, height - 1);
                for (int kx = 0; kx < 3; ++kx) {
                    const int sx = std::clamp(x + kx - 1, 0, width - 1);
                    double* dst = out + (static_cast<std::size_t>(sy) * width + sx) * channels;
                    for (int c = 0; c < channels; ++c) dst[c] += cols(c * 9 + ky * 3 + kx, p);
                }
            }
        }
    }
}

Eigen::Index padded_columns(Eigen::Index n) {
    const Eigen::Index b = FineDecoder::kBlock;
    return std::max<Eigen::Index>(1, (n + b - 1) / b) * b;
}

}  // namespace

std::vector<double> plane_depths(double near, double far, int count) {
    if (count < 2) throw DomainError("plane_depths: need at least two planes");
    if (!(near > 0.0) || !(near < far)) throw DomainError("plane_depths: need 0 < near < far");
    std::vector<double> depths(count);
    const double d_near = 1.0 / near;
    const double d_far = 1.0 / far;
    for (int k = 0; k < count; ++k) {
        const double s = static_cast<double>(k) / (count - 1);
        depths[k] = 1.0 / (d_near + s * (d_far - d_near));
    }
    depths.front() = near;
    depths.back() = far;
    return depths;
}

MultiPlaneImage::MultiPlaneImage(std::vector<double> depths, int width, int height)
    : depths_(std::move(depths)), width_(width), height_(height),
      values_(depths_.size() * static_cast<std::size_t>(width) * height * 4, 0.0) {
    if (depths_.size() < 2) throw DomainError("MultiPlaneImage: need at least two planes");
    if (width <= 0 || height <= 0) throw DomainError("MultiPlaneImage: empty grid");
    for (std::size_t k = 0; k + 1 < depths_.size(); ++k) {
        if (!(depths_[k] > 0.0) || !(depths_[k] < depths_[k + 1])) {
            throw DomainError("MultiPlaneImage: depths must be positive and strictly increasing");
        }
    }
}

std::vector<double> MultiPlaneImage::intervals() const {
    const std::size_t d = depths_.size();
    std::vector<double> delta(d);
    for (std::size_t k = 0; k + 1 < d; ++k) delta[k] = depths_[k + 1] - depths_[k];
    delta[d - 1] = mean_spacing();
    return delta;
}

double MultiPlaneImage::mean_spacing() const {
    return (depths_.back() - depths_.front()) / static_cast<double>(depths_.size() - 1);
}

void MultiPlaneImage::validate() const {
    for (std::size_t k = 0; k + 1 < depths_.size(); ++k) {
        if (!(depths_[k] < depths_[k + 1])) throw DomainError("MultiPlaneImage: depths not increasing");
    }
    for (std::size_t i = 0; i < values_.size(); i += 4) {
        for (int c = 0; c < 3; ++c) {
            if (!(values_[i + c] >= 0.0 && values_[i + c] <= 1.0)) {
                throw DomainError("MultiPlaneImage: color outside [0, 1]");
            }
        }
        if (!(values_[i + 3] >= 0.0) || !std::isfinite(values_[i + 3])) {
            throw DomainError("MultiPlaneImage: negative or non-finite density");
        }
    }
}

BilinearTaps bilinear_taps(int width, int height, double x, double y) {
    BilinearTaps taps;
    if (!(x > -1.0 && x < width && y > -1.0 && y < height)) return taps;
    const double xf = std::floor(x);
    const double yf = std::floor(y);
    const int x0 = static_cast<int>(xf);
    const int y0 = static_cast<int>(yf);
    taps.fx = x - xf;
    taps.fy = y - yf;
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    const double w[4] = {(1.0 - taps.fx) * (1.0 - taps.fy), taps.fx * (1.0 - taps.fy), (1.0 - taps.fx) * taps.fy,
                         taps.fx * taps.fy};
    for (int i = 0; i < 4; ++i) {
        if (xs[i] >= 0 && xs[i] < width && ys[i] >= 0 && ys[i] < height) {
            taps.pixel[i] = static_cast<std::ptrdiff_t>(ys[i]) * width + xs[i];
            taps.weight[i] = w[i];
        }
    }
    return taps;
}

void gather_bilinear(const BilinearTaps& taps, std::span<const double> grid, int channels, std::span<double> out) {
    std::fill(out.begin(), out.begin() + channels, 0.0);
    for (int i = 0; i < 4; ++i) {
        if (taps.pixel[i] < 0) continue;
        const double* src = grid.data() + taps.pixel[i] * channels;
        for (int c = 0; c < channels; ++c) out[c] += taps.weight[i] * src[c];
    }
}

void bilinear_location_grad(const BilinearTaps& taps, std::span<const double> grid, int channels,
                            std::span<double> d_dx, std::span<double> d_dy) {
    auto value = [&](int i, int c) { return taps.pixel[i] < 0 ? 0.0 : grid[taps.pixel[i] * channels + c]; };
    for (int c = 0; c < channels; ++c) {
        const double v00 = value(0, c), v10 = value(1, c), v01 = value(2, c), v11 = value(3, c);
        d_dx[c] = (1.0 - taps.fy) * (v10 - v00) + taps.fy * (v11 - v01);
        d_dy[c] = (1.0 - taps.fx) * (v01 - v00) + taps.fx * (v11 - v10);
    }
}

RadianceSample sample_mpi(const MultiPlaneImage& mpi, int plane, double x, double y) {
    if (plane < 0 || plane >= mpi.planes()) throw DomainError("sample_mpi: plane index out of range");
    const BilinearTaps taps = bilinear_taps(mpi.width(), mpi.height(), x, y);
    std::array<double, 4> v{};
    gather_bilinear(taps, mpi.values().subspan(plane * mpi.plane_stride(), mpi.plane_stride()), 4, v);
    return RadianceSample{{v[0], v[1], v[2]}, v[3]};
}

void positional_encoding(const Vec3& p, int frequencies, std::span<double> out) {
    for (int i = 0; i < 3; ++i) out[i] = p[i];
    double freq = 1.0;
    for (int l = 0; l < frequencies; ++l, freq *= 2.0) {
        double* block = out.data() + 3 + 6 * l;
        for (int i = 0; i < 3; ++i) {
            block[i] = std::sin(freq * p[i]);
            block[3 + i] = std::cos(freq * p[i]);
        }
    }
}

std::vector<double> positional_encoding(const Vec3& p, int frequencies) {
    std::vector<double> out(encoding_width(frequencies));
    positional_encoding(p, frequencies, out);
    return out;
}

Vec3 positional_encoding_backward(const Vec3& p, int frequencies, std::span<const double> grad) {
    Vec3 d(grad[0], grad[1], grad[2]);
    double freq = 1.0;
    for (int l = 0; l < frequencies; ++l, freq *= 2.0) {
        const double* block = grad.data() + 3 + 6 * l;
        for (int i = 0; i < 3; ++i) {
            d[i] += freq * (block[i] * std::cos(freq * p[i]) - block[3 + i] * std::sin(freq * p[i]));
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// FeatureExtractor

FeatureExtractor::FeatureExtractor(ParameterStore& store, ParamGroup group, int hidden) : hidden_(hidden) {
    if (hidden <= 0) throw DomainError("FeatureExtractor: hidden width must be positive");
    const auto h = static_cast<std::size_t>(hidden);
    w1_ = store.add("extractor.conv1.weight", {h, 3, 3, 3}, group);
    b1_ = store.add("extractor.conv1.bias", {h}, group);
    w2_ = store.add("extractor.conv2.weight", {kFeatureChannels, h, 3, 3}, group);
    b2_ = store.add("extractor.conv2.bias", {kFeatureChannels}, group);
}

void FeatureExtractor::initialize(ParameterStore& store, std::uint64_t seed) const {
    CounterRng rng(derive_stream(seed, {0xfea7u}));
    fill_uniform(store.values(w1_), 1.0 / std::sqrt(27.0), rng);
    fill_uniform(store.values(b1_), 1.0 / std::sqrt(27.0), rng);
    fill_uniform(store.values(w2_), 1.0 / std::sqrt(9.0 * hidden_), rng);
    fill_uniform(store.values(b2_), 1.0 / std::sqrt(9.0 * hidden_), rng);
}

FeatureMap FeatureExtractor::forward(const ParameterStore& store, const Image& image, Tape* tape) const {
    if (image.channels() != 3) throw DomainError("extract_features: expected an RGB image");
    const int w = image.width();
    const int h = image.height();
    const ConstRowMap w1(store.values(w1_).data(), hidden_, 27);
    const ConstRowMap w2(store.values(w2_).data(), kFeatureChannels, hidden_ * 9);
    const Eigen::Map<const Eigen::VectorXd> b1(store.values(b1_).data(), hidden_);
    const Eigen::Map<const Eigen::VectorXd> b2(store.values(b2_).data(), kFeatureChannels);

    Eigen::MatrixXd cols1 = im2col(image.data().data(), 3, w, h);
    Eigen::MatrixXd act1 = w1 * cols1;
    act1.colwise() += b1;
    act1 = act1.array().tanh().matrix();
    Eigen::MatrixXd cols2 = im2col(act1.data(), hidden_, w, h);

    FeatureMap out(w, h, kFeatureChannels);
    Eigen::Map<Eigen::MatrixXd> result(out.data().data(), kFeatureChannels, static_cast<Eigen::Index>(w) * h);
    result.noalias() = w2 * cols2;
    result.colwise() += b2;

    if (tape) {
        tape->cols1 = std::move(cols1);
        tape->act1 = std::move(act1);
        tape->cols2 = std::move(cols2);
        tape->width = w;
        tape->height = h;
    }
    return out;
}

void FeatureExtractor::backward(const ParameterStore& store, const Tape& tape, const FeatureMap& grad,
                                Gradients& grads) const {
    const Eigen::Index n = static_cast<Eigen::Index>(tape.width) * tape.height;
    const ConstRowMap w2(store.values(w2_).data(), kFeatureChannels, hidden_ * 9);
    const Eigen::Map<const Eigen::MatrixXd> g(grad.data().data(), kFeatureChannels, n);

    RowMap dw2(grads.block(w2_).data(), kFeatureChannels, hidden_ * 9);
    Eigen::Map<Eigen::VectorXd> db2(grads.block(b2_).data(), kFeatureChannels);
    dw2.noalias() += g * tape.cols2.transpose();
    add_row_sums(g, db2);

    const Eigen::MatrixXd dcols2 = w2.transpose() * g;
    Eigen::MatrixXd dact1 = Eigen::MatrixXd::Zero(hidden_, n);
    col2im_add(dcols2, hidden_, tape.width, tape.height, dact1.data());
    const Eigen::MatrixXd dpre1 = (dact1.array() * (1.0 - tape.act1.array().square())).matrix();

    RowMap dw1(grads.block(w1_).data(), hidden_, 27);
    Eigen::Map<Eigen::VectorXd> db1(grads.block(b1_).data(), hidden_);
    dw1.noalias() += dpre1 * tape.cols1.transpose();
    add_row_sums(dpre1, db1);
}

// ---------------------------------------------------------------------------
// FineDecoder

FineDecoder::FineDecoder(ParameterStore& store, ParamGroup group) {
    for (int l = 0; l < kLayers; ++l) {
        const std::size_t in = l == 0 ? kInputWidth : kHidden;
        const std::size_t out = l == kLayers - 1 ? kOutputs : kHidden;
        weights_[l] = store.add("decoder.layer" + std::to_string(l) + ".weight", {out, in}, group);
        biases_[l] = store.add("decoder.layer" + std::to_string(l) + ".bias", {out}, group);
    }
}

void FineDecoder::initialize(ParameterStore& store, std::uint64_t seed, double sigma_bias) const {
    CounterRng rng(derive_stream(seed, {0xdec0u}));
    for (int l = 0; l < kLayers; ++l) {
        const double fan_in = l == 0 ? kInputWidth : kHidden;
        fill_uniform(store.values(weights_[l]), 1.0 / std::sqrt(fan_in), rng);
        fill_uniform(store.values(biases_[l]), 1.0 / std::sqrt(fan_in), rng);
    }
    store.values(biases_[kLayers - 1])[3] = sigma_bias;
}

Eigen::MatrixXd FineDecoder::forward(const ParameterStore& store, const Eigen::MatrixXd& inputs, Tape* tape) const {
    if (inputs.rows() != kInputWidth) throw DomainError("FineDecoder: input must have 150 rows");
    const Eigen::Index n = inputs.cols();
    const Eigen::Index padded = padded_columns(n);
    Tape local;
    Tape& t = tape ? *tape : local;
    t.columns = n;

    t.inputs[0] = Eigen::MatrixXd::Zero(kInputWidth, padded);
    t.inputs[0].leftCols(n) = inputs;
    for (int l = 0; l < kLayers; ++l) {
        const Eigen::Index out = l == kLayers - 1 ? kOutputs : kHidden;
        const Eigen::Index in = l == 0 ? kInputWidth : kHidden;
        const ConstRowMap w(store.values(weights_[l]).data(), out, in);
        const Eigen::Map<const Eigen::VectorXd> b(store.values(biases_[l]).data(), out);
        Eigen::MatrixXd& pre = t.pre[l];
        pre.resize(out, padded);
        for (Eigen::Index c = 0; c < padded; c += kBlock) {
            pre.middleCols(c, kBlock).noalias() = w * t.inputs[l].middleCols(c, kBlock);
        }
        pre.colwise() += b;
        if (l + 1 < kLayers) {
            t.inputs[l + 1] = pre.unaryExpr([](double v) { return softplus(v); });
        }
    }
    return t.pre[kLayers - 1].leftCols(n);
}

void FineDecoder::backward(const ParameterStore& store, const Tape& tape, const Eigen::MatrixXd& grad_raw,
                           Gradients& grads, Eigen::MatrixXd* grad_inputs) const {
    const Eigen::Index n = tape.columns;
    const Eigen::Index padded = tape.pre[0].cols();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(kOutputs, padded);
    g.leftCols(n) = grad_raw;
    for (int l = kLayers - 1; l >= 0; --l) {
        const Eigen::Index out = l == kLayers - 1 ? kOutputs : kHidden;
        const Eigen::Index in = l == 0 ? kInputWidth : kHidden;
        const ConstRowMap w(store.values(weights_[l]).data(), out, in);
        RowMap dw(grads.block(weights_[l]).data(), out, in);
        Eigen::Map<Eigen::VectorXd> db(grads.block(biases_[l]).data(), out);
        for (Eigen::Index c = 0; c < padded; c += kBlock) {
            dw.noalias() += g.middleCols(c, kBlock) * tape.inputs[l].middleCols(c, kBlock).transpose();
            add_row_sums(g.middleCols(c, kBlock), db);
        }
        if (l == 0 && !grad_inputs) break;
        Eigen::MatrixXd dx(in, padded);
        for (Eigen::Index c = 0; c < padded; c += kBlock) {
            dx.middleCols(c, kBlock).noalias() = w.transpose() * g.middleCols(c, kBlock);
        }
        if (l == 0) {
            *grad_inputs = dx.leftCols(n);
        } else {
            g = dx.cwiseProduct(tape.pre[l - 1].unaryExpr([](double v) { return sigmoid(v); }));
        }
    }
}

void build_decoder_input(const Vec3& x, const Vec3& d, std::span<const double> feature, std::span<double> out) {
    constexpr int pos = encoding_width(kPositionFrequencies);
    constexpr int dir = encoding_width(kDirectionFrequencies);
    positional_encoding(x, kPositionFrequencies, out.subspan(0, pos));
    positional_encoding(d, kDirectionFrequencies, out.subspan(pos, dir));
    std::copy(feature.begin(), feature.end(), out.begin() + pos + dir);
}

RadianceSample squash_decoder_output(std::span<const double> raw) {
    return RadianceSample{{sigmoid(raw[0]), sigmoid(raw[1]), sigmoid(raw[2])}, softplus(raw[3])};
}

RadianceSample fine_decode(const FineDecoder& decoder, const ParameterStore& store, const Vec3& x, const Vec3& d,
                           std::span<const double> feature) {
    if (feature.size() != static_cast<std::size_t>(kFeatureChannels)) {
        throw DomainError("fine_decode: feature must have 60 entries, got " + std::to_string(feature.size()));
    }
    if (std::abs(d.norm() - 1.0) > 1e-9) throw DomainError("fine_decode: view direction must be unit length");
    Eigen::MatrixXd input(FineDecoder::kInputWidth, 1);
    build_decoder_input(x, d, feature, std::span<double>(input.data(), FineDecoder::kInputWidth));
    const Eigen::MatrixXd raw = decoder.forward(store, input);
    return squash_decoder_output(std::span<const double>(raw.data(), 4));
}

// ---------------------------------------------------------------------------
// MpiPredictor

const char* to_string(MpiMode m) { return m == MpiMode::direct ? "direct" : "feedforward"; }

MpiMode mpi_mode_from_string(const std::string& s) {
    if (s == "direct") return MpiMode::direct;
    if (s == "feedforward") return MpiMode::feedforward;
    throw DomainError("unknown MPI mode '" + s + "' (expected direct or feedforward)");
}

MpiPredictor::MpiPredictor(ParameterStore& store, MpiMode mode, std::vector<double> depths, int width, int height)
    : mode_(mode), depths_(std::move(depths)), width_(width), height_(height) {
    const MultiPlaneImage probe(depths_, 1, 1);
    density_unit_ = 1.0 / probe.mean_spacing();
    const auto d = depths_.size();
    if (mode_ == MpiMode::direct) {
        grid_ = store.add("mpi.raw", {d, static_cast<std::size_t>(height), static_cast<std::size_t>(width), 4},
                          ParamGroup::coarse);
    } else {
        head_w_ = store.add("mpi_head.weight", {d * 4, kFeatureChannels}, ParamGroup::coarse);
        head_b_ = store.add("mpi_head.bias", {d * 4}, ParamGroup::coarse);
        grid_ = store.add("mpi.raw", {d, static_cast<std::size_t>(height), static_cast<std::size_t>(width), 4},
                          ParamGroup::frozen);
        flag_ = store.add("mpi.materialized", {1}, ParamGroup::frozen);
    }
}

double MpiPredictor::initial_sigma_raw() const {
    const double planes = static_cast<double>(depths_.size());
    return softplus_inverse(-std::log1p(-1.0 / planes));
}

void MpiPredictor::initialize(ParameterStore& store, std::uint64_t seed) const {
    const double sigma_raw = initial_sigma_raw();
    if (mode_ == MpiMode::direct) {
        auto grid = store.values(grid_);
        for (std::size_t i = 0; i < grid.size(); i += 4) {
            grid[i] = grid[i + 1] = grid[i + 2] = 0.0;
            grid[i + 3] = sigma_raw;
        }
        return;
    }
    store.values(flag_)[0] = 0.0;
    CounterRng rng(derive_stream(seed, {0x4eadu}));
    fill_uniform(store.values(head_w_), 0.1 / std::sqrt(static_cast<double>(kFeatureChannels)), rng);
    auto bias = store.values(head_b_);
    for (std::size_t i = 0; i < bias.size(); i += 4) {
        bias[i] = bias[i + 1] = bias[i + 2] = 0.0;
        bias[i + 3] = sigma_raw;
    }
}

bool MpiPredictor::uses_grid(const ParameterStore& store) const {
    return mode_ == MpiMode::direct || store.values(flag_)[0] != 0.0;
}

void MpiPredictor::materialize(ParameterStore& store, const FeatureMap& features) const {
    if (mode_ == MpiMode::direct) return;
    store.values(flag_)[0] = 0.0;
    std::vector<double> raw;
    predict(store, &features, &raw);
    std::copy(raw.begin(), raw.end(), store.values(grid_).begin());
    store.values(flag_)[0] = 1.0;
}

MultiPlaneImage MpiPredictor::predict(const ParameterStore& store, const FeatureMap* features,
                                      std::vector<double>* raw_out) const {
    MultiPlaneImage mpi(depths_, width_, height_);
    std::vector<double> raw;
    if (uses_grid(store)) {
        const auto grid = store.values(grid_);
        raw.assign(grid.begin(), grid.end());
    } else {
        if (!features) throw DomainError("predict_mpi: feedforward mode needs a feature map");
        if (features->width() != width_ || features->height() != height_) {
            throw DomainError("predict_mpi: feature map size does not match the MPI grid");
        }
        const auto planes = static_cast<Eigen::Index>(depths_.size());
        const Eigen::Index pixels = static_cast<Eigen::Index>(width_) * height_;
        const ConstRowMap w(store.values(head_w_).data(), planes * 4, kFeatureChannels);
        const Eigen::Map<const Eigen::VectorXd> b(store.values(head_b_).data(), planes * 4);
        const Eigen::Map<const Eigen::MatrixXd> f(features->data().data(), kFeatureChannels, pixels);
        Eigen::MatrixXd out = w * f;
        out.colwise() += b;
        raw.resize(mpi.values().size());
        for (Eigen::Index k = 0; k < planes; ++k) {
            for (Eigen::Index p = 0; p < pixels; ++p) {
                for (int c = 0; c < 4; ++c) raw[(k * pixels + p) * 4 + c] = out(k * 4 + c, p);
            }
        }
    }
    auto values = mpi.values();
    for (std::size_t i = 0; i < raw.size(); i += 4) {
        for (int c = 0; c < 3; ++c) values[i + c] = sigmoid(raw[i + c]);
        values[i + 3] = softplus(raw[i + 3]) * density_unit_;
    }
    if (raw_out) *raw_out = std::move(raw);
    return mpi;
}

void MpiPredictor::backward(const ParameterStore& store, const FeatureMap* features, const std::vector<double>& raw,
                            std::span<const double> grad_mpi, Gradients& grads, FeatureMap* grad_features) const {
    std::vector<double> d_raw(raw.size());
    for (std::size_t i = 0; i < raw.size(); i += 4) {
        for (int c = 0; c < 3; ++c) {
            const double s = sigmoid(raw[i + c]);
            d_raw[i + c] = grad_mpi[i + c] * s * (1.0 - s);
        }
        d_raw[i + 3] = grad_mpi[i + 3] * sigmoid(raw[i + 3]) * density_unit_;
    }
    if (uses_grid(store)) {
        auto g = grads.block(grid_);
        for (std::size_t i = 0; i < d_raw.size(); ++i) g[i] += d_raw[i];
        return;
    }
    const auto planes = static_cast<Eigen::Index>(depths_.size());
    const Eigen::Index pixels = static_cast<Eigen::Index>(width_) * height_;
    Eigen::MatrixXd d_out(planes * 4, pixels);
    for (Eigen::Index k = 0; k < planes; ++k) {
        for (Eigen::Index p = 0; p < pixels; ++p) {
            for (int c = 0; c < 4; ++c) d_out(k * 4 + c, p) = d_raw[(k * pixels + p) * 4 + c];
        }
    }
    const Eigen::Map<const Eigen::MatrixXd> f(features->data().data(), kFeatureChannels, pixels);
    RowMap dw(grads.block(head_w_).data(), planes * 4, kFeatureChannels);
    Eigen::Map<Eigen::VectorXd> db(grads.block(head_b_).data(), planes * 4);
    dw.noalias() += d_out * f.transpose();
    add_row_sums(d_out, db);
    if (grad_features) {
        const ConstRowMap w(store.values(head_w_).data(), planes * 4, kFeatureChannels);
        Eigen::Map<Eigen::MatrixXd> df(grad_features->data().data(), kFeatureChannels, pixels);
        df.noalias() += w.transpose() * d_out;
    }
}

}  // namespace planevol
