#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace planevol {

/// Precondition violated by a caller (bad pixel, bad shape, bad count...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A point projected to the wrong side of a camera.
class BehindCameraError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Alignment had no usable reference values.
class ScaleError : public DomainError {
public:
    using DomainError::DomainError;
};

/// A NaN or infinity escaped a named operation.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training loss blew past the divergence threshold.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed run configuration; message names the offending field.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major image with interleaved channels.
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, double fill = 0.0)
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<std::size_t>(width) * height * channels, fill) {
        if (width < 0 || height < 0 || channels <= 0) {
            throw DomainError("Image: invalid dimensions");
        }
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }
    double& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& storage() { return data_; }

    bool same_shape(const Image& o) const {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }

    /// Copies the w x h window whose top-left corner is (x0, y0).
    Image crop(int x0, int y0, int w, int h) const;

    friend bool operator==(const Image&, const Image&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 1;
    std::vector<double> data_;
};

/// Number of worker threads: PLANEVOL_THREADS if set, else hardware concurrency.
unsigned default_thread_count();

/// Runs body(i) for i in [0, count). Work items are independent; the caller
/// reduces any per-item results in index order so output never depends on the
/// thread count.
template <typename Body>
void parallel_for(std::size_t count, Body&& body);

}  // namespace planevol

#include "planevol/detail/parallel.hpp"
