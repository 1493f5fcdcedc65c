#include "planevol/common.hpp"

#include <cstdlib>
#include <thread>

namespace planevol {

Image Image::crop(int x0, int y0, int w, int h) const {
    if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > width_ || y0 + h > height_) {
        throw DomainError("Image::crop: window outside the image");
    }
    Image out(w, h, channels_);
    for (int y = 0; y < h; ++y) {
        const double* src = data_.data() + index(x0, y0 + y);
        std::copy(src, src + static_cast<std::size_t>(w) * channels_, out.data_.data() + out.index(0, y));
    }
    return out;
}

unsigned default_thread_count() {
    if (const char* env = std::getenv("PLANEVOL_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && n >= 1) return static_cast<unsigned>(n);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

}  // namespace planevol
