#include "planevol/scene_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "planevol/rng.hpp"

namespace planevol {

namespace {

constexpr double kOpaque = 0.99;
constexpr double kTau = 2.0 * std::numbers::pi;

struct LayerHit {
    bool hit = false;
    double x = 0.0;
    double y = 0.0;
};

// Ray through pixel (x, y) of cam, intersected with z = depth in the reference frame.
LayerHit intersect_layer(const Camera& reference, const Camera& cam, double x, double y, double depth) {
    const Vec3 d_cam((x - cam.cx()) / cam.fx(), (y - cam.cy()) / cam.fy(), 1.0);
    const Mat3 r = reference.rotation() * cam.rotation().transpose();
    const Vec3 dir = r * d_cam;
    const Vec3 origin = reference.rotation() * cam.center() + reference.translation();
    LayerHit h;
    if (dir.z() == 0.0) return h;
    const double s = (depth - origin.z()) / dir.z();
    if (!(s > 0.0)) return h;
    const Vec3 p = origin + s * dir;
    h.hit = true;
    h.x = reference.fx() * p.x() / depth + reference.cx();
    h.y = reference.fy() * p.y() / depth + reference.cy();
    return h;
}

double inside(double u, double lo, double hi) { return u >= lo && u <= hi ? 1.0 : 0.0; }

SceneLayer blank_layer(int w, int h, double z) { return SceneLayer{z, Image(w, h, 3), Image(w, h, 1)}; }

template <typename Fn>
void paint(SceneLayer& layer, Fn&& fn) {
    const int w = layer.rgb.width();
    const int h = layer.rgb.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double u = w > 1 ? static_cast<double>(x) / (w - 1) : 0.0;
            const double v = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
            const auto [rgb, a] = fn(u, v, x, y);
            for (int c = 0; c < 3; ++c) layer.rgb.at(x, y, c) = rgb[c];
            layer.alpha.at(x, y) = a;
        }
    }
}

using Texel = std::pair<std::array<double, 3>, double>;

LayeredScene three_planes(int w, int h) {
    LayeredScene s{w, h, {}, {0.0, 0.0, 0.0}, 10.0};
    SceneLayer near = blank_layer(w, h, 1.0);
    paint(near, [](double u, double v, int, int) -> Texel {
        const double a = inside(u, 0.12, 0.45) * inside(v, 0.15, 0.5);
        return {{0.85 - 0.3 * u, 0.25 + 0.5 * v, 0.2 + 0.1 * std::sin(kTau * u)}, a};
    });
    SceneLayer mid = blank_layer(w, h, 2.0);
    paint(mid, [](double u, double v, int, int) -> Texel {
        const double a = inside(u, 0.5, 0.88) * inside(v, 0.45, 0.85);
        return {{0.2 + 0.5 * v, 0.55 + 0.15 * std::cos(kTau * v), 0.75 - 0.3 * u}, a};
    });
    SceneLayer far = blank_layer(w, h, 4.0);
    paint(far, [](double u, double v, int, int) -> Texel {
        return {{0.5 + 0.25 * std::sin(kTau * (1.5 * u + 0.5 * v)), 0.45 + 0.2 * std::cos(kTau * (u - v)),
                 0.4 + 0.2 * std::sin(kTau * 2.0 * v)},
                1.0};
    });
    s.layers = {std::move(near), std::move(mid), std::move(far)};
    return s;
}

LayeredScene checker_stack(int w, int h) {
    LayeredScene s{w, h, {}, {0.0, 0.0, 0.0}, 10.0};
    const double depths[4] = {1.25, 1.6, 2.5, 4.0};
    const std::array<double, 3> colors[4][2] = {
        {{0.9, 0.2, 0.2}, {0.3, 0.1, 0.1}},
        {{0.2, 0.8, 0.3}, {0.1, 0.3, 0.1}},
        {{0.2, 0.3, 0.9}, {0.1, 0.1, 0.4}},
        {{0.9, 0.9, 0.8}, {0.4, 0.4, 0.3}},
    };
    for (int k = 0; k < 4; ++k) {
        SceneLayer layer = blank_layer(w, h, depths[k]);
        const int period = 4 + 2 * k;
        paint(layer, [&](double, double, int x, int y) -> Texel {
            const int parity = ((x / period) + (y / period)) % 2;
            return {colors[k][parity], 0.5};
        });
        s.layers.push_back(std::move(layer));
    }
    return s;
}

LayeredScene occluder(int w, int h) {
    LayeredScene s{w, h, {}, {0.0, 0.0, 0.0}, 10.0};
    SceneLayer near = blank_layer(w, h, 1.0);
    paint(near, [](double u, double v, int, int) -> Texel {
        const double a = inside(u, 0.35, 0.65) * inside(v, 0.35, 0.65);
        return {{0.9, 0.8, 0.2}, a};
    });
    SceneLayer far = blank_layer(w, h, 4.0);
    paint(far, [](double u, double v, int, int) -> Texel {
        return {{0.5 + 0.3 * std::sin(kTau * 3.0 * u), 0.5 + 0.3 * std::sin(kTau * 3.0 * v), 0.5}, 1.0};
    });
    s.layers = {std::move(near), std::move(far)};
    return s;
}

}  // namespace

void LayeredScene::validate() const {
    if (width <= 0 || height <= 0) throw DomainError("LayeredScene: empty texel grid");
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto& l = layers[k];
        if (!(l.z > 0.0)) throw DomainError("LayeredScene: layer depth must be positive");
        if (k > 0 && !(layers[k - 1].z < l.z)) throw DomainError("LayeredScene: layer depths must increase");
        if (l.rgb.width() != width || l.rgb.height() != height || l.rgb.channels() != 3 ||
            l.alpha.width() != width || l.alpha.height() != height || l.alpha.channels() != 1) {
            throw DomainError("LayeredScene: layer texture has the wrong shape");
        }
        for (double a : l.alpha.data()) {
            if (!(a >= 0.0 && a <= 1.0)) throw DomainError("LayeredScene: alpha outside [0, 1]");
        }
    }
    if (!layers.empty() && !(z_far > layers.back().z)) throw DomainError("LayeredScene: z_far must lie behind the layers");
}

OracleView oracle_render(const LayeredScene& scene, const Camera& reference, const Camera& cam) {
    scene.validate();
    const Vec3 c = reference.to_camera(cam.center());
    if (!scene.layers.empty() && !(c.z() < scene.layers.front().z)) {
        throw DomainError("oracle_render: camera is not in front of the first layer");
    }
    const int w = cam.width();
    const int h = cam.height();
    OracleView out{Image(w, h, 3), Image(w, h, 1), Image(w, h, 1), Image(w, h, 1)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double trans = 1.0;
            std::array<double, 3> rgb{0.0, 0.0, 0.0};
            double depth = 0.0;
            for (const auto& layer : scene.layers) {
                const LayerHit hit = intersect_layer(reference, cam, x, y, layer.z);
                if (!hit.hit) continue;
                const BilinearTaps taps = bilinear_taps(scene.width, scene.height, hit.x, hit.y);
                double a = 0.0;
                std::array<double, 3> col{};
                gather_bilinear(taps, layer.alpha.data(), 1, std::span<double>(&a, 1));
                gather_bilinear(taps, layer.rgb.data(), 3, col);
                const double wgt = trans * a;
                for (int k = 0; k < 3; ++k) rgb[k] += wgt * col[k];
                depth += wgt * layer.z;
                trans *= 1.0 - a;
            }
            for (int k = 0; k < 3; ++k) out.rgb.at(x, y, k) = rgb[k] + trans * scene.background[k];
            depth += trans * scene.z_far;
            out.depth.at(x, y) = depth;
            out.disparity.at(x, y) = 1.0 / depth;
            out.opacity.at(x, y) = 1.0 - trans;
        }
    }
    return out;
}

Image teacher_disparity(const LayeredScene& scene, const Camera& reference, const Camera& cam, double noise_level,
                        std::uint64_t seed, int smoothing) {
    if (!(noise_level >= 0.0)) throw DomainError("teacher_disparity: noise_level must be >= 0");
    Image disp = oracle_render(scene, reference, cam).disparity;
    if (noise_level > 0.0) {
        for (std::size_t i = 0; i < disp.size(); ++i) {
            CounterRng rng(derive_stream(seed, {i}));
            disp.data()[i] *= std::exp(noise_level * rng.normal());
        }
    }
    for (int pass = 0; pass < smoothing; ++pass) {
        Image next(disp.width(), disp.height(), 1);
        for (int y = 0; y < disp.height(); ++y) {
            for (int x = 0; x < disp.width(); ++x) {
                double sum = 0.0;
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = x + dx, yy = y + dy;
                        if (xx < 0 || yy < 0 || xx >= disp.width() || yy >= disp.height()) continue;
                        sum += disp.at(xx, yy);
                        ++n;
                    }
                }
                next.at(x, y) = sum / n;
            }
        }
        disp = std::move(next);
    }
    return disp;
}

SparsePoints sample_point_cloud(const LayeredScene& scene, const Camera& reference, const Camera& cam, int n,
                                std::uint64_t seed) {
    if (n < 1) throw DomainError("sample_point_cloud: n must be at least 1");
    const OracleView view = oracle_render(scene, reference, cam);
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < view.opacity.size(); ++i) {
        if (view.opacity.data()[i] >= kOpaque) pool.push_back(i);
    }
    if (pool.empty()) throw DomainError("sample_point_cloud: no pixel is opaque enough");
    CounterRng rng(derive_stream(seed, {0x9017u}));
    SparsePoints points;
    points.reserve(n);
    std::size_t remaining = pool.size();
    for (int k = 0; k < n; ++k) {
        std::size_t pick;
        if (remaining > 0) {
            const std::size_t j = static_cast<std::size_t>(rng.below(remaining));
            std::swap(pool[j], pool[remaining - 1]);
            pick = pool[--remaining];
        } else {
            pick = pool[rng.below(pool.size())];
        }
        const int x = static_cast<int>(pick % cam.width());
        const int y = static_cast<int>(pick / cam.width());
        points.push_back(SparsePoint{static_cast<double>(x), static_cast<double>(y), view.depth.at(x, y)});
    }
    return points;
}

Vec3 point_to_world(const Camera& reference, const Camera& cam, const SparsePoint& p) {
    const Vec3 d_cam((p.x - cam.cx()) / cam.fx(), (p.y - cam.cy()) / cam.fy(), 1.0);
    const Vec3 dir = reference.rotation() * cam.rotation().transpose() * d_cam;
    const Vec3 origin = reference.to_camera(cam.center());
    const Vec3 in_ref = origin + (p.z - origin.z()) / dir.z() * dir;
    return reference.to_world(in_ref);
}

std::vector<std::string> preset_names() { return {"three-planes", "checker-stack", "occluder"}; }

LayeredScene scene_preset(const std::string& name, int width, int height) {
    if (width < 2 || height < 2) throw DomainError("scene_preset: resolution must be at least 2x2");
    LayeredScene s;
    if (name == "three-planes") {
        s = three_planes(width, height);
    } else if (name == "checker-stack") {
        s = checker_stack(width, height);
    } else if (name == "occluder") {
        s = occluder(width, height);
    } else {
        throw DomainError("unknown scene preset '" + name + "' (expected three-planes, checker-stack or occluder)");
    }
    s.validate();
    return s;
}

MultiPlaneImage exact_mpi(const LayeredScene& scene, const std::vector<double>& depths) {
    scene.validate();
    MultiPlaneImage mpi(depths, scene.width, scene.height);
    const auto delta = mpi.intervals();
    for (const auto& layer : scene.layers) {
        int plane = -1;
        for (int k = 0; k < mpi.planes(); ++k) {
            if (std::abs(depths[k] - layer.z) <= 1e-9 * layer.z) plane = k;
        }
        if (plane < 0) throw DomainError("exact_mpi: layer at z = " + std::to_string(layer.z) + " has no plane");
        for (int y = 0; y < scene.height; ++y) {
            for (int x = 0; x < scene.width; ++x) {
                const double a = layer.alpha.at(x, y);
                if (!(a < 1.0)) throw DomainError("exact_mpi: fully opaque texels have no finite density");
                for (int c = 0; c < 3; ++c) mpi.at(plane, x, y, c) = layer.rgb.at(x, y, c);
                mpi.at(plane, x, y, 3) = -std::log1p(-a) / delta[plane];
            }
        }
    }
    return mpi;
}

CameraRig default_rig(int width, int height, int targets, double radius, int holdout, double holdout_radius) {
    const double focal = width;
    CameraRig rig{centered_camera(width, height, focal), {}, {}};
    auto ring = [&](int count, double r, double phase, std::vector<Camera>& out) {
        for (int i = 0; i < count; ++i) {
            const double a = phase + kTau * i / count;
            const Vec3 center(r * std::cos(a), r * std::sin(a), 2.2 * r);
            out.push_back(centered_camera(width, height, focal, Pose::from_center(center)));
        }
    };
    ring(targets, radius, 0.0, rig.targets);
    ring(holdout, holdout_radius, kTau / 16.0, rig.holdout);
    return rig;
}

}  // namespace planevol
