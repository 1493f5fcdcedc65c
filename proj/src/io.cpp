#include "planevol/io.hpp"

#include <png.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

namespace planevol {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void io_fail(const fs::path& path, const std::string& what) {
    throw std::runtime_error(path.string() + ": " + what);
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const fs::path& path, const char* mode) {
    File f(std::fopen(path.c_str(), mode));
    if (!f) io_fail(path, "cannot open");
    return f;
}

std::uint8_t quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0) * 255.0;
    return static_cast<std::uint8_t>(std::nearbyint(c));
}

}  // namespace

// ---------------------------------------------------------------------------
// PNG

void write_png(const fs::path& path, const Image& image) {
    if (image.channels() != 1 && image.channels() != 3) throw DomainError("write_png: need 1 or 3 channels");
    File f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        io_fail(path, "libpng initialization failed");
    }
    std::vector<std::uint8_t> bytes(image.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(image.data()[i]);
    std::vector<png_bytep> rows(image.height());
    const std::size_t stride = static_cast<std::size_t>(image.width()) * image.channels();
    for (int y = 0; y < image.height(); ++y) rows[y] = bytes.data() + y * stride;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        io_fail(path, "libpng write failed");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, image.width(), image.height(), 8,
                 image.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const fs::path& path) {
    File f = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        io_fail(path, "libpng initialization failed");
    }
    Image out;
    std::vector<std::uint8_t> bytes;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        io_fail(path, "not a readable PNG");
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    bytes.resize(static_cast<std::size_t>(w) * h * channels);
    rows.resize(h);
    for (int y = 0; y < h; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * w * channels;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    out = Image(w, h, channels);
    for (std::size_t i = 0; i < bytes.size(); ++i) out.data()[i] = bytes[i] / 255.0;
    return out;
}

// ---------------------------------------------------------------------------
// PFM

void write_pfm(const fs::path& path, const Image& image) {
    if (image.channels() != 1 && image.channels() != 3) throw DomainError("write_pfm: need 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) io_fail(path, "cannot open");
    out << (image.channels() == 1 ? "Pf" : "PF") << '\n' << image.width() << ' ' << image.height() << '\n' << "1.0\n";
    for (int y = image.height() - 1; y >= 0; --y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < image.channels(); ++c) {
                const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(image.at(x, y, c)));
                const char be[4] = {static_cast<char>(bits >> 24), static_cast<char>(bits >> 16),
                                    static_cast<char>(bits >> 8), static_cast<char>(bits)};
                out.write(be, 4);
            }
        }
    }
    if (!out) io_fail(path, "write failed");
}

Image read_pfm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) io_fail(path, "cannot open");
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    in >> magic >> w >> h >> scale;
    in.get();
    if ((magic != "Pf" && magic != "PF") || w <= 0 || h <= 0 || scale == 0.0) io_fail(path, "not a PFM file");
    const int channels = magic == "Pf" ? 1 : 3;
    const bool little = scale < 0.0;
    Image img(w, h, channels);
    for (int y = h - 1; y >= 0; --y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < channels; ++c) {
                unsigned char b[4];
                if (!in.read(reinterpret_cast<char*>(b), 4)) io_fail(path, "truncated PFM data");
                const std::uint32_t bits = little ? (std::uint32_t{b[3]} << 24 | std::uint32_t{b[2]} << 16 |
                                                     std::uint32_t{b[1]} << 8 | b[0])
                                                  : (std::uint32_t{b[0]} << 24 | std::uint32_t{b[1]} << 16 |
                                                     std::uint32_t{b[2]} << 8 | b[3]);
                img.at(x, y, c) = std::bit_cast<float>(bits);
            }
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// PLY

void write_ply(const fs::path& path, const std::vector<Vec3>& points) {
    File f = open_file(path, "w");
    std::fprintf(f.get(), "ply\nformat ascii 1.0\nelement vertex %zu\n", points.size());
    std::fprintf(f.get(), "property double x\nproperty double y\nproperty double z\nend_header\n");
    for (const Vec3& p : points) std::fprintf(f.get(), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    if (std::ferror(f.get())) io_fail(path, "write failed");
}

std::vector<Vec3> read_ply(const fs::path& path) {
    std::ifstream in(path);
    if (!in) io_fail(path, "cannot open");
    std::string line;
    std::size_t count = 0;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.rfind("element vertex", 0) == 0) count = std::stoul(line.substr(15));
        if (line == "end_header") {
            header = true;
            break;
        }
    }
    if (!header) io_fail(path, "missing PLY header");
    std::vector<Vec3> points(count);
    for (auto& p : points) {
        if (!(in >> p.x() >> p.y() >> p.z())) io_fail(path, "truncated PLY body");
    }
    return points;
}

// ---------------------------------------------------------------------------
// Config

namespace {

std::string where(const YAML::Node& node, const std::string& field) {
    const auto mark = node.Mark();
    std::string s = "config field '" + field + "'";
    if (mark.line >= 0) s += " (line " + std::to_string(mark.line + 1) + ")";
    return s;
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& field) {
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(where(node, field) + ": wrong type");
    }
}

class Section {
public:
    Section(const YAML::Node& node, std::string prefix) : node_(node), prefix_(std::move(prefix)) {
        if (node_ && !node_.IsMap()) throw ConfigError(where(node_, prefix_) + ": expected a mapping");
    }
    ~Section() = default;

    template <typename T>
    void read(const std::string& key, T& into) {
        seen_.insert(key);
        if (!node_) return;
        const YAML::Node v = node_[key];
        if (v) into = scalar<T>(v, name(key));
    }
    YAML::Node child(const std::string& key) {
        seen_.insert(key);
        return node_ ? node_[key] : YAML::Node();
    }
    std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

    void reject_unknown() const {
        if (!node_) return;
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!seen_.count(key)) throw ConfigError(where(kv.first, name(key)) + ": unknown field");
        }
    }

private:
    YAML::Node node_;
    std::string prefix_;
    std::set<std::string> seen_;
};

template <typename T>
std::vector<T> list(const YAML::Node& node, const std::string& field, std::size_t n) {
    if (!node || !node.IsSequence() || node.size() != n) {
        throw ConfigError(where(node, field) + ": expected a list of " + std::to_string(n) + " numbers");
    }
    std::vector<T> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(scalar<T>(node[i], field));
    return out;
}

Camera parse_camera(const YAML::Node& node, const std::string& field) {
    if (!node.IsMap()) throw ConfigError(where(node, field) + ": expected a camera mapping");
    Section s(node, field);
    const auto r = list<double>(s.child("rotation"), field + ".rotation", 9);
    const auto t = list<double>(s.child("translation"), field + ".translation", 3);
    const auto k = list<double>(s.child("intrinsics"), field + ".intrinsics", 4);
    const auto sz = list<int>(s.child("size"), field + ".size", 2);
    s.reject_unknown();
    Pose pose;
    for (int i = 0; i < 9; ++i) pose.rotation(i / 3, i % 3) = r[i];
    pose.translation = Vec3(t[0], t[1], t[2]);
    try {
        return Camera(k[0], k[1], k[2], k[3], sz[0], sz[1], pose);
    } catch (const DomainError& e) {
        throw ConfigError(where(node, field) + ": " + e.what());
    }
}

std::vector<Camera> parse_cameras(const YAML::Node& node, const std::string& field) {
    std::vector<Camera> out;
    if (!node) return out;
    if (!node.IsSequence()) throw ConfigError(where(node, field) + ": expected a list of cameras");
    for (std::size_t i = 0; i < node.size(); ++i) out.push_back(parse_camera(node[i], field + "[" + std::to_string(i) + "]"));
    return out;
}

void emit_camera(YAML::Emitter& out, const Camera& c) {
    out << YAML::BeginMap;
    out << YAML::Key << "rotation" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (int i = 0; i < 9; ++i) out << c.rotation()(i / 3, i % 3);
    out << YAML::EndSeq;
    out << YAML::Key << "translation" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (int i = 0; i < 3; ++i) out << c.translation()[i];
    out << YAML::EndSeq;
    out << YAML::Key << "intrinsics" << YAML::Value << YAML::Flow << YAML::BeginSeq << c.fx() << c.fy() << c.cx()
        << c.cy() << YAML::EndSeq;
    out << YAML::Key << "size" << YAML::Value << YAML::Flow << YAML::BeginSeq << c.width() << c.height()
        << YAML::EndSeq;
    out << YAML::EndMap;
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    const CameraRig rig = default_rig(c.width, c.height);
    c.source = rig.source;
    c.targets = rig.targets;
    c.holdout = rig.holdout;
    return c;
}

RunConfig parse_config(const std::string& text, const fs::path& base_dir) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config: YAML syntax error: ") + e.what());
    }
    if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    RunConfig c;
    c.base_dir = base_dir;
    Section top(root, "");

    Section scene(top.child("scene"), "scene");
    scene.read("preset", c.preset);
    scene.read("width", c.width);
    scene.read("height", c.height);
    scene.reject_unknown();
    {
        const auto names = preset_names();
        if (std::find(names.begin(), names.end(), c.preset) == names.end()) {
            throw ConfigError(where(top.child("scene")["preset"], "scene.preset") + ": unknown preset '" + c.preset +
                              "'");
        }
    }
    if (c.width < kSsimWindow || c.height < kSsimWindow) {
        throw ConfigError("config field 'scene.width/height': must be at least 11");
    }

    const YAML::Node cams = top.child("cameras");
    if (cams) {
        Section cs(cams, "cameras");
        const YAML::Node src = cs.child("source");
        if (!src) throw ConfigError(where(cams, "cameras.source") + ": missing");
        c.source = parse_camera(src, "cameras.source");
        c.targets = parse_cameras(cs.child("targets"), "cameras.targets");
        c.holdout = parse_cameras(cs.child("holdout"), "cameras.holdout");
        cs.reject_unknown();
    } else {
        const CameraRig rig = default_rig(c.width, c.height);
        c.source = rig.source;
        c.targets = rig.targets;
        c.holdout = rig.holdout;
    }
    if (c.source.width() != c.width || c.source.height() != c.height) {
        throw ConfigError("config field 'cameras.source.size': must equal the scene size");
    }

    Section model(top.child("model"), "model");
    c.model.width = c.width;
    c.model.height = c.height;
    model.read("planes", c.model.planes);
    model.read("fine_samples", c.model.fine_samples);
    model.read("near", c.model.near);
    model.read("far", c.model.far);
    std::string mode = to_string(c.model.mode);
    model.read("mode", mode);
    try {
        c.model.mode = mpi_mode_from_string(mode);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config field 'model.mode': ") + e.what());
    }
    model.read("extractor_hidden", c.model.extractor_hidden);
    model.read("fine_sigma_bias", c.model.fine_sigma_bias);
    model.reject_unknown();
    try {
        c.model.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config section 'model': ") + e.what());
    }

    Section loss(top.child("loss"), "loss");
    loss.read("ssim", c.loss.ssim);
    loss.read("point", c.loss.point);
    loss.read("pseudo_depth", c.loss.pseudo_depth);
    loss.read("grad", c.loss.grad);
    loss.reject_unknown();
    if (c.loss.ssim < 0 || c.loss.point < 0 || c.loss.pseudo_depth < 0 || c.loss.grad < 0) {
        throw ConfigError("config section 'loss': weights must be >= 0");
    }

    Section train(top.child("train"), "train");
    train.read("stage1_steps", c.train.stage1_steps);
    train.read("stage2_steps", c.train.stage2_steps);
    train.read("patch", c.train.patch);
    train.read("lr_coarse", c.train.lr_coarse);
    train.read("lr_fine", c.train.lr_fine);
    train.read("decay_factor", c.train.decay_factor);
    train.read("decay_every", c.train.decay_every);
    train.read("checkpoint_every", c.train.checkpoint_every);
    train.read("divergence_threshold", c.train.divergence_threshold);
    train.reject_unknown();
    try {
        c.train.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config section 'train': ") + e.what());
    }
    if (c.train.patch > c.width || c.train.patch > c.height) {
        throw ConfigError("config field 'train.patch': larger than the image");
    }

    Section data(top.child("data"), "data");
    data.read("noise_level", c.data.noise_level);
    data.read("points_per_view", c.data.points_per_view);
    data.read("teacher_smoothing", c.data.teacher_smoothing);
    data.reject_unknown();
    if (c.data.noise_level < 0 || c.data.points_per_view < 0 || c.data.teacher_smoothing < 0) {
        throw ConfigError("config section 'data': values must be >= 0");
    }

    top.read("seed", c.seed);
    top.read("output", c.output);
    top.reject_unknown();
    return c;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

std::string dump_config(const RunConfig& c) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;
    out << YAML::Key << "scene" << YAML::Value << YAML::BeginMap << YAML::Key << "preset" << YAML::Value << c.preset
        << YAML::Key << "width" << YAML::Value << c.width << YAML::Key << "height" << YAML::Value << c.height
        << YAML::EndMap;
    out << YAML::Key << "cameras" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "source" << YAML::Value;
    emit_camera(out, c.source);
    for (const auto& [key, list] : {std::pair{"targets", &c.targets}, std::pair{"holdout", &c.holdout}}) {
        out << YAML::Key << key << YAML::Value << YAML::BeginSeq;
        for (const auto& cam : *list) emit_camera(out, cam);
        out << YAML::EndSeq;
    }
    out << YAML::EndMap;
    out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "planes" << YAML::Value << c.model.planes;
    out << YAML::Key << "fine_samples" << YAML::Value << c.model.fine_samples;
    out << YAML::Key << "near" << YAML::Value << c.model.near;
    out << YAML::Key << "far" << YAML::Value << c.model.far;
    out << YAML::Key << "mode" << YAML::Value << to_string(c.model.mode);
    out << YAML::Key << "extractor_hidden" << YAML::Value << c.model.extractor_hidden;
    out << YAML::Key << "fine_sigma_bias" << YAML::Value << c.model.fine_sigma_bias;
    out << YAML::EndMap;
    out << YAML::Key << "loss" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "ssim" << YAML::Value << c.loss.ssim;
    out << YAML::Key << "point" << YAML::Value << c.loss.point;
    out << YAML::Key << "pseudo_depth" << YAML::Value << c.loss.pseudo_depth;
    out << YAML::Key << "grad" << YAML::Value << c.loss.grad;
    out << YAML::EndMap;
    out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "stage1_steps" << YAML::Value << c.train.stage1_steps;
    out << YAML::Key << "stage2_steps" << YAML::Value << c.train.stage2_steps;
    out << YAML::Key << "patch" << YAML::Value << c.train.patch;
    out << YAML::Key << "lr_coarse" << YAML::Value << c.train.lr_coarse;
    out << YAML::Key << "lr_fine" << YAML::Value << c.train.lr_fine;
    out << YAML::Key << "decay_factor" << YAML::Value << c.train.decay_factor;
    out << YAML::Key << "decay_every" << YAML::Value << c.train.decay_every;
    out << YAML::Key << "checkpoint_every" << YAML::Value << c.train.checkpoint_every;
    out << YAML::Key << "divergence_threshold" << YAML::Value << c.train.divergence_threshold;
    out << YAML::EndMap;
    out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "noise_level" << YAML::Value << c.data.noise_level;
    out << YAML::Key << "points_per_view" << YAML::Value << c.data.points_per_view;
    out << YAML::Key << "teacher_smoothing" << YAML::Value << c.data.teacher_smoothing;
    out << YAML::EndMap;
    out << YAML::Key << "seed" << YAML::Value << c.seed;
    out << YAML::Key << "output" << YAML::Value << c.output;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t config_hash(const RunConfig& config) { return fnv1a(dump_config(config)); }

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Checkpoints: little-endian throughout.

namespace {

constexpr char kMagic[4] = {'P', 'V', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(std::ofstream& out) : out_(out) {}
    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

private:
    std::ofstream& out_;
};

class Reader {
public:
    Reader(std::ifstream& in, const fs::path& path) : in_(in), path_(path) {}
    std::uint8_t u8() {
        const int c = in_.get();
        if (c == EOF) throw ConfigError(path_.string() + ": truncated checkpoint");
        return static_cast<std::uint8_t>(c);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{u8()} << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{u8()} << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint64_t n = u64();
        if (n > (1ULL << 32)) throw ConfigError(path_.string() + ": corrupt checkpoint string");
        std::string s(n, '\0');
        if (!in_.read(s.data(), static_cast<std::streamsize>(n))) {
            throw ConfigError(path_.string() + ": truncated checkpoint");
        }
        return s;
    }

private:
    std::ifstream& in_;
    const fs::path& path_;
};

}  // namespace

void write_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) io_fail(tmp, "cannot open");
        Writer w(out);
        out.write(kMagic, 4);
        w.u32(kVersion);
        w.u64(ckpt.config_hash);
        w.str(ckpt.config_text);
        w.u64(ckpt.step);
        const auto& blocks = ckpt.store.blocks();
        w.u32(static_cast<std::uint32_t>(blocks.size()));
        for (const auto& b : blocks) {
            w.str(b.name);
            w.u8(static_cast<std::uint8_t>(b.group));
            w.u32(static_cast<std::uint32_t>(b.shape.size()));
            for (auto d : b.shape) w.u64(d);
            w.u64(b.values.size());
            for (double v : b.values) w.f64(v);
        }
        const bool has_adam = ckpt.adam.matches(ckpt.store);
        w.u8(has_adam ? 1 : 0);
        if (has_adam) {
            for (std::size_t i = 0; i < blocks.size(); ++i) {
                w.u64(ckpt.adam.steps[i]);
                for (double v : ckpt.adam.m[i]) w.f64(v);
                for (double v : ckpt.adam.v[i]) w.f64(v);
            }
        }
        if (!out) io_fail(tmp, "write failed");
    }
    fs::rename(tmp, path);
}

Checkpoint read_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read checkpoint " + path.string());
    Reader r(in, path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw ConfigError(path.string() + ": not a checkpoint file");
    }
    if (r.u32() != kVersion) throw ConfigError(path.string() + ": unsupported checkpoint version");
    Checkpoint c;
    c.config_hash = r.u64();
    c.config_text = r.str();
    if (fnv1a(c.config_text) != c.config_hash) throw ConfigError(path.string() + ": config hash mismatch");
    c.step = r.u64();
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = r.str();
        const auto group = static_cast<ParamGroup>(r.u8());
        std::vector<std::size_t> shape(r.u32());
        for (auto& d : shape) d = r.u64();
        const std::size_t id = c.store.add(name, shape, group);
        const std::uint64_t count = r.u64();
        if (count != c.store.block(id).size()) throw ConfigError(path.string() + ": block '" + name + "' size mismatch");
        for (double& v : c.store.values(id)) v = r.f64();
    }
    if (r.u8() == 1) {
        c.adam = AdamState(c.store);
        for (std::uint32_t i = 0; i < n; ++i) {
            c.adam.steps[i] = r.u64();
            for (double& v : c.adam.m[i]) v = r.f64();
            for (double& v : c.adam.v[i]) v = r.f64();
        }
    }
    return c;
}

void load_parameters(Model& model, const ParameterStore& saved) {
    ParameterStore& store = model.store();
    if (!store.same_layout(saved)) throw ConfigError("checkpoint parameters do not match the model layout");
    for (std::size_t i = 0; i < store.block_count(); ++i) store.block(i).values = saved.block(i).values;
}

}  // namespace planevol
