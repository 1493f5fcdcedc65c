#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "planevol/common.hpp"
#include "planevol/geometry.hpp"
#include "planevol/losses.hpp"
#include "planevol/model.hpp"
#include "planevol/optimizer.hpp"
#include "planevol/scene_oracle.hpp"

namespace planevol {

/// 8-bit PNG from a 1- or 3-channel image in [0, 1]; values are clamped and
/// rounded half to even.
void write_png(const std::filesystem::path& path, const Image& image);
/// Values come back as k / 255.
Image read_png(const std::filesystem::path& path);

/// Portable float map: "Pf" for one channel, "PF" for three; big-endian
/// (scale +1), rows stored bottom to top.
void write_pfm(const std::filesystem::path& path, const Image& image);
Image read_pfm(const std::filesystem::path& path);

/// ASCII PLY with float64 x y z per vertex.
void write_ply(const std::filesystem::path& path, const std::vector<Vec3>& points);
std::vector<Vec3> read_ply(const std::filesystem::path& path);

/// One file fully describing a run.
struct RunConfig {
    std::string preset = "three-planes";
    int width = 48;
    int height = 48;
    Camera source = centered_camera(48, 48, 48.0);
    std::vector<Camera> targets;
    std::vector<Camera> holdout;
    ModelConfig model;
    LossWeights loss;
    TrainConfig train;
    DataConfig data;
    std::uint64_t seed = 7;
    std::string output = "run";
    /// Directory that relative paths resolve against (not serialized).
    std::filesystem::path base_dir = ".";

    /// Defaults with the default camera rig at the default resolution.
    static RunConfig defaults();
    std::filesystem::path output_dir() const { return base_dir / output; }
};

/// Parses YAML text; ConfigError messages name the field and line.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);
/// Canonical YAML (every field explicit, doubles with 17 significant digits).
std::string dump_config(const RunConfig& config);
/// 64-bit FNV-1a of the canonical YAML.
std::uint64_t config_hash(const RunConfig& config);
std::uint64_t fnv1a(const std::string& bytes);
std::string hash_hex(std::uint64_t h);

/// Binary training snapshot.
struct Checkpoint {
    std::string config_text;
    std::uint64_t config_hash = 0;
    std::uint64_t step = 0;
    ParameterStore store;
    AdamState adam;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws ConfigError on a bad magic number, version, or hash mismatch.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into a model built from the same config.
void load_parameters(Model& model, const ParameterStore& saved);

}  // namespace planevol
