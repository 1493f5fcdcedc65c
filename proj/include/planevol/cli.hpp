#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "planevol/io.hpp"
#include "planevol/losses.hpp"
#include "planevol/model.hpp"
#include "planevol/renderer.hpp"

namespace planevol {

/// Writes oracle renders (PNG), teacher disparity (PFM) for the source and
/// every target view, the source view's point cloud (PLY, world frame) and
/// manifest.json into <output>/synth. Returns the files written.
std::vector<std::filesystem::path> cmd_synth(const RunConfig& config);

struct TrainOptions {
    bool resume = false;            // continue from <output>/checkpoint.pvck
    std::int64_t stop_after = -1;   // stop once this many steps are done; -1 runs to the end
    std::ostream* progress = nullptr;
};

struct TrainSummary {
    std::uint64_t steps = 0;
    double last_objective = 0.0;
    std::filesystem::path checkpoint;
};

/// Two-stage training. Appends one line per step to <output>/train.log,
/// snapshots every checkpoint_every steps and at the end. DivergenceError
/// propagates after the last good state has been saved.
TrainSummary cmd_train(const RunConfig& config, const TrainOptions& options = {});

std::filesystem::path checkpoint_path(const RunConfig& config);

/// A model restored from a checkpoint together with the run it came from.
struct LoadedRun {
    RunConfig config;
    std::unique_ptr<Model> model;
    Image source_image;
};

LoadedRun load_run(const std::filesystem::path& checkpoint);

/// "source", "target:N" or "holdout:N"; throws ConfigError otherwise.
Camera select_camera(const RunConfig& config, const std::string& which);

/// Renders one branch and writes <out_prefix>.png (colour), <out_prefix>.pfm
/// (depth) and <out_prefix>.json (config hash and camera).
RenderedView cmd_render(const LoadedRun& run, const Camera& camera, Branch branch,
                        const std::filesystem::path& out_prefix);

struct BranchEval {
    Branch branch;
    std::vector<Metrics> per_view;
    Metrics mean;
};

/// Scores every branch on the held-out views (targets when there are none)
/// against the oracle and writes the summary JSON to `out`.
std::vector<BranchEval> cmd_eval(const LoadedRun& run, const std::filesystem::path& out);

}  // namespace planevol
