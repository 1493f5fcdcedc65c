#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "planevol/geometry.hpp"
#include "planevol/losses.hpp"
#include "planevol/model.hpp"
#include "planevol/params.hpp"
#include "planevol/renderer.hpp"

namespace planevol {

/// Rays per work unit. Per-ray arithmetic never depends on it.
constexpr std::size_t kRayChunk = 64;

/// Supervision for one training view.
struct ViewData {
    Camera camera;
    Image rgb;
    Image teacher;  // empty when unavailable
    SparsePoints points;
};

/// Everything a training step reads. views[0] is the source view itself.
struct TrainingData {
    Camera source;
    Image source_image;
    std::vector<ViewData> views;
};

/// Rectangle of pixels of one view.
struct Patch {
    std::size_t view = 0;
    int x0 = 0;
    int y0 = 0;
    int width = 0;
    int height = 0;
};

/// Which weighted sum of branch losses is differentiated.
enum class Objective {
    coarse,      // L_c; only the coarse branch is rendered
    fine_joint,  // 0.4 L_f + L_j
    full,        // L_c + 0.4 L_f + L_j
};

struct StepOptions {
    std::uint64_t seed = 0;
    std::uint64_t iteration = 0;
    Objective objective = Objective::full;
    bool jitter = true;
    bool want_grad = true;
};

struct StepResult {
    LossReport report;
    double objective = 0.0;
    Gradients grads;  // empty unless want_grad
};

/// Renders the patch with the requested branches, scores it and, optionally,
/// back-propagates the objective into every parameter block.
/// Throws NumericalError naming the stage that produced a NaN or infinity.
StepResult evaluate_patch(const Model& model, const TrainingData& data, const Patch& patch,
                          const LossWeights& weights, const StepOptions& options);

struct RenderOptions {
    std::uint64_t seed = 0;
    std::uint64_t iteration = 0;
    std::uint64_t view_tag = 0;  // mixed into each ray's random stream
    bool jitter = false;         // off: fine variates sit at stratum midpoints
    std::size_t batch_size = kRayChunk;
};

/// Whole-image render of the requested branches, in the order given.
std::vector<RenderedView> render_branches(const Model& model, const Image& source_image, const Camera& src,
                                          const Camera& tgt, std::span<const Branch> branches,
                                          const RenderOptions& options = {});

RenderedView render_view(const Model& model, const Image& source_image, const Camera& src, const Camera& tgt,
                         Branch branch, const RenderOptions& options = {});

}  // namespace planevol
