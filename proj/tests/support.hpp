#pragma once

#include <algorithm>
#include <cmath>

#include "planevol/field.hpp"
#include "planevol/model.hpp"

namespace planevol::testing {

// Raw value that squashes to exactly zero density (softplus underflows).
constexpr double kEmptyRaw = -800.0;

// Writes raw grid values into a direct-mode model so that its coarse MPI
// reproduces `mpi` (colours clamped away from 0 and 1 by a few ulps at most).
inline void load_direct_mpi(Model& model, const MultiPlaneImage& mpi) {
    ParameterStore& store = model.store();
    auto raw = store.values(store.find("mpi.raw"));
    const double unit = mpi.mean_spacing();
    for (std::size_t i = 0; i < raw.size(); i += 4) {
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(mpi.values()[i + c], 1e-17, 1.0 - 1e-17);
            raw[i + c] = std::log(v) - std::log1p(-v);
        }
        const double sigma = mpi.values()[i + 3];
        raw[i + 3] = sigma > 0.0 ? softplus_inverse(sigma * unit) : kEmptyRaw;
    }
}

// Forces every fine sample to zero density.
inline void silence_decoder(Model& model) {
    ParameterStore& store = model.store();
    const int last = FineDecoder::kLayers - 1;
    for (double& v : store.values(model.decoder().weight_block(last))) v = 0.0;
    store.values(model.decoder().bias_block(last))[3] = kEmptyRaw;
}

}  // namespace planevol::testing
