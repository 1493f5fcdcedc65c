#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace planevol {

/// Deliberate defects used to prove that a suite can fail.
enum class Fault { none, sigma_sign };

Fault fault_from_string(const std::string& s);

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string tolerance;
    std::string detail;
    double seconds = 0.0;
};

/// Random sample sets against an independent cumulative-product compositor;
/// also checks sum(w) = 1 - exp(-sum(sigma delta)).
SuiteResult check_compositing(std::size_t sets = 10000, std::uint64_t seed = 1);

/// Analytic gradients of the full objective (L_c + 0.4 L_f + L_j) against
/// central differences at `coords` random parameters spread over the MPI,
/// extractor and decoder blocks, on a size x size training view.
SuiteResult check_gradients(int size = 4, int coords = 64, std::uint64_t seed = 2);

/// An MPI built analytically from a layered preset renders every target and
/// held-out view of the default rig like the oracle.
SuiteResult check_exact_representation(const std::string& preset = "checker-stack", int width = 48, int height = 48);

/// Chi-square goodness of fit of inverse-transform samples against a random
/// piecewise-constant pdf, plus exact monotonicity in u.
SuiteResult check_importance_sampling(std::size_t samples = 100000, int bins = 16, std::uint64_t seed = 4);

/// Coarse, fine and merged sample sets built from a randomly initialized
/// model: weights non-negative, transmittance non-increasing, sum(w) + T_n = 1.
/// `fault` corrupts the densities before compositing.
SuiteResult check_conservation(Fault fault = Fault::none, std::uint64_t seed = 5);

/// point_loss and pseudo_depth_loss under a global rescale of the prediction.
SuiteResult check_scale_invariance(std::uint64_t seed = 6);

/// Reported total against L_c + 0.4 L_f + L_j recomputed from the branch terms.
SuiteResult check_loss_weighting(std::uint64_t seed = 8);

std::vector<SuiteResult> run_all_checks(Fault fault = Fault::none);

}  // namespace planevol
