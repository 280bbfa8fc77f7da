#pragma once

// Choice of the simplex weights omega by minimizing trace(B_F(omega)).
//
// The search is a barycentric grid over the simplex followed by Nelder-Mead
// on softmax coordinates started from the best grid point. It is fully
// deterministic.

#include "esci/fusion.hpp"

#include <span>
#include <variant>
#include <vector>

namespace esci {

struct CiProblem {
    std::vector<PlainEstimate> estimates;
};

struct SciProblem {
    std::vector<SciEstimate> estimates;
};

struct EsciGeneralProblem {
    CentralizedSplit split;  // decorrelated
};

struct EsciCommonNoiseProblem {
    std::vector<SplitEstimate> estimates;
    SpdMatrix q;
};

struct EsciAdditiveProblem {
    std::vector<SplitEstimate> estimates;
    SpdMatrix q;
};

/// A fusion rule together with its inputs; everything but omega.
using FusionProblem =
    std::variant<CiProblem, SciProblem, EsciGeneralProblem, EsciCommonNoiseProblem, EsciAdditiveProblem>;

std::size_t input_count(const FusionProblem& problem);

FusionOutput fuse(const FusionProblem& problem, std::span<const double> omega);

/// trace(B_F(omega)) for the problem's rule.
double trace_objective(const FusionProblem& problem, std::span<const double> omega);

struct OmegaConfig {
    int grid_resolution = 11;   // points per axis, >= 2
    int max_refine_iters = 200;
    double tol = 1e-9;          // relative spread of the simplex objective values
};

struct OmegaResult {
    std::vector<double> omega;
    double objective = 0.0;
};

/// All points of the barycentric lattice with (resolution - 1) steps per axis,
/// in ascending lexicographic order.
std::vector<std::vector<double>> simplex_grid(std::size_t n, int resolution);

OmegaResult optimize_omega(const FusionProblem& problem, const OmegaConfig& config = {});

/// How a filter picks omega at each fusion.
class OmegaPolicy {
public:
    static OmegaPolicy optimized(OmegaConfig config = {});
    /// omega_i = 1/N.
    static OmegaPolicy uniform();

    std::vector<double> choose(const FusionProblem& problem) const;

    bool is_optimized() const { return optimize_; }
    const OmegaConfig& config() const { return config_; }

private:
    bool optimize_ = true;
    OmegaConfig config_;
};

}  // namespace esci
