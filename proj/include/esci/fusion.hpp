#pragma once

// Conservative linear fusion rules.
//
// Every rule returns gains K_i with sum_i K_i = I, the fused mean
// sum_i K_i x_i, and a bound B_F such that K P_cent K' <= B_F for every
// centralized covariance P_cent in the rule's admissible set.
//
//   CI    unknown cross-covariances between whole errors
//   SCI   errors split into an unknown-correlation part and a mutually
//         independent part
//   ESCI  the second part is only required to have a known centralized
//         covariance (it may be correlated across estimates, e.g. a shared
//         process noise); three algebraically equivalent entry points

#include "esci/matlib.hpp"

#include <optional>
#include <random>
#include <span>
#include <vector>

namespace esci {

/// Weights below this are clamped (and the vector renormalized) by the ESCI
/// rules, whose centralized bound divides by omega_i.
inline constexpr double kOmegaFloor = 1e-9;

struct PlainEstimate {
    Vector mean;
    SpdMatrix cov;
};

/// Estimate with error x1 + x2: x1 correlated to an unknown degree across
/// estimates, x2 uncorrelated with everything else.
struct SciEstimate {
    Vector mean;
    SpdMatrix p1;
    SpdMatrix p2;
};

/// Estimate with error x1 + x_ind + M w, where w is a noise shared by all
/// estimates. An absent m means the identity.
struct SplitEstimate {
    Vector mean;
    SpdMatrix p1;
    SpdMatrix p_ind;
    std::optional<Matrix> m;
};

/// Stacked view of N split estimates. Only the diagonal blocks of the
/// first-component covariance are known; the second component is known in
/// full, and so is its cross-covariance with the first (absent once
/// decorrelated).
struct CentralizedSplit {
    std::vector<Vector> means;
    std::vector<SpdMatrix> p1_diag;
    BlockMatrix p2_cent;
    std::optional<BlockMatrix> p12_cent;

    std::size_t size() const { return means.size(); }
};

struct FusionOutput {
    Vector mean;
    SpdMatrix bound;
    std::vector<Matrix> gains;
    std::vector<double> omega;
};

/// Checks omega against the simplex (non-negative, finite, sum 1 within
/// 1e-9) and returns it renormalized to sum exactly 1.
std::vector<double> normalize_omega(std::span<const double> omega, std::size_t n);

/// Clamps entries below kOmegaFloor and renormalizes.
std::vector<double> floor_omega(std::span<const double> omega);

FusionOutput ci_fuse(std::span<const PlainEstimate> estimates, std::span<const double> omega);

FusionOutput sci_fuse(std::span<const SciEstimate> estimates, std::span<const double> omega);

/// Re-splits the errors so the two components become uncorrelated:
/// with T = P12 P2^-1, x1 <- x1 - T x2 and x2 <- (I + T) x2.
CentralizedSplit decorrelate_split(const CentralizedSplit& cs);

/// General ESCI: B_cent = diag(P1_i / omega_i) + P2_cent, B_F^-1 = H' B_cent^-1 H.
/// Requires a decorrelated split.
FusionOutput esci_fuse_general(const CentralizedSplit& cs, std::span<const double> omega);

/// ESCI when the correlated second component is a shared noise w ~ (0, Q)
/// entering each estimate through M_i. Only d x d (and q x q) inversions.
FusionOutput esci_fuse_common_noise(std::span<const SplitEstimate> estimates, const SpdMatrix& q,
                                    std::span<const double> omega);

/// ESCI with M_i = I: SCI on (p1, p_ind) followed by B_F = B_0 + Q.
FusionOutput esci_fuse_additive_noise(std::span<const SplitEstimate> estimates, const SpdMatrix& q,
                                      std::span<const double> omega);

/// Centralized split equivalent to a set of common-noise estimates:
/// P2_cent(i,j) = delta_ij P_ind_i + M_i Q M_j'.
CentralizedSplit to_centralized(std::span<const SplitEstimate> estimates, const SpdMatrix& q);

/// K P_cent K' for gains K = [K_1 ... K_N].
SpdMatrix exact_fused_covariance(std::span<const Matrix> gains, const BlockMatrix& p_cent);

/// Draws a member of the ESCI admissible set: P1_cent + P2_cent with P1_cent
/// PSD and its diagonal blocks equal to the given p1_diag.
BlockMatrix sample_admissible_centralized(const CentralizedSplit& cs, std::mt19937_64& rng);

/// Same construction from a caller-supplied PSD seed matrix S (N d x N d).
BlockMatrix admissible_from_seed(const CentralizedSplit& cs, const Matrix& seed);

}  // namespace esci
