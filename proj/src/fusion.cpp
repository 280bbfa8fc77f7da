#include "esci/fusion.hpp"

#include "esci/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace esci {

namespace {

Index common_dim(std::size_t n, auto&& mean_of)
{
    if (n == 0) {
        throw std::invalid_argument("fusion: at least one estimate is required");
    }
    const Index d = mean_of(0).size();
    if (d == 0) {
        throw DimensionMismatch("fusion: estimates must have a positive dimension");
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (mean_of(i).size() != d) {
            throw DimensionMismatch("fusion: estimate " + std::to_string(i) + " has dimension " +
                                    std::to_string(mean_of(i).size()) + ", expected " +
                                    std::to_string(d));
        }
    }
    return d;
}

void require_dim(const SpdMatrix& m, Index d, const char* what, std::size_t i)
{
    if (m.dim() != d) {
        throw DimensionMismatch(std::string("fusion: ") + what + " of estimate " + std::to_string(i) +
                                " has dimension " + std::to_string(m.dim()) + ", expected " +
                                std::to_string(d));
    }
}

/// Finishes an information-form fusion: bound = info^-1, K_i = bound * weighted_i.
FusionOutput finish_information_fusion(Matrix info, std::vector<Matrix> weighted, auto&& mean_of,
                                       std::vector<double> omega)
{
    for (Index j = 0; j < info.cols(); ++j) {
        for (Index i = j + 1; i < info.rows(); ++i) {
            info(i, j) = info(j, i) = 0.5 * (info(i, j) + info(j, i));
        }
    }
    Matrix& bound = info;
    try {
        spd_invert_in_place(bound);
    } catch (const NotPositiveDefinite& e) {
        throw DegenerateOmega(std::string("fusion: fused information matrix is singular (") +
                              e.what() + ")");
    }
    FusionOutput out;
    out.mean = Vector::Zero(bound.rows());
    out.gains.reserve(weighted.size());
    for (std::size_t i = 0; i < weighted.size(); ++i) {
        out.gains.push_back(bound * weighted[i]);
        out.mean.noalias() += out.gains.back() * mean_of(i);
    }
    out.bound = SpdMatrix::trusted(bound);
    out.omega = std::move(omega);
    return out;
}

}  // namespace

std::vector<double> normalize_omega(std::span<const double> omega, std::size_t n)
{
    if (omega.size() != n) {
        throw DimensionMismatch("omega has " + std::to_string(omega.size()) + " entries for " +
                                std::to_string(n) + " estimates");
    }
    double sum = 0.0;
    for (double w : omega) {
        if (!std::isfinite(w) || w < 0.0) {
            throw DegenerateOmega("omega entries must be finite and non-negative");
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw DegenerateOmega("omega must sum to 1 (sum is " + std::to_string(sum) + ")");
    }
    std::vector<double> out(omega.begin(), omega.end());
    for (double& w : out) {
        w /= sum;
    }
    return out;
}

std::vector<double> floor_omega(std::span<const double> omega)
{
    std::vector<double> out(omega.begin(), omega.end());
    bool clamped = false;
    for (double& w : out) {
        if (w < kOmegaFloor) {
            w = kOmegaFloor;
            clamped = true;
        }
    }
    if (clamped) {
        double sum = 0.0;
        for (double w : out) {
            sum += w;
        }
        for (double& w : out) {
            w /= sum;
        }
    }
    return out;
}

FusionOutput ci_fuse(std::span<const PlainEstimate> estimates, std::span<const double> omega_in)
{
    const std::size_t n = estimates.size();
    const Index d = common_dim(n, [&](std::size_t i) -> const Vector& { return estimates[i].mean; });
    auto omega = normalize_omega(omega_in, n);

    Matrix info = Matrix::Zero(d, d);
    std::vector<Matrix> weighted(n);
    std::vector<Vector> means(n);
    for (std::size_t i = 0; i < n; ++i) {
        require_dim(estimates[i].cov, d, "cov", i);
        means[i] = estimates[i].mean;
        if (omega[i] == 0.0) {
            weighted[i] = Matrix::Zero(d, d);
            continue;
        }
        weighted[i] = omega[i] * spd_inverse(estimates[i].cov.matrix());
        info += weighted[i];
    }
    return finish_information_fusion(std::move(info), std::move(weighted),
                                     [&](std::size_t i) -> const Vector& { return means[i]; }, std::move(omega));
}

FusionOutput sci_fuse(std::span<const SciEstimate> estimates, std::span<const double> omega_in)
{
    const std::size_t n = estimates.size();
    const Index d = common_dim(n, [&](std::size_t i) -> const Vector& { return estimates[i].mean; });
    auto omega = normalize_omega(omega_in, n);

    Matrix info = Matrix::Zero(d, d);
    std::vector<Matrix> weighted(n);
    std::vector<Vector> means(n);
    for (std::size_t i = 0; i < n; ++i) {
        require_dim(estimates[i].p1, d, "p1", i);
        require_dim(estimates[i].p2, d, "p2", i);
        means[i] = estimates[i].mean;
        if (omega[i] == 0.0) {
            weighted[i] = Matrix::Zero(d, d);
            continue;
        }
        const Matrix inflated = estimates[i].p1.matrix() + omega[i] * estimates[i].p2.matrix();
        weighted[i] = omega[i] * spd_inverse(inflated);
        info += weighted[i];
    }
    return finish_information_fusion(std::move(info), std::move(weighted),
                                     [&](std::size_t i) -> const Vector& { return means[i]; }, std::move(omega));
}

CentralizedSplit decorrelate_split(const CentralizedSplit& cs)
{
    if (!cs.p12_cent) {
        CentralizedSplit out = cs;
        return out;
    }
    const Matrix& p2 = cs.p2_cent.flat();
    const Matrix& p12 = cs.p12_cent->flat();
    if (p12.rows() != p2.rows()) {
        throw DimensionMismatch("decorrelate_split: P12 and P2 have different sizes");
    }
    const CholeskyFactor p2_factor(p2);
    // T = P12 P2^-1, computed as (P2^-1 P12')'.
    const Matrix t = p2_factor.solve(Matrix(p12.transpose())).transpose();
    const Index n = p2.rows();
    const Matrix i_plus_t = Matrix::Identity(n, n) + t;

    CentralizedSplit out;
    out.means = cs.means;
    out.p2_cent = BlockMatrix::from_flat(i_plus_t * p2 * i_plus_t.transpose(), cs.p2_cent.block_dims(), true);

    // Diagonal blocks of P1 - T P21 - P12 T' + T P2 T'. Every term besides P1
    // is fully known, so only its diagonal blocks are needed.
    const Matrix correction = t * p12.transpose() + p12 * t.transpose() - t * p2 * t.transpose();
    out.p1_diag.reserve(cs.p1_diag.size());
    for (std::size_t i = 0; i < cs.p1_diag.size(); ++i) {
        const Index off = cs.p2_cent.offset(i);
        const Index d = cs.p2_cent.block_dim(i);
        out.p1_diag.push_back(
            SpdMatrix::psd(cs.p1_diag[i].matrix() - correction.block(off, off, d, d)));
    }
    return out;
}

FusionOutput esci_fuse_general(const CentralizedSplit& cs, std::span<const double> omega_in)
{
    if (cs.p12_cent) {
        throw std::invalid_argument("esci_fuse_general: split is not decorrelated; call decorrelate_split first");
    }
    const std::size_t n = cs.size();
    const Index d = common_dim(n, [&](std::size_t i) -> const Vector& { return cs.means[i]; });
    if (cs.p1_diag.size() != n || cs.p2_cent.block_count() != n) {
        throw DimensionMismatch("esci_fuse_general: block counts disagree with the number of means");
    }
    for (std::size_t i = 0; i < n; ++i) {
        require_dim(cs.p1_diag[i], d, "p1", i);
        if (cs.p2_cent.block_dim(i) != d) {
            throw DimensionMismatch("esci_fuse_general: P2 block size differs from the state dimension");
        }
    }
    auto omega = floor_omega(normalize_omega(omega_in, n));

    const Index nd = static_cast<Index>(n) * d;
    Matrix b_cent = cs.p2_cent.flat();
    for (std::size_t i = 0; i < n; ++i) {
        const Index off = static_cast<Index>(i) * d;
        b_cent.block(off, off, d, d) += cs.p1_diag[i].matrix() / omega[i];
    }
    const CholeskyFactor b_factor(symmetrize(b_cent));

    Matrix stacked_identity(nd, d);
    for (std::size_t i = 0; i < n; ++i) {
        stacked_identity.block(static_cast<Index>(i) * d, 0, d, d).setIdentity();
    }
    const Matrix g = b_factor.solve(stacked_identity);  // B_cent^-1 H
    Matrix info = Matrix::Zero(d, d);
    std::vector<Matrix> weighted(n);
    for (std::size_t i = 0; i < n; ++i) {
        // Column block i of H' B_cent^-1 equals (row block i of B_cent^-1 H)'.
        weighted[i] = g.block(static_cast<Index>(i) * d, 0, d, d).transpose();
        info += weighted[i];
    }
    return finish_information_fusion(std::move(info), std::move(weighted),
                                     [&](std::size_t i) -> const Vector& { return cs.means[i]; }, std::move(omega));
}

FusionOutput esci_fuse_common_noise(std::span<const SplitEstimate> estimates, const SpdMatrix& q,
                                    std::span<const double> omega_in)
{
    const std::size_t n = estimates.size();
    const Index d = common_dim(n, [&](std::size_t i) -> const Vector& { return estimates[i].mean; });
    auto omega = normalize_omega(omega_in, n);
    const Index qd = q.dim();

    const Matrix identity = Matrix::Identity(d, d);
    std::vector<Matrix> p_inv(n);
    std::vector<Matrix> wpm(n);        // omega_i P_i'^-1 M_i
    Matrix g = Matrix::Zero(qd, qd);   // sum omega_i M_i' P_i'^-1 M_i
    Matrix s1 = Matrix::Zero(d, qd);   // sum omega_i P_i'^-1 M_i
    Matrix info = Matrix::Zero(d, d);  // sum omega_i P_i'^-1
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = estimates[i];
        require_dim(e.p1, d, "p1", i);
        require_dim(e.p_ind, d, "p_ind", i);
        const Matrix& m = e.m ? *e.m : identity;
        if (m.rows() != d || m.cols() != qd) {
            throw DimensionMismatch("esci_fuse_common_noise: M of estimate " + std::to_string(i) +
                                    " must be d x q");
        }
        if (omega[i] == 0.0) {
            p_inv[i] = Matrix::Zero(d, d);
            wpm[i] = Matrix::Zero(d, qd);
            continue;
        }
        p_inv[i] = e.p1.matrix() + omega[i] * e.p_ind.matrix();
        spd_invert_in_place(p_inv[i]);
        p_inv[i] *= omega[i];
        wpm[i].noalias() = p_inv[i] * m;
        s1 += wpm[i];
        g.noalias() += m.transpose() * wpm[i];
        info += p_inv[i];
    }

    // S0^-1 = (G + Q^-1)^-1. A singular Q (rank-deficient shared noise) goes
    // through the equivalent Q - Q (G^-1 + Q)^-1 Q.
    Matrix s0_inv = q.matrix();
    bool q_definite = true;
    try {
        spd_invert_in_place(s0_inv);
    } catch (const NotPositiveDefinite&) {
        q_definite = false;
    }
    if (q_definite) {
        s0_inv += g;
        spd_invert_in_place(s0_inv);
    } else {
        const Matrix g_inv = spd_inverse(symmetrize(g));
        const Matrix& qm = q.matrix();
        s0_inv = symmetrize(qm - qm * CholeskyFactor(symmetrize(g_inv + qm)).solve(qm));
    }

    const Matrix c = s1 * s0_inv;  // S1 S0^-1
    info.noalias() -= c * s1.transpose();

    // omega_i (I - C M_i') P_i'^-1 = omega_i P_i'^-1 - C (omega_i P_i'^-1 M_i)'
    for (std::size_t i = 0; i < n; ++i) {
        p_inv[i].noalias() -= c * wpm[i].transpose();
    }
    return finish_information_fusion(std::move(info), std::move(p_inv),
                                     [&](std::size_t i) -> const Vector& { return estimates[i].mean; },
                                     std::move(omega));
}

FusionOutput esci_fuse_additive_noise(std::span<const SplitEstimate> estimates, const SpdMatrix& q,
                                      std::span<const double> omega)
{
    std::vector<SciEstimate> sci;
    sci.reserve(estimates.size());
    for (const auto& e : estimates) {
        if (e.m && !e.m->isIdentity(0.0)) {
            throw DimensionMismatch("esci_fuse_additive_noise: requires M_i = I for every estimate");
        }
        sci.push_back({e.mean, e.p1, e.p_ind});
    }
    FusionOutput out = sci_fuse(sci, omega);
    if (q.dim() != out.mean.size()) {
        throw DimensionMismatch("esci_fuse_additive_noise: Q has the wrong dimension");
    }
    out.bound = SpdMatrix::trusted(out.bound.matrix() + q.matrix());
    return out;
}

CentralizedSplit to_centralized(std::span<const SplitEstimate> estimates, const SpdMatrix& q)
{
    const std::size_t n = estimates.size();
    const Index d = common_dim(n, [&](std::size_t i) -> const Vector& { return estimates[i].mean; });
    CentralizedSplit cs;
    cs.p2_cent = BlockMatrix(std::vector<Index>(n, d), true);
    std::vector<Matrix> ms(n);
    for (std::size_t i = 0; i < n; ++i) {
        ms[i] = estimates[i].m.value_or(Matrix::Identity(d, d));
        if (ms[i].rows() != d || ms[i].cols() != q.dim()) {
            throw DimensionMismatch("to_centralized: M must be d x q");
        }
        cs.means.push_back(estimates[i].mean);
        cs.p1_diag.push_back(estimates[i].p1);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            Matrix block = ms[i] * q.matrix() * ms[j].transpose();
            if (i == j) {
                block += estimates[i].p_ind.matrix();
            }
            cs.p2_cent.set_block(i, j, block);
        }
    }
    return cs;
}

SpdMatrix exact_fused_covariance(std::span<const Matrix> gains, const BlockMatrix& p_cent)
{
    if (gains.empty() || gains.size() != p_cent.block_count()) {
        throw DimensionMismatch("exact_fused_covariance: gain count differs from block count");
    }
    const Index d = gains.front().rows();
    Matrix k(d, p_cent.flat_dim());
    for (std::size_t i = 0; i < gains.size(); ++i) {
        if (gains[i].rows() != d || gains[i].cols() != p_cent.block_dim(i)) {
            throw DimensionMismatch("exact_fused_covariance: gain " + std::to_string(i) +
                                    " has the wrong shape");
        }
        k.block(0, p_cent.offset(i), d, gains[i].cols()) = gains[i];
    }
    return SpdMatrix::trusted(k * p_cent.flat() * k.transpose());
}

BlockMatrix admissible_from_seed(const CentralizedSplit& cs, const Matrix& seed)
{
    const std::size_t n = cs.size();
    const auto& dims = cs.p2_cent.block_dims();
    if (seed.rows() != cs.p2_cent.flat_dim() || seed.cols() != seed.rows()) {
        throw DimensionMismatch("admissible_from_seed: seed has the wrong size");
    }
    BlockMatrix p1(dims, true);
    std::vector<Matrix> inv_sqrt(n);
    std::vector<Matrix> factors(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Index off = cs.p2_cent.offset(i);
        inv_sqrt[i] = inverse_sqrt(seed.block(off, off, dims[i], dims[i]));
        factors[i] = cholesky(Matrix(cs.p1_diag[i].matrix() + 1e-12 * Matrix::Identity(dims[i], dims[i])));
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const Matrix normalized = inv_sqrt[i] *
                                      seed.block(cs.p2_cent.offset(i), cs.p2_cent.offset(j), dims[i], dims[j]) *
                                      inv_sqrt[j];
            p1.set_block(i, j, factors[i] * normalized * factors[j].transpose());
        }
    }
    return BlockMatrix::from_flat(p1.flat() + cs.p2_cent.flat(), dims, true);
}

BlockMatrix sample_admissible_centralized(const CentralizedSplit& cs, std::mt19937_64& rng)
{
    if (cs.p12_cent) {
        throw std::invalid_argument("sample_admissible_centralized: split is not decorrelated");
    }
    const Index n = cs.p2_cent.flat_dim();
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix g(n, n);
    for (Index c = 0; c < n; ++c) {
        for (Index r = 0; r < n; ++r) {
            g(r, c) = normal(rng);
        }
    }
    return admissible_from_seed(cs, g * g.transpose());
}

}  // namespace esci
