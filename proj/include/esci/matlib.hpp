#pragma once

// Small dense symmetric-matrix helpers shared by every other module.
//
// Storage is Eigen; the functions here add the definiteness contracts the
// fusion code relies on (pivot thresholds, symmetrization on construction,
// eigenvalue margins).

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace esci {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Relative pivot threshold below which a Cholesky factorization is rejected.
inline constexpr double kPivotTolerance = 1e-14;

/// Slack on the minimum eigenvalue accepted for a PSD matrix, scaled by (1 + trace).
inline constexpr double kPsdTolerance = 1e-9;

/// (A + A') / 2.
Matrix symmetrize(const Matrix& a);

/// Symmetric positive (semi-)definite matrix. Construction symmetrizes the
/// input and validates the definiteness it was asked for; afterwards the
/// value is immutable.
class SpdMatrix {
public:
    SpdMatrix() = default;

    /// Strictly positive definite; throws NotPositiveDefinite otherwise.
    static SpdMatrix spd(const Matrix& m);
    /// Positive semi-definite within kPsdTolerance * (1 + trace).
    static SpdMatrix psd(const Matrix& m);
    static SpdMatrix identity(Index n);
    static SpdMatrix zero(Index n);
    static SpdMatrix diagonal(const Vector& d);

    /// Symmetrizes without checking. For results that are definite by
    /// construction (inverses of Cholesky factors, sums of SPD terms).
    static SpdMatrix trusted(const Matrix& m);

    Index dim() const { return m_.rows(); }
    const Matrix& matrix() const { return m_; }
    double trace() const { return m_.trace(); }
    double operator()(Index i, Index j) const { return m_(i, j); }

    SpdMatrix scaled(double c) const;

private:
    explicit SpdMatrix(Matrix m) : m_(std::move(m)) {}

    Matrix m_;
};

/// Cholesky factorization with the library's pivot threshold.
class CholeskyFactor {
public:
    explicit CholeskyFactor(const Matrix& a);

    Matrix lower() const { return llt_.matrixL(); }
    Matrix solve(const Matrix& b) const { return llt_.solve(b); }
    Vector solve(const Vector& b) const { return llt_.solve(b); }
    /// A^-1, symmetrized.
    Matrix inverse() const;

private:
    Eigen::LLT<Matrix> llt_;
};

/// Lower-triangular L with L L' = A.
Matrix cholesky(const SpdMatrix& a);
Matrix cholesky(const Matrix& a);

/// A^-1 through Cholesky solves.
SpdMatrix spd_inverse(const SpdMatrix& a);
/// A <- A^-1 for SPD A, without allocating. Reads only the lower triangle.
/// Same pivot rules as CholeskyFactor.
void spd_invert_in_place(Matrix& a);
Matrix spd_inverse(const Matrix& a);

/// Minimum eigenvalue of a symmetric matrix; A >= 0 iff the result is >= -tol.
double psd_margin(const Matrix& a);

/// Eigenvalue flooring for a symmetric matrix that should be PSD in exact
/// arithmetic. Eigenvalues in [-slack, 0) are raised to zero; anything below
/// -slack throws NotPositiveDefinite. Returns the input unchanged (but
/// symmetrized) when it already factors.
Matrix clamp_psd(const Matrix& a, double slack);

/// Symmetric inverse square root of an SPD matrix via eigendecomposition.
Matrix inverse_sqrt(const Matrix& a);

Matrix block_diagonal(std::span<const Matrix> blocks);

/// Square matrix partitioned into square diagonal blocks of the given sizes.
/// Declared-symmetric matrices keep block (i,j) equal to block (j,i)'.
class BlockMatrix {
public:
    BlockMatrix() = default;
    /// Zero matrix with the given block sizes.
    BlockMatrix(std::vector<Index> block_dims, bool symmetric);

    static BlockMatrix from_flat(const Matrix& flat, std::vector<Index> block_dims, bool symmetric);
    static BlockMatrix block_diagonal(std::span<const Matrix> blocks);

    std::size_t block_count() const { return dims_.size(); }
    Index block_dim(std::size_t i) const { return dims_[i]; }
    Index offset(std::size_t i) const { return offsets_[i]; }
    const std::vector<Index>& block_dims() const { return dims_; }
    Index flat_dim() const { return flat_.rows(); }
    bool is_symmetric() const { return symmetric_; }

    Matrix block(std::size_t i, std::size_t j) const;
    /// Writes block (i,j); for symmetric matrices also writes (j,i) = value'.
    void set_block(std::size_t i, std::size_t j, const Matrix& value);

    const Matrix& flat() const { return flat_; }

private:
    void init_offsets();

    std::vector<Index> dims_;
    std::vector<Index> offsets_;
    Matrix flat_;
    bool symmetric_ = false;
};

}  // namespace esci
