#include "esci/matlib.hpp"

#include "esci/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace esci {

Matrix symmetrize(const Matrix& a)
{
    if (a.rows() != a.cols()) {
        throw DimensionMismatch("symmetrize: matrix is " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()));
    }
    return 0.5 * (a + a.transpose());
}

SpdMatrix SpdMatrix::spd(const Matrix& m)
{
    Matrix s = symmetrize(m);
    if (s.rows() == 0) {
        throw DimensionMismatch("SpdMatrix: empty matrix");
    }
    CholeskyFactor check(s);  // throws on a degenerate pivot
    (void)check;
    return SpdMatrix(std::move(s));
}

SpdMatrix SpdMatrix::psd(const Matrix& m)
{
    Matrix s = symmetrize(m);
    if (s.rows() > 0) {
        const double margin = psd_margin(s);
        const double tol = kPsdTolerance * (1.0 + std::abs(s.trace()));
        if (margin < -tol) {
            throw NotPositiveDefinite("SpdMatrix: minimum eigenvalue " + std::to_string(margin) +
                                      " below -" + std::to_string(tol));
        }
    }
    return SpdMatrix(std::move(s));
}

SpdMatrix SpdMatrix::identity(Index n) { return SpdMatrix(Matrix::Identity(n, n)); }

SpdMatrix SpdMatrix::zero(Index n) { return SpdMatrix(Matrix::Zero(n, n)); }

SpdMatrix SpdMatrix::diagonal(const Vector& d)
{
    return psd(d.asDiagonal().toDenseMatrix());
}

SpdMatrix SpdMatrix::trusted(const Matrix& m) { return SpdMatrix(symmetrize(m)); }

SpdMatrix SpdMatrix::scaled(double c) const { return SpdMatrix(c * m_); }

CholeskyFactor::CholeskyFactor(const Matrix& a)
{
    if (a.rows() != a.cols() || a.rows() == 0) {
        throw DimensionMismatch("cholesky: expected a non-empty square matrix");
    }
    llt_.compute(a);
    if (llt_.info() != Eigen::Success) {
        throw NotPositiveDefinite("cholesky: matrix is not positive definite");
    }
    const double threshold = kPivotTolerance * std::abs(a.trace()) / static_cast<double>(a.rows());
    const Matrix& lu = llt_.matrixLLT();
    for (Index k = 0; k < a.rows(); ++k) {
        const double pivot = lu(k, k) * lu(k, k);
        if (!(pivot > threshold)) {
            throw NotPositiveDefinite("cholesky: pivot " + std::to_string(pivot) + " at index " +
                                      std::to_string(k) + " is at or below " +
                                      std::to_string(threshold));
        }
    }
}

Matrix CholeskyFactor::inverse() const
{
    // A^-1 = L^-T L^-1. Plain substitution: at the sizes used here the blocked
    // solver's setup costs more than the arithmetic.
    const Matrix& f = llt_.matrixLLT();
    const Index n = f.rows();
    Matrix linv = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
        linv(j, j) = 1.0 / f(j, j);
        for (Index i = j + 1; i < n; ++i) {
            double s = 0.0;
            for (Index k = j; k < i; ++k) {
                s += f(i, k) * linv(k, j);
            }
            linv(i, j) = -s / f(i, i);
        }
    }
    Matrix inv(n, n);
    for (Index j = 0; j < n; ++j) {
        for (Index i = j; i < n; ++i) {
            double s = 0.0;
            for (Index k = i; k < n; ++k) {
                s += linv(k, i) * linv(k, j);
            }
            inv(i, j) = s;
            inv(j, i) = s;
        }
    }
    return inv;
}

void spd_invert_in_place(Matrix& a)
{
    const Index n = a.rows();
    if (a.cols() != n || n == 0) {
        throw DimensionMismatch("spd_invert_in_place: expected a non-empty square matrix");
    }
    const double threshold = kPivotTolerance * std::abs(a.trace()) / static_cast<double>(n);
    Eigen::LLT<Eigen::Ref<Matrix>> llt(a);  // lower factor overwrites the lower triangle
    if (llt.info() != Eigen::Success) {
        throw NotPositiveDefinite("cholesky: matrix is not positive definite");
    }
    for (Index k = 0; k < n; ++k) {
        const double pivot = a(k, k) * a(k, k);
        if (!(pivot > threshold)) {
            throw NotPositiveDefinite("cholesky: pivot " + std::to_string(pivot) + " at index " +
                                      std::to_string(k) + " is at or below " + std::to_string(threshold));
        }
    }
    // L^-1 in place, last column first.
    for (Index j = n - 1; j >= 0; --j) {
        a(j, j) = 1.0 / a(j, j);
        const double ajj = -a(j, j);
        for (Index i = n - 1; i > j; --i) {
            double s = 0.0;
            for (Index k = j + 1; k <= i; ++k) {
                s += a(i, k) * a(k, j);
            }
            a(i, j) = ajj * s;
        }
    }
    // L^-T L^-1: off-diagonal entries go to the free upper triangle, the
    // diagonal entry of row i last, since row i still reads it.
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < i; ++j) {
            double s = 0.0;
            for (Index k = i; k < n; ++k) {
                s += a(k, i) * a(k, j);
            }
            a(j, i) = s;
        }
        double d = 0.0;
        for (Index k = i; k < n; ++k) {
            d += a(k, i) * a(k, i);
        }
        a(i, i) = d;
    }
    a.triangularView<Eigen::StrictlyLower>() = a.transpose();
}

Matrix cholesky(const SpdMatrix& a) { return CholeskyFactor(a.matrix()).lower(); }

Matrix cholesky(const Matrix& a) { return CholeskyFactor(a).lower(); }

SpdMatrix spd_inverse(const SpdMatrix& a) { return SpdMatrix::trusted(CholeskyFactor(a.matrix()).inverse()); }

Matrix spd_inverse(const Matrix& a) { return CholeskyFactor(a).inverse(); }

double psd_margin(const Matrix& a)
{
    if (a.rows() == 0) {
        return 0.0;
    }
    if (a.rows() == 1) {
        return a(0, 0);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(a), Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

Matrix clamp_psd(const Matrix& a, double slack)
{
    Matrix s = symmetrize(a);
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() == Eigen::Success) {
        return s;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(s);
    Vector values = solver.eigenvalues();
    if (values.minCoeff() < -slack) {
        throw NotPositiveDefinite("clamp_psd: eigenvalue " + std::to_string(values.minCoeff()) +
                                  " below -" + std::to_string(slack));
    }
    values = values.cwiseMax(0.0);
    return symmetrize(solver.eigenvectors() * values.asDiagonal() * solver.eigenvectors().transpose());
}

Matrix inverse_sqrt(const Matrix& a)
{
    Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(a));
    const Vector& values = solver.eigenvalues();
    if (values.minCoeff() <= 0.0) {
        throw NotPositiveDefinite("inverse_sqrt: matrix is not positive definite");
    }
    return symmetrize(solver.eigenvectors() * values.cwiseSqrt().cwiseInverse().asDiagonal() *
                      solver.eigenvectors().transpose());
}

Matrix block_diagonal(std::span<const Matrix> blocks)
{
    Index rows = 0;
    Index cols = 0;
    for (const auto& b : blocks) {
        rows += b.rows();
        cols += b.cols();
    }
    Matrix out = Matrix::Zero(rows, cols);
    Index r = 0;
    Index c = 0;
    for (const auto& b : blocks) {
        out.block(r, c, b.rows(), b.cols()) = b;
        r += b.rows();
        c += b.cols();
    }
    return out;
}

BlockMatrix::BlockMatrix(std::vector<Index> block_dims, bool symmetric)
    : dims_(std::move(block_dims)), symmetric_(symmetric)
{
    init_offsets();
    const Index n = std::accumulate(dims_.begin(), dims_.end(), Index{0});
    flat_ = Matrix::Zero(n, n);
}

void BlockMatrix::init_offsets()
{
    offsets_.resize(dims_.size());
    Index acc = 0;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (dims_[i] <= 0) {
            throw DimensionMismatch("BlockMatrix: block dimensions must be positive");
        }
        offsets_[i] = acc;
        acc += dims_[i];
    }
}

BlockMatrix BlockMatrix::from_flat(const Matrix& flat, std::vector<Index> block_dims, bool symmetric)
{
    BlockMatrix out(std::move(block_dims), symmetric);
    if (flat.rows() != out.flat_.rows() || flat.cols() != out.flat_.cols()) {
        throw DimensionMismatch("BlockMatrix: flat matrix does not match block dims");
    }
    out.flat_ = symmetric ? symmetrize(flat) : flat;
    return out;
}

BlockMatrix BlockMatrix::block_diagonal(std::span<const Matrix> blocks)
{
    std::vector<Index> dims;
    dims.reserve(blocks.size());
    for (const auto& b : blocks) {
        if (b.rows() != b.cols()) {
            throw DimensionMismatch("BlockMatrix::block_diagonal: blocks must be square");
        }
        dims.push_back(b.rows());
    }
    BlockMatrix out(std::move(dims), true);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        out.set_block(i, i, blocks[i]);
    }
    return out;
}

Matrix BlockMatrix::block(std::size_t i, std::size_t j) const
{
    return flat_.block(offsets_.at(i), offsets_.at(j), dims_[i], dims_[j]);
}

void BlockMatrix::set_block(std::size_t i, std::size_t j, const Matrix& value)
{
    if (value.rows() != dims_.at(i) || value.cols() != dims_.at(j)) {
        throw DimensionMismatch("BlockMatrix::set_block: block has the wrong shape");
    }
    if (symmetric_ && i == j) {
        flat_.block(offsets_[i], offsets_[j], dims_[i], dims_[j]) = symmetrize(value);
        return;
    }
    flat_.block(offsets_[i], offsets_[j], dims_[i], dims_[j]) = value;
    if (symmetric_) {
        flat_.block(offsets_[j], offsets_[i], dims_[j], dims_[i]) = value.transpose();
    }
}

}  // namespace esci
