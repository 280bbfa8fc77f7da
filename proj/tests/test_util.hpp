#pragma once

#include "esci/matlib.hpp"

#include <random>

namespace esci::test {

inline Matrix mat(std::initializer_list<std::initializer_list<double>> rows)
{
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
    Index i = 0;
    for (const auto& r : rows) {
        Index j = 0;
        for (double v : r) {
            m(i, j++) = v;
        }
        ++i;
    }
    return m;
}

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }
inline Vector vec1(double v) { return Vector::Constant(1, v); }

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            m(i, j) = n(rng);
        }
    }
    return m;
}

inline Vector random_vector(Index n, std::mt19937_64& rng) { return random_matrix(n, 1, rng).col(0); }

/// A A' / d + shift I, comfortably SPD.
inline SpdMatrix random_spd(Index d, std::mt19937_64& rng, double shift = 0.5)
{
    const Matrix a = random_matrix(d, d, rng);
    return SpdMatrix::spd(a * a.transpose() / double(d) + shift * Matrix::Identity(d, d));
}

/// Q diag(eig) Q' with log-uniform eigenvalues in [1, cond].
inline Matrix random_spd_with_condition(Index d, double cond, std::mt19937_64& rng)
{
    Eigen::HouseholderQR<Matrix> qr(random_matrix(d, d, rng));
    const Matrix q = qr.householderQ();
    std::uniform_real_distribution<double> u(0.0, std::log(cond));
    Vector eig(d);
    for (Index i = 0; i < d; ++i) {
        eig(i) = std::exp(u(rng));
    }
    eig(0) = 1.0;
    if (d > 1) {
        eig(d - 1) = cond;
    }
    return q * eig.asDiagonal() * q.transpose();
}

inline double rel_frob(const Matrix& a, const Matrix& b)
{
    const double scale = std::max(1.0, b.norm());
    return (a - b).norm() / scale;
}

}  // namespace esci::test
