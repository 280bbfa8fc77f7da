#pragma once

#include "esci/matlib.hpp"

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace esci {

/// What agents transmit each round (increasing content).
enum class Level { L1, L2, L3 };

/// Fusion rule used in the fusion step.
enum class Method { CI, SCI, ESCI };

std::string_view to_string(Level level);
std::string_view to_string(Method method);
Level parse_level(std::string_view text);
Method parse_method(std::string_view text);

/// x(k+1) = F x(k) + w(k+1), w ~ (0, Q); x(0) ~ N(x0, P0).
struct SystemModel {
    Matrix f;
    SpdMatrix q;
    SpdMatrix p0;
    Vector x0;

    Index dim() const { return f.rows(); }
};

/// z_i(k) = H_i x(k) + v_i(k), v_i ~ (0, R_i).
struct AgentModel {
    std::size_t id = 0;
    Matrix h;
    SpdMatrix r;
    std::vector<std::size_t> neighbors;
};

/// Estimate and its conservative bound.
struct AgentState {
    Vector mean;
    SpdMatrix bound;
};

/// H' R^-1 H and H' R^-1 z.
struct InformationTerms {
    Matrix matrix;
    Vector vector;
};

InformationTerms information_terms(const Matrix& h, const SpdMatrix& r, const Vector& z);

}  // namespace esci
