#include "esci/model.hpp"

#include "esci/errors.hpp"

namespace esci {

std::string_view to_string(Level level)
{
    switch (level) {
    case Level::L1:
        return "L1";
    case Level::L2:
        return "L2";
    case Level::L3:
        return "L3";
    }
    return "?";
}

std::string_view to_string(Method method)
{
    switch (method) {
    case Method::CI:
        return "CI";
    case Method::SCI:
        return "SCI";
    case Method::ESCI:
        return "ESCI";
    }
    return "?";
}

Level parse_level(std::string_view text)
{
    if (text == "L1") {
        return Level::L1;
    }
    if (text == "L2") {
        return Level::L2;
    }
    if (text == "L3") {
        return Level::L3;
    }
    throw ConfigError("unknown communication level '" + std::string(text) + "' (expected L1, L2 or L3)");
}

Method parse_method(std::string_view text)
{
    if (text == "CI") {
        return Method::CI;
    }
    if (text == "SCI") {
        return Method::SCI;
    }
    if (text == "ESCI") {
        return Method::ESCI;
    }
    throw ConfigError("unknown fusion method '" + std::string(text) + "' (expected CI, SCI or ESCI)");
}

InformationTerms information_terms(const Matrix& h, const SpdMatrix& r, const Vector& z)
{
    const Index d = h.cols();
    if (h.rows() == 0) {
        return {Matrix::Zero(d, d), Vector::Zero(d)};
    }
    if (r.dim() != h.rows() || z.size() != h.rows()) {
        throw DimensionMismatch("information_terms: H, R and z disagree on the measurement dimension");
    }
    const Matrix rinv_h = CholeskyFactor(r.matrix()).solve(h);  // R^-1 H
    return {symmetrize(h.transpose() * rinv_h), rinv_h.transpose() * z};
}

}  // namespace esci
