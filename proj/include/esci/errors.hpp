#pragma once

#include <stdexcept>
#include <string>

namespace esci {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A factorization met a pivot at or below the degeneracy threshold.
class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// The weight vector is off the simplex, or lands on a boundary where the
/// fused information matrix is singular.
class DegenerateOmega : public Error {
public:
    using Error::Error;
};

class OptimizationFailed : public Error {
public:
    using Error::Error;
};

/// A message was requested before the quantities its level carries exist.
class MissingQuantity : public Error {
public:
    using Error::Error;
};

/// (P^a)^-1 - H'R^-1 H is not positive definite: the payload is inconsistent.
class UnrecoverablePrior : public Error {
public:
    using Error::Error;
};

class InvalidEdge : public Error {
public:
    using Error::Error;
};

class InvalidGeometry : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Two configs that must differ only in one field differ elsewhere.
class ConfigMismatch : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Malformed serialized message.
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Error raised inside one agent's step, tagged with the agent id.
class AgentError : public Error {
public:
    AgentError(std::size_t agent, const std::string& what)
        : Error("agent " + std::to_string(agent) + ": " + what), agent_(agent) {}

    std::size_t agent() const noexcept { return agent_; }

private:
    std::size_t agent_;
};

}  // namespace esci
