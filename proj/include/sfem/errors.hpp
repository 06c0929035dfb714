#pragma once

#include <stdexcept>
#include <string>

namespace sfem {

/// Input outside the domain of a geometric map (e.g. projecting the origin).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Invalid numeric parameter or violated precondition.
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Degenerate or inconsistent mesh.
struct MeshError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A fine vertex could not be located on the coarse mesh.
struct LocationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Factorization or solve failure. `node` is the sinc quadrature node index
/// when the failure happened in a shifted system, otherwise 0.
struct LinearAlgebraError : std::runtime_error {
    LinearAlgebraError(const std::string& what, long node = 0)
        : std::runtime_error(what), node(node) {}
    long node;
};

/// Non-finite state during time stepping; `step` is the offending step index.
struct NumericalError : std::runtime_error {
    NumericalError(const std::string& what, long step)
        : std::runtime_error(what), step(step) {}
    long step;
};

/// API used outside its stated contract.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Configuration schema violation; the message names the offending field.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sfem
