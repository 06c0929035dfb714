#pragma once

// Sinc quadrature for negative fractional powers of a discrete elliptic
// operator in generalized (M, K) form:
//
//   Q_k^{-gamma} b = (k sin(pi gamma) / pi) sum_{j=-N_minus}^{N_plus} e^{(1-gamma) j k} (e^{jk} M + K)^{-1} b
//
// with N_plus = ceil(pi^2 / (2 gamma k^2)), N_minus = ceil(pi^2 / (2 (1 - gamma) k^2)).
// gamma = 1 means K^{-1} b, gamma = 0 means M^{-1} b.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sfem/errors.hpp"
#include "sfem/linalg.hpp"

namespace sfem {

struct FractionalSpec {
    double gamma = 1.0;
    double k = 0.5;
    int n_plus = 0;
    int n_minus = 0;
    std::vector<double> nodes;    ///< y_j = j k, j = -n_minus .. n_plus
    std::vector<double> weights;  ///< (k sin(pi gamma) / pi) e^{(1 - gamma) y_j}

    bool is_convention() const { return gamma == 0.0 || gamma == 1.0; }
};

/// Quadrature nodes and weights for gamma in (0, 1).
inline FractionalSpec sinc_nodes(double gamma, double k) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw ParameterError("sinc_nodes: gamma must lie in (0, 1); use fractional_spec for 0 and 1");
    if (!(k > 0.0) || !std::isfinite(k)) throw ParameterError("sinc_nodes: k must be positive");
    constexpr double pi2 = std::numbers::pi * std::numbers::pi;
    FractionalSpec spec;
    spec.gamma = gamma;
    spec.k = k;
    spec.n_plus = static_cast<int>(std::ceil(pi2 / (2.0 * gamma * k * k)));
    spec.n_minus = static_cast<int>(std::ceil(pi2 / (2.0 * (1.0 - gamma) * k * k)));
    const double scale = k * std::sin(std::numbers::pi * gamma) / std::numbers::pi;
    for (int j = -spec.n_minus; j <= spec.n_plus; ++j) {
        const double y = j * k;
        spec.nodes.push_back(y);
        spec.weights.push_back(scale * std::exp((1.0 - gamma) * y));
    }
    return spec;
}

/// Any gamma in [0, 1]: quadrature inside the open interval, empty node lists
/// at the endpoints.
inline FractionalSpec fractional_spec(double gamma, double k) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ParameterError("fractional_spec: gamma must lie in [0, 1]");
    if (gamma == 0.0 || gamma == 1.0) {
        if (!(k > 0.0)) throw ParameterError("fractional_spec: k must be positive");
        FractionalSpec spec;
        spec.gamma = gamma;
        spec.k = k;
        return spec;
    }
    return sinc_nodes(gamma, k);
}

/// Largest quadrature resolution allowed by the strong-rate condition
/// k <= pi^2 / (2 (2 gamma + 1) ln(1/h)), capped at k_max.
inline double choose_k(double gamma, double h, double k_max) {
    if (!(h > 0.0 && h < 1.0)) throw ParameterError("choose_k: h must lie in (0, 1)");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ParameterError("choose_k: gamma must lie in (0, 1]");
    if (!(k_max > 0.0)) throw ParameterError("choose_k: k_max must be positive");
    constexpr double pi2 = std::numbers::pi * std::numbers::pi;
    const double bound = pi2 / (2.0 * (2.0 * gamma + 1.0) * std::log(1.0 / h));
    return std::min(k_max, bound);
}

/// Pre-factorized action of Q_k^{-gamma}(M, K). All shifted systems are
/// factorized once; apply() sums the node solves in fixed node order.
class FractionalOperator {
public:
    /// Shifts above this are applied as (e^y M)^{-1} = e^{-y} M^{-1}.
    static constexpr double asymptotic_shift = 1e100;

    FractionalOperator(const SparseMatrix& M, const SparseMatrix& K, FractionalSpec spec)
        : spec_(std::move(spec)), n_(M.rows()) {
        if (M.rows() != K.rows() || M.cols() != K.cols())
            throw ParameterError("FractionalOperator: M and K dimensions differ");
        if (spec_.gamma == 1.0) {
            solvers_.push_back(factor(K, 0));
        } else if (spec_.gamma == 0.0) {
            mass_ = factor(M, 0);
        } else {
            for (std::size_t i = 0; i < spec_.nodes.size(); ++i) {
                const long node = std::lround(spec_.nodes[i] / spec_.k);
                const double shift = std::exp(spec_.nodes[i]);
                if (shift > asymptotic_shift) {
                    if (!mass_) mass_ = factor(M, node);
                    solvers_.push_back(nullptr);
                } else {
                    const SparseMatrix shifted = shift * M + K;
                    solvers_.push_back(factor(shifted, node));
                }
            }
        }
    }

    Vector apply(const Vector& b) const {
        if (b.size() != n_) throw ParameterError("apply_fractional: load vector has wrong length");
        if (spec_.gamma == 1.0) return solvers_.front()->solve(b);
        if (spec_.gamma == 0.0) return mass_->solve(b);
        Vector result = Vector::Zero(n_);
        std::optional<Vector> mass_solution;
        const double scale = spec_.k * std::sin(std::numbers::pi * spec_.gamma) / std::numbers::pi;
        for (std::size_t i = 0; i < spec_.nodes.size(); ++i) {
            if (solvers_[i]) {
                result += spec_.weights[i] * solvers_[i]->solve(b);
            } else {
                if (!mass_solution) mass_solution = mass_->solve(b);
                result += scale * std::exp(-spec_.gamma * spec_.nodes[i]) * *mass_solution;
            }
        }
        return result;
    }

    const FractionalSpec& spec() const { return spec_; }
    Eigen::Index size() const { return n_; }

private:
    static std::shared_ptr<const SparseSolver> factor(const SparseMatrix& a, long node) {
        try {
            return std::make_shared<const SparseSolver>(a);
        } catch (const LinearAlgebraError& e) {
            throw LinearAlgebraError(std::string("shifted system at quadrature node ") + std::to_string(node) +
                                         ": " + e.what(),
                                     node);
        }
    }

    FractionalSpec spec_;
    Eigen::Index n_;
    std::vector<std::shared_ptr<const SparseSolver>> solvers_;
    std::shared_ptr<const SparseSolver> mass_;
};

inline Vector apply_fractional(const SparseMatrix& M, const SparseMatrix& K, const FractionalSpec& spec,
                               const Vector& b) {
    return FractionalOperator(M, K, spec).apply(b);
}

/// Reference action V Lambda^{-gamma} V^T b from the dense generalized
/// eigenproblem K V = M V Lambda, V^T M V = I. Symmetric K only.
inline Vector dense_fractional_oracle(const Eigen::MatrixXd& M, const Eigen::MatrixXd& K, double gamma,
                                      const Vector& b) {
    if (M.rows() > 1000) throw ParameterError("dense_fractional_oracle: at most 1000 unknowns");
    if ((K - K.transpose()).norm() > 1e-12 * K.norm())
        throw LinearAlgebraError("dense_fractional_oracle: K must be symmetric");
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(K, M);
    if (eig.info() != Eigen::Success) throw LinearAlgebraError("dense_fractional_oracle: eigensolver failed");
    const Eigen::VectorXd lambda = eig.eigenvalues();
    if (lambda.minCoeff() <= 0.0) throw LinearAlgebraError("dense_fractional_oracle: K is not positive definite");
    const Eigen::MatrixXd& v = eig.eigenvectors();
    const Eigen::VectorXd coeffs = (v.transpose() * b).array() * lambda.array().pow(-gamma);
    return v * coeffs;
}

}  // namespace sfem
