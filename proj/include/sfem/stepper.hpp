#pragma once

// Backward Euler for the nodal coefficients:
//   (M + dt T) alpha^{n+1} = M (alpha^n + theta^n),  theta^n = Q_k^{-gamma}(M, K) load^n.

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sfem/assembly.hpp"
#include "sfem/errors.hpp"
#include "sfem/fractional.hpp"
#include "sfem/linalg.hpp"

namespace sfem {

struct StateVector {
    Vector alpha;
    long n = 0;
};

class StepOperator {
public:
    StepOperator(const OperatorSet& ops, const FractionalSpec& spec, double dt)
        : M_(ops.M), dt_(dt) {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError("build_stepper: dt must be positive");
        const SparseMatrix system = ops.M + dt * ops.T;
        try {
            system_ = std::make_shared<const SparseSolver>(system);
        } catch (const LinearAlgebraError& e) {
            throw LinearAlgebraError(std::string("build_stepper: M + dt T: ") + e.what());
        }
        fractional_ = std::make_shared<const FractionalOperator>(ops.M, ops.K, spec);
    }

    /// Reuses an existing fractional operator for the same (M, K).
    StepOperator(const OperatorSet& ops, std::shared_ptr<const FractionalOperator> fractional, double dt)
        : M_(ops.M), dt_(dt), fractional_(std::move(fractional)) {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError("build_stepper: dt must be positive");
        try {
            system_ = std::make_shared<const SparseSolver>(SparseMatrix(ops.M + dt * ops.T));
        } catch (const LinearAlgebraError& e) {
            throw LinearAlgebraError(std::string("build_stepper: M + dt T: ") + e.what());
        }
    }

    /// One step. An empty noise_load means zero noise.
    StateVector step(const StateVector& state, const Vector& noise_load) const {
        if (state.alpha.size() != M_.rows()) throw ParameterError("step: state has wrong length");
        if (!state.alpha.allFinite()) throw NumericalError("step: non-finite state", state.n);
        Vector rhs = M_ * state.alpha;
        if (noise_load.size() != 0) {
            if (noise_load.size() != M_.rows()) throw ParameterError("step: noise load has wrong length");
            if (fractional_->spec().gamma == 0.0)
                rhs += noise_load;  // M theta = load
            else
                rhs += M_ * fractional_->apply(noise_load);
        }
        StateVector next{system_->solve(rhs), state.n + 1};
        if (!next.alpha.allFinite()) throw NumericalError("step: non-finite state", next.n);
        return next;
    }

    /// Solves (M + dt T) x = rhs.
    Vector solve_system(const Vector& rhs) const { return system_->solve(rhs); }

    double dt() const { return dt_; }
    const SparseMatrix& mass() const { return M_; }
    const FractionalOperator& fractional() const { return *fractional_; }
    std::shared_ptr<const FractionalOperator> fractional_ptr() const { return fractional_; }

private:
    SparseMatrix M_;
    double dt_;
    std::shared_ptr<const SparseSolver> system_;
    std::shared_ptr<const FractionalOperator> fractional_;
};

inline StepOperator build_stepper(const OperatorSet& ops, const FractionalSpec& spec, double dt) {
    return StepOperator(ops, spec, dt);
}

inline StateVector step(const StepOperator& op, const StateVector& state, const Vector& noise_load) {
    return op.step(state, noise_load);
}

/// Load for step n -> n+1; an empty std::function means zero noise.
using NoiseSource = std::function<Vector(long step)>;

enum class Record { none, final, trajectory };

struct RunResult {
    StateVector final_state;
    std::vector<Vector> trajectory;  ///< alpha^0 .. alpha^n when recorded
};

/// Number of steps of size dt covering [0, t_final]; throws unless the ratio
/// is an integer to 1e-12.
inline long steps_for(double t_final, double dt) {
    const double ratio = t_final / dt;
    const long n = std::lround(ratio);
    if (n < 1 || std::abs(n * dt - t_final) > 1e-12) throw ParameterError("time step does not divide t_final");
    return n;
}

inline RunResult run(const StepOperator& op, long n_steps, const Vector& alpha0, const NoiseSource& noise,
                     Record record = Record::final) {
    if (n_steps < 0) throw ParameterError("run: negative step count");
    RunResult result;
    StateVector state{alpha0, 0};
    if (record == Record::trajectory) result.trajectory.push_back(alpha0);
    for (long n = 0; n < n_steps; ++n) {
        state = op.step(state, noise ? noise(n) : Vector());
        if (record == Record::trajectory) result.trajectory.push_back(state.alpha);
    }
    if (record != Record::none) result.final_state = std::move(state);
    return result;
}

/// Applies Q_k^{-gamma} once to final coefficients produced with gamma = 0
/// noise, valid when M^{-1} T and M^{-1} K commute: Q(M, K) applied to M alpha.
inline Vector apply_fractional_final(const OperatorSet& ops, const FractionalOperator& fractional,
                                     const Vector& alpha) {
    if (!ops.commuting)
        throw ContractError("apply_fractional_final: operators '" + ops.drift_field + "' and '" + ops.noise_field +
                            "' do not commute");
    if (fractional.spec().gamma == 0.0) return alpha;
    return fractional.apply(ops.M * alpha);
}

inline Vector apply_fractional_final(const OperatorSet& ops, const FractionalSpec& spec, const Vector& alpha) {
    if (!ops.commuting)
        throw ContractError("apply_fractional_final: operators '" + ops.drift_field + "' and '" + ops.noise_field +
                            "' do not commute");
    return apply_fractional_final(ops, FractionalOperator(ops.M, ops.K, spec), alpha);
}

}  // namespace sfem
