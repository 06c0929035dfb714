#pragma once

// Discrete cylindrical Wiener increments as nodal load vectors
//   load = sqrt(dt) * F * rho,  F F^T = M,  rho ~ N(0, I),
// and the coupling of one fine noise path to coarser resolutions.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sfem/errors.hpp"
#include "sfem/mesh.hpp"

namespace sfem {

enum class FactorOrdering { natural, amd };

/// Sparse Cholesky square root of the mass matrix. With a fill-reducing
/// ordering P M P^T = L L^T, the applied factor is F = P^T L.
class MassFactor {
public:
    explicit MassFactor(const SparseMatrix& M, FactorOrdering ordering = FactorOrdering::amd) {
        if (ordering == FactorOrdering::natural) {
            Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>> llt(M);
            if (llt.info() != Eigen::Success) throw LinearAlgebraError("mass_sqrt_factor: M is not SPD");
            lower_ = llt.matrixL();
            perm_.setIdentity(M.rows());
        } else {
            Eigen::SimplicialLLT<SparseMatrix> llt(M);
            if (llt.info() != Eigen::Success) throw LinearAlgebraError("mass_sqrt_factor: M is not SPD");
            lower_ = llt.matrixL();
            perm_ = llt.permutationPinv();
        }
    }

    /// F rho.
    Vector apply(const Vector& rho) const {
        if (rho.size() != lower_.cols()) throw ParameterError("MassFactor::apply: dimension mismatch");
        return perm_ * Vector(lower_ * rho);
    }

    /// F as a sparse matrix.
    SparseMatrix factor() const { return SparseMatrix(perm_ * lower_); }

    /// Lower-triangular L in the permuted ordering.
    const SparseMatrix& lower() const { return lower_; }
    Eigen::Index size() const { return lower_.rows(); }

private:
    SparseMatrix lower_;
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm_;
};

inline MassFactor mass_sqrt_factor(const SparseMatrix& M, FactorOrdering ordering = FactorOrdering::amd) {
    return MassFactor(M, ordering);
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t realization, std::uint64_t step) {
    return splitmix64(splitmix64(splitmix64(seed) ^ realization) ^ step);
}

}  // namespace detail

struct NoiseIncrement {
    long step = 0;
    Vector rho;
    Vector load;
};

/// Stateless Gaussian increment source: rho for (realization, step) depends
/// only on (seed, realization, step).
class NoiseStream {
public:
    NoiseStream(std::uint64_t seed, const SparseMatrix& M, double dt,
                FactorOrdering ordering = FactorOrdering::amd)
        : seed_(seed), dt_(dt), factor_(M, ordering) {
        if (!(dt > 0.0)) throw ParameterError("NoiseStream: dt must be positive");
    }

    Vector rho(std::uint64_t realization, std::uint64_t step) const {
        std::mt19937_64 gen(detail::stream_key(seed_, realization, step));
        std::normal_distribution<double> normal(0.0, 1.0);
        Vector r(factor_.size());
        for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = normal(gen);
        return r;
    }

    NoiseIncrement sample(std::uint64_t realization, std::uint64_t step, double dt) const {
        if (std::abs(dt - dt_) > 1e-14 * dt_)
            throw ParameterError("sample_increment: dt differs from the stream's fine time step");
        NoiseIncrement inc;
        inc.step = static_cast<long>(step);
        inc.rho = rho(realization, step);
        inc.load = std::sqrt(dt_) * factor_.apply(inc.rho);
        return inc;
    }

    Vector load(std::uint64_t realization, std::uint64_t step) const { return sample(realization, step, dt_).load; }

    std::uint64_t seed() const { return seed_; }
    double dt() const { return dt_; }
    const MassFactor& factor() const { return factor_; }
    Eigen::Index size() const { return factor_.size(); }

private:
    std::uint64_t seed_;
    double dt_;
    MassFactor factor_;
};

inline NoiseIncrement sample_increment(const NoiseStream& stream, std::uint64_t realization, std::uint64_t step,
                                       double dt) {
    return stream.sample(realization, step, dt);
}

/// Sum of `ratio` consecutive fine loads: the load of the coarse time window.
inline Vector coarsen_time(std::span<const Vector> loads, int ratio) {
    if (ratio < 1) throw ParameterError("coarsen_time: ratio must be a positive integer");
    if (static_cast<int>(loads.size()) != ratio)
        throw ParameterError("coarsen_time: expected " + std::to_string(ratio) + " loads, got " +
                             std::to_string(loads.size()));
    Vector sum = loads.front();
    for (std::size_t i = 1; i < loads.size(); ++i) {
        if (loads[i].size() != sum.size()) throw ParameterError("coarsen_time: load lengths differ");
        sum += loads[i];
    }
    return sum;
}

/// Coarse-mesh load A * fine_load.
inline Vector coarsen_space(const CouplingOperator& A, const Vector& fine_load) {
    if (fine_load.size() != A.cols())
        throw ParameterError("coarsen_space: fine load has length " + std::to_string(fine_load.size()) +
                             ", expected " + std::to_string(A.cols()));
    return A.matrix * fine_load;
}

/// Flat binary rho record: little-endian uint64 N_h, uint64 steps, then
/// steps * N_h little-endian doubles, step-major.
inline void write_rho_record(std::ostream& out, std::span<const Vector> rhos) {
    static_assert(std::endian::native == std::endian::little, "rho records assume a little-endian host");
    const std::uint64_t n = rhos.empty() ? 0 : static_cast<std::uint64_t>(rhos.front().size());
    const std::uint64_t steps = rhos.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(&steps), sizeof steps);
    for (const Vector& r : rhos) {
        if (static_cast<std::uint64_t>(r.size()) != n) throw ParameterError("write_rho_record: ragged rho sequence");
        out.write(reinterpret_cast<const char*>(r.data()), static_cast<std::streamsize>(n * sizeof(double)));
    }
}

inline std::vector<Vector> read_rho_record(std::istream& in) {
    std::uint64_t n = 0, steps = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    in.read(reinterpret_cast<char*>(&steps), sizeof steps);
    if (!in) throw ParameterError("read_rho_record: truncated header");
    std::vector<Vector> rhos(steps, Vector(static_cast<Eigen::Index>(n)));
    for (auto& r : rhos) in.read(reinterpret_cast<char*>(r.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw ParameterError("read_rho_record: truncated payload");
    return rhos;
}

}  // namespace sfem
