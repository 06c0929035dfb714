#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <memory>
#include <string>

#include "sfem/errors.hpp"
#include "sfem/mesh.hpp"

namespace sfem {

/// Direct sparse factorization: Cholesky for symmetric input, LU otherwise.
/// Immutable after construction; solve() is safe to call concurrently.
class SparseSolver {
public:
    explicit SparseSolver(const SparseMatrix& a, double symmetry_tol = 1e-13) : n_(a.rows()) {
        if (a.rows() != a.cols()) throw LinearAlgebraError("SparseSolver: matrix is not square");
        const SparseMatrix at = a.transpose();
        const double norm = a.norm();
        symmetric_ = (a - at).norm() <= symmetry_tol * norm;
        if (symmetric_) {
            llt_ = std::make_unique<Eigen::SimplicialLLT<SparseMatrix>>(a);
            if (llt_->info() != Eigen::Success) throw LinearAlgebraError("Cholesky factorization failed");
            // A (near) singular positive semidefinite matrix survives the
            // factorization with a tiny pivot; reject it explicitly.
            const Eigen::VectorXd diag = SparseMatrix(llt_->matrixL()).diagonal();
            const double ratio = diag.minCoeff() / diag.maxCoeff();
            if (!(ratio * ratio > 1e-14)) throw LinearAlgebraError("Cholesky factorization: matrix is singular");
        } else {
            lu_ = std::make_unique<Eigen::SparseLU<SparseMatrix>>();
            lu_->analyzePattern(a);
            lu_->factorize(a);
            if (lu_->info() != Eigen::Success)
                throw LinearAlgebraError("LU factorization failed: " + lu_->lastErrorMessage());
        }
    }

    Vector solve(const Vector& b) const {
        if (b.size() != n_) throw ParameterError("SparseSolver::solve: dimension mismatch");
        return symmetric_ ? Vector(llt_->solve(b)) : Vector(lu_->solve(b));
    }

    bool symmetric() const { return symmetric_; }
    Eigen::Index size() const { return n_; }

private:
    Eigen::Index n_;
    bool symmetric_ = false;
    std::unique_ptr<Eigen::SimplicialLLT<SparseMatrix>> llt_;
    std::unique_ptr<Eigen::SparseLU<SparseMatrix>> lu_;
};

}  // namespace sfem
