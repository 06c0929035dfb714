#pragma once

// Piecewise-linear surface finite element matrices on the nodal basis.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <string>
#include <vector>

#include "sfem/coefficients.hpp"
#include "sfem/mesh.hpp"

namespace sfem {

namespace detail {

struct LocalGeometry {
    double measure;
    Eigen::Matrix<double, 3, Eigen::Dynamic, 0, 3, 3> gradients;  ///< column a = tangential gradient of hat a
};

inline LocalGeometry local_geometry(const SurfaceMesh& mesh, int s) {
    const auto idx = mesh.simplex(s);
    const int d = mesh.dim();
    Eigen::Matrix<double, 3, Eigen::Dynamic, 0, 3, 2> edges(3, d);
    for (int k = 0; k < d; ++k) edges.col(k) = mesh.vertex(idx[k + 1]) - mesh.vertex(idx[0]);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2, 2> gram = edges.transpose() * edges;
    LocalGeometry g;
    g.measure = mesh.measure(s);
    g.gradients.resize(3, d + 1);
    const auto tail = edges * gram.inverse();  // columns: gradients of the barycentric coordinates 1..d
    g.gradients.rightCols(d) = tail;
    g.gradients.col(0) = -tail.rowwise().sum();
    return g;
}

inline void check_measure(const LocalGeometry& g, int s) {
    if (!(g.measure > 0.0)) throw MeshError("simplex " + std::to_string(s) + " is degenerate");
}

}  // namespace detail

/// Consistent P1 mass matrix, (M)_ij = int phi_j phi_i.
inline SparseMatrix assemble_mass(const SurfaceMesh& mesh) {
    const int npe = mesh.nodes_per_simplex();
    const double denom = static_cast<double>(npe * (npe + 1));
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(mesh.num_simplices()) * npe * npe);
    for (int s = 0; s < mesh.num_simplices(); ++s) {
        const double measure = mesh.measure(s);
        if (!(measure > 0.0)) throw MeshError("simplex " + std::to_string(s) + " is degenerate");
        const auto idx = mesh.simplex(s);
        for (int a = 0; a < npe; ++a)
            for (int b = 0; b < npe; ++b)
                triplets.emplace_back(idx[a], idx[b], measure * (a == b ? 2.0 : 1.0) / denom);
    }
    SparseMatrix m(mesh.num_vertices(), mesh.num_vertices());
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
}

/// Matrix of the discrete form, entry (i, j) = a_h(phi_j, phi_i). Coefficients
/// are taken at the barycenter of each simplex; the reaction term uses the
/// exact P1 mass matrix, so a constant reaction adds exactly alpha * M.
inline SparseMatrix assemble_form(const SurfaceMesh& mesh, const CoefficientField& field) {
    const ProjectedField coeffs = project_to_mesh(field, mesh);
    const int npe = mesh.nodes_per_simplex();
    const double mass_denom = static_cast<double>(npe * (npe + 1));
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(mesh.num_simplices()) * npe * npe);
    for (int s = 0; s < mesh.num_simplices(); ++s) {
        const detail::LocalGeometry g = detail::local_geometry(mesh, s);
        detail::check_measure(g, s);
        const ProjectedCoefficients c = coeffs(s);
        const auto idx = mesh.simplex(s);
        for (int a = 0; a < npe; ++a) {      // test function
            for (int b = 0; b < npe; ++b) {  // trial function
                const double diffusion = g.measure * (c.diffusion * g.gradients.col(b)).dot(g.gradients.col(a));
                const double advection = c.advection.dot(g.gradients.col(b)) * g.measure / npe;
                const double reaction = c.reaction * g.measure * (a == b ? 2.0 : 1.0) / mass_denom;
                triplets.emplace_back(idx[a], idx[b], diffusion + advection + reaction);
            }
        }
    }
    SparseMatrix k(mesh.num_vertices(), mesh.num_vertices());
    k.setFromTriplets(triplets.begin(), triplets.end());
    return k;
}

/// M (mass), T (form of the drift operator) and K (form of the noise operator).
struct OperatorSet {
    SparseMatrix M;
    SparseMatrix T;
    SparseMatrix K;
    std::uint64_t mesh_id = 0;
    std::string drift_field;
    std::string noise_field;
    /// M^{-1} T and M^{-1} K commute (both fields constant and isotropic).
    bool commuting = false;

    Eigen::Index size() const { return M.rows(); }
};

inline OperatorSet assemble_operators(const SurfaceMesh& mesh, const CoefficientField& drift,
                                      const CoefficientField& noise) {
    OperatorSet ops;
    ops.M = assemble_mass(mesh);
    ops.T = assemble_form(mesh, drift);
    ops.K = assemble_form(mesh, noise);
    ops.mesh_id = mesh.id();
    ops.drift_field = drift.name;
    ops.noise_field = noise.name;
    ops.commuting = drift.constant_isotropic && noise.constant_isotropic;
    return ops;
}

/// Relative symmetry defect ||A - A^T||_F / ||A||_F.
inline double asymmetry(const SparseMatrix& a) {
    const SparseMatrix at = a.transpose();
    const double norm = a.norm();
    return norm == 0.0 ? 0.0 : (a - at).norm() / norm;
}

}  // namespace sfem
