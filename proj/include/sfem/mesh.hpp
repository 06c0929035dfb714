#pragma once

// Polygonal (d = 1) and triangulated (d = 2) approximations of the reference
// surfaces with vertices on the surface, plus the coarse-to-fine vertex
// interpolation matrix used to couple noise across resolutions.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sfem/errors.hpp"
#include "sfem/geometry.hpp"

namespace sfem {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

namespace detail {
inline std::uint64_t next_mesh_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}
}  // namespace detail

class SurfaceMesh {
public:
    /// Builds a mesh from explicit vertices and connectivity (d + 1 indices per
    /// simplex). Computes per-simplex normals oriented by the surface normal and
    /// the measured mesh size; throws MeshError on degenerate simplices.
    SurfaceMesh(Surface surface, int level, std::vector<Point> vertices, std::vector<int> connectivity)
        : surface_(surface), level_(level), vertices_(std::move(vertices)),
          connectivity_(std::move(connectivity)), id_(detail::next_mesh_id()) {
        const int npe = nodes_per_simplex();
        if (connectivity_.empty() || connectivity_.size() % npe != 0)
            throw MeshError("connectivity length is not a positive multiple of " + std::to_string(npe));
        for (int v : connectivity_)
            if (v < 0 || v >= static_cast<int>(vertices_.size()))
                throw MeshError("connectivity references vertex " + std::to_string(v) + " out of range");
        normals_.reserve(num_simplices());
        h_ = 0.0;
        for (int s = 0; s < num_simplices(); ++s) {
            if (measure(s) <= 1e-14 * std::pow(diameter(s), dim()))
                throw MeshError("simplex " + std::to_string(s) + " is degenerate");
            normals_.push_back(compute_normal(s));
            h_ = std::max(h_, diameter(s));
        }
    }

    const Surface& surface() const { return surface_; }
    int dim() const { return surface_.dim(); }
    int level() const { return level_; }
    std::uint64_t id() const { return id_; }
    int nodes_per_simplex() const { return dim() + 1; }
    int num_vertices() const { return static_cast<int>(vertices_.size()); }
    int num_simplices() const { return static_cast<int>(connectivity_.size()) / nodes_per_simplex(); }
    double h() const { return h_; }

    const std::vector<Point>& vertices() const { return vertices_; }
    const Point& vertex(int i) const { return vertices_[i]; }

    std::span<const int> simplex(int s) const {
        return {connectivity_.data() + static_cast<std::size_t>(s) * nodes_per_simplex(),
                static_cast<std::size_t>(nodes_per_simplex())};
    }

    /// Unit normal of simplex s, oriented so it agrees with the smooth normal
    /// at the projected barycenter.
    const Point& normal(int s) const { return normals_[s]; }

    Point barycenter(int s) const {
        Point c = Point::Zero();
        for (int v : simplex(s)) c += vertices_[v];
        return c / nodes_per_simplex();
    }

    double measure(int s) const {
        const auto idx = simplex(s);
        if (dim() == 1) return (vertices_[idx[1]] - vertices_[idx[0]]).norm();
        return 0.5 * (vertices_[idx[1]] - vertices_[idx[0]]).cross(vertices_[idx[2]] - vertices_[idx[0]]).norm();
    }

    double diameter(int s) const {
        const auto idx = simplex(s);
        double d = 0.0;
        for (std::size_t a = 0; a < idx.size(); ++a)
            for (std::size_t b = a + 1; b < idx.size(); ++b)
                d = std::max(d, (vertices_[idx[a]] - vertices_[idx[b]]).norm());
        return d;
    }

    /// Inradius (half length for a segment).
    double inradius(int s) const {
        const auto idx = simplex(s);
        if (dim() == 1) return 0.5 * measure(s);
        const double perimeter = (vertices_[idx[1]] - vertices_[idx[0]]).norm() +
                                 (vertices_[idx[2]] - vertices_[idx[1]]).norm() +
                                 (vertices_[idx[0]] - vertices_[idx[2]]).norm();
        return 2.0 * measure(s) / perimeter;
    }

private:
    Point compute_normal(int s) const {
        const auto idx = simplex(s);
        Point n;
        if (dim() == 1) {
            const Point t = vertices_[idx[1]] - vertices_[idx[0]];
            n = Point(t.y(), -t.x(), 0.0).normalized();
        } else {
            n = (vertices_[idx[1]] - vertices_[idx[0]]).cross(vertices_[idx[2]] - vertices_[idx[0]]).normalized();
        }
        const Point c = barycenter(s);
        const Point smooth = surface_.unit_normal(surface_.closest_point(c));
        return n.dot(smooth) < 0.0 ? Point(-n) : n;
    }

    Surface surface_;
    int level_;
    std::vector<Point> vertices_;
    std::vector<int> connectivity_;
    std::vector<Point> normals_;
    double h_ = 0.0;
    std::uint64_t id_;
};

inline Point discrete_normal(const SurfaceMesh& mesh, int simplex_index) {
    if (simplex_index < 0 || simplex_index >= mesh.num_simplices())
        throw ParameterError("discrete_normal: simplex index out of range");
    return mesh.normal(simplex_index);
}

namespace detail {

inline SurfaceMesh circle_mesh(int level) {
    const int n = 1 << (level + 2);
    std::vector<Point> vertices;
    vertices.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double angle = 2.0 * std::numbers::pi * i / n;
        vertices.emplace_back(std::cos(angle), std::sin(angle), 0.0);
    }
    std::vector<int> conn;
    conn.reserve(2 * n);
    for (int i = 0; i < n; ++i) {
        conn.push_back(i);
        conn.push_back((i + 1) % n);
    }
    return SurfaceMesh(Surface::circle(), level, std::move(vertices), std::move(conn));
}

// Subdivided icosahedron on S^2. Coarse vertices keep their indices at every
// level, so the hierarchy is nested by construction.
inline std::pair<std::vector<Point>, std::vector<int>> icosphere(int level) {
    const double phi = std::numbers::phi;
    std::vector<Point> v = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
    };
    for (auto& p : v) p.normalize();
    std::vector<int> tri = {
        0, 11, 5,  0, 5, 1,   0, 1, 7,   0, 7, 10,  0, 10, 11,
        1, 5, 9,   5, 11, 4,  11, 10, 2, 10, 7, 6,  7, 1, 8,
        3, 9, 4,   3, 4, 2,   3, 2, 6,   3, 6, 8,   3, 8, 9,
        4, 9, 5,   2, 4, 11,  6, 2, 10,  8, 6, 7,   9, 8, 1,
    };
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            v.push_back((0.5 * (v[a] + v[b])).normalized());
            const int idx = static_cast<int>(v.size()) - 1;
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<int> next;
        next.reserve(tri.size() * 4);
        for (std::size_t t = 0; t < tri.size(); t += 3) {
            const int a = tri[t], b = tri[t + 1], c = tri[t + 2];
            const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
            next.insert(next.end(), {a, ab, ca, b, bc, ab, c, ca, bc, ab, bc, ca});
        }
        tri = std::move(next);
    }
    return {std::move(v), std::move(tri)};
}

}  // namespace detail

/// Regular 2^(level+2)-gon for the circle; `level` times subdivided
/// icosahedron for the sphere, mapped through f for the deformed sphere.
inline SurfaceMesh generate_mesh(const Surface& surface, int level) {
    if (level < 0) throw ParameterError("generate_mesh: level must be >= 0");
    switch (surface.kind()) {
        case SurfaceKind::circle:
            return detail::circle_mesh(level);
        case SurfaceKind::sphere: {
            auto [v, t] = detail::icosphere(level);
            return SurfaceMesh(surface, level, std::move(v), std::move(t));
        }
        case SurfaceKind::deformed_sphere: {
            auto [v, t] = detail::icosphere(level);
            for (auto& p : v) p = deform(p);
            return SurfaceMesh(surface, level, std::move(v), std::move(t));
        }
    }
    throw ParameterError("generate_mesh: unknown surface");
}

struct MeshMetrics {
    double h;
    double min_diameter;
    double quasi_uniformity_ratio;  ///< max diam / min (2 * inradius)
    double total_measure;
};

inline MeshMetrics mesh_metrics(const SurfaceMesh& mesh) {
    MeshMetrics m{0.0, std::numeric_limits<double>::infinity(), 0.0, 0.0};
    double min_incircle = std::numeric_limits<double>::infinity();
    for (int s = 0; s < mesh.num_simplices(); ++s) {
        const double measure = mesh.measure(s);
        if (!(measure > 0.0)) throw MeshError("simplex " + std::to_string(s) + " has zero measure");
        const double diam = mesh.diameter(s);
        m.h = std::max(m.h, diam);
        m.min_diameter = std::min(m.min_diameter, diam);
        min_incircle = std::min(min_incircle, 2.0 * mesh.inradius(s));
        m.total_measure += measure;
    }
    m.quasi_uniformity_ratio = m.h / min_incircle;
    return m;
}

/// Sparse N_coarse x N_fine matrix with entries phi_i(x_j), where x_j is fine
/// vertex j mapped onto the coarse mesh.
struct CouplingOperator {
    SparseMatrix matrix;
    std::uint64_t coarse_id = 0;
    std::uint64_t fine_id = 0;

    Eigen::Index rows() const { return matrix.rows(); }
    Eigen::Index cols() const { return matrix.cols(); }
};

namespace detail {

struct SimplexHit {
    double distance2;
    std::array<double, 3> bary;
};

inline SimplexHit closest_on_segment(const Point& p, const Point& a, const Point& b) {
    const Point ab = b - a;
    double t = (p - a).dot(ab) / ab.squaredNorm();
    t = std::clamp(t, 0.0, 1.0);
    const Point q = a + t * ab;
    return {(p - q).squaredNorm(), {1.0 - t, t, 0.0}};
}

// Closest point on a triangle with barycentric coordinates, by Voronoi region
// classification.
inline SimplexHit closest_on_triangle(const Point& p, const Point& a, const Point& b, const Point& c) {
    const Point ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return {ap.squaredNorm(), {1.0, 0.0, 0.0}};
    const Point bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return {bp.squaredNorm(), {0.0, 1.0, 0.0}};
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return {(p - (a + v * ab)).squaredNorm(), {1.0 - v, v, 0.0}};
    }
    const Point cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return {cp.squaredNorm(), {0.0, 0.0, 1.0}};
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return {(p - (a + w * ac)).squaredNorm(), {1.0 - w, 0.0, w}};
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return {(p - (b + w * (c - b))).squaredNorm(), {0.0, 1.0 - w, w}};
    }
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return {(p - (a + v * ab + w * ac)).squaredNorm(), {1.0 - v - w, v, w}};
}

}  // namespace detail

/// Builds A with A_ij = phi_i(x_j): each fine vertex is mapped to its nearest
/// point on the union of coarse simplices (ties go to the lowest simplex index)
/// and the coarse hat functions are evaluated there.
inline CouplingOperator coarse_to_fine_matrix(const SurfaceMesh& coarse, const SurfaceMesh& fine) {
    if (coarse.surface().kind() != fine.surface().kind())
        throw ParameterError("coarse_to_fine_matrix: meshes approximate different surfaces");
    if (coarse.level() > fine.level())
        throw ParameterError("coarse_to_fine_matrix: coarse level exceeds fine level");

    const int nc = coarse.num_simplices();
    std::vector<Point> centers(nc);
    std::vector<double> radii(nc);
    for (int s = 0; s < nc; ++s) {
        centers[s] = coarse.barycenter(s);
        double r = 0.0;
        for (int v : coarse.simplex(s)) r = std::max(r, (coarse.vertex(v) - centers[s]).norm());
        radii[s] = r;
    }

    // Exact vertex matches short-circuit to a unit column.
    std::map<std::array<double, 3>, int> coarse_vertex_index;
    for (int i = 0; i < coarse.num_vertices(); ++i) {
        const Point& p = coarse.vertex(i);
        coarse_vertex_index.emplace(std::array<double, 3>{p.x(), p.y(), p.z()}, i);
    }

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(fine.num_vertices()) * coarse.nodes_per_simplex());
    const double tolerance = coarse.h();
    for (int j = 0; j < fine.num_vertices(); ++j) {
        const Point& x = fine.vertex(j);
        if (auto it = coarse_vertex_index.find({x.x(), x.y(), x.z()}); it != coarse_vertex_index.end()) {
            triplets.emplace_back(it->second, j, 1.0);
            continue;
        }
        double best = std::numeric_limits<double>::infinity();
        int best_simplex = -1;
        detail::SimplexHit best_hit{};
        for (int s = 0; s < nc; ++s) {
            const double lower = (x - centers[s]).norm() - radii[s];
            if (lower > 0.0 && lower * lower > best) continue;
            const auto idx = coarse.simplex(s);
            const detail::SimplexHit hit =
                coarse.dim() == 1
                    ? detail::closest_on_segment(x, coarse.vertex(idx[0]), coarse.vertex(idx[1]))
                    : detail::closest_on_triangle(x, coarse.vertex(idx[0]), coarse.vertex(idx[1]),
                                                  coarse.vertex(idx[2]));
            if (hit.distance2 < best) {
                best = hit.distance2;
                best_simplex = s;
                best_hit = hit;
            }
        }
        if (best_simplex < 0 || std::sqrt(best) > tolerance)
            throw LocationError("coarse_to_fine_matrix: fine vertex " + std::to_string(j) +
                                " is not near the coarse mesh");
        const auto idx = coarse.simplex(best_simplex);
        for (std::size_t a = 0; a < idx.size(); ++a)
            if (best_hit.bary[a] != 0.0) triplets.emplace_back(idx[a], j, best_hit.bary[a]);
    }
    CouplingOperator op;
    op.matrix.resize(coarse.num_vertices(), fine.num_vertices());
    op.matrix.setFromTriplets(triplets.begin(), triplets.end());
    op.coarse_id = coarse.id();
    op.fine_id = fine.id();
    return op;
}

}  // namespace sfem
