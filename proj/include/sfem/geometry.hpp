#pragma once

// Smooth reference surfaces: the unit circle, the unit sphere and the
// deformed sphere f(S^2) with f(x) = (1 - 0.5 cos^2(pi x3)) (x1, x2, 0) + (0, 0, x3).
//
// Every point is an Eigen::Vector3d. The circle lives in the z = 0 plane and
// ignores the third coordinate of its inputs.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include "sfem/errors.hpp"

namespace sfem {

using Point = Eigen::Vector3d;

enum class SurfaceKind { circle, sphere, deformed_sphere };

namespace detail {

inline double deform_scale(double z) {
    const double c = std::cos(std::numbers::pi * z);
    return 1.0 - 0.5 * c * c;
}

inline double deform_scale_derivative(double z) {
    // d/dz (1 - 0.5 cos^2(pi z)) = pi cos(pi z) sin(pi z)
    const double a = std::numbers::pi * z;
    return std::numbers::pi * std::cos(a) * std::sin(a);
}

// Orthonormal basis of the plane orthogonal to the unit vector n.
inline Eigen::Matrix<double, 3, 2> tangent_basis(const Point& n) {
    const Point helper = std::abs(n.x()) < 0.9 ? Point::UnitX() : Point::UnitY();
    const Point t1 = n.cross(helper).normalized();
    const Point t2 = n.cross(t1);
    Eigen::Matrix<double, 3, 2> basis;
    basis.col(0) = t1;
    basis.col(1) = t2;
    return basis;
}

}  // namespace detail

/// The deformation map f : S^2 -> Gamma_2.
inline Point deform(const Point& q) {
    const double s = detail::deform_scale(q.z());
    return {s * q.x(), s * q.y(), q.z()};
}

/// Jacobian of f as a map R^3 -> R^3 (restrict to T_q S^2 for the surface map).
inline Eigen::Matrix3d deform_jacobian(const Point& q) {
    const double s = detail::deform_scale(q.z());
    const double ds = detail::deform_scale_derivative(q.z());
    Eigen::Matrix3d jac;
    jac << s, 0.0, ds * q.x(),
           0.0, s, ds * q.y(),
           0.0, 0.0, 1.0;
    return jac;
}

/// Exact inverse of f on Gamma_2 (the map rescales horizontally only).
inline Point undeform(const Point& p) {
    const double s = detail::deform_scale(p.z());
    return {p.x() / s, p.y() / s, p.z()};
}

class Surface {
public:
    static Surface circle() { return Surface(SurfaceKind::circle); }
    static Surface sphere() { return Surface(SurfaceKind::sphere); }
    static Surface deformed_sphere() { return Surface(SurfaceKind::deformed_sphere); }

    static Surface from_name(std::string_view name) {
        if (name == "circle") return circle();
        if (name == "sphere") return sphere();
        if (name == "deformed-sphere") return deformed_sphere();
        throw ParameterError("unknown surface '" + std::string(name) +
                             "' (expected circle, sphere or deformed-sphere)");
    }

    SurfaceKind kind() const { return kind_; }

    /// Intrinsic dimension d.
    int dim() const { return kind_ == SurfaceKind::circle ? 1 : 2; }

    std::string name() const {
        switch (kind_) {
            case SurfaceKind::circle: return "circle";
            case SurfaceKind::sphere: return "sphere";
            case SurfaceKind::deformed_sphere: return "deformed-sphere";
        }
        return {};
    }

    /// Nearest point on the surface. Throws DomainError at the origin, where
    /// the projection is undefined for all three surfaces.
    Point closest_point(const Point& x) const {
        switch (kind_) {
            case SurfaceKind::circle: {
                const Eigen::Vector2d planar(x.x(), x.y());
                const double r = planar.norm();
                if (r < 1e-300) throw DomainError("closest_point: circle projection undefined at the center");
                return {x.x() / r, x.y() / r, 0.0};
            }
            case SurfaceKind::sphere: {
                const double r = x.norm();
                if (r < 1e-300) throw DomainError("closest_point: sphere projection undefined at the center");
                return x / r;
            }
            case SurfaceKind::deformed_sphere:
                return deform(closest_preimage(x));
        }
        return x;
    }

    /// Distance-based membership test.
    bool contains(const Point& p, double tol = 1e-10) const {
        switch (kind_) {
            case SurfaceKind::circle:
                return std::abs(p.z()) <= tol && std::abs(std::hypot(p.x(), p.y()) - 1.0) <= tol;
            case SurfaceKind::sphere:
                return std::abs(p.norm() - 1.0) <= tol;
            case SurfaceKind::deformed_sphere:
                if (std::abs(p.z()) > 1.0 + tol) return false;
                return std::abs(undeform(p).norm() - 1.0) <= tol;
        }
        return false;
    }

    /// Outward unit normal at a surface point.
    Point unit_normal(const Point& p) const {
        if (!contains(p, 1e-10)) throw ParameterError("unit_normal: point is not on the surface");
        switch (kind_) {
            case SurfaceKind::circle: return {p.x(), p.y(), 0.0};
            case SurfaceKind::sphere: return p;
            case SurfaceKind::deformed_sphere: {
                const Point q = undeform(p).normalized();
                const Eigen::Matrix<double, 3, 2> tangents = deform_jacobian(q) * detail::tangent_basis(q);
                Point n = tangents.col(0).cross(tangents.col(1)).normalized();
                // Gamma_2 is the zero set of (x1^2 + x2^2)/s(x3)^2 + x3^2 - 1; its gradient points outward.
                const double s = detail::deform_scale(p.z());
                const double ds = detail::deform_scale_derivative(p.z());
                const Point grad(p.x() / (s * s), p.y() / (s * s),
                                 p.z() - (p.x() * p.x() + p.y() * p.y()) * ds / (s * s * s));
                if (n.dot(grad) < 0.0) n = -n;
                return n;
            }
        }
        return p;
    }

private:
    explicit Surface(SurfaceKind kind) : kind_(kind) {}

    // Gauss-Newton on q -> |x - f(q)|^2 over the unit sphere, seeded from the
    // radial projection of the horizontally rescaled point.
    static Point closest_preimage(const Point& x) {
        if (x.norm() < 1e-300) throw DomainError("closest_point: deformed sphere projection undefined at the origin");
        const double zc = std::clamp(x.z(), -1.0, 1.0);
        Point q = undeform(Point(x.x(), x.y(), zc));
        if (q.norm() < 1e-300) q = x;
        q.normalize();
        for (int iter = 0; iter < 200; ++iter) {
            const Eigen::Matrix<double, 3, 2> basis = detail::tangent_basis(q);
            const Eigen::Matrix<double, 3, 2> jac = deform_jacobian(q) * basis;
            const Point residual = deform(q) - x;
            const Eigen::Vector2d step = (jac.transpose() * jac).ldlt().solve(-jac.transpose() * residual);
            // Damp steps that would leave the chart around q.
            const double len = step.norm();
            const Eigen::Vector2d used = len > 0.5 ? Eigen::Vector2d(step * (0.5 / len)) : step;
            q = (q + basis * used).normalized();
            if (len < 1e-15) break;
        }
        return q;
    }

    SurfaceKind kind_;
};

}  // namespace sfem
