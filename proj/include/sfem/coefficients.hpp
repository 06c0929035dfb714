#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <string_view>

#include "sfem/errors.hpp"
#include "sfem/geometry.hpp"
#include "sfem/mesh.hpp"

namespace sfem {

/// Coefficients (diffusion A, advection b, reaction alpha) of a form
///   a(u, v) = int A grad u . grad v + (b . grad u) v + alpha u v.
struct CoefficientField {
    std::string name;
    std::function<Eigen::Matrix3d(const Point&)> diffusion;
    std::function<Eigen::Vector3d(const Point&)> advection;
    std::function<double(const Point&)> reaction;
    /// Diffusion is a constant multiple of I, advection vanishes and reaction is
    /// constant. Two such fields give commuting discrete operators.
    bool constant_isotropic = false;
};

namespace detail {

inline CoefficientField constant_field(std::string name, double diffusion, double reaction) {
    CoefficientField f;
    f.name = std::move(name);
    f.diffusion = [diffusion](const Point&) -> Eigen::Matrix3d { return diffusion * Eigen::Matrix3d::Identity(); };
    f.advection = [](const Point&) -> Eigen::Vector3d { return Eigen::Vector3d::Zero(); };
    f.reaction = [reaction](const Point&) { return reaction; };
    f.constant_isotropic = true;
    return f;
}

inline Eigen::Matrix3d tangential_projector(const Eigen::Vector3d& n) {
    return Eigen::Matrix3d::Identity() - n * n.transpose();
}

}  // namespace detail

/// Built-in fields:
///   laplace          A = I, b = 0, alpha = 0
///   shifted-laplace  A = I, b = 0, alpha = 1
///   example3-a1      A = I + 5 v v^T, b = -P (0, 0, x3/2), alpha = 1,
///                    v = cos^2(pi x3 / 2) P (x2, -x1, 0), P = I - nu nu^T
///   example3-a2      A = I, b = 0, alpha = 1
/// The smooth normal nu in example3-a1 is taken at the closest point on `surface`.
inline CoefficientField builtin_field(std::string_view name, const Surface& surface) {
    if (name == "laplace") return detail::constant_field("laplace", 1.0, 0.0);
    if (name == "shifted-laplace") return detail::constant_field("shifted-laplace", 1.0, 1.0);
    if (name == "example3-a2") return detail::constant_field("example3-a2", 1.0, 1.0);
    if (name == "example3-a1") {
        CoefficientField f;
        f.name = "example3-a1";
        f.diffusion = [surface](const Point& x) -> Eigen::Matrix3d {
            const Eigen::Matrix3d proj = detail::tangential_projector(surface.unit_normal(surface.closest_point(x)));
            const double c = std::cos(0.5 * std::numbers::pi * x.z());
            const Eigen::Vector3d v = c * c * (proj * Eigen::Vector3d(x.y(), -x.x(), 0.0));
            return Eigen::Matrix3d::Identity() + 5.0 * v * v.transpose();
        };
        f.advection = [surface](const Point& x) -> Eigen::Vector3d {
            const Eigen::Matrix3d proj = detail::tangential_projector(surface.unit_normal(surface.closest_point(x)));
            return -(proj * Eigen::Vector3d(0.0, 0.0, 0.5 * x.z()));
        };
        f.reaction = [](const Point&) { return 1.0; };
        return f;
    }
    throw ParameterError("unknown coefficient field '" + std::string(name) +
                         "' (expected laplace, shifted-laplace, example3-a1 or example3-a2)");
}

struct ProjectedCoefficients {
    Eigen::Matrix3d diffusion;
    Eigen::Vector3d advection;
    double reaction;
};

/// Coefficients of a field restricted to a discrete surface: diffusion and
/// advection are projected onto the tangent plane of each simplex with its
/// discrete normal, and every coefficient is evaluated at the simplex barycenter.
class ProjectedField {
public:
    ProjectedField(const CoefficientField& field, const SurfaceMesh& mesh) : field_(field), mesh_(mesh) {}

    ProjectedCoefficients operator()(int simplex) const {
        const Point x = mesh_.barycenter(simplex);
        const Eigen::Matrix3d proj = detail::tangential_projector(mesh_.normal(simplex));
        ProjectedCoefficients c;
        c.diffusion = proj * field_.diffusion(x) * proj;
        c.advection = proj * field_.advection(x);
        c.reaction = field_.reaction(x);
        if (!c.diffusion.allFinite() || !c.advection.allFinite() || !std::isfinite(c.reaction))
            throw ParameterError("coefficient field '" + field_.name + "' is not finite on simplex " +
                                 std::to_string(simplex));
        return c;
    }

    const SurfaceMesh& mesh() const { return mesh_; }

private:
    CoefficientField field_;
    const SurfaceMesh& mesh_;
};

inline ProjectedField project_to_mesh(const CoefficientField& field, const SurfaceMesh& mesh) {
    return ProjectedField(field, mesh);
}

}  // namespace sfem
