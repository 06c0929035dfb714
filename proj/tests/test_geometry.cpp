#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sfem/geometry.hpp"

using sfem::Point;
using sfem::Surface;

TEST(Geometry, SphereProjectionIsRadial) {
    const Point p = Surface::sphere().closest_point({2, 0, 0});
    EXPECT_NEAR((p - Point(1, 0, 0)).norm(), 0.0, 1e-15);
}

TEST(Geometry, CircleProjectionUndefinedAtCenter) {
    EXPECT_THROW(Surface::circle().closest_point({0, 0, 0}), sfem::DomainError);
    EXPECT_THROW(Surface::sphere().closest_point({0, 0, 0}), sfem::DomainError);
}

TEST(Geometry, CircleProjectionStaysInPlane) {
    const Point p = Surface::circle().closest_point({3, 4, 0});
    EXPECT_NEAR((p - Point(0.6, 0.8, 0)).norm(), 0.0, 1e-15);
}

TEST(Geometry, DeformedSphereProjectionMatchesBruteForce) {
    const Surface s = Surface::deformed_sphere();
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<Point> queries = {{0.01, -0.02, 1.05}, {0.6, 0.1, 0.3}, {-0.2, 0.45, -0.7}};
    for (int i = 0; i < 3; ++i) {
        Point q(u(gen), u(gen), u(gen));
        q.normalize();
        queries.push_back(oracle::deform(q) + 0.05 * Point(u(gen), u(gen), u(gen)));
    }
    for (const Point& x : queries) {
        const Point p = s.closest_point(x);
        const Point ref = oracle::nearest_on_deformed_sphere(x);
        EXPECT_NEAR((p - ref).norm(), 0.0, 1e-6) << x.transpose();
        EXPECT_TRUE(s.contains(p, 1e-10));
    }
    const Point top = s.closest_point({0.001, 0.0, 1.01});
    EXPECT_LT((top - Point(0, 0, 1)).norm(), 0.01);
}

TEST(Geometry, UnitNormals) {
    EXPECT_NEAR((Surface::sphere().unit_normal({0, 0, 1}) - Point(0, 0, 1)).norm(), 0.0, 1e-15);
    EXPECT_NEAR((Surface::circle().unit_normal({1, 0, 0}) - Point(1, 0, 0)).norm(), 0.0, 1e-15);
    EXPECT_THROW(Surface::sphere().unit_normal({2, 0, 0}), sfem::ParameterError);
}

TEST(Geometry, DeformedNormalMatchesFiniteDifferenceTangents) {
    const Surface s = Surface::deformed_sphere();
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 200; ++i) {
        const double theta = 0.05 + 3.0 * u(gen), phi = 2 * std::numbers::pi * u(gen);
        const Point p = oracle::deform(oracle::sphere_point(theta, phi));
        const double e = 1e-6;
        const Point tt = (oracle::deform(oracle::sphere_point(theta + e, phi)) -
                          oracle::deform(oracle::sphere_point(theta - e, phi))) / (2 * e);
        const Point tp = (oracle::deform(oracle::sphere_point(theta, phi + e)) -
                          oracle::deform(oracle::sphere_point(theta, phi - e))) / (2 * e);
        const Point n = s.unit_normal(p);
        EXPECT_NEAR(n.norm(), 1.0, 1e-14);
        EXPECT_NEAR(n.dot(tt.normalized()), 0.0, 1e-8);
        EXPECT_NEAR(n.dot(tp.normalized()), 0.0, 1e-8);
        const Point expected = tt.cross(tp).normalized();
        EXPECT_NEAR(std::abs(n.dot(expected)), 1.0, 1e-8);
        EXPECT_GT(n.dot(p), 0.0);  // outward
    }
}

TEST(Geometry, DeformationValues) {
    EXPECT_NEAR((sfem::deform({0, 0, 1}) - Point(0, 0, 1)).norm(), 0.0, 1e-15);
    EXPECT_NEAR((sfem::deform({1, 0, 0}) - Point(0.5, 0, 0)).norm(), 0.0, 1e-15);
    EXPECT_NEAR((sfem::deform({0, 1, 0}) - Point(0, 0.5, 0)).norm(), 0.0, 1e-15);
}

TEST(Geometry, DeformationJacobianMatchesFiniteDifferences) {
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 50; ++i) {
        const Point q(u(gen), u(gen), u(gen));
        Eigen::Matrix3d fd;
        for (int c = 0; c < 3; ++c) {
            Point e = Point::Zero();
            e[c] = 1e-6;
            fd.col(c) = (sfem::deform(q + e) - sfem::deform(q - e)) / 2e-6;
        }
        EXPECT_LT((fd - sfem::deform_jacobian(q)).norm(), 1e-8);
    }
}

TEST(Geometry, ProjectionIdempotence) {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(-1, 1);
    for (const Surface& s : {Surface::circle(), Surface::sphere(), Surface::deformed_sphere()}) {
        for (int i = 0; i < 1000; ++i) {
            Point q(u(gen), u(gen), s.dim() == 1 ? 0.0 : u(gen));
            if (q.norm() < 0.1) continue;
            q.normalize();
            const Point on = s.kind() == sfem::SurfaceKind::deformed_sphere ? sfem::deform(q) : q;
            const Point x = on + 0.05 * u(gen) * s.unit_normal(on);
            const Point p = s.closest_point(x);
            EXPECT_NEAR((s.closest_point(p) - p).norm(), 0.0, 1e-12);
        }
    }
}

TEST(Geometry, DeformationConsistency) {
    const Surface s = Surface::deformed_sphere();
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 200; ++i) {
        const Point q = Point(u(gen), u(gen), u(gen)).normalized();
        const Point p = sfem::deform(q);
        EXPECT_NEAR((s.closest_point(p + 1e-3 * s.unit_normal(p)) - p).norm(), 0.0, 1e-6);
    }
}

TEST(Geometry, SurfaceNames) {
    EXPECT_EQ(Surface::from_name("deformed-sphere").kind(), sfem::SurfaceKind::deformed_sphere);
    EXPECT_EQ(Surface::from_name("circle").dim(), 1);
    EXPECT_EQ(Surface::from_name("sphere").dim(), 2);
    EXPECT_THROW(Surface::from_name("torus"), sfem::ParameterError);
}
