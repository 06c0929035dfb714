#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sfem/assembly.hpp"
#include "sfem/noise.hpp"
#include "sfem/stepper.hpp"

using sfem::Surface;

namespace {

sfem::SparseMatrix scalar(double v) {
    sfem::SparseMatrix m(1, 1);
    m.insert(0, 0) = v;
    m.makeCompressed();
    return m;
}

sfem::OperatorSet scalar_ops(double m, double t, double k) {
    sfem::OperatorSet ops;
    ops.M = scalar(m);
    ops.T = scalar(t);
    ops.K = scalar(k);
    ops.commuting = true;
    return ops;
}

sfem::OperatorSet circle_ops(int level, const char* drift = "laplace", const char* noise = "shifted-laplace") {
    const Surface s = Surface::circle();
    return sfem::assemble_operators(sfem::generate_mesh(s, level), sfem::builtin_field(drift, s),
                                    sfem::builtin_field(noise, s));
}

Eigen::VectorXd dense_zero_noise(const sfem::OperatorSet& ops, double dt, int n, const Eigen::VectorXd& a0) {
    const Eigen::MatrixXd m(ops.M), t(ops.T);
    const Eigen::MatrixXd step = (Eigen::MatrixXd::Identity(m.rows(), m.cols()) + dt * m.inverse() * t).inverse();
    Eigen::MatrixXd power = Eigen::MatrixXd::Identity(m.rows(), m.cols());
    for (int i = 0; i < n; ++i) power = step * power;
    return power * a0;
}

}  // namespace

TEST(Stepper, ScalarDecay) {
    const auto op = sfem::build_stepper(scalar_ops(1, 1, 1), sfem::fractional_spec(1, 0.5), 0.5);
    const auto next = sfem::step(op, {Eigen::VectorXd::Ones(1), 0}, {});
    EXPECT_NEAR(next.alpha[0], 2.0 / 3.0, 1e-15);
    EXPECT_EQ(next.n, 1);
}

TEST(Stepper, ScalarNoisyStep) {
    const auto op = sfem::build_stepper(scalar_ops(1, 1, 2), sfem::fractional_spec(1, 0.5), 0.25);
    // load = sqrt(dt) F rho with F = 1, rho = 1
    const auto next = op.step({Eigen::VectorXd::Zero(1), 0}, Eigen::VectorXd::Constant(1, std::sqrt(0.25)));
    EXPECT_NEAR(next.alpha[0], 0.2, 1e-15);
}

TEST(Stepper, GammaZeroAddsLoadDirectly) {
    const auto ops = circle_ops(2);
    const auto op = sfem::build_stepper(ops, sfem::fractional_spec(0, 0.5), 0.1);
    const Eigen::VectorXd a0 = oracle::gaussian_vector(16, 1), load = oracle::gaussian_vector(16, 2);
    const Eigen::MatrixXd m(ops.M), t(ops.T);
    const Eigen::VectorXd expected = (m + 0.1 * t).lu().solve(m * a0 + load);
    EXPECT_LT((op.step({a0, 0}, load).alpha - expected).norm(), 1e-12 * expected.norm());
}

TEST(Stepper, FactorizationsSucceed) {
    const auto lap = circle_ops(3);
    for (double dt : {1e-6, 0.01, 1.0, 100.0}) EXPECT_NO_THROW(sfem::build_stepper(lap, sfem::fractional_spec(0.5, 0.5), dt));
    const Surface s = Surface::sphere();
    const auto ops = sfem::assemble_operators(sfem::generate_mesh(s, 2), sfem::builtin_field("example3-a1", s),
                                              sfem::builtin_field("example3-a2", s));
    EXPECT_NO_THROW(sfem::build_stepper(ops, sfem::fractional_spec(0.5, 0.5), 0.01));
    EXPECT_THROW(sfem::build_stepper(lap, sfem::fractional_spec(0.5, 0.5), 0.0), sfem::ParameterError);
}

TEST(Stepper, ConstantsInvariantForLaplace) {
    const auto op = sfem::build_stepper(circle_ops(4), sfem::fractional_spec(0.5, 0.5), 0.1);
    const auto next = op.step({Eigen::VectorXd::Constant(64, 3.0), 0}, {});
    EXPECT_LT((next.alpha - Eigen::VectorXd::Constant(64, 3.0)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Stepper, ScalarRunClosedForm) {
    const auto op = sfem::build_stepper(scalar_ops(1, 1, 1), sfem::fractional_spec(1, 0.5), 1.0 / 10);
    const auto res = sfem::run(op, 10, Eigen::VectorXd::Ones(1), {});
    EXPECT_NEAR(res.final_state.alpha[0], std::pow(1.1, -10), 1e-14);
}

TEST(Stepper, ZeroNoiseMatchesDensePower) {
    for (const char* drift : {"laplace", "shifted-laplace"}) {
        const auto ops = circle_ops(4, drift);
        const double dt = 1.0 / 32;
        const auto op = sfem::build_stepper(ops, sfem::fractional_spec(0.5, 0.5), dt);
        const Eigen::VectorXd a0 = oracle::gaussian_vector(64, 3);
        const auto res = sfem::run(op, 32, a0, {});
        const Eigen::VectorXd expected = dense_zero_noise(ops, dt, 32, a0);
        EXPECT_LT((res.final_state.alpha - expected).norm(), 1e-8 * expected.norm());
    }
    const Surface s = Surface::sphere();
    const auto ops = sfem::assemble_operators(sfem::generate_mesh(s, 1), sfem::builtin_field("example3-a1", s),
                                              sfem::builtin_field("example3-a2", s));
    const Eigen::VectorXd a0 = oracle::gaussian_vector(42, 4);
    const auto res = sfem::run(sfem::build_stepper(ops, sfem::fractional_spec(0.5, 0.5), 0.05), 20, a0, {});
    const Eigen::VectorXd expected = dense_zero_noise(ops, 0.05, 20, a0);
    EXPECT_LT((res.final_state.alpha - expected).norm(), 1e-8 * expected.norm());
}

TEST(Stepper, MassNormNonincreasingWithoutNoise) {
    const auto ops = circle_ops(4);
    const auto op = sfem::build_stepper(ops, sfem::fractional_spec(0.5, 0.5), 0.01);
    const auto res = sfem::run(op, 50, oracle::gaussian_vector(64, 5), {}, sfem::Record::trajectory);
    ASSERT_EQ(res.trajectory.size(), 51u);
    double prev = 1e300;
    for (const auto& a : res.trajectory) {
        const double norm = std::sqrt(a.dot(ops.M * a));
        EXPECT_LE(norm, prev * (1 + 1e-14));
        prev = norm;
    }
}

TEST(Stepper, DeterministicAndLinearInNoise) {
    const auto ops = circle_ops(3);
    const auto op = sfem::build_stepper(ops, sfem::fractional_spec(0.6, 0.5), 0.05);
    const sfem::NoiseStream stream(8, ops.M, 0.05);
    const sfem::NoiseSource src = [&](long n) { return stream.load(0, n); };
    const sfem::NoiseSource scaled = [&](long n) { return Eigen::VectorXd(-2.5 * stream.load(0, n)); };
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(32);
    const auto a = sfem::run(op, 20, zero, src, sfem::Record::trajectory);
    const auto b = sfem::run(op, 20, zero, src, sfem::Record::trajectory);
    const auto c = sfem::run(op, 20, zero, scaled, sfem::Record::trajectory);
    for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
        EXPECT_EQ(a.trajectory[i], b.trajectory[i]);
        EXPECT_LE((c.trajectory[i] + 2.5 * a.trajectory[i]).norm(), 1e-12 * std::max(1.0, a.trajectory[i].norm()));
    }
}

TEST(Stepper, MeanZero) {
    const auto ops = circle_ops(2);
    const auto op = sfem::build_stepper(ops, sfem::fractional_spec(0.5, 0.5), 0.1);
    const sfem::NoiseStream stream(10, ops.M, 0.1);
    const int n = 1000;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(16);
    std::vector<double> norms;
    for (int r = 0; r < n; ++r) {
        const auto res = sfem::run(op, 10, Eigen::VectorXd::Zero(16), [&](long s) { return stream.load(r, s); });
        mean += res.final_state.alpha;
        norms.push_back(std::sqrt(res.final_state.alpha.dot(ops.M * res.final_state.alpha)));
    }
    mean /= n;
    double avg = 0, var = 0;
    for (double x : norms) avg += x / n;
    for (double x : norms) var += (x - avg) * (x - avg) / (n - 1);
    EXPECT_LE(std::sqrt(mean.dot(ops.M * mean)), 4 * std::sqrt(var) / std::sqrt(double(n)));
}

TEST(Stepper, FinalFractionalMatchesPerStepForGammaOne) {
    // three-vertex mesh: equilateral triangle inscribed in the circle
    const Surface circle = Surface::circle();
    std::vector<sfem::Point> v;
    for (int i = 0; i < 3; ++i) v.emplace_back(std::cos(2 * std::numbers::pi * i / 3), std::sin(2 * std::numbers::pi * i / 3), 0);
    const sfem::SurfaceMesh tri(circle, 0, v, {0, 1, 1, 2, 2, 0});
    const auto ops = sfem::assemble_operators(tri, sfem::builtin_field("laplace", circle),
                                              sfem::builtin_field("shifted-laplace", circle));
    const double dt = 0.125;
    const auto per_step = sfem::build_stepper(ops, sfem::fractional_spec(1, 0.5), dt);
    const auto plain = sfem::build_stepper(ops, sfem::fractional_spec(0, 0.5), dt);
    const sfem::NoiseStream stream(12, ops.M, dt);
    const sfem::NoiseSource src = [&](long n) { return stream.load(3, n); };
    const auto a = sfem::run(per_step, 8, Eigen::VectorXd::Zero(3), src);
    const auto b = sfem::run(plain, 8, Eigen::VectorXd::Zero(3), src);
    const Eigen::VectorXd final = sfem::apply_fractional_final(ops, sfem::fractional_spec(1, 0.5), b.final_state.alpha);
    EXPECT_LE((final - a.final_state.alpha).norm(), 1e-8 * a.final_state.alpha.norm());
    // gamma = 0 is the identity
    EXPECT_EQ(sfem::apply_fractional_final(ops, sfem::fractional_spec(0, 0.5), b.final_state.alpha), b.final_state.alpha);
}

TEST(Stepper, FinalFractionalMatchesPerStepForFractionalGamma) {
    const auto ops = circle_ops(3);
    const double dt = 1.0 / 16;
    const auto per_step = sfem::build_stepper(ops, sfem::fractional_spec(0.4, 0.5), dt);
    const auto plain = sfem::build_stepper(ops, sfem::fractional_spec(0, 0.5), dt);
    const sfem::NoiseStream stream(13, ops.M, dt);
    const sfem::NoiseSource src = [&](long n) { return stream.load(0, n); };
    const auto a = sfem::run(per_step, 16, Eigen::VectorXd::Zero(32), src);
    const auto b = sfem::run(plain, 16, Eigen::VectorXd::Zero(32), src);
    const Eigen::VectorXd final = sfem::apply_fractional_final(ops, sfem::fractional_spec(0.4, 0.5), b.final_state.alpha);
    EXPECT_LE((final - a.final_state.alpha).norm(), 1e-8 * a.final_state.alpha.norm());
}

TEST(Stepper, FinalFractionalRequiresCommutingFields) {
    const Surface s = Surface::sphere();
    const auto ops = sfem::assemble_operators(sfem::generate_mesh(s, 0), sfem::builtin_field("example3-a1", s),
                                              sfem::builtin_field("example3-a2", s));
    EXPECT_THROW(sfem::apply_fractional_final(ops, sfem::fractional_spec(0.5, 0.5), Eigen::VectorXd::Zero(12)),
                 sfem::ContractError);
}

TEST(Stepper, NonFiniteStateReportsStep) {
    const auto op = sfem::build_stepper(circle_ops(1), sfem::fractional_spec(1, 0.5), 0.1);
    Eigen::VectorXd bad = Eigen::VectorXd::Zero(8);
    bad[2] = std::nan("");
    try {
        op.step({bad, 7}, {});
        FAIL() << "expected NumericalError";
    } catch (const sfem::NumericalError& e) {
        EXPECT_EQ(e.step, 7);
    }
    EXPECT_THROW(sfem::steps_for(1.0, 0.3), sfem::ParameterError);
    EXPECT_EQ(sfem::steps_for(1.0, std::exp2(-10)), 1024);
}
