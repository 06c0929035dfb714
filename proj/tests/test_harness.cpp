#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "sfem/harness.hpp"

using sfem::StudyConfig;
using sfem::Surface;

namespace {

StudyConfig small_config() {
    StudyConfig c;
    c.surface = Surface::circle();
    c.gammas = {0.75};
    c.reference_level = 5;
    c.reference_dt = std::exp2(-8);
    c.coarse_levels = {2, 3, 4};
    c.coarse_dts = {std::exp2(-6), std::exp2(-8)};
    c.realizations = 3;
    c.seed = 4;
    return c;
}

std::string csv(const sfem::ConvergenceReport& r, bool summary) {
    std::ostringstream out;
    summary ? sfem::write_summary_csv(r, out) : sfem::write_records_csv(r, out);
    return out.str();
}

}  // namespace

TEST(RelativeError, HandValues) {
    const auto mesh = sfem::generate_mesh(Surface::circle(), 2);
    const auto a = sfem::coarse_to_fine_matrix(mesh, mesh);
    sfem::SparseMatrix m(16, 16);
    for (int i = 0; i < 16; ++i) m.insert(i, i) = 0.5 + i;
    Eigen::VectorXd ref = Eigen::VectorXd::Zero(16);
    ref[0] = 1.0;
    EXPECT_EQ(sfem::relative_error(ref, ref, a, m), 0.0);
    EXPECT_DOUBLE_EQ(sfem::relative_error(Eigen::VectorXd::Zero(16), ref, a, m), 1.0);
    Eigen::VectorXd coarse = ref;
    coarse[0] = 1.0 + 1e-3;
    EXPECT_NEAR(sfem::relative_error(coarse, ref, a, m), 1e-3, 1e-15);
    EXPECT_THROW(sfem::relative_error(coarse, Eigen::VectorXd::Zero(16), a, m), sfem::ParameterError);
}

TEST(FitRate, Examples) {
    EXPECT_NEAR(sfem::fit_rate({{0.25, 0.25}, {0.125, 0.125}}).slope, 1.0, 1e-14);
    std::vector<std::pair<double, double>> quad;
    for (int e = 2; e <= 5; ++e) quad.emplace_back(std::exp2(-e), std::exp2(-2 * e));
    const auto fit = sfem::fit_rate(quad);
    EXPECT_NEAR(fit.slope, 2.0, 1e-12);
    EXPECT_NEAR(fit.r2, 1.0, 1e-12);
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::pair<double, double>> pts;
        for (int e = 2; e <= 7; ++e) pts.emplace_back(std::exp2(-e), 3.0 * std::pow(std::exp2(-e), 1.5) * (1 + u(gen)));
        const double s = sfem::fit_rate(pts).slope;
        EXPECT_GE(s, 1.3);
        EXPECT_LE(s, 1.7);
    }
    EXPECT_THROW(sfem::fit_rate({{0.5, 0.0}, {0.25, 0.1}}), sfem::ParameterError);
    EXPECT_THROW(sfem::fit_rate({{0.5, 0.1}, {0.5, 0.2}}), sfem::ParameterError);
}

TEST(TheoreticalRate, Envelope) {
    auto r = sfem::theoretical_rate(0.25, 2);
    EXPECT_DOUBLE_EQ(r.space, 0.5);
    EXPECT_DOUBLE_EQ(r.time, 0.25);
    r = sfem::theoretical_rate(0.75, 1);
    EXPECT_DOUBLE_EQ(r.space, 2.0);
    EXPECT_DOUBLE_EQ(r.time, 1.0);
    r = sfem::theoretical_rate(1.0, 2);
    EXPECT_DOUBLE_EQ(r.space, 2.0);
    EXPECT_DOUBLE_EQ(r.time, 1.0);
    EXPECT_DOUBLE_EQ(sfem::theoretical_rate(0.0, 1).space, 0.5);
    EXPECT_THROW(sfem::theoretical_rate(0.0, 2), sfem::ParameterError);
    EXPECT_THROW(sfem::theoretical_rate(1.2, 1), sfem::ParameterError);
}

TEST(Study, CoarseEqualsReferenceGivesZeroError) {
    StudyConfig c = small_config();
    c.coarse_levels = {5};
    c.coarse_dts = {c.reference_dt};
    for (auto mode : {sfem::FractionalMode::final_time, sfem::FractionalMode::per_step}) {
        c.fractional = mode;
        const auto report = sfem::run_study(c);
        ASSERT_EQ(report.records.size(), 3u);
        for (const auto& rec : report.records) {
            EXPECT_FALSE(rec.failed);
            EXPECT_LE(rec.rel_error, 1e-12);
        }
    }
}

TEST(Study, RecordsAreOrderedAndComplete) {
    StudyConfig c = small_config();
    c.gammas = {0.5, 0.25};
    const auto report = sfem::run_study(c);
    ASSERT_EQ(report.records.size(), 2u * 3 * 2 * 3);
    for (std::size_t i = 1; i < report.records.size(); ++i) {
        const auto& a = report.records[i - 1];
        const auto& b = report.records[i];
        EXPECT_LE(std::tie(a.gamma, a.level, a.dt, a.realization), std::tie(b.gamma, b.level, b.dt, b.realization));
    }
    for (const auto& rec : report.records) {
        EXPECT_GT(rec.rel_error, 0.0);
        EXPECT_FALSE(rec.failed);
    }
    EXPECT_EQ(report.space_fits.size(), 2u);
    EXPECT_EQ(report.time_fits.size(), 2u);
    EXPECT_EQ(report.coupling, "coupled");
}

TEST(Study, PerStepAndFinalAgreeForGammaOne) {
    StudyConfig c = small_config();
    c.gammas = {1.0};
    c.fractional = sfem::FractionalMode::final_time;
    const auto a = sfem::run_study(c);
    c.fractional = sfem::FractionalMode::per_step;
    const auto b = sfem::run_study(c);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_NEAR(a.records[i].rel_error, b.records[i].rel_error, 1e-8);
}

TEST(Study, DeterministicAcrossThreadCounts) {
    StudyConfig c = small_config();
    const auto a = sfem::run_study(c);
    c.threads = 3;
    const auto b = sfem::run_study(c);
    EXPECT_EQ(csv(a, false), csv(b, false));
    EXPECT_EQ(csv(a, true), csv(b, true));
}

TEST(Study, IndependentModeRuns) {
    StudyConfig c = small_config();
    c.coupling = sfem::CouplingMode::independent;
    const auto report = sfem::run_study(c);
    EXPECT_EQ(report.coupling, "independent");
    for (const auto& rec : report.records) EXPECT_TRUE(std::isfinite(rec.rel_error));
}

TEST(Study, CsvFormats) {
    const auto report = sfem::run_study(small_config());
    const std::string records = csv(report, false), summary = csv(report, true);
    EXPECT_EQ(records.substr(0, records.find('\n')), "gamma,h,dt,realization,rel_error");
    EXPECT_EQ(summary.substr(0, summary.find('\n')), "gamma,axis,scale,median_error,fitted_slope,theoretical_slope");
    EXPECT_NE(summary.find(",space,"), std::string::npos);
    EXPECT_NE(summary.find(",time,"), std::string::npos);
}

TEST(Study, ValidationNamesField) {
    auto expect_field = [](StudyConfig c, const std::string& field) {
        try {
            c.validate();
            FAIL() << "expected ConfigError for " << field;
        } catch (const sfem::ConfigError& e) {
            EXPECT_EQ(std::string(e.what()).rfind(field, 0), 0u) << e.what();
        }
    };
    StudyConfig c = small_config();
    c.coarse_levels = {2, 6};
    expect_field(c, "coarse_levels");
    c = small_config();
    c.coarse_dts = {std::exp2(-9)};
    expect_field(c, "coarse_dts");
    c = small_config();
    c.coarse_dts = {3 * std::exp2(-8)};
    expect_field(c, "coarse_dts");
    c = small_config();
    c.gammas = {1.5};
    expect_field(c, "gammas");
    c = small_config();
    c.drift_field = "example3-a1";
    c.noise_field = "example3-a2";
    expect_field(c, "fractional");
    c = small_config();
    c.realizations = 0;
    expect_field(c, "realizations");
}

TEST(Study, Example1MiniSpaceRate) {
    StudyConfig c;
    c.surface = Surface::circle();
    c.gammas = {0.75};
    c.reference_level = 9;
    c.reference_dt = std::exp2(-14);
    c.coarse_levels = {4, 5, 6, 7};
    c.coarse_dts = {std::exp2(-14)};
    c.realizations = 8;
    const auto report = sfem::run_study(c);
    const double slope = report.space_fits.at(0.75).slope;
    EXPECT_GE(slope, 1.6);
    EXPECT_LE(slope, 2.2);
    for (const auto& w : report.warnings) ADD_FAILURE() << w;
}
