#pragma once

// Implementations of the `sfem` subcommands. Each returns a process exit
// code: 0 success, 1 validation error, 2 numerical failure.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <ostream>
#include <string>
#include <vector>

#include "sfem/assembly.hpp"
#include "sfem/coefficients.hpp"
#include "sfem/config.hpp"
#include "sfem/errors.hpp"
#include "sfem/fractional.hpp"
#include "sfem/harness.hpp"
#include "sfem/io.hpp"
#include "sfem/mesh.hpp"
#include "sfem/noise.hpp"
#include "sfem/stepper.hpp"

namespace sfem {

enum ExitCode : int { exit_ok = 0, exit_validation = 1, exit_numerical = 2 };

/// Default worker count from SFEM_THREADS, else 1.
inline int default_threads() {
    if (const char* env = std::getenv("SFEM_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

namespace detail {

inline double theory_or_nan(double gamma, int d, bool space) {
    try {
        const TheoreticalRate r = theoretical_rate(gamma, d);
        return space ? r.space : r.time;
    } catch (const ParameterError&) {
        return std::nan("");
    }
}

inline std::string join_path(const std::string& dir, const std::string& file) {
    return (std::filesystem::path(dir) / file).string();
}

inline void ensure_directory(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw std::runtime_error("cannot create output directory '" + dir + "'");
}

}  // namespace detail

struct MeshCommand {
    std::string surface = "sphere";
    int level = 0;
    std::string out;  ///< VTK file path
};

inline int cmd_mesh(const MeshCommand& cmd, std::ostream& log, std::ostream& err) {
    try {
        const SurfaceMesh mesh = generate_mesh(Surface::from_name(cmd.surface), cmd.level);
        const MeshMetrics m = mesh_metrics(mesh);
        write_vtk_file(cmd.out, mesh);
        log << std::setprecision(10) << "surface " << cmd.surface << " level " << cmd.level << "\n"
            << "h " << m.h << "\nN_h " << mesh.num_vertices() << "\nsimplices " << mesh.num_simplices()
            << "\nquasi_uniformity_ratio " << m.quasi_uniformity_ratio << "\ntotal_measure " << m.total_measure
            << "\n";
        return exit_ok;
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << "\n";
        return exit_validation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_numerical;
    }
}

struct SimulateCommand {
    std::string surface = "sphere";
    int level = 3;
    std::string drift_field = "example3-a1";
    std::string noise_field = "example3-a2";
    double gamma = 0.5;
    double k = 0.5;
    double dt = 1.0 / 64;
    double t_final = 1.0;
    std::uint64_t seed = 1;
    std::uint64_t realization = 0;
    bool zero_noise = false;
    double initial_value = 0.0;  ///< constant alpha^0
    std::string out_dir = ".";
    std::string prefix = "u";
    std::string dump_rho;      ///< optional flat binary rho record
    bool dump_matrices = false;
};

struct SimulateResult {
    Vector final_alpha;
    std::vector<double> mass_norms;  ///< ||alpha^n||_M, n = 0..steps
};

/// Runs one realization of the scheme with per-step fractional noise.
inline SimulateResult simulate(const SimulateCommand& cmd) {
    const Surface surface = Surface::from_name(cmd.surface);
    const SurfaceMesh mesh = generate_mesh(surface, cmd.level);
    const OperatorSet ops = assemble_operators(mesh, builtin_field(cmd.drift_field, surface),
                                               builtin_field(cmd.noise_field, surface));
    const long steps = steps_for(cmd.t_final, cmd.dt);
    const StepOperator stepper(ops, fractional_spec(cmd.gamma, cmd.k), cmd.dt);
    std::optional<NoiseStream> noise;
    if (!cmd.zero_noise) noise.emplace(cmd.seed, ops.M, cmd.dt);

    SimulateResult result;
    std::vector<Vector> rhos;
    StateVector state{Vector::Constant(ops.size(), cmd.initial_value), 0};
    auto mass_norm = [&](const Vector& a) { return std::sqrt(std::max(0.0, a.dot(ops.M * a))); };
    result.mass_norms.push_back(mass_norm(state.alpha));
    for (long n = 0; n < steps; ++n) {
        Vector load;
        if (noise) {
            NoiseIncrement inc = noise->sample(cmd.realization, static_cast<std::uint64_t>(n), cmd.dt);
            if (!cmd.dump_rho.empty()) rhos.push_back(inc.rho);
            load = std::move(inc.load);
        }
        state = stepper.step(state, load);
        result.mass_norms.push_back(mass_norm(state.alpha));
    }
    result.final_alpha = state.alpha;

    if (!cmd.out_dir.empty()) {
        detail::ensure_directory(cmd.out_dir);
        write_vtk_file(detail::join_path(cmd.out_dir, cmd.prefix + ".vtk"), mesh, {{"u", result.final_alpha}});
        std::ofstream csv(detail::join_path(cmd.out_dir, cmd.prefix + "_norms.csv"));
        if (!csv) throw std::runtime_error("cannot write norms CSV in '" + cmd.out_dir + "'");
        csv << "step,time,mass_norm\n";
        for (std::size_t n = 0; n < result.mass_norms.size(); ++n)
            csv << n << ',' << detail::csv_number(static_cast<double>(n) * cmd.dt) << ','
                << detail::csv_number(result.mass_norms[n]) << '\n';
        if (cmd.dump_matrices) {
            for (const auto& [name, mat] : {std::pair{"M", &ops.M}, std::pair{"T", &ops.T}, std::pair{"K", &ops.K}}) {
                std::ofstream mm(detail::join_path(cmd.out_dir, cmd.prefix + "_" + name + ".mtx"));
                write_matrix_market(mm, *mat);
            }
        }
    }
    if (!cmd.dump_rho.empty()) {
        std::ofstream bin(cmd.dump_rho, std::ios::binary);
        if (!bin) throw std::runtime_error("cannot open '" + cmd.dump_rho + "' for writing");
        write_rho_record(bin, rhos);
    }
    return result;
}

inline int cmd_simulate(const SimulateCommand& cmd, std::ostream& log, std::ostream& err) {
    try {
        const SimulateResult r = simulate(cmd);
        log << std::setprecision(10) << "steps " << r.mass_norms.size() - 1 << "\nfinal_mass_norm "
            << r.mass_norms.back() << "\n";
        return exit_ok;
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << " at step " << e.step << "\n";
        return exit_numerical;
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << "\n";
        return exit_validation;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return exit_validation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_numerical;
    }
}

struct ConvergeCommand {
    std::string config_file;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

inline int cmd_converge(const ConvergeCommand& cmd, std::ostream& log, std::ostream& err) {
    StudyConfig config;
    try {
        KeyValues kv = parse_key_values_file(cmd.config_file);
        if (cmd.seed) kv["seed"] = std::to_string(*cmd.seed);
        if (cmd.threads) kv["threads"] = std::to_string(*cmd.threads);
        if (!kv.count("threads")) kv["threads"] = std::to_string(default_threads());
        config = study_config_from(kv);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_validation;
    }
    try {
        const ConvergenceReport report = run_study(config);
        detail::ensure_directory(cmd.out_dir);
        std::ofstream records(detail::join_path(cmd.out_dir, "records.csv"));
        std::ofstream summary(detail::join_path(cmd.out_dir, "summary.csv"));
        if (!records || !summary) throw std::runtime_error("cannot write CSV files in '" + cmd.out_dir + "'");
        write_records_csv(report, records);
        write_summary_csv(report, summary);
        log << "coupling " << report.coupling << ", fractional " << report.fractional << "\n";
        for (const auto& [gamma, fit] : report.space_fits)
            log << "gamma " << gamma << " space slope " << fit.slope << " (theory "
                << detail::theory_or_nan(gamma, config.surface.dim(), true) << ")\n";
        for (const auto& [gamma, fit] : report.time_fits)
            log << "gamma " << gamma << " time slope " << fit.slope << " (theory "
                << detail::theory_or_nan(gamma, config.surface.dim(), false) << ")\n";
        for (const auto& w : report.warnings) log << "warning: " << w << "\n";
        return exit_ok;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_numerical;
    }
}

struct OracleCommand {
    std::uint64_t seed = 7;
};

/// Dense-oracle and noise-covariance validation; prints one PASS/FAIL line per check.
inline int cmd_oracle(const OracleCommand& cmd, std::ostream& log, std::ostream& err) {
    bool all = true;
    auto report = [&](bool ok, const std::string& what) {
        log << (ok ? "PASS " : "FAIL ") << what << "\n";
        all = all && ok;
    };
    try {
        const Surface circle = Surface::circle();
        auto quadrature_error = [&](int level, double k) {
            const SurfaceMesh mesh = generate_mesh(circle, level);
            const OperatorSet ops = assemble_operators(mesh, builtin_field("laplace", circle),
                                                       builtin_field("shifted-laplace", circle));
            std::mt19937_64 gen(cmd.seed);
            std::normal_distribution<double> normal;
            Vector b(ops.size());
            for (auto& x : b) x = normal(gen);
            const Vector exact = dense_fractional_oracle(Eigen::MatrixXd(ops.M), Eigen::MatrixXd(ops.K), 0.75, b);
            const Vector approx = apply_fractional(ops.M, ops.K, sinc_nodes(0.75, k), b);
            return (approx - exact).norm() / exact.norm();
        };
        const double e05 = quadrature_error(4, 0.5), e045 = quadrature_error(4, 0.45), e09 = quadrature_error(4, 0.9);
        std::ostringstream line;
        line << std::setprecision(3) << "sinc vs dense oracle, circle N=64, gamma=0.75: err(0.9)=" << e09
             << " err(0.5)=" << e05 << " err(0.45)=" << e045;
        report(e05 <= 1e-3, line.str());
        report(e045 <= e09 / 50.0, "exponential convergence err(0.45) <= err(0.9)/50");

        const SurfaceMesh mesh = generate_mesh(circle, 1);
        const SparseMatrix M = assemble_mass(mesh);
        const double dt = 0.01;
        const NoiseStream stream(cmd.seed, M, dt);
        const int samples = 10000;
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(M.rows(), M.cols());
        for (int s = 0; s < samples; ++s) {
            const Vector load = stream.load(0, static_cast<std::uint64_t>(s));
            cov += load * load.transpose();
        }
        cov /= samples;
        const Eigen::MatrixXd expected = dt * Eigen::MatrixXd(M);
        const double cov_err = (cov - expected).norm() / expected.norm();
        std::ostringstream cl;
        cl << std::setprecision(3) << "load covariance vs dt M, circle N=8, 1e4 samples: rel err " << cov_err;
        report(cov_err <= 0.05, cl.str());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_numerical;
    }
    return all ? exit_ok : exit_numerical;
}

}  // namespace sfem
