#pragma once

// Coupled convergence studies: one fine noise path drives a reference run and
// every coarse (level, dt) run; errors are measured at the final time in the
// reference mass norm after interpolating the coarse solution to the fine mesh.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "sfem/assembly.hpp"
#include "sfem/coefficients.hpp"
#include "sfem/errors.hpp"
#include "sfem/fractional.hpp"
#include "sfem/mesh.hpp"
#include "sfem/noise.hpp"
#include "sfem/stepper.hpp"

namespace sfem {

/// e^2 = (A^T a - a_ref)^T M_ref (A^T a - a_ref) / (a_ref^T M_ref a_ref).
inline double relative_error(const Vector& alpha_coarse, const Vector& alpha_ref, const CouplingOperator& A,
                             const SparseMatrix& M_ref) {
    if (alpha_coarse.size() != A.rows() || alpha_ref.size() != A.cols() || M_ref.rows() != alpha_ref.size())
        throw ParameterError("relative_error: dimension mismatch");
    const double ref_norm2 = alpha_ref.dot(M_ref * alpha_ref);
    if (!(ref_norm2 > 0.0)) throw ParameterError("relative_error: reference solution has zero norm");
    const Vector diff = Vector(A.matrix.transpose() * alpha_coarse) - alpha_ref;
    return std::sqrt(std::max(0.0, diff.dot(M_ref * diff)) / ref_norm2);
}

struct RateFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    double r2 = std::numeric_limits<double>::quiet_NaN();
};

/// Least squares line through (log scale, log error).
inline RateFit fit_rate(const std::vector<std::pair<double, double>>& samples) {
    std::set<double> scales;
    for (const auto& [scale, error] : samples) {
        if (!(error > 0.0)) throw ParameterError("fit_rate: errors must be positive");
        if (!(scale > 0.0)) throw ParameterError("fit_rate: scales must be positive");
        scales.insert(scale);
    }
    if (scales.size() < 2) throw ParameterError("fit_rate: need at least two distinct scales");
    const double n = static_cast<double>(samples.size());
    double sx = 0, sy = 0;
    for (const auto& [scale, error] : samples) {
        sx += std::log(scale);
        sy += std::log(error);
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& [scale, error] : samples) {
        const double dx = std::log(scale) - mx, dy = std::log(error) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return fit;
}

struct TheoreticalRate {
    double space;  ///< supremum of admissible theta
    double time;   ///< theta / 2
};

/// theta_sup = min(2 gamma + 1 - d/2, 2) for gamma in (d/4 - 1/2, 1] and [0, 1].
inline TheoreticalRate theoretical_rate(double gamma, int d) {
    if (!(gamma > d / 4.0 - 0.5) || gamma < 0.0 || gamma > 1.0)
        throw ParameterError("theoretical_rate: gamma outside (d/4 - 1/2, 1] and [0, 1]");
    const double theta = std::min(2.0 * gamma + 1.0 - d / 2.0, 2.0);
    return {theta, theta / 2.0};
}

enum class CouplingMode { coupled, independent };
enum class FractionalMode { final_time, per_step };

struct StudyConfig {
    Surface surface = Surface::circle();
    std::vector<double> gammas{0.75};
    std::optional<double> k = 0.5;  ///< nullopt: choose_k per mesh, capped at k_max
    double k_max = 0.5;
    int reference_level = 9;
    double reference_dt = std::ldexp(1.0, -14);
    std::vector<int> coarse_levels{4, 5, 6, 7};
    std::vector<double> coarse_dts{std::ldexp(1.0, -10)};
    int realizations = 8;
    std::uint64_t seed = 1;
    double t_final = 1.0;
    CouplingMode coupling = CouplingMode::coupled;
    FractionalMode fractional = FractionalMode::final_time;
    std::string drift_field = "laplace";
    std::string noise_field = "shifted-laplace";
    int threads = 1;

    /// Throws ConfigError naming the offending field.
    void validate() const {
        if (gammas.empty()) throw ConfigError("gammas: at least one value required");
        for (double g : gammas)
            if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("gammas: " + std::to_string(g) + " outside [0, 1]");
        if (k && !(*k > 0.0)) throw ConfigError("k: must be positive or 'auto'");
        if (!(k_max > 0.0)) throw ConfigError("k_max: must be positive");
        if (reference_level < 0) throw ConfigError("reference_level: must be >= 0");
        if (!(reference_dt > 0.0)) throw ConfigError("reference_dt: must be positive");
        if (!(t_final > 0.0)) throw ConfigError("t_final: must be positive");
        if (realizations < 1) throw ConfigError("realizations: must be >= 1");
        if (threads < 1) throw ConfigError("threads: must be >= 1");
        if (coarse_levels.empty()) throw ConfigError("coarse_levels: at least one level required");
        if (coarse_dts.empty()) throw ConfigError("coarse_dts: at least one time step required");
        try {
            steps_for(t_final, reference_dt);
        } catch (const ParameterError&) {
            throw ConfigError("reference_dt: does not divide t_final");
        }
        for (int level : coarse_levels) {
            if (level < 0) throw ConfigError("coarse_levels: level " + std::to_string(level) + " is negative");
            if (level > reference_level)
                throw ConfigError("coarse_levels: level " + std::to_string(level) + " is finer than reference_level " +
                                  std::to_string(reference_level));
        }
        for (double dt : coarse_dts) {
            const double ratio = dt / reference_dt;
            const long r = std::lround(ratio);
            if (r < 1)
                throw ConfigError("coarse_dts: " + format_double(dt) + " is finer than reference_dt " +
                                  format_double(reference_dt));
            if (std::abs(ratio - static_cast<double>(r)) > 1e-9 * ratio)
                throw ConfigError("coarse_dts: " + format_double(dt) + " is not an integer multiple of reference_dt");
            try {
                steps_for(t_final, dt);
            } catch (const ParameterError&) {
                throw ConfigError("coarse_dts: " + format_double(dt) + " does not divide t_final");
            }
        }
        const CoefficientField drift = builtin_field_checked(drift_field, "drift_field");
        const CoefficientField noise = builtin_field_checked(noise_field, "noise_field");
        if (fractional == FractionalMode::final_time && !(drift.constant_isotropic && noise.constant_isotropic))
            throw ConfigError("fractional: 'final' requires commuting fields; use 'per_step' for " + drift_field +
                              "/" + noise_field);
    }

    static std::string format_double(double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }

private:
    CoefficientField builtin_field_checked(const std::string& name, const std::string& key) const {
        try {
            return builtin_field(name, surface);
        } catch (const ParameterError& e) {
            throw ConfigError(key + ": " + e.what());
        }
    }
};

struct ConvergenceRecord {
    double gamma = 0.0;
    int level = 0;
    double h = 0.0;
    double dt = 0.0;
    int realization = 0;
    double rel_error = 0.0;
    bool failed = false;
    std::string failure;
};

struct SummaryRow {
    double gamma;
    std::string axis;  ///< "space" or "time"
    double scale;
    double median_error;
    double fitted_slope;
    double theoretical_slope;
};

struct ConvergenceReport {
    std::vector<ConvergenceRecord> records;
    std::vector<SummaryRow> summary;
    std::map<double, RateFit> space_fits;
    std::map<double, RateFit> time_fits;
    std::vector<std::string> warnings;
    std::string coupling;
    std::string fractional;
};

namespace detail {

inline double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

/// Runs job(i) for i in [0, count) on `threads` workers.
template <class Job>
void parallel_for(int count, int threads, Job&& job) {
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int t = 0; t < std::min(threads, count); ++t) {
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Runs a full coarse-vs-reference study. Realizations are independent jobs;
/// records are returned sorted by (gamma, level, dt, realization).
inline ConvergenceReport run_study(const StudyConfig& config) {
    config.validate();
    const Surface& surface = config.surface;
    const int d = surface.dim();
    const CoefficientField drift = builtin_field(config.drift_field, surface);
    const CoefficientField noise_field = builtin_field(config.noise_field, surface);
    const bool final_mode = config.fractional == FractionalMode::final_time;

    // Meshes: index 0 is the reference, 1.. follow coarse_levels.
    std::vector<SurfaceMesh> meshes;
    meshes.push_back(generate_mesh(surface, config.reference_level));
    for (int level : config.coarse_levels) meshes.push_back(generate_mesh(surface, level));
    std::vector<OperatorSet> ops;
    for (const auto& mesh : meshes) ops.push_back(assemble_operators(mesh, drift, noise_field));
    std::vector<CouplingOperator> coupling(meshes.size());
    for (std::size_t m = 1; m < meshes.size(); ++m) coupling[m] = coarse_to_fine_matrix(meshes[m], meshes[0]);

    auto spec_for = [&](double gamma, const SurfaceMesh& mesh) {
        double k = config.k ? *config.k : config.k_max;
        if (!config.k && gamma > 0.0 && mesh.h() < 1.0) k = choose_k(gamma, mesh.h(), config.k_max);
        return fractional_spec(gamma, k);
    };

    // gamma values of the simulated noise paths
    const std::vector<double> path_gammas = final_mode ? std::vector<double>{0.0} : config.gammas;

    // fractional[m][g]: operator applied at the final time (final mode) or per step.
    auto build_fractionals = [&](const std::vector<double>& gammas) {
        std::vector<std::vector<std::shared_ptr<const FractionalOperator>>> out(meshes.size());
        for (std::size_t m = 0; m < meshes.size(); ++m)
            for (double g : gammas)
                out[m].push_back(std::make_shared<const FractionalOperator>(ops[m].M, ops[m].K, spec_for(g, meshes[m])));
        return out;
    };
    const auto path_fractionals = build_fractionals(path_gammas);
    const auto final_fractionals = final_mode ? build_fractionals(config.gammas) : path_fractionals;

    struct CoarseConfig {
        std::size_t mesh;  // index into meshes
        double dt;
        long ratio;
        long steps;
    };
    std::vector<CoarseConfig> coarse;
    for (std::size_t m = 1; m < meshes.size(); ++m)
        for (double dt : config.coarse_dts)
            coarse.push_back({m, dt, std::lround(dt / config.reference_dt), steps_for(config.t_final, dt)});

    // steppers[p] for the reference, coarse_steppers[c][p] per coarse config
    std::vector<StepOperator> ref_steppers;
    for (std::size_t p = 0; p < path_gammas.size(); ++p)
        ref_steppers.emplace_back(ops[0], path_fractionals[0][p], config.reference_dt);
    std::vector<std::vector<StepOperator>> coarse_steppers(coarse.size());
    for (std::size_t c = 0; c < coarse.size(); ++c)
        for (std::size_t p = 0; p < path_gammas.size(); ++p)
            coarse_steppers[c].emplace_back(ops[coarse[c].mesh], path_fractionals[coarse[c].mesh][p], coarse[c].dt);

    const NoiseStream ref_noise(config.seed, ops[0].M, config.reference_dt);
    std::vector<std::unique_ptr<NoiseStream>> own_noise(coarse.size());
    if (config.coupling == CouplingMode::independent)
        for (std::size_t c = 0; c < coarse.size(); ++c)
            own_noise[c] = std::make_unique<NoiseStream>(detail::splitmix64(config.seed ^ (0xC0A85E00ULL + c)),
                                                         ops[coarse[c].mesh].M, coarse[c].dt);

    const long ref_steps = steps_for(config.t_final, config.reference_dt);
    std::set<long> ratios;
    for (const auto& c : coarse) ratios.insert(c.ratio);

    std::vector<std::vector<ConvergenceRecord>> per_realization(config.realizations);
    detail::parallel_for(config.realizations, config.threads, [&](int r) {
        const auto realization = static_cast<std::uint64_t>(r);
        std::vector<StateVector> ref_state(path_gammas.size(), StateVector{Vector::Zero(ops[0].size()), 0});
        std::vector<std::vector<StateVector>> coarse_state(coarse.size());
        for (std::size_t c = 0; c < coarse.size(); ++c)
            coarse_state[c].assign(path_gammas.size(), StateVector{Vector::Zero(ops[coarse[c].mesh].size()), 0});
        std::vector<std::string> coarse_failure(coarse.size());
        std::string ref_failure;
        std::map<long, Vector> accumulated;
        for (long ratio : ratios) accumulated[ratio] = Vector::Zero(ops[0].size());

        for (long n = 0; n < ref_steps && ref_failure.empty(); ++n) {
            const Vector load = ref_noise.load(realization, static_cast<std::uint64_t>(n));
            try {
                for (std::size_t p = 0; p < path_gammas.size(); ++p) ref_state[p] = ref_steppers[p].step(ref_state[p], load);
            } catch (const std::exception& e) {
                ref_failure = e.what();
                break;
            }
            if (config.coupling == CouplingMode::coupled)
                for (auto& [ratio, acc] : accumulated) acc += load;
            for (long ratio : ratios) {
                if ((n + 1) % ratio != 0) continue;
                std::map<std::size_t, Vector> coarse_loads;  // per mesh, for this ratio
                for (std::size_t c = 0; c < coarse.size(); ++c) {
                    if (coarse[c].ratio != ratio || !coarse_failure[c].empty()) continue;
                    Vector coarse_load;
                    if (config.coupling == CouplingMode::coupled) {
                        auto it = coarse_loads.find(coarse[c].mesh);
                        if (it == coarse_loads.end())
                            it = coarse_loads.emplace(coarse[c].mesh, coarsen_space(coupling[coarse[c].mesh], accumulated[ratio])).first;
                        coarse_load = it->second;
                    } else {
                        coarse_load = own_noise[c]->load(realization, static_cast<std::uint64_t>((n + 1) / ratio - 1));
                    }
                    try {
                        for (std::size_t p = 0; p < path_gammas.size(); ++p)
                            coarse_state[c][p] = coarse_steppers[c][p].step(coarse_state[c][p], coarse_load);
                    } catch (const std::exception& e) {
                        coarse_failure[c] = e.what();
                    }
                }
                if (config.coupling == CouplingMode::coupled) accumulated[ratio].setZero();
            }
        }

        auto& out = per_realization[r];
        for (std::size_t g = 0; g < config.gammas.size(); ++g) {
            const double gamma = config.gammas[g];
            const std::size_t p = final_mode ? 0 : g;
            std::optional<Vector> ref_final;
            std::string ref_error = ref_failure;
            if (ref_error.empty()) {
                try {
                    ref_final = final_mode ? apply_fractional_final(ops[0], *final_fractionals[0][g], ref_state[p].alpha)
                                           : ref_state[p].alpha;
                } catch (const std::exception& e) {
                    ref_error = e.what();
                }
            }
            for (std::size_t c = 0; c < coarse.size(); ++c) {
                ConvergenceRecord rec;
                rec.gamma = gamma;
                rec.level = meshes[coarse[c].mesh].level();
                rec.h = meshes[coarse[c].mesh].h();
                rec.dt = coarse[c].dt;
                rec.realization = r;
                std::string failure = !ref_error.empty() ? "reference: " + ref_error : coarse_failure[c];
                if (failure.empty()) {
                    try {
                        const std::size_t m = coarse[c].mesh;
                        const Vector coarse_final = final_mode
                                                        ? apply_fractional_final(ops[m], *final_fractionals[m][g], coarse_state[c][p].alpha)
                                                        : coarse_state[c][p].alpha;
                        rec.rel_error = relative_error(coarse_final, *ref_final, coupling[m], ops[0].M);
                        if (!std::isfinite(rec.rel_error)) failure = "non-finite relative error";
                    } catch (const std::exception& e) {
                        failure = e.what();
                    }
                }
                if (!failure.empty()) {
                    rec.failed = true;
                    rec.failure = failure;
                    rec.rel_error = std::numeric_limits<double>::quiet_NaN();
                }
                out.push_back(std::move(rec));
            }
        }
    });

    ConvergenceReport report;
    report.coupling = config.coupling == CouplingMode::coupled ? "coupled" : "independent";
    report.fractional = final_mode ? "final" : "per_step";
    for (auto& recs : per_realization)
        for (auto& rec : recs) report.records.push_back(std::move(rec));
    std::stable_sort(report.records.begin(), report.records.end(), [](const auto& a, const auto& b) {
        return std::tie(a.gamma, a.level, a.dt, a.realization) < std::tie(b.gamma, b.level, b.dt, b.realization);
    });

    // medians per (gamma, level, dt) over non-failed realizations
    std::map<std::tuple<double, int, double>, std::vector<double>> groups;
    std::map<int, double> level_h;
    for (const auto& rec : report.records) {
        level_h[rec.level] = rec.h;
        if (rec.failed) {
            report.warnings.push_back("failed record gamma=" + StudyConfig::format_double(rec.gamma) +
                                      " level=" + std::to_string(rec.level) + " dt=" +
                                      StudyConfig::format_double(rec.dt) + " realization=" +
                                      std::to_string(rec.realization) + ": " + rec.failure);
            continue;
        }
        groups[{rec.gamma, rec.level, rec.dt}].push_back(rec.rel_error);
    }
    auto median_of = [&](double gamma, int level, double dt) {
        auto it = groups.find({gamma, level, dt});
        return it == groups.end() ? std::numeric_limits<double>::quiet_NaN() : detail::median(it->second);
    };

    const double finest_dt = *std::min_element(config.coarse_dts.begin(), config.coarse_dts.end());
    const int finest_level = *std::max_element(config.coarse_levels.begin(), config.coarse_levels.end());
    std::set<int> levels(config.coarse_levels.begin(), config.coarse_levels.end());
    std::set<double> dts(config.coarse_dts.begin(), config.coarse_dts.end());

    for (double gamma : config.gammas) {
        TheoreticalRate theory{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
        try {
            theory = theoretical_rate(gamma, d);
        } catch (const ParameterError&) {
        }
        const std::string tag = "gamma=" + StudyConfig::format_double(gamma);

        auto summarize = [&](const std::string& axis, const std::vector<std::pair<double, double>>& points,
                             double theoretical, std::map<double, RateFit>& fits) {
            std::vector<std::pair<double, double>> usable;
            for (const auto& pt : points)
                if (pt.second > 0.0 && std::isfinite(pt.second)) usable.push_back(pt);
            RateFit fit;
            std::set<double> distinct;
            for (const auto& pt : usable) distinct.insert(pt.first);
            if (distinct.size() >= 2) {
                fit = fit_rate(usable);
                fits[gamma] = fit;
                if (std::isfinite(theoretical) && fit.slope > theoretical + 0.5)
                    report.warnings.push_back(tag + " " + axis + " slope " + StudyConfig::format_double(fit.slope) +
                                              " exceeds theoretical " + StudyConfig::format_double(theoretical) +
                                              " + 0.5");
            }
            // points are ordered coarse -> fine; the last two refinements should not increase the error
            for (std::size_t i = points.size() >= 3 ? points.size() - 2 : 1; i < points.size(); ++i)
                if (points[i].second > points[i - 1].second)
                    report.warnings.push_back(tag + " " + axis + ": median error increased from scale " +
                                              StudyConfig::format_double(points[i - 1].first) + " to " +
                                              StudyConfig::format_double(points[i].first));
            for (const auto& [scale, err] : points)
                report.summary.push_back({gamma, axis, scale, err, fit.slope, theoretical});
        };

        std::vector<std::pair<double, double>> space_points;
        for (int level : levels) space_points.emplace_back(level_h[level], median_of(gamma, level, finest_dt));
        std::vector<std::pair<double, double>> time_points;
        for (auto it = dts.rbegin(); it != dts.rend(); ++it)
            time_points.emplace_back(*it, median_of(gamma, finest_level, *it));
        if (levels.size() >= 2) summarize("space", space_points, theory.space, report.space_fits);
        if (dts.size() >= 2) summarize("time", time_points, theory.time, report.time_fits);
    }
    return report;
}

namespace detail {
inline std::string csv_number(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
}  // namespace detail

inline void write_records_csv(const ConvergenceReport& report, std::ostream& out) {
    out << "gamma,h,dt,realization,rel_error\n";
    for (const auto& rec : report.records)
        out << detail::csv_number(rec.gamma) << ',' << detail::csv_number(rec.h) << ',' << detail::csv_number(rec.dt)
            << ',' << rec.realization << ',' << detail::csv_number(rec.rel_error) << '\n';
}

inline void write_summary_csv(const ConvergenceReport& report, std::ostream& out) {
    out << "gamma,axis,scale,median_error,fitted_slope,theoretical_slope\n";
    for (const auto& row : report.summary)
        out << detail::csv_number(row.gamma) << ',' << row.axis << ',' << detail::csv_number(row.scale) << ','
            << detail::csv_number(row.median_error) << ',' << detail::csv_number(row.fitted_slope) << ','
            << detail::csv_number(row.theoretical_slope) << '\n';
}

}  // namespace sfem
