#include <CLI11.hpp>

#include <iostream>

#include "sfem/commands.hpp"
#include "sfem/config.hpp"

namespace {

// Accepts 2^-k as well as plain decimals.
void number_option(CLI::App* cmd, const std::string& flag, double& target) {
    cmd->add_option_function<std::string>(flag, [&target, flag](const std::string& v) {
           try {
               target = sfem::parse_number(flag, v);
           } catch (const sfem::ConfigError& e) {
               throw CLI::ValidationError(flag, e.what());
           }
       })
        ->default_str(std::to_string(target));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic heat equation on surfaces: meshes, simulations, convergence studies"};
    app.require_subcommand(1);

    sfem::MeshCommand mesh;
    auto* mesh_cmd = app.add_subcommand("mesh", "generate a surface mesh and write it as VTK");
    mesh_cmd->add_option("--surface", mesh.surface, "circle | sphere | deformed-sphere")->capture_default_str();
    mesh_cmd->add_option("--level", mesh.level, "refinement level")->capture_default_str();
    mesh_cmd->add_option("-o,--out", mesh.out, "output VTK file")->required();

    sfem::SimulateCommand sim;
    auto* sim_cmd = app.add_subcommand("simulate", "run one realization and write u(T) and norms");
    sim_cmd->add_option("--surface", sim.surface)->capture_default_str();
    sim_cmd->add_option("--level", sim.level)->capture_default_str();
    sim_cmd->add_option("--drift-field", sim.drift_field, "field for T")->capture_default_str();
    sim_cmd->add_option("--noise-field", sim.noise_field, "field for K")->capture_default_str();
    sim_cmd->add_option("--gamma", sim.gamma)->capture_default_str();
    sim_cmd->add_option("-k,--k", sim.k, "sinc quadrature step")->capture_default_str();
    number_option(sim_cmd, "--dt", sim.dt);
    number_option(sim_cmd, "--t-final", sim.t_final);
    sim_cmd->add_option("--seed", sim.seed)->capture_default_str();
    sim_cmd->add_option("--realization", sim.realization)->capture_default_str();
    sim_cmd->add_flag("--zero-noise", sim.zero_noise, "drop the stochastic forcing");
    sim_cmd->add_option("--initial-value", sim.initial_value, "constant initial coefficient")->capture_default_str();
    sim_cmd->add_option("-o,--out-dir", sim.out_dir)->capture_default_str();
    sim_cmd->add_option("--prefix", sim.prefix, "output file prefix")->capture_default_str();
    sim_cmd->add_option("--dump-rho", sim.dump_rho, "write the standard normal draws to this binary file");
    sim_cmd->add_flag("--dump-matrices", sim.dump_matrices, "write M, T, K as MatrixMarket");

    sfem::ConvergeCommand conv;
    std::uint64_t conv_seed = 0;
    int conv_threads = 0;
    auto* conv_cmd = app.add_subcommand("converge", "run a convergence study from a config file");
    conv_cmd->add_option("config", conv.config_file, "key = value config file")->required();
    conv_cmd->add_option("-o,--out-dir", conv.out_dir)->capture_default_str();
    auto* seed_opt = conv_cmd->add_option("--seed", conv_seed, "overrides the config seed");
    auto* threads_opt = conv_cmd->add_option("--threads", conv_threads, "worker threads (default SFEM_THREADS or 1)");

    sfem::OracleCommand oracle;
    auto* oracle_cmd = app.add_subcommand("oracle", "dense fractional and noise covariance checks");
    oracle_cmd->add_option("--seed", oracle.seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? sfem::exit_ok : sfem::exit_validation;
    }

    if (mesh_cmd->parsed()) return sfem::cmd_mesh(mesh, std::cout, std::cerr);
    if (sim_cmd->parsed()) return sfem::cmd_simulate(sim, std::cout, std::cerr);
    if (conv_cmd->parsed()) {
        if (seed_opt->count()) conv.seed = conv_seed;
        if (threads_opt->count()) conv.threads = conv_threads;
        return sfem::cmd_converge(conv, std::cout, std::cerr);
    }
    if (oracle_cmd->parsed()) return sfem::cmd_oracle(oracle, std::cout, std::cerr);
    return sfem::exit_validation;
}
