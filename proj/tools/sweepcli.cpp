// Command line front end: config-driven equilibrium / balayage / exhaustion
// runs, the property verifier, and the refinement comparison against the
// closed-form ball oracle.
//
// Exit codes: 0 all assertions pass, 2 config error, 3 convergence error,
// 4 assertion failure.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "sweep/errors.hpp"
#include "sweep/scenario.hpp"
#include "sweep/version.hpp"

int main(int argc, char** argv) {
    CLI::App app{"discrete inner balayage toolkit"};
    app.set_version_flag("--version", sweep::version_string);
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
    std::optional<int> levels;
    bool perturb = false;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "scenario config file (JSON)")->required();
        sub->add_option("--out", out_dir, "output directory (default: out)");
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--tol", tol, "override the solver tolerance");
    };

    CLI::App* cmd_equilibrium =
        app.add_subcommand("equilibrium", "equilibrium measure and capacity of the region");
    add_common(cmd_equilibrium);

    CLI::App* cmd_balayage =
        app.add_subcommand("balayage", "sweep the source measure onto the region");
    add_common(cmd_balayage);

    CLI::App* cmd_exhaust =
        app.add_subcommand("exhaust", "sweep along a growing chain of subregions");
    add_common(cmd_exhaust);

    CLI::App* cmd_verify =
        app.add_subcommand("verify", "run the full invariant battery on the scenario");
    add_common(cmd_verify);
    cmd_verify->add_flag("--perturb", perturb,
                         "negative control: verify a deliberately scaled sweep (must fail)");

    CLI::App* cmd_oracle =
        app.add_subcommand("oracle-compare", "refinement study against the ball closed forms");
    add_common(cmd_oracle);
    cmd_oracle->add_option("--levels", levels, "override the refinement level count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        sweep::ScenarioConfig cfg = sweep::load_scenario_config(config_path);
        if (seed) cfg.seed = *seed;
        if (tol) {
            if (!(*tol > 0.0)) throw sweep::ConfigError("--tol must be positive");
            cfg.solver.tol = *tol;
        }
        if (levels && *levels < 2)
            throw sweep::ConfigError("--levels must be >= 2");

        if (app.got_subcommand(cmd_equilibrium))
            return sweep::runners::run_equilibrium(cfg, out_dir);
        if (app.got_subcommand(cmd_balayage))
            return sweep::runners::run_balayage(cfg, out_dir);
        if (app.got_subcommand(cmd_exhaust))
            return sweep::runners::run_exhaust(cfg, out_dir);
        if (app.got_subcommand(cmd_verify))
            return sweep::runners::run_verify(cfg, out_dir, perturb);
        return sweep::runners::run_oracle_compare(cfg, out_dir, levels);
    } catch (const sweep::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sweep::ParameterError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sweep::UnsupportedError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sweep::ResourceLimitError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sweep::ConvergenceError& e) {
        std::cerr << "convergence error: " << e.what() << "\n";
        return 3;
    } catch (const sweep::SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
