// memwave: spectral simulator for wave/plate equations with viscoelastic
// memory, time-varying delayed velocity feedback, and a power source term.
//
// Verbs:
//   validate   check a config: kernel hypotheses, admissibility, smallness
//   run        simulate and write trace.csv / report.json / config.json
//   sweep      run one whitelisted parameter over a list of values
//   fit        re-fit the decay rate of an existing trace.csv
//   constants  estimate the semigroup constants (M, omega) alone
//
// Exit codes: 0 success, 2 validation failure, 3 divergence, 4 I/O error.

#include <CLI11.hpp>

#include "memwave/memwave.hpp"

int main(int argc, char** argv) {
    CLI::App app{"spectral viscoelastic wave simulator with delayed feedback"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", trace_path, parameter;
    std::vector<double> values;
    bool force = false;
    int threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    double fit_window = 0.5;
    std::uint64_t seed = 0;
    bool seed_set = false;

    auto* validate = app.add_subcommand("validate", "validate a run configuration");
    validate->add_option("config", config_path, "config file (JSON, comments allowed)")
        ->required();

    auto* run = app.add_subcommand("run", "simulate one configuration");
    run->add_option("config", config_path)->required();
    run->add_option("--out", out_dir, "output directory (default: out)");
    run->add_flag("--force", force, "run even if validation fails");
    run->add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
        seed_set = true;
    });

    auto* sweep = app.add_subcommand("sweep", "run a parameter sweep");
    sweep->add_option("config", config_path)->required();
    sweep->add_option("--parameter", parameter, "one of k0|sigma|tau|amplitude|n_modes|dt")
        ->required();
    sweep->add_option("--values", values, "list of parameter values")->required();
    sweep->add_option("--out", out_dir);
    sweep->add_option("--threads", threads, "concurrent runs");
    sweep->add_flag("--force", force);

    auto* fit = app.add_subcommand("fit", "fit a decay rate to an existing trace.csv");
    fit->add_option("trace", trace_path, "trace.csv produced by run")->required();
    fit->add_option("--window", fit_window, "trailing fit-window fraction (default 0.5)");

    auto* constants = app.add_subcommand("constants", "estimate semigroup constants");
    constants->add_option("config", config_path)->required();

    CLI11_PARSE(app, argc, argv);

    if (validate->parsed()) return memwave::cmd_validate(config_path);
    if (run->parsed())
        return memwave::cmd_run(config_path, out_dir, force,
                                seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt);
    if (sweep->parsed())
        return memwave::cmd_sweep(config_path, parameter, values, out_dir, threads, force);
    if (fit->parsed()) return memwave::cmd_fit(trace_path, fit_window);
    if (constants->parsed()) return memwave::cmd_constants(config_path);
    return 1;
}
