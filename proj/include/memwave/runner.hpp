#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "memwave/config.hpp"
#include "memwave/integrator.hpp"
#include "memwave/theory.hpp"

namespace memwave {

// Configuration-driven front door shared by the CLI and the test suites:
// build a RunSetup from a RunConfig, run it, and write the trace/report
// files. Exit codes follow the CLI contract: 0 success, 2 validation
// failure, 3 divergence, 4 I/O error.

inline SpectralProblem make_problem(const RunConfig& cfg) {
    return SpectralProblem(cfg.kind, cfg.length, cfg.n_modes, cfg.n_grid, cfg.support_lo,
                           cfg.support_hi, cfg.sigma);
}

struct ValidationSummary {
    bool config_ok = true;
    bool kernel_ok = true; // the only hard model check
    std::optional<KernelReport> kernel_report;
    std::vector<std::string> notes;
};

inline ValidationSummary validate_model(RunConfig& cfg) {
    ValidationSummary s;
    s.notes = cfg.notes;
    if (cfg.kernel) {
        s.kernel_report = validate_kernel(*cfg.kernel);
        s.kernel_ok = s.kernel_report->usable();
    } else {
        s.kernel_ok = true; // memory off: nothing to check
    }
    return s;
}

/// Assemble the runnable setup. Requires a validated kernel unless the
/// memory term is off (callers pass force=true to override).
inline RunSetup build_setup(const RunConfig& cfg, bool force = false) {
    RunSetup setup{make_problem(cfg)};
    setup.opts.memory_off = cfg.memory_off;
    setup.opts.delay_off = cfg.delay_off;
    setup.opts.source_off = cfg.source_off;
    setup.opts.stop_on_lb_loss = cfg.stop_on_lb_loss;
    setup.dt = cfg.dt;
    setup.t_final = cfg.t_final;
    setup.sample_stride = cfg.sample_stride;

    if (!cfg.memory_off) {
        if (!cfg.kernel) throw ConfigError("memory term enabled but no kernel given");
        MemoryKernel kernel = *cfg.kernel;
        KernelReport rep = validate_kernel(kernel);
        if (!rep.usable() && !force)
            throw ConfigError("kernel fails hypothesis " + rep.failure_reason());
        setup.kernel = kernel;
        setup.s_max = choose_history_span(kernel);
        if (cfg.history_mode == "auto")
            setup.history_mode =
                kernel.is_tabulated() ? HistoryMode::Transport : HistoryMode::PronyODE;
        else if (cfg.history_mode == "transport")
            setup.history_mode = HistoryMode::Transport;
        else {
            if (kernel.is_tabulated())
                throw ConfigError("tabulated kernels require the transport history mode");
            setup.history_mode = HistoryMode::PronyODE;
        }
    }

    setup.u0 = make_shape(setup.problem, cfg.u0_spec);
    setup.u1 = make_shape(setup.problem, cfg.u1_spec);
    setup.history_sampler = make_history_sampler(setup.u0, cfg.history_profile);
    if (!cfg.delay_off) {
        setup.tau = cfg.tau;
        setup.coeff = cfg.coeff;
        setup.g_sampler =
            make_g_sampler(setup.problem, cfg.g_profile, setup.u0, cfg.history_profile);
    }
    return setup;
}

// --------------------------------------------------------------------------
// output files

inline void write_trace_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "t,E_total,E_kinetic,E_elastic,E_source,E_delay,E_memory,norm_U,cbar_t,lb_holds\n";
    char buf[512];
    for (const auto& s : traj.samples) {
        std::snprintf(buf, sizeof buf,
                      "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", s.t,
                      s.energy.total(), s.energy.kinetic, s.energy.elastic, s.energy.source,
                      s.energy.delay_window, s.energy.memory, s.norm_U, s.cbar_t,
                      s.lb_holds ? 1 : 0);
        out << buf;
    }
}

inline json kernel_report_json(const KernelReport& r) {
    return {{"mu0", r.mu0},
            {"mu_tilde", r.mu_tilde},
            {"delta", r.delta},
            {"i_smooth_integrable", r.smooth_integrable},
            {"ii_positive_at_zero", r.positive_at_zero},
            {"iii_mass_below_one", r.mass_below_one},
            {"iv_exponential_decay", r.exponential_decay},
            {"usable", r.usable()}};
}

inline json theory_report_json(const TheoryReport& r) {
    return {{"M", r.M},
            {"omega", r.omega},
            {"omega_prime", r.omega_prime},
            {"gamma", std::isfinite(r.gamma) ? json(r.gamma) : json("inf")},
            {"C_star", r.c_star},
            {"b", r.b},
            {"mu_tilde", r.mu_tilde},
            {"C_h", r.c_h},
            {"sigma", r.sigma},
            {"tau", r.tau},
            {"admissible", r.admissible},
            {"N", r.n_iter},
            {"cbar_N_tau", r.cbar_n_tau},
            {"rho", std::isfinite(r.rho) ? json(r.rho) : json("inf")},
            {"rho_from_h", std::isfinite(r.rho_from_h) ? json(r.rho_from_h) : json("inf")},
            {"rho_from_lipschitz",
             std::isfinite(r.rho_from_lipschitz) ? json(r.rho_from_lipschitz) : json("inf")},
            {"C_rho", std::isfinite(r.c_rho) ? json(r.c_rho) : json("inf")},
            {"L_of_C_rho", r.l_of_c_rho},
            {"lipschitz_budget", r.lipschitz_budget},
            {"predicted_rate", r.predicted_rate},
            {"certified_rate", r.certified_rate},
            {"M_tilde", r.m_tilde},
            {"constants_applicable", r.constants_applicable},
            {"data_norm", r.data_norm},
            {"data_deficit",
             std::isfinite(r.data_deficit) ? json(r.data_deficit) : json("inf")},
            {"data_within_rho", r.data_within_rho},
            {"prefactor", r.prefactor},
            {"theory_applicable", r.applicable()},
            {"constants_provenance", "empirical-constants"}};
}

struct RunArtifacts {
    Trajectory trajectory;
    std::optional<TheoryReport> theory;
    std::optional<FitResult> fit;
    std::string fit_refusal;
    std::optional<KernelReport> kernel_report;
    double lemma_bound_violation = 0.0;
    bool lemma_bound_ok = true;
    std::vector<std::string> notes;
};

/// Run a resolved config end to end: simulate, estimate constants, assemble
/// the theory report and decay fit.
inline RunArtifacts execute_run(const RunConfig& cfg, bool force = false,
                                bool with_theory = true) {
    RunArtifacts art;
    art.notes = cfg.notes;
    RunSetup setup = build_setup(cfg, force);
    if (setup.kernel) {
        MemoryKernel k = *setup.kernel;
        art.kernel_report = validate_kernel(k);
    }
    art.trajectory = simulate(setup);

    std::vector<std::pair<double, double>> trace;
    trace.reserve(art.trajectory.samples.size());
    for (const auto& s : art.trajectory.samples) trace.emplace_back(s.t, s.energy.total());

    try {
        art.fit = fit_decay(trace, cfg.fit_window);
    } catch (const FitRefusal& e) {
        art.fit_refusal = e.what();
    }

    if (!trace.empty() && trace.front().second > 0.0) {
        const DelayCoefficient& c = cfg.delay_off ? DelayCoefficient::zero() : cfg.coeff;
        art.lemma_bound_violation =
            lemma_bound_max_violation(trace, c, setup.problem.b(), setup.tau);
        art.lemma_bound_ok =
            art.lemma_bound_violation <= 1e-6 + 10.0 * setup.dt * setup.dt;
    }

    if (with_theory && setup.kernel && !cfg.memory_off) {
        SemigroupOptions sopts;
        sopts.ensemble = cfg.ensemble;
        sopts.dt = cfg.constants_dt > 0.0 ? cfg.constants_dt : cfg.dt;
        sopts.horizon = cfg.constants_horizon;
        sopts.seed = cfg.seed;
        sopts.safety = cfg.constants_safety;
        SemigroupEstimate sg = estimate_semigroup_constants(setup.problem, *setup.kernel, sopts);
        const DelayCoefficient& c = cfg.delay_off ? DelayCoefficient::zero() : cfg.coeff;
        double tau = cfg.delay_off ? sopts.dt : setup.tau; // tau only matters with delay on
        AdmissibilityResult adm =
            cfg.omega_prime
                ? check_admissibility(c, tau, setup.problem.b(), sg.M, sg.omega, *cfg.omega_prime)
                : auto_admissibility(c, tau, setup.problem.b(), sg.M, sg.omega);
        double c_h = cfg.source_off ? 0.0 : estimate_h_constant(setup.problem, cfg.seed);
        SimState st0 = make_initial_state(setup);
        EnergyBreakdown e0 = energy(setup.problem, setup.kernel->mu_tilde(), c,
                                    !cfg.source_off, st0);
        double pre = decay_prefactor(setup.problem, st0, c, sg.omega, state_norm(e0));
        art.theory = smallness_report(setup.problem, setup.kernel->mu_tilde(), c, tau, sg, adm,
                                      c_h, initial_data_norms(e0), pre);
    }
    return art;
}

inline json report_json(const RunConfig& cfg, const RunArtifacts& art) {
    json rep;
    rep["termination"] = to_string(art.trajectory.termination);
    rep["t_end"] = art.trajectory.t_end;
    rep["n_samples"] = art.trajectory.samples.size();
    if (art.trajectory.t_lb_lost)
        rep["t_lower_bound_lost"] = *art.trajectory.t_lb_lost;
    if (art.kernel_report) rep["kernel"] = kernel_report_json(*art.kernel_report);
    if (art.theory) rep["theory"] = theory_report_json(*art.theory);
    if (art.fit) {
        rep["fit"] = {{"C", art.fit->c},
                      {"beta", art.fit->beta},
                      {"residual_rms", art.fit->residual_rms},
                      {"window_start", art.fit->window_start},
                      {"n_fitted", art.fit->n_fitted}};
    } else {
        rep["fit"] = {{"refused", art.fit_refusal}};
    }
    rep["lemma_bound"] = {{"max_violation", art.lemma_bound_violation},
                          {"ok", art.lemma_bound_ok}};
    rep["notes"] = art.notes;
    rep["seed"] = cfg.seed;
    return rep;
}

// --------------------------------------------------------------------------
// CLI verbs (thin wrappers used by tools/ and by the process-level tests)

/// Admissibility + smallness verdicts without running the trajectory.
inline RunArtifacts execute_run_validate_only(const RunConfig& cfg, std::ostream& out) {
    RunArtifacts art;
    RunSetup setup = build_setup(cfg);
    if (setup.kernel && !cfg.memory_off) {
        SemigroupOptions sopts;
        sopts.ensemble = cfg.ensemble;
        sopts.dt = cfg.constants_dt > 0.0 ? cfg.constants_dt : cfg.dt;
        sopts.horizon = cfg.constants_horizon;
        sopts.seed = cfg.seed;
        sopts.safety = cfg.constants_safety;
        SemigroupEstimate sg = estimate_semigroup_constants(setup.problem, *setup.kernel, sopts);
        out << "semigroup: M=" << sg.M << " omega=" << sg.omega << " (ensemble " << sg.ensemble
            << ", spread [" << sg.omega_min << ", " << sg.omega_max << "])\n";
        const DelayCoefficient& c = cfg.delay_off ? DelayCoefficient::zero() : cfg.coeff;
        double tau = cfg.delay_off ? sopts.dt : setup.tau;
        AdmissibilityResult adm =
            cfg.omega_prime
                ? check_admissibility(c, tau, setup.problem.b(), sg.M, sg.omega, *cfg.omega_prime)
                : auto_admissibility(c, tau, setup.problem.b(), sg.M, sg.omega);
        out << "admissibility: " << (adm.admissible ? "admissible" : "NOT admissible")
            << " gamma=" << adm.gamma << " C*=" << adm.c_star << " omega'=" << adm.omega_prime
            << "\n";
        double c_h = cfg.source_off ? 0.0 : estimate_h_constant(setup.problem, cfg.seed);
        SimState st0 = make_initial_state(setup);
        EnergyBreakdown e0 =
            energy(setup.problem, setup.kernel->mu_tilde(), c, !cfg.source_off, st0);
        double pre = decay_prefactor(setup.problem, st0, c, sg.omega, state_norm(e0));
        TheoryReport rep = smallness_report(setup.problem, setup.kernel->mu_tilde(), c, tau, sg,
                                            adm, c_h, initial_data_norms(e0), pre);
        out << "smallness: N=" << rep.n_iter << " rho=" << rep.rho
            << " data_norm=" << rep.data_norm
            << " data_within_rho=" << (rep.data_within_rho ? "yes" : "NO")
            << " certified_rate=" << rep.certified_rate << "\n";
        out << "theory: " << (rep.applicable() ? "applicable" : "not-applicable")
            << " (empirical-constants)\n";
        art.theory = rep;
    }
    return art;
}

inline int cmd_validate(const std::string& config_path, std::ostream& out = std::cout) {
    RunConfig cfg;
    try {
        cfg = parse_config(config_path);
    } catch (const IoError& e) {
        out << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        out << "invalid config: " << e.what() << "\n";
        return 2;
    }
    for (const auto& n : cfg.notes) out << "note: " << n << "\n";
    ValidationSummary sum = validate_model(cfg);
    if (sum.kernel_report) {
        const auto& r = *sum.kernel_report;
        out << "kernel: mu0=" << r.mu0 << " mu_tilde=" << r.mu_tilde << " delta=" << r.delta
            << "\n";
        out << "  (i) smooth+integrable: " << (r.smooth_integrable ? "pass" : "FAIL") << "\n";
        out << "  (ii) mu(0) > 0:        " << (r.positive_at_zero ? "pass" : "FAIL") << "\n";
        out << "  (iii) mass < 1:        " << (r.mass_below_one ? "pass" : "FAIL") << "\n";
        out << "  (iv) exp. decay:       " << (r.exponential_decay ? "pass" : "FAIL") << "\n";
        if (!r.usable()) {
            out << "kernel unusable, reason " << r.failure_reason() << "\n";
            return 2;
        }
    }
    try {
        execute_run_validate_only(cfg, out);
    } catch (const std::exception& e) {
        out << "invalid config: " << e.what() << "\n";
        return 2;
    }
    out << "validation ok\n";
    return 0;
}

inline int cmd_run(const std::string& config_path, const std::string& out_dir, bool force,
                   std::optional<std::uint64_t> seed_override, std::ostream& out = std::cout) {
    RunConfig cfg;
    try {
        cfg = parse_config(config_path);
    } catch (const IoError& e) {
        out << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        out << "invalid config: " << e.what() << "\n";
        return 2;
    }
    if (seed_override) cfg.seed = *seed_override;
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        out << "io error: cannot create '" << out_dir << "': " << ec.message() << "\n";
        return 4;
    }
    RunArtifacts art;
    try {
        art = execute_run(cfg, force);
    } catch (const IoError& e) {
        out << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        out << "invalid config: " << e.what() << "\n";
        return 2;
    }
    try {
        write_trace_csv(out_dir + "/trace.csv", art.trajectory);
        std::ofstream cf(out_dir + "/config.json");
        cf << resolved_json(cfg).dump(2) << "\n";
        std::ofstream rf(out_dir + "/report.json");
        rf << report_json(cfg, art).dump(2) << "\n";
    } catch (const IoError& e) {
        out << "io error: " << e.what() << "\n";
        return 4;
    }
    out << "termination: " << to_string(art.trajectory.termination)
        << " t_end=" << art.trajectory.t_end << "\n";
    if (art.fit)
        out << "fit: beta=" << art.fit->beta << " C=" << art.fit->c
            << " residual_rms=" << art.fit->residual_rms << "\n";
    else
        out << "fit refused: " << art.fit_refusal << "\n";
    return art.trajectory.termination == Termination::Completed ? 0 : 3;
}

inline bool sweep_parameter_known(const std::string& p) {
    return p == "k0" || p == "sigma" || p == "tau" || p == "amplitude" || p == "n_modes" ||
           p == "dt";
}

inline void scale_shape(ShapeSpec& s, double factor) {
    if (auto* m = std::get_if<ShapeMode>(&s)) m->amplitude *= factor;
    if (auto* b = std::get_if<ShapeBump>(&s)) b->amplitude *= factor;
    // csv shapes scale at load time; not supported in sweeps
}

/// Apply one whitelisted override and re-resolve the config.
inline void apply_override(RunConfig& cfg, const std::string& parameter, double value) {
    if (parameter == "k0") {
        auto* c = std::get_if<DelayCoefficient::Constant>(&cfg.coeff.form());
        if (!c) throw ConfigError("sweep over k0 needs a constant delay coefficient");
        cfg.coeff = DelayCoefficient::constant(value);
    } else if (parameter == "sigma") {
        cfg.sigma = value;
    } else if (parameter == "tau") {
        cfg.tau = value;
    } else if (parameter == "amplitude") {
        scale_shape(cfg.u0_spec, value);
        scale_shape(cfg.u1_spec, value);
        if (auto* g = std::get_if<GConstant>(&cfg.g_profile)) scale_shape(g->shape, value);
    } else if (parameter == "n_modes") {
        cfg.n_modes = static_cast<int>(value);
        if (!cfg.n_grid_explicit) cfg.n_grid = 0;
    } else if (parameter == "dt") {
        cfg.dt_requested = value;
    } else {
        throw ConfigError("unknown sweep parameter '" + parameter + "'");
    }
    cfg.notes.clear();
    resolve_config(cfg);
}

inline int cmd_sweep(const std::string& config_path, const std::string& parameter,
                     const std::vector<double>& values, const std::string& out_dir, int threads,
                     bool force, std::ostream& out = std::cout) {
    if (values.empty()) {
        out << "invalid sweep: empty values list\n";
        return 2;
    }
    if (!sweep_parameter_known(parameter)) {
        out << "invalid sweep: unknown parameter '" << parameter
            << "' (expected k0|sigma|tau|amplitude|n_modes|dt)\n";
        return 2;
    }
    RunConfig base;
    try {
        base = parse_config(config_path);
    } catch (const IoError& e) {
        out << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        out << "invalid config: " << e.what() << "\n";
        return 2;
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        out << "io error: cannot create '" << out_dir << "'\n";
        return 4;
    }

    struct Row {
        double value;
        std::string beta = "nan", predicted_rate = "nan";
        bool lemma_ok = false;
        std::string terminated = "error";
    };
    std::vector<Row> rows(values.size());

    auto run_one = [&](std::size_t i) {
        Row& row = rows[i];
        row.value = values[i];
        char sub[64];
        std::snprintf(sub, sizeof sub, "%s_%02zu", parameter.c_str(), i);
        std::string dir = out_dir + "/" + sub;
        try {
            RunConfig cfg = base;
            apply_override(cfg, parameter, values[i]);
            std::filesystem::create_directories(dir);
            RunArtifacts art = execute_run(cfg, force);
            write_trace_csv(dir + "/trace.csv", art.trajectory);
            std::ofstream cf(dir + "/config.json");
            cf << resolved_json(cfg).dump(2) << "\n";
            std::ofstream rf(dir + "/report.json");
            rf << report_json(cfg, art).dump(2) << "\n";
            char buf[64];
            if (art.fit) {
                std::snprintf(buf, sizeof buf, "%.17g", art.fit->beta);
                row.beta = buf;
            }
            if (art.theory) {
                std::snprintf(buf, sizeof buf, "%.17g", art.theory->predicted_rate);
                row.predicted_rate = buf;
            }
            row.lemma_ok = art.lemma_bound_ok;
            row.terminated = to_string(art.trajectory.termination);
        } catch (const std::exception& e) {
            row.terminated = std::string("error: ") + e.what();
        }
    };

    if (threads < 1) threads = 1;
    threads = std::min<int>(threads, static_cast<int>(values.size()));
    // static schedule: value i runs on thread i % threads; runs are isolated
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t]() {
            for (std::size_t i = static_cast<std::size_t>(t); i < values.size();
                 i += static_cast<std::size_t>(threads))
                run_one(i);
        });
    }
    for (auto& th : pool) th.join();

    std::ofstream sf(out_dir + "/summary.csv");
    if (!sf) {
        out << "io error: cannot write summary.csv\n";
        return 4;
    }
    sf << "value,beta,predicted_rate,lemma_bound_ok,terminated\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g", r.value);
        sf << buf << "," << r.beta << "," << r.predicted_rate << "," << (r.lemma_ok ? 1 : 0)
           << "," << r.terminated << "\n";
    }
    out << "sweep complete: " << values.size() << " runs\n";
    return 0;
}

inline int cmd_fit(const std::string& trace_path, double window_fraction,
                   std::ostream& out = std::cout) {
    std::vector<std::vector<double>> cols;
    try {
        cols = read_csv(trace_path,
                        "t,E_total,E_kinetic,E_elastic,E_source,E_delay,E_memory,norm_U,cbar_t,"
                        "lb_holds");
    } catch (const IoError& e) {
        out << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        out << "invalid trace: " << e.what() << "\n";
        return 2;
    }
    std::vector<std::pair<double, double>> trace;
    for (std::size_t i = 0; i < cols[0].size(); ++i) trace.emplace_back(cols[0][i], cols[1][i]);
    try {
        FitResult fit = fit_decay(trace, window_fraction);
        out << "fit: beta=" << fit.beta << " C=" << fit.c << " residual_rms=" << fit.residual_rms
            << " window_start=" << fit.window_start << " n=" << fit.n_fitted << "\n";
        return 0;
    } catch (const FitRefusal& e) {
        out << "fit refused: " << e.what() << "\n";
        return 2;
    }
}

inline int cmd_constants(const std::string& config_path, std::ostream& out = std::cout) {
    RunConfig cfg;
    try {
        cfg = parse_config(config_path);
    } catch (const IoError& e) {
        out << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        out << "invalid config: " << e.what() << "\n";
        return 2;
    }
    try {
        ValidationSummary sum = validate_model(cfg);
        if (!sum.kernel_ok || !cfg.kernel) {
            out << "constants need a usable kernel\n";
            return 2;
        }
        SpectralProblem problem = make_problem(cfg);
        SemigroupOptions sopts;
        sopts.ensemble = cfg.ensemble;
        sopts.dt = cfg.constants_dt > 0.0 ? cfg.constants_dt : cfg.dt;
        sopts.horizon = cfg.constants_horizon;
        sopts.seed = cfg.seed;
        sopts.safety = cfg.constants_safety;
        SemigroupEstimate sg = estimate_semigroup_constants(problem, *cfg.kernel, sopts);
        out << "M=" << sg.M << " omega=" << sg.omega << " ensemble=" << sg.ensemble
            << " omega_spread=[" << sg.omega_min << ", " << sg.omega_max << "]\n";
        return 0;
    } catch (const std::exception& e) {
        out << "estimation failed: " << e.what() << "\n";
        return 2;
    }
}

} // namespace memwave
