#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memwave/delay.hpp"
#include "memwave/errors.hpp"
#include "memwave/io.hpp"
#include "memwave/kernels.hpp"
#include "memwave/profiles.hpp"
#include "memwave/spectral.hpp"

namespace memwave {

using nlohmann::json;

// Run configuration: a single JSON file (comments allowed, unknown keys
// rejected). The parsed struct keeps both the requested and the resolved
// values (dt rounding against tau, defaulted grid size) plus notes about
// every adjustment, and can re-serialize itself so each output directory
// carries the exact configuration that produced it.
struct RunConfig {
    // problem
    ProblemKind kind = ProblemKind::Wave;
    double length = M_PI;
    int n_modes = 8;
    int n_grid = 0; // resolved
    bool n_grid_explicit = false;
    double support_lo = 0.0, support_hi = 0.0;
    double sigma = 2.0;
    // kernel
    std::optional<MemoryKernel> kernel;
    std::string kernel_table_path; // nonempty iff tabulated
    // delay
    double tau = 0.0;
    DelayCoefficient coeff = DelayCoefficient::zero();
    GProfile g_profile = GZero{};
    // initial data
    ShapeSpec u0_spec = ShapeZero{};
    ShapeSpec u1_spec = ShapeZero{};
    HistoryProfile history_profile = HistoryFrozen{};
    // integrator
    double dt_requested = 1e-3;
    double dt = 1e-3; // resolved
    double t_final = 1.0;
    long sample_stride = 1;
    std::string history_mode = "auto"; // auto | prony | transport
    bool memory_off = false, delay_off = false, source_off = false;
    bool stop_on_lb_loss = false;
    // diagnostics
    int ensemble = 20;
    double fit_window = 0.5;
    std::optional<double> omega_prime; // absent: choose automatically
    double constants_dt = 0.0;         // 0: use integrator dt
    double constants_horizon = 0.0;    // 0: use 20/delta
    double constants_safety = 1.1;     // slack on the ensemble sup defining M
    // reproducibility
    std::uint64_t seed = 12345;

    std::vector<std::string> notes;
    std::string source_path;
};

namespace cfgdetail {

[[noreturn]] inline void fail(const std::string& ctx, const std::string& msg) {
    throw ConfigError("config: " + ctx + ": " + msg);
}

inline void expect_keys(const json& j, const std::string& ctx,
                        std::initializer_list<const char*> required,
                        std::initializer_list<const char*> optional) {
    if (!j.is_object()) fail(ctx, "expected an object");
    for (const char* k : required)
        if (!j.contains(k)) fail(ctx, std::string("missing key '") + k + "'");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : required) known = known || it.key() == k;
        for (const char* k : optional) known = known || it.key() == k;
        if (!known) fail(ctx, "unknown key '" + it.key() + "'");
    }
}

inline double num(const json& j, const std::string& ctx, const char* key) {
    if (!j.at(key).is_number()) fail(ctx, std::string("'") + key + "' must be a number");
    return j.at(key).get<double>();
}

inline long integer(const json& j, const std::string& ctx, const char* key) {
    if (!j.at(key).is_number_integer()) fail(ctx, std::string("'") + key + "' must be an integer");
    return j.at(key).get<long>();
}

inline bool boolean(const json& j, const std::string& ctx, const char* key, bool fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_boolean()) fail(ctx, std::string("'") + key + "' must be a boolean");
    return j.at(key).get<bool>();
}

inline std::string str(const json& j, const std::string& ctx, const char* key) {
    if (!j.at(key).is_string()) fail(ctx, std::string("'") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

inline MemoryKernel parse_kernel(const json& j, const std::string& base_path,
                                 std::string& table_path_out) {
    const std::string ctx = "kernel";
    if (!j.is_object() || !j.contains("form")) fail(ctx, "needs a 'form' key");
    std::string form = str(j, ctx, "form");
    if (form == "exp") {
        expect_keys(j, ctx, {"form", "a", "d"}, {});
        return MemoryKernel::exponential(num(j, ctx, "a"), num(j, ctx, "d"));
    }
    if (form == "prony") {
        expect_keys(j, ctx, {"form", "terms"}, {});
        if (!j.at("terms").is_array() || j.at("terms").empty())
            fail(ctx, "'terms' must be a nonempty array of [a, d] pairs");
        std::vector<PronyTerm> terms;
        for (const auto& t : j.at("terms")) {
            if (!t.is_array() || t.size() != 2 || !t[0].is_number() || !t[1].is_number())
                fail(ctx, "each Prony term must be a numeric [a, d] pair");
            terms.push_back({t[0].get<double>(), t[1].get<double>()});
        }
        return MemoryKernel::prony(std::move(terms));
    }
    if (form == "table") {
        expect_keys(j, ctx, {"form", "path"}, {});
        std::string path = resolve_path(base_path, str(j, ctx, "path"));
        table_path_out = path;
        auto cols = read_csv(path, "s,mu,dmu");
        return MemoryKernel::tabulated(cols[0], cols[1], cols[2]);
    }
    fail(ctx, "unknown form '" + form + "' (expected exp|prony|table)");
}

inline DelayCoefficient parse_coefficient(const json& j) {
    const std::string ctx = "delay.coefficient";
    if (!j.is_object() || !j.contains("form")) fail(ctx, "needs a 'form' key");
    std::string form = str(j, ctx, "form");
    if (form == "const") {
        expect_keys(j, ctx, {"form", "k0"}, {});
        return DelayCoefficient::constant(num(j, ctx, "k0"));
    }
    if (form == "expdecay") {
        expect_keys(j, ctx, {"form", "k0", "rate"}, {});
        return DelayCoefficient::exponential_decay(num(j, ctx, "k0"), num(j, ctx, "rate"));
    }
    if (form == "pwc") {
        expect_keys(j, ctx, {"form", "breakpoints", "values"}, {});
        std::vector<double> bp = j.at("breakpoints").get<std::vector<double>>();
        std::vector<double> vals = j.at("values").get<std::vector<double>>();
        return DelayCoefficient::piecewise(std::move(bp), std::move(vals));
    }
    if (form == "onoff") {
        expect_keys(j, ctx, {"form", "amplitude", "period", "duty"}, {});
        return DelayCoefficient::onoff(num(j, ctx, "amplitude"), num(j, ctx, "period"),
                                       num(j, ctx, "duty"));
    }
    fail(ctx, "unknown form '" + form + "' (expected const|expdecay|pwc|onoff)");
}

inline ShapeSpec parse_shape(const json& j, const std::string& ctx,
                             const std::string& base_path) {
    if (!j.is_object() || !j.contains("profile")) fail(ctx, "needs a 'profile' key");
    std::string p = str(j, ctx, "profile");
    if (p == "zero") {
        expect_keys(j, ctx, {"profile"}, {});
        return ShapeZero{};
    }
    if (p == "mode") {
        expect_keys(j, ctx, {"profile", "k", "amplitude"}, {});
        return ShapeMode{static_cast<int>(integer(j, ctx, "k")), num(j, ctx, "amplitude")};
    }
    if (p == "bump") {
        expect_keys(j, ctx, {"profile", "center", "width", "amplitude"}, {});
        return ShapeBump{num(j, ctx, "center"), num(j, ctx, "width"), num(j, ctx, "amplitude")};
    }
    if (p == "csv") {
        expect_keys(j, ctx, {"profile", "path"}, {});
        return ShapeCsv{resolve_path(base_path, str(j, ctx, "path"))};
    }
    fail(ctx, "unknown profile '" + p + "' (expected zero|mode|bump|csv)");
}

inline json shape_json(const ShapeSpec& s) {
    if (std::holds_alternative<ShapeZero>(s)) return {{"profile", "zero"}};
    if (const auto* m = std::get_if<ShapeMode>(&s))
        return {{"profile", "mode"}, {"k", m->k}, {"amplitude", m->amplitude}};
    if (const auto* b = std::get_if<ShapeBump>(&s))
        return {{"profile", "bump"},
                {"center", b->center},
                {"width", b->width},
                {"amplitude", b->amplitude}};
    return {{"profile", "csv"}, {"path", std::get<ShapeCsv>(s).path}};
}

inline json coeff_json(const DelayCoefficient& c) {
    if (const auto* k = std::get_if<DelayCoefficient::Constant>(&c.form()))
        return {{"form", "const"}, {"k0", k->k0}};
    if (const auto* e = std::get_if<DelayCoefficient::ExponentialDecay>(&c.form()))
        return {{"form", "expdecay"}, {"k0", e->k0}, {"rate", e->rate}};
    if (const auto* p = std::get_if<DelayCoefficient::PiecewiseConstant>(&c.form()))
        return {{"form", "pwc"}, {"breakpoints", p->breakpoints}, {"values", p->values}};
    const auto& o = std::get<DelayCoefficient::OnOff>(c.form());
    return {{"form", "onoff"}, {"amplitude", o.amplitude}, {"period", o.period}, {"duty", o.duty}};
}

} // namespace cfgdetail

inline RunConfig parse_config_json(const json& root, const std::string& source_path) {
    using namespace cfgdetail;
    RunConfig cfg;
    cfg.source_path = source_path;
    expect_keys(root, "top level", {"problem", "initial", "integrator"},
                {"kernel", "delay", "diagnostics", "seed"});

    const json& pj = root.at("problem");
    expect_keys(pj, "problem", {"kind", "length", "n_modes", "feedback_support", "sigma"},
                {"n_grid"});
    std::string kind = str(pj, "problem", "kind");
    if (kind == "wave")
        cfg.kind = ProblemKind::Wave;
    else if (kind == "plate")
        cfg.kind = ProblemKind::Plate;
    else
        fail("problem", "kind must be 'wave' or 'plate'");
    cfg.length = num(pj, "problem", "length");
    cfg.n_modes = static_cast<int>(integer(pj, "problem", "n_modes"));
    if (pj.contains("n_grid")) {
        cfg.n_grid = static_cast<int>(integer(pj, "problem", "n_grid"));
        cfg.n_grid_explicit = true;
    }
    const json& fs = pj.at("feedback_support");
    if (!fs.is_array() || fs.size() != 2 || !fs[0].is_number() || !fs[1].is_number())
        fail("problem", "feedback_support must be [o1, o2]");
    cfg.support_lo = fs[0].get<double>();
    cfg.support_hi = fs[1].get<double>();
    cfg.sigma = num(pj, "problem", "sigma");

    const json& ij = root.at("integrator");
    expect_keys(ij, "integrator", {"dt", "t_final"},
                {"sample_stride", "history_mode", "memory_off", "delay_off", "source_off",
                 "stop_on_lb_loss"});
    cfg.dt_requested = num(ij, "integrator", "dt");
    cfg.t_final = num(ij, "integrator", "t_final");
    if (ij.contains("sample_stride")) cfg.sample_stride = integer(ij, "integrator", "sample_stride");
    if (cfg.sample_stride < 1) fail("integrator", "sample_stride must be >= 1");
    if (ij.contains("history_mode")) {
        cfg.history_mode = str(ij, "integrator", "history_mode");
        if (cfg.history_mode != "auto" && cfg.history_mode != "prony" &&
            cfg.history_mode != "transport")
            fail("integrator", "history_mode must be auto|prony|transport");
    }
    cfg.memory_off = boolean(ij, "integrator", "memory_off", false);
    cfg.delay_off = boolean(ij, "integrator", "delay_off", false);
    cfg.source_off = boolean(ij, "integrator", "source_off", false);
    cfg.stop_on_lb_loss = boolean(ij, "integrator", "stop_on_lb_loss", false);
    if (!(cfg.dt_requested > 0.0)) fail("integrator", "dt must be > 0");
    if (!(cfg.t_final >= 0.0)) fail("integrator", "t_final must be >= 0");

    if (root.contains("kernel")) {
        cfg.kernel = parse_kernel(root.at("kernel"), source_path, cfg.kernel_table_path);
    } else if (!cfg.memory_off) {
        fail("top level", "a 'kernel' section is required unless memory_off is set");
    }

    if (root.contains("delay")) {
        const json& dj = root.at("delay");
        expect_keys(dj, "delay", {"tau", "coefficient"}, {"g"});
        cfg.tau = num(dj, "delay", "tau");
        cfg.coeff = parse_coefficient(dj.at("coefficient"));
        if (dj.contains("g")) {
            const json& gj = dj.at("g");
            if (!gj.is_object() || !gj.contains("profile")) fail("delay.g", "needs a 'profile' key");
            std::string gp = str(gj, "delay.g", "profile");
            if (gp == "zero") {
                expect_keys(gj, "delay.g", {"profile"}, {});
                cfg.g_profile = GZero{};
            } else if (gp == "const") {
                expect_keys(gj, "delay.g", {"profile", "shape"}, {});
                cfg.g_profile = GConstant{parse_shape(gj.at("shape"), "delay.g.shape", source_path)};
            } else if (gp == "consistent") {
                expect_keys(gj, "delay.g", {"profile"}, {});
                cfg.g_profile = GConsistent{};
            } else {
                fail("delay.g", "unknown profile '" + gp + "' (expected zero|const|consistent)");
            }
        }
        if (!(cfg.tau > 0.0)) fail("delay", "tau must be > 0");
    } else if (!cfg.delay_off) {
        fail("top level", "a 'delay' section is required unless delay_off is set");
    }

    const json& nj = root.at("initial");
    expect_keys(nj, "initial", {"u0", "u1"}, {"history"});
    cfg.u0_spec = parse_shape(nj.at("u0"), "initial.u0", source_path);
    cfg.u1_spec = parse_shape(nj.at("u1"), "initial.u1", source_path);
    if (nj.contains("history")) {
        const json& hj = nj.at("history");
        if (!hj.is_object() || !hj.contains("profile")) fail("initial.history", "needs 'profile'");
        std::string hp = str(hj, "initial.history", "profile");
        if (hp == "frozen") {
            expect_keys(hj, "initial.history", {"profile"}, {});
            cfg.history_profile = HistoryFrozen{};
        } else if (hp == "ramp") {
            expect_keys(hj, "initial.history", {"profile", "rate"}, {});
            cfg.history_profile = HistoryRamp{num(hj, "initial.history", "rate")};
        } else {
            fail("initial.history", "unknown profile '" + hp + "' (expected frozen|ramp)");
        }
    }

    if (root.contains("diagnostics")) {
        const json& gj = root.at("diagnostics");
        expect_keys(gj, "diagnostics", {},
                    {"ensemble", "fit_window", "omega_prime", "constants_dt",
                     "constants_horizon", "constants_safety"});
        if (gj.contains("ensemble")) cfg.ensemble = static_cast<int>(integer(gj, "diagnostics", "ensemble"));
        if (gj.contains("fit_window")) cfg.fit_window = num(gj, "diagnostics", "fit_window");
        if (gj.contains("omega_prime")) cfg.omega_prime = num(gj, "diagnostics", "omega_prime");
        if (gj.contains("constants_dt")) cfg.constants_dt = num(gj, "diagnostics", "constants_dt");
        if (gj.contains("constants_horizon"))
            cfg.constants_horizon = num(gj, "diagnostics", "constants_horizon");
        if (gj.contains("constants_safety"))
            cfg.constants_safety = num(gj, "diagnostics", "constants_safety");
        if (!(cfg.constants_safety >= 1.0)) fail("diagnostics", "constants_safety must be >= 1");
        if (cfg.ensemble < 1) fail("diagnostics", "ensemble must be >= 1");
        if (!(cfg.fit_window > 0.0 && cfg.fit_window <= 1.0))
            fail("diagnostics", "fit_window must lie in (0, 1]");
    }

    if (root.contains("seed")) {
        if (!root.at("seed").is_number_integer()) fail("top level", "'seed' must be an integer");
        cfg.seed = root.at("seed").get<std::uint64_t>();
    }
    return cfg;
}

/// Resolve derived quantities: the collocation grid default and dt rounded
/// down so tau is an exact multiple (the delay line never interpolates).
inline void resolve_config(RunConfig& cfg) {
    if (!cfg.n_grid_explicit) cfg.n_grid = std::max(2 * cfg.n_modes, 32);
    cfg.dt = cfg.dt_requested;
    if (!cfg.delay_off && cfg.tau > 0.0) {
        long m = std::lround(cfg.tau / cfg.dt_requested);
        if (m < 1 || std::abs(m * cfg.dt_requested - cfg.tau) > 1e-12 * std::max(1.0, cfg.tau)) {
            m = static_cast<long>(std::ceil(cfg.tau / cfg.dt_requested - 1e-9));
            m = std::max<long>(m, 1);
            cfg.dt = cfg.tau / m;
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "dt adjusted from %.17g to %.17g so tau = %ld * dt", cfg.dt_requested,
                          cfg.dt, m);
            cfg.notes.push_back(buf);
        }
    }
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    json root;
    try {
        root = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
    RunConfig cfg = parse_config_json(root, path);
    resolve_config(cfg);
    return cfg;
}

/// Fully-resolved configuration; re-running from this reproduces the trace.
inline json resolved_json(const RunConfig& cfg) {
    using namespace cfgdetail;
    json root;
    root["problem"] = {{"kind", cfg.kind == ProblemKind::Wave ? "wave" : "plate"},
                       {"length", cfg.length},
                       {"n_modes", cfg.n_modes},
                       {"n_grid", cfg.n_grid},
                       {"feedback_support", {cfg.support_lo, cfg.support_hi}},
                       {"sigma", cfg.sigma}};
    if (cfg.kernel) {
        if (const auto* e = std::get_if<SingleExponential>(&cfg.kernel->form()))
            root["kernel"] = {{"form", "exp"}, {"a", e->a}, {"d", e->d}};
        else if (const auto* p = std::get_if<PronySum>(&cfg.kernel->form())) {
            json terms = json::array();
            for (const auto& t : p->terms) terms.push_back({t.a, t.d});
            root["kernel"] = {{"form", "prony"}, {"terms", terms}};
        } else {
            root["kernel"] = {{"form", "table"}, {"path", cfg.kernel_table_path}};
        }
    }
    if (!cfg.delay_off) {
        json g;
        if (std::holds_alternative<GZero>(cfg.g_profile))
            g = {{"profile", "zero"}};
        else if (const auto* c = std::get_if<GConstant>(&cfg.g_profile))
            g = {{"profile", "const"}, {"shape", shape_json(c->shape)}};
        else
            g = {{"profile", "consistent"}};
        root["delay"] = {{"tau", cfg.tau}, {"coefficient", coeff_json(cfg.coeff)}, {"g", g}};
    }
    json hist;
    if (std::holds_alternative<HistoryFrozen>(cfg.history_profile))
        hist = {{"profile", "frozen"}};
    else
        hist = {{"profile", "ramp"}, {"rate", std::get<HistoryRamp>(cfg.history_profile).rate}};
    root["initial"] = {{"u0", shape_json(cfg.u0_spec)},
                       {"u1", shape_json(cfg.u1_spec)},
                       {"history", hist}};
    root["integrator"] = {{"dt", cfg.dt},
                          {"t_final", cfg.t_final},
                          {"sample_stride", cfg.sample_stride},
                          {"history_mode", cfg.history_mode},
                          {"memory_off", cfg.memory_off},
                          {"delay_off", cfg.delay_off},
                          {"source_off", cfg.source_off},
                          {"stop_on_lb_loss", cfg.stop_on_lb_loss}};
    json diag = {{"ensemble", cfg.ensemble}, {"fit_window", cfg.fit_window}};
    if (cfg.omega_prime) diag["omega_prime"] = *cfg.omega_prime;
    if (cfg.constants_dt > 0.0) diag["constants_dt"] = cfg.constants_dt;
    if (cfg.constants_horizon > 0.0) diag["constants_horizon"] = cfg.constants_horizon;
    if (cfg.constants_safety != 1.1) diag["constants_safety"] = cfg.constants_safety;
    root["diagnostics"] = diag;
    root["seed"] = cfg.seed;
    return root;
}

} // namespace memwave
