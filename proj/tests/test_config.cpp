#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "memwave/config.hpp"
#include "memwave/runner.hpp"

using namespace memwave;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto d = fs::temp_directory_path() / "memwave_cfg_tests";
    fs::create_directories(d);
    return d;
}

std::string write_file(const std::string& name, const std::string& body) {
    auto p = temp_dir() / name;
    std::ofstream out(p);
    out << body;
    return p.string();
}

json minimal_config() {
    return json{
        {"problem",
         {{"kind", "wave"},
          {"length", M_PI},
          {"n_modes", 4},
          {"feedback_support", {0.0, M_PI}},
          {"sigma", 2.0}}},
        {"kernel", {{"form", "exp"}, {"a", 0.5}, {"d", 1.0}}},
        {"delay",
         {{"tau", 0.1},
          {"coefficient", {{"form", "const"}, {"k0", 0.05}}},
          {"g", {{"profile", "zero"}}}}},
        {"initial",
         {{"u0", {{"profile", "mode"}, {"k", 1}, {"amplitude", 0.1}}},
          {"u1", {{"profile", "zero"}}},
          {"history", {{"profile", "ramp"}, {"rate", 0.5}}}}},
        {"integrator", {{"dt", 1e-2}, {"t_final", 1.0}}},
        {"seed", 99}};
}

} // namespace

TEST_CASE("a complete config parses with resolved defaults") {
    auto cfg = parse_config_json(minimal_config(), "mem.json");
    resolve_config(cfg);
    CHECK(cfg.kind == ProblemKind::Wave);
    CHECK(cfg.n_modes == 4);
    CHECK(cfg.n_grid == 32); // default max(2K, 32)
    CHECK(cfg.tau == 0.1);
    CHECK(cfg.dt == 0.01);   // 0.1 / 0.01 is already integral
    CHECK(cfg.seed == 99);
    REQUIRE(cfg.kernel);
    CHECK(std::holds_alternative<HistoryRamp>(cfg.history_profile));
}

TEST_CASE("unknown keys are rejected at every level") {
    auto base = minimal_config();
    auto j1 = base;
    j1["extra"] = 1;
    CHECK_THROWS_WITH(parse_config_json(j1, "x"), Catch::Matchers::ContainsSubstring("extra"));
    auto j2 = base;
    j2["problem"]["spares"] = 2;
    CHECK_THROWS_WITH(parse_config_json(j2, "x"), Catch::Matchers::ContainsSubstring("spares"));
    auto j3 = base;
    j3["kernel"]["q"] = 1;
    CHECK_THROWS_AS(parse_config_json(j3, "x"), ConfigError);
    auto j4 = base;
    j4["initial"]["u0"]["width"] = 1.0; // not a key of the mode profile
    CHECK_THROWS_AS(parse_config_json(j4, "x"), ConfigError);
    auto j5 = base;
    j5["diagnostics"] = {{"ensembel", 4}}; // typo must be caught
    CHECK_THROWS_AS(parse_config_json(j5, "x"), ConfigError);
}

TEST_CASE("kernel section is required unless the memory term is off") {
    auto j = minimal_config();
    j.erase("kernel");
    CHECK_THROWS_AS(parse_config_json(j, "x"), ConfigError);
    j["integrator"]["memory_off"] = true;
    CHECK_NOTHROW(parse_config_json(j, "x"));
}

TEST_CASE("tau that does not divide dt is rounded down with a note") {
    auto j = minimal_config();
    j["integrator"]["dt"] = 0.03;
    auto cfg = parse_config_json(j, "x");
    resolve_config(cfg);
    CHECK(cfg.dt == Catch::Approx(0.025).epsilon(1e-14)); // tau/4
    REQUIRE_FALSE(cfg.notes.empty());
    CHECK(cfg.notes.front().find("dt adjusted") != std::string::npos);
}

TEST_CASE("comments are allowed, malformed JSON is diagnosed") {
    std::string path = write_file("with_comments.json",
                                  "{\n // a comment\n \"problem\": {\"kind\": \"wave\", "
                                  "\"length\": 3.14159, \"n_modes\": 2, \"feedback_support\": "
                                  "[0, 3.0], \"sigma\": 2.0},\n \"initial\": {\"u0\": "
                                  "{\"profile\": \"zero\"}, \"u1\": {\"profile\": \"zero\"}},\n "
                                  "\"integrator\": {\"dt\": 0.01, \"t_final\": 0.1, "
                                  "\"memory_off\": true, \"delay_off\": true, \"source_off\": "
                                  "true}\n}\n");
    CHECK_NOTHROW(parse_config(path));

    std::string broken = write_file("broken.json", "{ \"problem\": ");
    CHECK_THROWS_AS(parse_config(broken), ConfigError);
    CHECK_THROWS_AS(parse_config("/does/not/exist.json"), IoError);
}

TEST_CASE("resolved config reparses to the same resolved values") {
    auto cfg = parse_config_json(minimal_config(), "x");
    resolve_config(cfg);
    json out = resolved_json(cfg);
    auto cfg2 = parse_config_json(out, "y");
    resolve_config(cfg2);
    CHECK(cfg2.dt == cfg.dt);
    CHECK(cfg2.n_grid == cfg.n_grid);
    CHECK(cfg2.tau == cfg.tau);
    CHECK(cfg2.seed == cfg.seed);
    CHECK(resolved_json(cfg2) == out);
}

TEST_CASE("mode and bump shapes have the documented forms") {
    auto p = build_problem(ProblemKind::Wave, M_PI, 8, 0.0, M_PI, 2.0, 64);
    Field m = make_shape(p, ShapeMode{2, 0.7});
    CHECK(m[1] == 0.7);
    CHECK(m.norm() == 0.7);

    Field b = make_shape(p, ShapeBump{M_PI / 2, 0.3, 1.0});
    Eigen::VectorXd phys = p.to_physical(b);
    // peak near the center, tiny at the walls
    CHECK(phys[31] == Catch::Approx(1.0).margin(0.05));
    CHECK(std::abs(phys[0]) < 0.01);

    CHECK_THROWS_AS(make_shape(p, ShapeMode{9, 1.0}), MalformedInput);
    CHECK_THROWS_AS(make_shape(p, ShapeBump{1.0, 0.0, 1.0}), MalformedInput);
}

TEST_CASE("csv shapes are interpolated onto the grid") {
    std::string path = [&] {
        std::ostringstream body;
        body << "x,u\n";
        for (int i = 0; i <= 200; ++i) {
            double x = M_PI * i / 200.0;
            body << x << "," << std::sin(x) << "\n";
        }
        return write_file("shape.csv", body.str());
    }();
    auto p = build_problem(ProblemKind::Wave, M_PI, 4, 0.0, M_PI, 2.0, 64);
    Field u = make_shape(p, ShapeCsv{path});
    CHECK(u[0] == Catch::Approx(1.0).margin(2e-4));
    for (int k = 1; k < 4; ++k) CHECK(std::abs(u[k]) < 2e-4);

    std::string bad = write_file("bad_shape.csv", "x,y\n0,0\n1,1\n");
    CHECK_THROWS_AS(make_shape(p, ShapeCsv{bad}), MalformedInput);
}

TEST_CASE("history and g samplers follow their closed forms") {
    auto p = build_problem(ProblemKind::Wave, M_PI, 4, 0.5, 2.0, 2.0);
    Field u0 = make_shape(p, ShapeMode{1, 2.0});

    auto frozen = make_history_sampler(u0, HistoryFrozen{});
    CHECK((frozen(3.7) - u0).norm() == 0.0);

    double rate = 0.25;
    auto ramp = make_history_sampler(u0, HistoryRamp{rate});
    CHECK((ramp(2.0) - (1.0 - rate * 2.0) * u0).norm() == 0.0);

    auto g_zero = make_g_sampler(p, GZero{}, u0, HistoryRamp{rate});
    CHECK(g_zero(-0.05).norm() == 0.0);

    auto g_cons = make_g_sampler(p, GConsistent{}, u0, HistoryRamp{rate});
    Field expected = p.apply_Bstar(rate * u0);
    CHECK((g_cons(-0.02) - expected).norm() == 0.0);

    auto g_const = make_g_sampler(p, GConstant{ShapeMode{1, 0.5}}, u0, HistoryFrozen{});
    Field proj = p.apply_Bstar(make_shape(p, ShapeMode{1, 0.5}));
    CHECK((g_const(-0.01) - proj).norm() == 0.0);
}

TEST_CASE("build_setup refuses an unusable kernel unless forced") {
    auto j = minimal_config();
    j["kernel"]["a"] = 2.0; // mu_tilde = 2
    auto cfg = parse_config_json(j, "x");
    resolve_config(cfg);
    CHECK_THROWS_AS(build_setup(cfg), ConfigError);
    CHECK_NOTHROW(build_setup(cfg, /*force=*/true));
}

TEST_CASE("trace files carry the exact column set and reproduce bit-identically") {
    auto j = minimal_config();
    j["integrator"]["t_final"] = 0.5;
    j["integrator"]["sample_stride"] = 5;
    auto cfg = parse_config_json(j, "x");
    resolve_config(cfg);
    RunArtifacts art = execute_run(cfg, false, /*with_theory=*/false);
    auto dir = temp_dir();
    write_trace_csv((dir / "trace_a.csv").string(), art.trajectory);
    RunArtifacts art2 = execute_run(cfg, false, false);
    write_trace_csv((dir / "trace_b.csv").string(), art2.trajectory);

    std::ifstream a(dir / "trace_a.csv"), b(dir / "trace_b.csv");
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    std::string header = sa.str().substr(0, sa.str().find('\n'));
    CHECK(header ==
          "t,E_total,E_kinetic,E_elastic,E_source,E_delay,E_memory,norm_U,cbar_t,lb_holds");

    auto cols = read_csv((dir / "trace_a.csv").string(), header);
    CHECK(cols[0].size() == art.trajectory.samples.size());
}

TEST_CASE("sweep overrides respect the whitelist") {
    auto cfg = parse_config_json(minimal_config(), "x");
    resolve_config(cfg);

    RunConfig c1 = cfg;
    apply_override(c1, "sigma", 1.5);
    CHECK(c1.sigma == 1.5);

    RunConfig c2 = cfg;
    apply_override(c2, "amplitude", 2.0);
    CHECK(std::get<ShapeMode>(c2.u0_spec).amplitude == Catch::Approx(0.2));

    RunConfig c3 = cfg;
    apply_override(c3, "dt", 0.03);
    CHECK(c3.dt == Catch::Approx(0.025)); // re-resolved against tau

    RunConfig c4 = cfg;
    apply_override(c4, "k0", 0.25);
    CHECK(std::get<DelayCoefficient::Constant>(c4.coeff.form()).k0 == 0.25);

    RunConfig c5 = cfg;
    c5.coeff = DelayCoefficient::onoff(0.1, 1.0, 0.5);
    CHECK_THROWS_AS(apply_override(c5, "k0", 0.1), ConfigError);
    CHECK_THROWS_AS(apply_override(c5, "viscosity", 0.1), ConfigError);
    CHECK(sweep_parameter_known("tau"));
    CHECK_FALSE(sweep_parameter_known("viscosity"));
}

TEST_CASE("re-running from the resolved config reproduces the trace") {
    auto j = minimal_config();
    j["integrator"]["dt"] = 0.03; // forces a dt adjustment
    j["integrator"]["t_final"] = 0.5;
    auto cfg = parse_config_json(j, "x");
    resolve_config(cfg);
    auto art1 = execute_run(cfg, false, false);

    auto cfg2 = parse_config_json(resolved_json(cfg), "resolved");
    resolve_config(cfg2);
    CHECK(cfg2.notes.empty()); // already resolved: nothing to adjust
    auto art2 = execute_run(cfg2, false, false);

    auto dir = temp_dir();
    write_trace_csv((dir / "orig.csv").string(), art1.trajectory);
    write_trace_csv((dir / "resolved.csv").string(), art2.trajectory);
    std::ifstream a(dir / "orig.csv"), b(dir / "resolved.csv");
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
}

TEST_CASE("cmd_run reports divergence with exit code 3 and flushes the trace") {
    auto j = minimal_config();
    j["initial"]["u0"]["amplitude"] = 50.0; // far beyond the smallness ball
    j["integrator"]["t_final"] = 20.0;
    j["diagnostics"] = {{"ensemble", 4}, {"constants_dt", 0.01}};
    std::string cfg_path = write_file("diverging.json", json(j).dump(2));
    auto dir = (temp_dir() / "div_out").string();
    std::ostringstream log;
    int rc = cmd_run(cfg_path, dir, false, std::nullopt, log);
    CHECK(rc == 3);
    CHECK(log.str().find("diverged") != std::string::npos);
    auto cols = read_csv(dir + "/trace.csv",
                         "t,E_total,E_kinetic,E_elastic,E_source,E_delay,E_memory,norm_U,"
                         "cbar_t,lb_holds");
    REQUIRE_FALSE(cols[0].empty());
    for (double e : cols[1]) CHECK(std::isfinite(e));
}

TEST_CASE("cmd_fit and cmd_sweep verbs on the library surface") {
    auto j = minimal_config();
    j["integrator"]["t_final"] = 2.0;
    j["integrator"]["sample_stride"] = 2;
    j["diagnostics"] = {{"ensemble", 4}, {"constants_dt", 0.01}};
    std::string cfg_path = write_file("verb_cfg.json", json(j).dump(2));
    auto dir = (temp_dir() / "verb_out").string();
    std::ostringstream log;
    REQUIRE(cmd_run(cfg_path, dir, false, std::nullopt, log) == 0);

    std::ostringstream fit_log;
    CHECK(cmd_fit(dir + "/trace.csv", 0.5, fit_log) == 0);
    CHECK(fit_log.str().find("beta=") != std::string::npos);
    CHECK(cmd_fit("/nonexistent/trace.csv", 0.5, fit_log) == 4);

    std::ostringstream sweep_log;
    auto sweep_dir = (temp_dir() / "verb_sweep").string();
    int rc = cmd_sweep(cfg_path, "dt", {2e-2, 1e-2}, sweep_dir, 2, false, sweep_log);
    CHECK(rc == 0);
    std::ifstream sf(sweep_dir + "/summary.csv");
    std::string line;
    REQUIRE(std::getline(sf, line));
    CHECK(line == "value,beta,predicted_rate,lemma_bound_ok,terminated");
    int n_rows = 0;
    while (std::getline(sf, line)) {
        if (line.empty()) continue;
        ++n_rows;
        CHECK(line.find("completed") != std::string::npos);
    }
    CHECK(n_rows == 2);
    CHECK(cmd_sweep(cfg_path, "dt", {}, sweep_dir, 1, false, sweep_log) == 2);
    CHECK(cmd_sweep(cfg_path, "viscosity", {1.0}, sweep_dir, 1, false, sweep_log) == 2);

    std::ostringstream const_log;
    CHECK(cmd_constants(cfg_path, const_log) == 0);
    CHECK(const_log.str().find("omega=") != std::string::npos);
}

TEST_CASE("an amplitude sweep crossing rho flips the theory verdict") {
    auto j = minimal_config();
    j["integrator"]["t_final"] = 1.0;
    j["diagnostics"] = {{"ensemble", 4}, {"constants_dt", 0.01}};
    std::string cfg_path = write_file("amp_cfg.json", json(j).dump(2));
    auto dir = (temp_dir() / "amp_sweep").string();
    std::ostringstream log;
    REQUIRE(cmd_sweep(cfg_path, "amplitude", {0.1, 400.0}, dir, 2, false, log) == 0);

    auto applicable = [&](const std::string& sub) {
        std::ifstream in(dir + "/" + sub + "/report.json");
        REQUIRE(in.good());
        json rep = json::parse(in);
        return rep.at("theory").at("theory_applicable").get<bool>();
    };
    CHECK(applicable("amplitude_00"));
    CHECK_FALSE(applicable("amplitude_01"));
}

TEST_CASE("cmd_validate echoes the adjusted dt for a non-dividing tau") {
    auto j = minimal_config();
    j["integrator"]["dt"] = 0.03;
    j["integrator"]["memory_off"] = true; // keep validation instant
    j.erase("kernel");
    std::string path = write_file("adjusted.json", json(j).dump(2));
    std::ostringstream log;
    int rc = cmd_validate(path, log);
    CHECK(rc == 0);
    CHECK(log.str().find("dt adjusted") != std::string::npos);

    std::ostringstream miss;
    CHECK(cmd_validate("/no/such/config.json", miss) == 4);
}

TEST_CASE("kernel table loading enforces the csv schema") {
    std::string good = [&] {
        std::ostringstream body;
        body << "s,mu,dmu\n";
        for (int i = 0; i <= 100; ++i) {
            double s = 30.0 * i / 100.0;
            body << s << "," << 0.5 * std::exp(-s) << "," << -0.5 * std::exp(-s) << "\n";
        }
        return write_file("kernel.csv", body.str());
    }();
    auto j = minimal_config();
    j["kernel"] = {{"form", "table"}, {"path", good}};
    auto cfg = parse_config_json(j, "x");
    REQUIRE(cfg.kernel);
    CHECK(cfg.kernel->is_tabulated());

    std::string bad = write_file("kernel_bad.csv", "s,mu\n0,1\n");
    j["kernel"]["path"] = bad;
    CHECK_THROWS_AS(parse_config_json(j, "x"), MalformedInput);
}
