#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "memwave/history.hpp"
#include "memwave/rng.hpp"
#include "memwave/spectral.hpp"

using namespace memwave;

namespace {

SpectralProblem wave_pi(int K) { return build_problem(ProblemKind::Wave, M_PI, K, 0.0, M_PI, 2.0); }

MemoryKernel half_exp() {
    auto k = MemoryKernel::exponential(0.5, 1.0);
    validate_kernel(k);
    return k;
}

/// Synthetic smooth trajectory u(t) = sin(w t + phi) * shape for all t,
/// used to drive the history without the integrator.
struct SyntheticPath {
    Field shape;
    double w, phi;
    Field u(double t) const { return std::sin(w * t + phi) * shape; }
    Field v(double t) const { return w * std::cos(w * t + phi) * shape; }
    HistorySampler sampler() const {
        return [*this](double s) { return u(-s); };
    }
};

} // namespace

TEST_CASE("constant history gives a zero Dafermos field") {
    auto p = wave_pi(3);
    auto kernel = half_exp();
    Field w = Field::Constant(3, 0.37);
    HistorySampler sampler = [w](double) { return w; };
    double span = choose_history_span(kernel);

    for (auto mode : {HistoryMode::Transport, HistoryMode::PronyODE}) {
        auto hist = init_history(p, kernel, mode, 1e-2, span, sampler);
        CHECK(memory_convolution(p, hist).norm() == 0.0);
        CHECK(hist.memory_energy(p) == 0.0);
    }
}

TEST_CASE("ramp history: eta_0(s) = s * shape") {
    auto p = wave_pi(2);
    auto kernel = half_exp();
    Field u0 = p.zero_field();
    u0[0] = 1.0;
    // u0(t) = (1+t) sin x for t <= 0
    HistorySampler sampler = [u0](double s) -> Field { return (1.0 - s) * u0; };
    double span = choose_history_span(kernel);
    double dt = 1e-3;

    auto transport = init_history(p, kernel, HistoryMode::Transport, dt, span, sampler);
    CHECK(transport.value(0, 0) == 0.0); // eta(0) = 0 always
    for (long j : {1L, 10L, 1000L})
        CHECK(transport.value(0, j) == Catch::Approx(j * dt).epsilon(1e-13));

    auto prony = init_history(p, kernel, HistoryMode::PronyODE, dt, span, sampler);
    // int_0^inf 0.5 e^{-s} s ds = 0.5
    CHECK(prony.prony_aux()(0, 0) == Catch::Approx(0.5).epsilon(1e-9));

    // m_1 = lambda_1 * 0.5 with lambda_1 = 1
    CHECK(memory_convolution(p, prony)[0] == Catch::Approx(0.5).epsilon(1e-9));
    CHECK(memory_convolution(p, transport)[0] == Catch::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("constant-in-s eta: convolution equals lambda mu_tilde c") {
    auto p = wave_pi(2);
    auto kernel = half_exp();
    Field u0 = p.zero_field();
    u0[1] = 0.4; // mode 2: lambda = 4
    double c = 0.25;
    HistorySampler sampler = [u0, c, &p](double s) -> Field {
        if (s == 0.0) return u0;
        Field past = u0;
        past[1] -= c;
        return past;
    };
    double span = choose_history_span(kernel);
    double dt = 1e-3;

    auto prony = init_history(p, kernel, HistoryMode::PronyODE, dt, span, sampler);
    CHECK(memory_convolution(p, prony)[1] ==
          Catch::Approx(4.0 * kernel.mu_tilde() * c).epsilon(1e-12));

    // transport sees the jump at s = 0 through one trapezoid cell: O(dt)
    auto transport = init_history(p, kernel, HistoryMode::Transport, dt, span, sampler);
    CHECK(memory_convolution(p, transport)[1] ==
          Catch::Approx(4.0 * kernel.mu_tilde() * c).epsilon(2.0 * dt));
}

TEST_CASE("zero stays a fixed point of the history advance") {
    auto p = wave_pi(2);
    auto kernel = half_exp();
    Field zero = p.zero_field();
    HistorySampler sampler = [zero](double) { return zero; };
    double span = choose_history_span(kernel);
    for (auto mode : {HistoryMode::Transport, HistoryMode::PronyODE}) {
        auto hist = init_history(p, kernel, mode, 1e-2, span, sampler);
        for (int n = 0; n < 100; ++n) {
            hist.advance_predict(zero, zero, zero);
            hist.advance_finalize(zero, zero, zero);
        }
        CHECK(memory_convolution(p, hist).norm() == 0.0);
        CHECK(hist.memory_energy(p) == 0.0);
    }
}

TEST_CASE("frozen displacement reproduces eta(s) = u(t) - u(t-s) exactly") {
    auto p = wave_pi(2);
    auto kernel = half_exp();
    Field u0 = p.zero_field();
    u0[0] = 2.0;
    double rate = 0.7;
    HistorySampler sampler = [u0, rate](double s) -> Field { return (1.0 - rate * s) * u0; };
    double dt = 1e-2;
    auto hist = init_history(p, kernel, HistoryMode::Transport, dt, choose_history_span(kernel),
                             sampler);
    Field zero = p.zero_field();
    const int n_steps = 500; // t = 5
    for (int n = 0; n < n_steps; ++n) {
        hist.advance_predict(u0, zero, zero);
        hist.advance_finalize(zero, zero, zero);
    }
    double t = n_steps * dt;
    for (long j : {1L, 100L, 700L, 2000L}) {
        double s = j * dt;
        double expected = s > t ? rate * (s - t) * u0[0] : 0.0;
        CHECK(hist.value(0, j) == Catch::Approx(expected).margin(1e-13));
    }
}

TEST_CASE("Prony auxiliary variable follows its scalar ODE closed form") {
    auto p = wave_pi(1);
    Field zero = p.zero_field();
    HistorySampler rest = [zero](double) { return zero; };
    Field ones = Field::Constant(1, 1.0);

    SECTION("a=0.5, d=1: y(t) = 0.5 (1 - e^{-t})") {
        auto kernel = MemoryKernel::exponential(0.5, 1.0);
        validate_kernel(kernel);
        double dt = 1e-3;
        auto hist = init_history(p, kernel, HistoryMode::PronyODE, dt,
                                 choose_history_span(kernel), rest);
        for (int n = 0; n < 1000; ++n) {
            hist.advance_predict(zero, ones, ones);
            hist.advance_finalize(ones, ones, ones);
        }
        CHECK(hist.prony_aux()(0, 0) == Catch::Approx(0.5 * (1.0 - std::exp(-1.0))).epsilon(1e-12));
    }

    SECTION("a=0.3, d=2: y(t) = (a/d^2)(1 - e^{-d t})") {
        auto kernel = MemoryKernel::exponential(0.3, 2.0);
        validate_kernel(kernel);
        double dt = 1e-3;
        auto hist = init_history(p, kernel, HistoryMode::PronyODE, dt,
                                 choose_history_span(kernel), rest);
        for (int n = 0; n < 1000; ++n) {
            hist.advance_predict(zero, ones, ones);
            hist.advance_finalize(ones, ones, ones);
        }
        double expected = 0.3 / 4.0 * (1.0 - std::exp(-2.0));
        CHECK(hist.prony_aux()(0, 0) == Catch::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("oracle equals the fresh-history convolution at t = 0") {
    auto p = wave_pi(3);
    auto kernel = half_exp();
    Rng rng(0x42);
    Field u0(3), ramp(3);
    for (int k = 0; k < 3; ++k) {
        u0[k] = rng.gaussian();
        ramp[k] = rng.gaussian();
    }
    HistorySampler sampler = [u0, ramp](double s) -> Field { return u0 - s * ramp; };
    double dt = 1e-3;
    TrajectoryStore store;
    store.dt = dt;
    store.u.push_back(u0);

    Field oracle = oracle_convolution(p, kernel, store, sampler, 0.0);
    // transport shares the oracle's grid and trapezoid: near-identical;
    // Prony is exact in s, so it differs by the oracle's own O(dt^2) error
    auto transport =
        init_history(p, kernel, HistoryMode::Transport, dt, choose_history_span(kernel), sampler);
    CHECK((memory_convolution(p, transport) - oracle).lpNorm<Eigen::Infinity>() <=
          1e-8 * oracle.lpNorm<Eigen::Infinity>());
    auto prony =
        init_history(p, kernel, HistoryMode::PronyODE, dt, choose_history_span(kernel), sampler);
    CHECK((memory_convolution(p, prony) - oracle).lpNorm<Eigen::Infinity>() <=
          1e-6 * oracle.lpNorm<Eigen::Infinity>());
}

TEST_CASE("transport, Prony, and oracle agree along a smooth synthetic path") {
    auto p = wave_pi(3);
    auto kernel = half_exp();
    Rng rng(0x1111);
    SyntheticPath path{Field(3), 1.3, 0.4};
    for (int k = 0; k < 3; ++k) path.shape[k] = rng.gaussian() / (k + 1.0);

    double dt = 1e-3;
    double span = choose_history_span(kernel);
    auto transport = init_history(p, kernel, HistoryMode::Transport, dt, span, path.sampler());
    auto prony = init_history(p, kernel, HistoryMode::PronyODE, dt, span, path.sampler());
    TrajectoryStore store;
    store.dt = dt;
    store.u.push_back(path.u(0.0));

    const int n_steps = 1000;
    for (int n = 0; n < n_steps; ++n) {
        double t0 = n * dt, t1 = (n + 1) * dt;
        Field u1 = path.u(t1), v0 = path.v(t0), v1 = path.v(t1);
        transport.advance_predict(u1, v0, v1);
        transport.advance_finalize(v0, v1, v1);
        prony.advance_predict(u1, v0, v1);
        prony.advance_finalize(v0, v1, v1);
        store.u.push_back(u1);
    }
    double t = n_steps * dt;
    Field m_t = memory_convolution(p, transport);
    Field m_p = memory_convolution(p, prony);
    Field m_o = oracle_convolution(p, kernel, store, path.sampler(), t);
    double scale = m_o.lpNorm<Eigen::Infinity>();
    REQUIRE(scale > 0.0);
    CHECK((m_t - m_o).lpNorm<Eigen::Infinity>() <= 1e-6 * scale);
    CHECK((m_p - m_o).lpNorm<Eigen::Infinity>() <= 5e-6 * scale);
    CHECK((m_t - m_p).lpNorm<Eigen::Infinity>() <= 5e-6 * scale);

    // Dafermos consistency: transport values match u(t) - u(t-s) to roundoff
    for (long j : {1L, 17L, 500L, 2300L}) {
        double s = j * dt;
        Field eta = path.u(t) - path.u(t - s);
        for (int k = 0; k < 3; ++k)
            CHECK(transport.value(k, j) == Catch::Approx(eta[k]).margin(1e-12));
    }

    // memory energies stay nonnegative and agree across modes
    double e_t = transport.memory_energy(p);
    double e_p = prony.memory_energy(p);
    CHECK(e_t >= 0.0);
    CHECK(e_p >= 0.0);
    CHECK(e_t == Catch::Approx(e_p).epsilon(1e-4));
}

TEST_CASE("quadrature weights are nonnegative") {
    auto p = wave_pi(2);
    auto kernel = half_exp();
    Field zero = p.zero_field();
    auto hist = init_history(p, kernel, HistoryMode::Transport, 1e-2,
                             choose_history_span(kernel), [zero](double) { return zero; });
    for (long j = 0; j <= hist.n_ages(); j += 97) CHECK(hist.weight(j) >= 0.0);
}

TEST_CASE("doubling the truncation span changes the convolution negligibly") {
    auto p = wave_pi(2);
    auto kernel = half_exp();
    Field u0 = p.zero_field();
    u0[0] = 1.0;
    HistorySampler sampler = [u0](double s) -> Field { return (1.0 - 0.5 * s) * u0; };
    double dt = 1e-2;
    double span = choose_history_span(kernel);
    auto h1 = init_history(p, kernel, HistoryMode::Transport, dt, span, sampler);
    auto h2 = init_history(p, kernel, HistoryMode::Transport, dt, 2.0 * span, sampler);
    Field m1 = memory_convolution(p, h1);
    Field m2 = memory_convolution(p, h2);
    CHECK((m1 - m2).norm() <= 1e-8 * m2.norm());
}

TEST_CASE("tabulated kernels require transport mode") {
    auto p = wave_pi(2);
    std::vector<double> s, mu, dmu;
    for (int i = 0; i <= 200; ++i) {
        double x = 30.0 * i / 200.0;
        s.push_back(x);
        mu.push_back(0.5 * std::exp(-x));
        dmu.push_back(-0.5 * std::exp(-x));
    }
    auto kernel = MemoryKernel::tabulated(s, mu, dmu);
    validate_kernel(kernel);
    Field zero = p.zero_field();
    HistorySampler sampler = [zero](double) { return zero; };
    CHECK_THROWS_AS(
        init_history(p, kernel, HistoryMode::PronyODE, 1e-2, 20.0, sampler), ConfigError);
    CHECK_NOTHROW(init_history(p, kernel, HistoryMode::Transport, 1e-2, 20.0, sampler));
}

TEST_CASE("oracle demands a dense on-grid trajectory") {
    auto p = wave_pi(1);
    auto kernel = half_exp();
    Field zero = p.zero_field();
    TrajectoryStore store;
    CHECK_THROWS_AS(oracle_convolution(p, kernel, store, [zero](double) { return zero; }, 0.0),
                    OracleUnavailable);
    store.dt = 1e-2;
    store.u.push_back(zero);
    CHECK_THROWS_AS(oracle_convolution(p, kernel, store, [zero](double) { return zero; }, 0.5),
                    OracleUnavailable);
}
