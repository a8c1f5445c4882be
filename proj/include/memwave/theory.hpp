#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "memwave/integrator.hpp"
#include "memwave/rng.hpp"

namespace memwave {

struct SemigroupEstimate {
    double M = 0.0;
    double omega = 0.0;
    double omega_min = 0.0; // per-run slope spread across the ensemble
    double omega_max = 0.0;
    int ensemble = 0;
};

struct SemigroupOptions {
    int ensemble = 20;
    double dt = 1e-2;
    double horizon = 0.0; // 0: use 20/delta
    long sample_stride = 5;
    std::uint64_t seed = 0x73656d6967ull;
    double safety = 1.1; // slack on the finite-ensemble sup defining M
};

namespace detail {

inline double pooled_slope(const std::vector<std::pair<double, double>>& pts) {
    double n = static_cast<double>(pts.size());
    double st = 0, sy = 0, stt = 0, sty = 0;
    for (const auto& [t, y] : pts) {
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    return (n * sty - st * sy) / (n * stt - st * st);
}

} // namespace detail

/// Fit ||S(t)|| <= M e^{-omega t} empirically: an ensemble of linear runs
/// (k = 0, source off) from random unit-norm data in H; omega is the pooled
/// least-squares slope of log||U(t)|| over the tail half, M the safety-scaled
/// sup of ||U(t)|| e^{omega t}. The constants inherit the modal truncation
/// of the problem; they are empirical, not certified.
inline SemigroupEstimate estimate_semigroup_constants(const SpectralProblem& problem,
                                                      const MemoryKernel& kernel,
                                                      const SemigroupOptions& opts = {}) {
    if (!kernel.validated_usable())
        throw EstimationFailure("semigroup estimate needs a kernel passing (i)-(iv)");
    if (opts.ensemble < 1) throw MalformedInput("ensemble size must be >= 1");
    double horizon = opts.horizon > 0.0 ? opts.horizon : 20.0 / kernel.delta();
    Rng rng(opts.seed);
    const int K = problem.n_modes();

    std::vector<std::vector<std::pair<double, double>>> logs; // per run: (t, log||U||)
    for (int run = 0; run < opts.ensemble; ++run) {
        Field u0(K), v0(K), ramp(K);
        for (int k = 0; k < K; ++k) {
            double w = 1.0 / (k + 1.0);
            u0[k] = w * rng.gaussian();
            v0[k] = w * rng.gaussian();
            ramp[k] = w * rng.gaussian();
        }
        RunSetup setup{problem};
        setup.kernel = kernel;
        setup.history_mode = kernel.is_tabulated() ? HistoryMode::Transport : HistoryMode::PronyODE;
        setup.s_max = choose_history_span(kernel);
        setup.opts.delay_off = true;
        setup.opts.source_off = true;
        setup.dt = opts.dt;
        setup.t_final = horizon;
        setup.sample_stride = opts.sample_stride;
        setup.u0 = u0;
        setup.u1 = v0;
        setup.history_sampler = [u0, ramp](double s) -> Field { return u0 - s * ramp; };
        Trajectory probe; // normalize ||U(0)|| = 1, then rerun scaled
        {
            RunSetup init_only = setup;
            init_only.t_final = 0.0;
            probe = simulate(init_only);
        }
        double norm0 = probe.samples.front().norm_U;
        if (!(norm0 > 0.0)) continue;
        double inv = 1.0 / norm0;
        setup.u0 = inv * u0;
        setup.u1 = inv * v0;
        Field ru = inv * u0, rr = inv * ramp;
        setup.history_sampler = [ru, rr](double s) -> Field { return ru - s * rr; };
        Trajectory traj = simulate(setup);
        if (traj.termination != Termination::Completed)
            throw EstimationFailure("linear ensemble run did not complete");
        std::vector<std::pair<double, double>> lg;
        for (const auto& s : traj.samples)
            if (s.norm_U > 0.0) lg.emplace_back(s.t, std::log(s.norm_U));
        logs.push_back(std::move(lg));
    }
    if (logs.empty()) throw EstimationFailure("ensemble produced no usable runs");

    std::vector<std::pair<double, double>> pooled;
    double w_min = std::numeric_limits<double>::infinity();
    double w_max = -std::numeric_limits<double>::infinity();
    for (const auto& lg : logs) {
        std::vector<std::pair<double, double>> tail;
        for (const auto& p : lg)
            if (p.first >= 0.5 * horizon) tail.push_back(p);
        if (tail.size() < 4) throw EstimationFailure("tail window too short for the slope fit");
        double slope = detail::pooled_slope(tail);
        w_min = std::min(w_min, -slope);
        w_max = std::max(w_max, -slope);
        pooled.insert(pooled.end(), tail.begin(), tail.end());
    }
    double omega = -detail::pooled_slope(pooled);
    if (!(omega > 0.0))
        throw EstimationFailure("ensemble norm is not decaying: kernel or discretization problem");

    double sup = 0.0;
    for (const auto& lg : logs)
        for (const auto& [t, y] : lg) sup = std::max(sup, std::exp(y + omega * t));
    SemigroupEstimate est;
    est.M = opts.safety * sup;
    est.omega = omega;
    est.omega_min = w_min;
    est.omega_max = w_max;
    est.ensemble = static_cast<int>(logs.size());
    return est;
}

// ---------------------------------------------------------------------------

/// Quadratic data norms entering the smallness condition:
///   (1-mu~)||A^{1/2}u_0||^2 + ||u_1||^2
///     + int_{-tau}^0 |k(s+tau)| ||B*u_t(s)||^2 ds + int mu ||A^{1/2}eta_0||^2 ds.
struct InitialDataNorms {
    double elastic2 = 0.0;
    double kinetic2 = 0.0;
    double delay2 = 0.0;
    double memory2 = 0.0;

    double squared() const { return elastic2 + kinetic2 + delay2 + memory2; }
};

/// The four terms are exactly twice the matching energy terms at t = 0.
inline InitialDataNorms initial_data_norms(const EnergyBreakdown& e0) {
    return {2.0 * e0.elastic, 2.0 * e0.kinetic, 2.0 * e0.delay_window, 2.0 * e0.memory};
}

/// Data prefactor of the decay estimate:
/// ||U_0|| + int_0^tau e^{omega s} |k(s)| ||g~(s)|| ds, with
/// g~(s) = (0, B g(s - tau), 0).
inline double decay_prefactor(const SpectralProblem& problem, const SimState& state0,
                              const DelayCoefficient& coeff, double omega, double norm_U0) {
    if (!state0.line) return norm_U0;
    const DelayLine& line = *state0.line;
    const long m = line.delay_steps();
    double acc = 0.0;
    for (long i = -m; i <= 0; ++i) {
        double s = line.tau() + i * line.dt(); // in [0, tau]
        Field bg = problem.apply_B(line.sample_at_index(i));
        double f = std::exp(omega * s) * std::abs(coeff(s)) * problem.h_norm(bg);
        acc += (i == -m || i == 0) ? 0.5 * f : f;
    }
    return norm_U0 + acc * line.dt();
}

struct TheoryReport {
    // constants
    double M = 0.0, omega = 0.0, omega_prime = 0.0, gamma = 0.0, c_star = 0.0;
    double b = 0.0, mu_tilde = 0.0, c_h = 0.0, sigma = 0.0, tau = 0.0;
    bool admissible = false;
    // iteration quantities
    int n_iter = 0; // N of the method-of-steps iteration
    double cbar_n_tau = 1.0;
    double rho = 0.0, rho_from_h = 0.0, rho_from_lipschitz = 0.0;
    double c_rho = 0.0, l_of_c_rho = 0.0;
    double lipschitz_budget = 0.0; // (omega - omega') / (2M)
    // rates
    double predicted_rate = 0.0; // omega - omega' - M L(C_rho)
    double certified_rate = 0.0; // (omega - omega') / 2
    double m_tilde = 0.0;        // M e^{gamma}
    bool constants_applicable = false;
    // data
    double data_norm = 0.0;
    double data_deficit = 0.0; // data_norm / rho
    bool data_within_rho = false;
    double prefactor = 0.0; // ||U_0|| + weighted g integral

    DelayCoefficient coeff;

    double cbar_of(double t) const { return cbar(coeff, b, tau, t); }
    bool applicable() const { return constants_applicable && data_within_rho; }
};

/// Assemble the full smallness/iteration report: N from the contraction
/// condition, rho from the h-inverse bound shrunk (as the iteration argument
/// allows) until L(C_rho) < (omega-omega')/(2M), the certified decay rate,
/// and the verdict on the supplied initial data.
inline TheoryReport smallness_report(const SpectralProblem& problem, double mu_tilde,
                                     const DelayCoefficient& coeff, double tau,
                                     const SemigroupEstimate& sg,
                                     const AdmissibilityResult& adm, double c_h,
                                     const InitialDataNorms& data, double prefactor) {
    TheoryReport rep;
    rep.M = sg.M;
    rep.omega = sg.omega;
    rep.omega_prime = adm.omega_prime;
    rep.gamma = adm.gamma;
    rep.c_star = adm.c_star;
    rep.b = problem.b();
    rep.mu_tilde = mu_tilde;
    rep.c_h = c_h;
    rep.sigma = problem.sigma();
    rep.tau = tau;
    rep.coeff = coeff;
    rep.admissible = adm.admissible;
    rep.data_norm = std::sqrt(data.squared());
    rep.prefactor = prefactor;
    rep.certified_rate = 0.5 * (sg.omega - adm.omega_prime);
    rep.m_tilde = std::isfinite(adm.gamma) ? sg.M * std::exp(adm.gamma) : 0.0;

    if (!adm.admissible || !(adm.omega_prime < sg.omega)) {
        rep.constants_applicable = false; // no finite N: theory-inapplicable verdict
        return rep;
    }

    // smallest N with
    //   2 M^2 (1 + e^{2wt} C*) e^{2g} e^{-(w-w')(N-1)t} < 1 / (1 + e^{wt} b^2 C*)
    const double w = sg.omega, wp = adm.omega_prime, M = sg.M;
    double lhs0 = 2.0 * M * M * (1.0 + std::exp(2.0 * w * tau) * adm.c_star) *
                  std::exp(2.0 * adm.gamma) *
                  (1.0 + std::exp(w * tau) * rep.b * rep.b * adm.c_star);
    double x = std::log(lhs0) / ((w - wp) * tau);
    rep.n_iter = x < 0.0 ? 1 : static_cast<int>(std::floor(x)) + 2;
    rep.cbar_n_tau = cbar(coeff, rep.b, tau, rep.n_iter * tau);

    const double half = 0.5 * (1.0 - mu_tilde);
    const double sigma = problem.sigma();
    const double root_cbar = std::sqrt(rep.cbar_n_tau);
    if (sigma > 0.0) {
        rep.rho_from_h =
            std::sqrt(1.0 - mu_tilde) / (2.0 * root_cbar) * std::pow(half / c_h, 1.0 / sigma);
        rep.lipschitz_budget = (w - wp) / (2.0 * M);
        rep.rho_from_lipschitz =
            std::pow(rep.lipschitz_budget / ((sigma + 1.0) * c_h), 1.0 / sigma) /
            (2.0 * root_cbar);
    } else {
        // sigma = 0: h and L are constants, the bounds are all-or-nothing
        rep.lipschitz_budget = (w - wp) / (2.0 * M);
        rep.rho_from_h = c_h < half ? std::numeric_limits<double>::infinity() : 0.0;
        rep.rho_from_lipschitz =
            c_h < rep.lipschitz_budget ? std::numeric_limits<double>::infinity() : 0.0;
    }
    rep.rho = std::min(rep.rho_from_h, rep.rho_from_lipschitz * (1.0 - 1e-12));
    rep.c_rho = 2.0 * root_cbar * rep.rho;
    rep.l_of_c_rho = (sigma > 0.0) ? (sigma + 1.0) * c_h * std::pow(rep.c_rho, sigma) : c_h;
    rep.predicted_rate = w - wp - M * rep.l_of_c_rho;
    rep.constants_applicable = rep.rho > 0.0 && std::isfinite(rep.rho) &&
                               rep.l_of_c_rho < rep.lipschitz_budget + 1e-15 &&
                               rep.predicted_rate > 0.0;
    rep.data_deficit = rep.rho > 0.0 ? rep.data_norm / rep.rho
                                     : std::numeric_limits<double>::infinity();
    rep.data_within_rho = rep.data_norm < rep.rho;
    return rep;
}

} // namespace memwave
