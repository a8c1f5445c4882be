#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "memwave/delay.hpp"
#include "memwave/errors.hpp"
#include "memwave/state.hpp"

namespace memwave {

// The energy of the model,
//   E(t) = 1/2 ||u_t||^2 + (1-mu~)/2 ||A^{1/2}u||^2 - psi(u)
//        + 1/2 int_{t-tau}^t |k(s+tau)| ||B* u_t(s)||^2 ds
//        + 1/2 int_0^inf mu(s) ||A^{1/2} eta^t(s)||^2 ds,
// split into its five additive terms. Everything except the source term is
// nonnegative.
struct EnergyBreakdown {
    double kinetic = 0.0;
    double elastic = 0.0;
    double source = 0.0; // -psi(u), the only possibly negative term
    double delay_window = 0.0;
    double memory = 0.0;

    double total() const { return kinetic + elastic + source + delay_window + memory; }

    /// Sum of the nonnegative terms (the 1/2-weighted quadratic part).
    double positive_part() const { return kinetic + elastic + delay_window + memory; }

    bool finite() const {
        return std::isfinite(kinetic) && std::isfinite(elastic) && std::isfinite(source) &&
               std::isfinite(delay_window) && std::isfinite(memory);
    }
};

inline EnergyBreakdown energy(const SpectralProblem& problem, double mu_tilde_eff,
                              const DelayCoefficient& coeff, bool source_on,
                              const SimState& state) {
    EnergyBreakdown e;
    const double half_l = 0.5 * problem.length();
    e.kinetic = 0.5 * half_l * state.v.squaredNorm();
    e.elastic = 0.5 * (1.0 - mu_tilde_eff) * half_l *
                (problem.eigenvalues().array() * state.u.array().square()).sum();
    if (source_on) e.source = -problem.psi_value(state.u);
    if (state.hist) e.memory = state.hist->memory_energy(problem);
    if (state.line) {
        // trapezoid over the ring window [t - tau, t]
        const DelayLine& line = *state.line;
        const long m = line.delay_steps();
        const long idx = line.last_index();
        double acc = 0.0;
        for (long i = idx - m; i <= idx; ++i) {
            double ti = i * line.dt();
            double f = std::abs(coeff(ti + line.tau())) * half_l *
                       line.sample_at_index(i).squaredNorm();
            acc += (i == idx - m || i == idx) ? 0.5 * f : f;
        }
        e.delay_window = 0.5 * acc * line.dt();
    }
    return e;
}

/// ||U||_H from an already-computed breakdown: the norm squares are exactly
/// twice the kinetic + elastic + memory terms.
inline double state_norm(const EnergyBreakdown& e) {
    return std::sqrt(2.0 * (e.kinetic + e.elastic + e.memory));
}

/// Gronwall envelope C(t) = exp(2 b^2 int_0^t (|k(s)| + |k(s+tau)|) ds).
inline double cbar(const DelayCoefficient& coeff, double b, double tau, double t) {
    double growth = coeff.abs_integral(t) + coeff.abs_integral(t + tau) - coeff.abs_integral(tau);
    return std::exp(2.0 * b * b * growth);
}

// Lower bounds: E(t) > (1/4-weighted quadratic terms) and E(t) > 1/4 ||U||^2.
// Both reduce to comparisons between E and halves of the positive part.
struct LowerBoundCheck {
    bool holds_energy = false; // E > 1/4 ||u_t||^2 + ... (all four terms)
    bool holds_norm = false;   // E > 1/4 ||U||^2
    double margin_energy = 0.0;
    double margin_norm = 0.0;

    bool holds() const { return holds_energy && holds_norm; }
};

inline LowerBoundCheck energy_lower_bound_check(const EnergyBreakdown& e) {
    LowerBoundCheck c;
    double tol = 1e-12 * std::max(1.0, e.positive_part());
    c.margin_energy = e.total() - 0.5 * e.positive_part();
    c.margin_norm = e.total() - 0.5 * (e.kinetic + e.elastic + e.memory);
    c.holds_energy = c.margin_energy >= -tol;
    c.holds_norm = c.margin_norm >= -tol;
    return c;
}

/// Gating hypotheses for the lower-bound lemma, with h(r) = C_h r^sigma:
/// h(||A^{1/2}u_0||) < (1-mu~)/2 and the C-bar-scaled variant at E(0).
struct LemmaGates {
    bool gate_initial = false;
    bool gate_scaled = false;
    double margin_initial = 0.0;
    double margin_scaled = 0.0;

    bool both() const { return gate_initial && gate_scaled; }
};

inline LemmaGates lemma_gate_check(double c_h, double sigma, double mu_tilde,
                                   double a_half_u0, double energy0, double cbar_tau) {
    LemmaGates g;
    double half = 0.5 * (1.0 - mu_tilde);
    auto h = [&](double r) { return c_h * std::pow(r, sigma); };
    g.margin_initial = half - h(a_half_u0);
    g.gate_initial = g.margin_initial > 0.0;
    if (energy0 >= 0.0) {
        double r = 2.0 / std::sqrt(1.0 - mu_tilde) * std::sqrt(cbar_tau) * std::sqrt(energy0);
        g.margin_scaled = half - h(r);
        g.gate_scaled = g.margin_scaled > 0.0;
    }
    return g;
}

struct FitResult {
    double c = 0.0;            // E(t) ~ c e^{-beta t}
    double beta = 0.0;
    double residual_rms = 0.0;
    double window_start = 0.0; // first fitted time
    long n_fitted = 0;
};

/// Least squares on (t, ln E) over the trailing window (default: second half
/// of the trace). Non-positive energies in the window refuse the fit; that
/// refusal is itself a diagnostic (energy-sign loss).
inline FitResult fit_decay(const std::vector<std::pair<double, double>>& trace,
                           double window_fraction = 0.5) {
    if (trace.size() < 2) throw FitRefusal("decay fit needs at least a two-sample trace");
    if (!(window_fraction > 0.0 && window_fraction <= 1.0))
        throw FitRefusal("window fraction must lie in (0, 1]");
    double t0 = trace.front().first, t1 = trace.back().first;
    double t_lo = t1 - window_fraction * (t1 - t0);
    std::vector<std::pair<double, double>> win;
    for (const auto& [t, e] : trace) {
        if (t < t_lo) continue;
        if (!(e > 0.0)) throw FitRefusal("non-positive energy in the fit window");
        win.emplace_back(t, std::log(e));
    }
    if (win.size() < 10) throw FitRefusal("decay fit needs >= 10 samples in the window");
    double n = static_cast<double>(win.size());
    double st = 0, sy = 0, stt = 0, sty = 0;
    for (const auto& [t, y] : win) {
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    double denom = n * stt - st * st;
    if (denom <= 0.0) throw FitRefusal("degenerate time grid in the fit window");
    double slope = (n * sty - st * sy) / denom;
    double intercept = (sy - slope * st) / n;
    FitResult fit;
    fit.beta = -slope;
    fit.c = std::exp(intercept);
    fit.window_start = win.front().first;
    fit.n_fitted = static_cast<long>(win.size());
    double ss = 0.0;
    for (const auto& [t, y] : win) {
        double r = y - (intercept + slope * t);
        ss += r * r;
    }
    fit.residual_rms = std::sqrt(ss / n);
    return fit;
}

/// max over samples of E(t) / (Cbar(t) E(0)) - 1 for the Gronwall lemma;
/// the caller compares against 1e-6 + 10 dt^2.
inline double lemma_bound_max_violation(const std::vector<std::pair<double, double>>& trace,
                                        const DelayCoefficient& coeff, double b, double tau) {
    if (trace.empty()) throw EstimationFailure("lemma bound check unavailable: empty trace");
    if (!(trace.front().second > 0.0)) {
        bool all_zero = true;
        for (const auto& [t, e] : trace) all_zero = all_zero && e == 0.0;
        if (all_zero) return 0.0; // zero trajectory: the bound holds vacuously
        throw EstimationFailure("lemma bound check unavailable: E(0) <= 0");
    }
    double e0 = trace.front().second;
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& [t, e] : trace)
        worst = std::max(worst, e / (cbar(coeff, b, tau, t) * e0) - 1.0);
    return worst;
}

} // namespace memwave
