#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "memwave/errors.hpp"

namespace memwave {

// Memory kernels mu(s) for the viscoelastic term. A kernel is usable for
// simulation only when it satisfies the four standing hypotheses:
//   (i)   mu in C^1 cap L^1, mu >= 0
//   (ii)  mu(0) = mu0 > 0
//   (iii) int_0^inf mu = mu_tilde < 1
//   (iv)  mu'(s) <= -delta * mu(s) for some delta > 0
// Exponential and Prony-sum forms carry closed-form constants; tabulated
// kernels are checked on their sample range with an exponential tail fit.

struct SingleExponential {
    double a; // mu(s) = a * exp(-d s)
    double d;
};

struct PronyTerm {
    double a;
    double d;
};

struct PronySum {
    std::vector<PronyTerm> terms;
};

struct TabulatedKernel {
    std::vector<double> s;   // strictly increasing, s.front() == 0
    std::vector<double> mu;  // mu(s_i)
    std::vector<double> dmu; // mu'(s_i)
};

struct KernelReport {
    double mu0 = 0.0;
    double mu_tilde = 0.0;
    double delta = 0.0;
    bool smooth_integrable = false; // (i)
    bool positive_at_zero = false;  // (ii)
    bool mass_below_one = false;    // (iii)
    bool exponential_decay = false; // (iv)

    bool usable() const {
        return smooth_integrable && positive_at_zero && mass_below_one && exponential_decay;
    }

    std::string failure_reason() const {
        if (!smooth_integrable) return "(i)";
        if (!positive_at_zero) return "(ii)";
        if (!mass_below_one) return "(iii)";
        if (!exponential_decay) return "(iv)";
        return "";
    }
};

class MemoryKernel {
public:
    using Form = std::variant<SingleExponential, PronySum, TabulatedKernel>;

    explicit MemoryKernel(Form form) : form_(std::move(form)) { check_well_formed(); }

    static MemoryKernel exponential(double a, double d) {
        return MemoryKernel(SingleExponential{a, d});
    }

    static MemoryKernel prony(std::vector<PronyTerm> terms) {
        return MemoryKernel(PronySum{std::move(terms)});
    }

    static MemoryKernel tabulated(std::vector<double> s, std::vector<double> mu,
                                  std::vector<double> dmu) {
        return MemoryKernel(TabulatedKernel{std::move(s), std::move(mu), std::move(dmu)});
    }

    const Form& form() const { return form_; }
    bool is_tabulated() const { return std::holds_alternative<TabulatedKernel>(form_); }

    /// Prony view of an analytic kernel (one term for SingleExponential).
    std::vector<PronyTerm> prony_terms() const {
        if (const auto* e = std::get_if<SingleExponential>(&form_)) return {{e->a, e->d}};
        if (const auto* p = std::get_if<PronySum>(&form_)) return p->terms;
        throw MalformedInput("tabulated kernel has no Prony representation");
    }

    /// End of the sample range for tabulated kernels, +inf otherwise.
    double range_end() const {
        if (const auto* t = std::get_if<TabulatedKernel>(&form_)) return t->s.back();
        return std::numeric_limits<double>::infinity();
    }

    double eval(double s) const {
        if (const auto* e = std::get_if<SingleExponential>(&form_))
            return e->a * std::exp(-e->d * s);
        if (const auto* p = std::get_if<PronySum>(&form_)) {
            double v = 0.0;
            for (const auto& t : p->terms) v += t.a * std::exp(-t.d * s);
            return v;
        }
        return interp(std::get<TabulatedKernel>(form_).mu, s);
    }

    double deriv(double s) const {
        if (const auto* e = std::get_if<SingleExponential>(&form_))
            return -e->d * e->a * std::exp(-e->d * s);
        if (const auto* p = std::get_if<PronySum>(&form_)) {
            double v = 0.0;
            for (const auto& t : p->terms) v -= t.d * t.a * std::exp(-t.d * s);
            return v;
        }
        return interp(std::get<TabulatedKernel>(form_).dmu, s);
    }

    double mu0() const { return constants_set_ ? mu0_ : eval(0.0); }
    double mu_tilde() const { return mu_tilde_; }
    double delta() const { return delta_; }
    bool validated_usable() const { return validated_usable_; }

    friend KernelReport validate_kernel(MemoryKernel& kernel);

private:
    Form form_;
    double mu0_ = 0.0, mu_tilde_ = 0.0, delta_ = 0.0;
    bool constants_set_ = false;
    bool validated_usable_ = false;

    void check_well_formed() const {
        if (const auto* e = std::get_if<SingleExponential>(&form_)) {
            if (!(e->a > 0.0) || !(e->d > 0.0) || !std::isfinite(e->a) || !std::isfinite(e->d))
                throw MalformedInput("exponential kernel requires finite a > 0, d > 0");
            return;
        }
        if (const auto* p = std::get_if<PronySum>(&form_)) {
            if (p->terms.empty()) throw MalformedInput("Prony kernel needs at least one term");
            for (const auto& t : p->terms)
                if (!(t.a > 0.0) || !(t.d > 0.0) || !std::isfinite(t.a) || !std::isfinite(t.d))
                    throw MalformedInput("Prony terms require finite a > 0, d > 0");
            return;
        }
        const auto& tab = std::get<TabulatedKernel>(form_);
        if (tab.s.size() < 2 || tab.s.size() != tab.mu.size() || tab.s.size() != tab.dmu.size())
            throw MalformedInput("tabulated kernel needs matching s/mu/dmu columns, >= 2 rows");
        if (tab.s.front() != 0.0)
            throw MalformedInput("tabulated kernel must start at s = 0");
        for (std::size_t i = 1; i < tab.s.size(); ++i)
            if (!(tab.s[i] > tab.s[i - 1]))
                throw MalformedInput("tabulated kernel s-grid must be strictly increasing");
        for (std::size_t i = 0; i < tab.s.size(); ++i)
            if (!std::isfinite(tab.s[i]) || !std::isfinite(tab.mu[i]) || !std::isfinite(tab.dmu[i]))
                throw MalformedInput("tabulated kernel has non-finite entries");
    }

    double interp(const std::vector<double>& col, double s) const {
        const auto& tab = std::get<TabulatedKernel>(form_);
        if (s < tab.s.front() || s > tab.s.back())
            throw ExtrapolationError("tabulated kernel evaluated outside sample range");
        auto it = std::upper_bound(tab.s.begin(), tab.s.end(), s);
        if (it == tab.s.end()) return col.back();
        std::size_t hi = static_cast<std::size_t>(it - tab.s.begin());
        if (hi == 0) return col.front();
        std::size_t lo = hi - 1;
        double w = (s - tab.s[lo]) / (tab.s[hi] - tab.s[lo]);
        return (1.0 - w) * col[lo] + w * col[hi];
    }
};

namespace detail {

/// Decay rate fitted to the last two tabulated samples; <= 0 means the tail
/// cannot be bounded by a decaying exponential.
inline double tabulated_tail_rate(const TabulatedKernel& tab) {
    std::size_t n = tab.s.size();
    double m1 = tab.mu[n - 2], m2 = tab.mu[n - 1];
    if (!(m1 > 0.0) || !(m2 > 0.0) || m2 >= m1) return 0.0;
    return std::log(m1 / m2) / (tab.s[n - 1] - tab.s[n - 2]);
}

inline double tabulated_mass_from(const TabulatedKernel& tab, double S) {
    // trapezoid over the samples beyond S plus the fitted-exponential tail
    double mass = 0.0;
    std::size_t n = tab.s.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        double lo = tab.s[i], hi = tab.s[i + 1];
        if (hi <= S) continue;
        double a = std::max(lo, S);
        double wlo = (hi - lo) > 0 ? (tab.mu[i] + (tab.mu[i + 1] - tab.mu[i]) * (a - lo) / (hi - lo))
                                   : tab.mu[i];
        mass += 0.5 * (wlo + tab.mu[i + 1]) * (hi - a);
    }
    double rate = tabulated_tail_rate(tab);
    if (tab.mu[n - 1] > 0.0) {
        if (rate <= 0.0) return std::numeric_limits<double>::infinity();
        mass += tab.mu[n - 1] / rate;
    }
    return mass;
}

} // namespace detail

/// ∫_S^∞ mu(s) ds. Closed form for analytic kernels; trapezoid plus fitted
/// exponential tail for tabulated ones (S beyond the table throws).
inline double kernel_tail_mass(const MemoryKernel& kernel, double S) {
    if (S < 0.0) throw MalformedInput("tail mass requires S >= 0");
    if (const auto* e = std::get_if<SingleExponential>(&kernel.form()))
        return e->a / e->d * std::exp(-e->d * S);
    if (const auto* p = std::get_if<PronySum>(&kernel.form())) {
        double m = 0.0;
        for (const auto& t : p->terms) m += t.a / t.d * std::exp(-t.d * S);
        return m;
    }
    const auto& tab = std::get<TabulatedKernel>(kernel.form());
    if (S > tab.s.back())
        throw ExtrapolationError("tail mass start beyond tabulated range");
    return detail::tabulated_mass_from(tab, S);
}

/// Grid on which hypotheses (i)/(iv) are checked: the samples themselves for
/// tabulated kernels, a log-spaced sweep of the decaying range otherwise.
inline std::vector<double> hypothesis_grid(const MemoryKernel& kernel) {
    if (const auto* t = std::get_if<TabulatedKernel>(&kernel.form())) return t->s;
    double d_min = std::numeric_limits<double>::infinity();
    for (const auto& t : kernel.prony_terms()) d_min = std::min(d_min, t.d);
    double span = 40.0 / d_min; // mu decays by e^{-40} over the sweep
    std::vector<double> g;
    g.reserve(1025);
    g.push_back(0.0);
    double lo = span * 1e-8;
    int n = 1024;
    for (int i = 0; i <= n; ++i)
        g.push_back(lo * std::pow(span / lo, double(i) / n));
    return g;
}

/// Check hypotheses (i)-(iv) and stamp the derived constants on the kernel.
/// A failed hypothesis is a verdict, not an error; only malformed input throws.
inline KernelReport validate_kernel(MemoryKernel& kernel) {
    KernelReport rep;
    if (const auto* e = std::get_if<SingleExponential>(&kernel.form())) {
        rep.mu0 = e->a;
        rep.mu_tilde = e->a / e->d;
        rep.delta = e->d;
        rep.smooth_integrable = true;
        rep.positive_at_zero = true;
        rep.mass_below_one = rep.mu_tilde < 1.0;
        rep.exponential_decay = true;
    } else if (const auto* p = std::get_if<PronySum>(&kernel.form())) {
        rep.mu0 = 0.0;
        rep.mu_tilde = 0.0;
        double d_min = std::numeric_limits<double>::infinity();
        for (const auto& t : p->terms) {
            rep.mu0 += t.a;
            rep.mu_tilde += t.a / t.d;
            d_min = std::min(d_min, t.d);
        }
        rep.delta = d_min; // mu' + d_min*mu = sum a_j (d_min - d_j) e^{-d_j s} <= 0
        rep.smooth_integrable = true;
        rep.positive_at_zero = true;
        rep.mass_below_one = rep.mu_tilde < 1.0;
        rep.exponential_decay = true;
    } else {
        const auto& tab = std::get<TabulatedKernel>(kernel.form());
        rep.mu0 = tab.mu.front();
        rep.positive_at_zero = rep.mu0 > 0.0;
        bool nonneg = true;
        for (double m : tab.mu) nonneg = nonneg && m >= 0.0;
        double mass = detail::tabulated_mass_from(tab, 0.0);
        rep.mu_tilde = mass;
        rep.mass_below_one = std::isfinite(mass) && mass < 1.0;
        rep.smooth_integrable = nonneg && std::isfinite(mass); // mu >= 0 and in L^1
        // (iv): largest delta with mu' <= -delta*mu across the samples,
        // floored at zero; hitting the floor fails the hypothesis.
        double delta = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < tab.s.size(); ++i) {
            if (tab.mu[i] <= 0.0) {
                delta = 0.0;
                break;
            }
            delta = std::min(delta, -tab.dmu[i] / tab.mu[i]);
        }
        rep.delta = std::max(0.0, delta);
        rep.exponential_decay = rep.delta > 0.0;
    }
    kernel.mu0_ = rep.mu0;
    kernel.mu_tilde_ = rep.mu_tilde;
    kernel.delta_ = rep.delta;
    kernel.constants_set_ = true;
    kernel.validated_usable_ = rep.usable();
    return rep;
}

/// Smallest truncation age S with tail mass <= rel_tol * mu_tilde. For
/// tabulated kernels the result is clamped to the sample range.
inline double choose_history_span(const MemoryKernel& kernel, double rel_tol = 1e-10) {
    double target = rel_tol * kernel.mu_tilde();
    if (!(target > 0.0)) throw MalformedInput("history span needs validated kernel constants");
    double hi = kernel.range_end();
    if (std::isinf(hi)) {
        double d_min = std::numeric_limits<double>::infinity();
        for (const auto& t : kernel.prony_terms()) d_min = std::min(d_min, t.d);
        hi = 2.0 * std::log(1.0 / rel_tol) / d_min + 1.0;
    }
    if (kernel_tail_mass(kernel, hi) > target) return hi; // table too short: use all of it
    double lo = 0.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        (kernel_tail_mass(kernel, mid) > target ? lo : hi) = mid;
        if (hi - lo < 1e-12 * (1.0 + hi)) break;
    }
    return hi;
}

} // namespace memwave
