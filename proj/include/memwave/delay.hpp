#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <variant>
#include <vector>

#include "memwave/errors.hpp"
#include "memwave/spectral.hpp"

namespace memwave {

// Delay damping coefficient k(t). All admissibility bookkeeping runs on |k|,
// so signed coefficients are allowed. Every form carries a closed-form
// running integral F(t) = int_0^t |k|, which is what the windowed condition
// int_{t-tau}^t |k| < C* and the growth budget
//   b^2 M e^{w tau} int_0^t |k(s+tau)| ds <= gamma + w' t
// reduce to.
class DelayCoefficient {
public:
    struct Constant {
        double k0;
    };
    struct ExponentialDecay {
        double k0;
        double rate; // k(t) = k0 e^{-rate t}, rate > 0
    };
    struct PiecewiseConstant {
        std::vector<double> breakpoints; // strictly increasing, > 0
        std::vector<double> values;      // size = breakpoints.size() + 1
    };
    struct OnOff {
        double amplitude;
        double period;
        double duty; // on-fraction in [0, 1]
    };
    using Form = std::variant<Constant, ExponentialDecay, PiecewiseConstant, OnOff>;

    DelayCoefficient() : form_(Constant{0.0}) {}
    explicit DelayCoefficient(Form form) : form_(std::move(form)) { check(); }

    static DelayCoefficient zero() { return DelayCoefficient(); }
    static DelayCoefficient constant(double k0) { return DelayCoefficient(Constant{k0}); }
    static DelayCoefficient exponential_decay(double k0, double rate) {
        return DelayCoefficient(ExponentialDecay{k0, rate});
    }
    static DelayCoefficient piecewise(std::vector<double> bp, std::vector<double> vals) {
        return DelayCoefficient(PiecewiseConstant{std::move(bp), std::move(vals)});
    }
    static DelayCoefficient onoff(double amplitude, double period, double duty) {
        return DelayCoefficient(OnOff{amplitude, period, duty});
    }

    const Form& form() const { return form_; }

    bool is_zero() const {
        if (const auto* c = std::get_if<Constant>(&form_)) return c->k0 == 0.0;
        return false;
    }

    double operator()(double t) const {
        if (t < 0.0) return 0.0;
        if (const auto* c = std::get_if<Constant>(&form_)) return c->k0;
        if (const auto* e = std::get_if<ExponentialDecay>(&form_))
            return e->k0 * std::exp(-e->rate * t);
        if (const auto* p = std::get_if<PiecewiseConstant>(&form_)) {
            auto it = std::upper_bound(p->breakpoints.begin(), p->breakpoints.end(), t);
            return p->values[static_cast<std::size_t>(it - p->breakpoints.begin())];
        }
        const auto& o = std::get<OnOff>(form_);
        double phase = std::fmod(t, o.period);
        return phase < o.duty * o.period ? o.amplitude : 0.0;
    }

    /// F(t) = int_0^t |k(s)| ds, closed form; F(t<=0) = 0.
    double abs_integral(double t) const {
        if (t <= 0.0) return 0.0;
        if (const auto* c = std::get_if<Constant>(&form_)) return std::abs(c->k0) * t;
        if (const auto* e = std::get_if<ExponentialDecay>(&form_))
            return std::abs(e->k0) / e->rate * (-std::expm1(-e->rate * t));
        if (const auto* p = std::get_if<PiecewiseConstant>(&form_)) {
            double acc = 0.0, prev = 0.0;
            for (std::size_t i = 0; i < p->breakpoints.size(); ++i) {
                double hi = std::min(t, p->breakpoints[i]);
                if (hi > prev) acc += std::abs(p->values[i]) * (hi - prev);
                if (t <= p->breakpoints[i]) return acc;
                prev = p->breakpoints[i];
            }
            return acc + std::abs(p->values.back()) * (t - prev);
        }
        const auto& o = std::get<OnOff>(form_);
        double on_len = o.duty * o.period;
        double full = std::floor(t / o.period);
        double rem = t - full * o.period;
        return std::abs(o.amplitude) * (full * on_len + std::min(rem, on_len));
    }

    /// int_{t-tau}^{t} |k(s)| ds  (|k| extended by zero to s < 0).
    double window_integral(double t, double tau) const {
        return abs_integral(t) - abs_integral(t - tau);
    }

    /// C* = sup_t of the window integral; exact via the breakpoint structure.
    double c_star(double tau) const {
        if (const auto* c = std::get_if<Constant>(&form_)) return std::abs(c->k0) * tau;
        if (std::holds_alternative<ExponentialDecay>(form_))
            return abs_integral(tau); // window peaks at t = tau, then decays
        std::vector<double> cand{0.0, tau};
        if (const auto* p = std::get_if<PiecewiseConstant>(&form_)) {
            for (double bpt : p->breakpoints) {
                cand.push_back(bpt);
                cand.push_back(bpt + tau);
            }
        } else {
            const auto& o = std::get<OnOff>(form_);
            double on_len = o.duty * o.period;
            for (int n = 0; n * o.period <= tau + 2.0 * o.period; ++n) {
                for (double edge : {n * o.period, n * o.period + on_len}) {
                    cand.push_back(edge);
                    cand.push_back(edge + tau);
                }
            }
        }
        double best = 0.0;
        for (double t : cand)
            if (t >= 0.0) best = std::max(best, window_integral(t, tau));
        return best;
    }

    /// Growth rate of F at infinity.
    double asymptotic_slope() const {
        if (const auto* c = std::get_if<Constant>(&form_)) return std::abs(c->k0);
        if (std::holds_alternative<ExponentialDecay>(form_)) return 0.0;
        if (const auto* p = std::get_if<PiecewiseConstant>(&form_))
            return std::abs(p->values.back());
        const auto& o = std::get<OnOff>(form_);
        return std::abs(o.amplitude) * o.duty;
    }

    /// gamma = sup_{t>=0} [ scale (F(t+tau) - F(tau)) - omega_prime t ];
    /// +inf when the budget cannot hold for any finite gamma.
    double gamma_for(double scale, double tau, double omega_prime) const {
        auto g = [&](double t) {
            return scale * (abs_integral(t + tau) - abs_integral(tau)) - omega_prime * t;
        };
        const double inf = std::numeric_limits<double>::infinity();
        if (const auto* c = std::get_if<Constant>(&form_)) {
            double slope = scale * std::abs(c->k0) - omega_prime;
            return slope > 1e-15 ? inf : 0.0;
        }
        if (const auto* e = std::get_if<ExponentialDecay>(&form_)) {
            double amp = scale * std::abs(e->k0) * std::exp(-e->rate * tau);
            if (omega_prime <= 0.0) return amp / e->rate; // limit value
            if (amp <= omega_prime) return 0.0;           // decreasing from t = 0
            double t_star = std::log(amp / omega_prime) / e->rate;
            return g(t_star);
        }
        if (const auto* p = std::get_if<PiecewiseConstant>(&form_)) {
            if (scale * std::abs(p->values.back()) - omega_prime > 1e-15) return inf;
            double best = 0.0;
            for (double bpt : p->breakpoints) best = std::max(best, g(std::max(0.0, bpt - tau)));
            return best;
        }
        const auto& o = std::get<OnOff>(form_);
        double on_len = o.duty * o.period;
        // G(t+P) - G(t) = scale |A| l - omega' P for every t >= 0, so a
        // nonpositive per-period drift pins the supremum in the first period.
        double drift = scale * std::abs(o.amplitude) * on_len - omega_prime * o.period;
        if (drift > 1e-15) return inf;
        double best = std::max(g(0.0), g(o.period));
        for (int n = 0; n * o.period <= tau + o.period; ++n) {
            for (double edge : {n * o.period, n * o.period + on_len}) {
                double t = edge - tau;
                if (t >= 0.0 && t <= o.period) best = std::max(best, g(t));
            }
        }
        return best;
    }

private:
    void check() const {
        if (const auto* e = std::get_if<ExponentialDecay>(&form_)) {
            if (!(e->rate > 0.0)) throw MalformedInput("exponential-decay coefficient needs rate > 0");
        } else if (const auto* p = std::get_if<PiecewiseConstant>(&form_)) {
            if (p->values.size() != p->breakpoints.size() + 1)
                throw MalformedInput("piecewise coefficient needs one more value than breakpoints");
            double prev = 0.0;
            for (double bpt : p->breakpoints) {
                if (!(bpt > prev)) throw MalformedInput("breakpoints must be strictly increasing and > 0");
                prev = bpt;
            }
        } else if (const auto* o = std::get_if<OnOff>(&form_)) {
            if (!(o->period > 0.0) || !(o->duty >= 0.0 && o->duty <= 1.0))
                throw MalformedInput("on-off coefficient needs period > 0 and duty in [0,1]");
        }
    }

    Form form_;
};

struct AdmissibilityResult {
    bool admissible = false;
    double gamma = std::numeric_limits<double>::infinity();
    double c_star = 0.0;
    double omega_prime = 0.0;
};

/// Evaluate the delay budget for a caller-chosen omega_prime in [0, omega).
inline AdmissibilityResult check_admissibility(const DelayCoefficient& coeff, double tau,
                                               double b, double M, double omega,
                                               double omega_prime) {
    if (!(omega > 0.0) || !(M > 0.0) || !(tau > 0.0))
        throw MalformedInput("admissibility needs M, omega, tau > 0");
    if (!(omega_prime >= 0.0) || omega_prime >= omega)
        throw MalformedInput("admissibility requires 0 <= omega_prime < omega");
    double scale = b * b * M * std::exp(omega * tau);
    AdmissibilityResult res;
    res.omega_prime = omega_prime;
    res.c_star = coeff.c_star(tau);
    res.gamma = coeff.gamma_for(scale, tau, omega_prime);
    res.admissible = std::isfinite(res.gamma);
    return res;
}

/// Pick the smallest workable omega_prime (the asymptotic slope of the
/// budget's left side) and evaluate gamma there.
inline AdmissibilityResult auto_admissibility(const DelayCoefficient& coeff, double tau,
                                              double b, double M, double omega) {
    double scale = b * b * M * std::exp(omega * tau);
    double needed = scale * coeff.asymptotic_slope();
    if (needed >= omega) {
        AdmissibilityResult res;
        res.admissible = false;
        res.omega_prime = needed;
        res.c_star = coeff.c_star(tau);
        return res;
    }
    return check_admissibility(coeff, tau, b, M, omega, needed);
}

using GSampler = std::function<Field(double)>; // t in [-tau, 0] -> B* u_t(t), modal

// Ring of the m+1 most recent B* u_t samples on the step grid, tau = m dt.
// Reads at delay tau are exact lookups of the value pushed m steps earlier;
// times before t = 0 come from the g datum, never from the ring.
class DelayLine {
public:
    DelayLine(const SpectralProblem& problem, GSampler g_sampler, double tau, double dt)
        : tau_(tau), dt_(dt), g_(std::move(g_sampler)) {
        if (!(tau > 0.0) || !(dt > 0.0)) throw ConfigError("delay line needs tau, dt > 0");
        long m = std::lround(tau / dt);
        if (m < 1 || std::abs(m * dt - tau) > 1e-12 * std::max(1.0, tau))
            throw ConfigError("tau must be an integer multiple of dt (adjust dt, not the line)");
        m_ = m;
        buf_.resize(m_ + 1);
        for (long i = -m_; i <= 0; ++i) buf_[slot(i)] = g_(i * dt);
        last_ = 0;
        for (const auto& f : buf_)
            if (f.size() != problem.n_modes())
                throw ConfigError("g samples must have one coefficient per mode");
    }

    long delay_steps() const { return m_; }
    double tau() const { return tau_; }
    double dt() const { return dt_; }
    long last_index() const { return last_; }

    void push(const Field& bstar_v) {
        ++last_;
        buf_[slot(last_)] = bstar_v;
    }

    /// Stored sample at time index*dt; only the trailing window survives.
    const Field& sample_at_index(long index) const {
        if (index > last_)
            throw SequencingError("delay line read ahead of pushes");
        if (index < last_ - m_)
            throw SequencingError("delay line sample already evicted");
        return buf_[slot(index)];
    }

    /// g(t) for t <= 0 (the pre-history datum).
    Field g_phase(double t) const { return g_(t); }

    /// Test hook: overwrite a stored slot in place.
    void overwrite(long index, const Field& value) {
        if (index > last_ || index < last_ - m_)
            throw SequencingError("overwrite outside the ring window");
        buf_[slot(index)] = value;
    }

private:
    long slot(long index) const {
        long n = m_ + 1;
        return ((index % n) + n) % n;
    }

    double tau_, dt_;
    long m_ = 0;
    long last_ = 0;
    GSampler g_;
    std::vector<Field> buf_;
};

inline DelayLine make_delay_line(const SpectralProblem& problem, GSampler g_sampler, double tau,
                                 double dt) {
    return DelayLine(problem, std::move(g_sampler), tau, dt);
}

/// k(t) B B* u_t(t - tau), with the g datum supplying times before the start.
inline Field delayed_feedback(const SpectralProblem& problem, const DelayLine& line,
                              const DelayCoefficient& coeff, double t) {
    double k = coeff(t);
    long idx = std::lround(t / line.dt());
    const long m = line.delay_steps();
    if (idx < m) return k * problem.apply_B(line.g_phase(t - line.tau()));
    return k * problem.apply_B(line.sample_at_index(idx - m));
}

} // namespace memwave
