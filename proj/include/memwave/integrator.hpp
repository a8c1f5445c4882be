#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "memwave/diagnostics.hpp"
#include "memwave/state.hpp"

namespace memwave {

// One step of the coupled system
//   u_tt + (1-mu~) A u = -int mu A eta ds - k(t) BB* u_t(t-tau) + grad psi(u)
// by a kick-drift-kick splitting:
//   * the stiff block v' = -(1-mu~) lambda u, u' = v is advanced mode-wise by
//     the exact 2x2 rotation over dt (unconditionally stable, any lambda);
//   * the bounded coupling terms act as half-step velocity kicks evaluated at
//     the step endpoints. None of them depends on the instantaneous velocity
//     (the delayed one reads the ring, the memory one reads the history), so
//     the scheme stays explicit and second order.
// The history advance uses the exact end-of-step displacement (transport
// shift) and endpoint-linear velocities (Prony), with a post-kick correction
// so the velocity endpoint seen by the Prony update is the final one.
class StepContext {
public:
    StepContext(const SpectralProblem& problem, const MemoryKernel* kernel,
                const DelayCoefficient* coeff, double dt, bool source_on)
        : problem_(problem), kernel_(kernel), coeff_(coeff), dt_(dt), source_on_(source_on) {
        if (!(dt > 0.0)) throw ConfigError("step needs dt > 0");
        mu_tilde_eff_ = kernel ? kernel->mu_tilde() : 0.0;
        const auto& lam = problem.eigenvalues();
        int K = problem.n_modes();
        cos_.resize(K);
        sin_over_omega_.resize(K);
        omega_sin_.resize(K);
        for (int k = 0; k < K; ++k) {
            double omega = std::sqrt((1.0 - mu_tilde_eff_) * lam[k]);
            double c = std::cos(omega * dt), s = std::sin(omega * dt);
            cos_[k] = c;
            sin_over_omega_[k] = s / omega;
            omega_sin_[k] = omega * s;
        }
    }

    const SpectralProblem& problem() const { return problem_; }
    const MemoryKernel* kernel() const { return kernel_; }
    const DelayCoefficient* coeff() const { return coeff_; }
    double dt() const { return dt_; }
    bool source_on() const { return source_on_; }
    double mu_tilde_eff() const { return mu_tilde_eff_; }

    Field coupling_rhs(double t, const Field& u, const SimState& state) const {
        Field r = Field::Zero(problem_.n_modes());
        if (kernel_ && state.hist) r -= state.hist->convolution(problem_);
        if (coeff_ && state.line) r -= delayed_feedback(problem_, *state.line, *coeff_, t);
        if (source_on_) r += problem_.eval_source(u);
        return r;
    }

    void rotate(Field& u, Field& v) const {
        for (int k = 0; k < u.size(); ++k) {
            double uk = u[k], vk = v[k];
            u[k] = cos_[k] * uk + sin_over_omega_[k] * vk;
            v[k] = -omega_sin_[k] * uk + cos_[k] * vk;
        }
    }

private:
    const SpectralProblem& problem_;
    const MemoryKernel* kernel_;
    const DelayCoefficient* coeff_;
    double dt_;
    bool source_on_;
    double mu_tilde_eff_;
    Eigen::VectorXd cos_, sin_over_omega_, omega_sin_;
};

inline void step(const StepContext& ctx, SimState& state) {
    const double dt = ctx.dt();
    const double t = state.t;
    try {
        Field r0 = ctx.coupling_rhs(t, state.u, state);
        Field v0 = state.v;
        Field vh = v0 + 0.5 * dt * r0;
        Field u1 = state.u;
        ctx.rotate(u1, vh); // (u1, vh) now holds the drifted pair; vh = predicted v
        if (state.hist) state.hist->advance_predict(u1, v0, vh);
        state.u = u1; // coupling_rhs at t+dt must see the new displacement/history
        Field r1 = ctx.coupling_rhs(t + dt, u1, state);
        Field v1 = vh + 0.5 * dt * r1;
        if (state.hist) state.hist->advance_finalize(v0, v1, vh);
        if (state.line) state.line->push(ctx.problem().apply_Bstar(v1));
        state.v = v1;
    } catch (const DivergenceError& e) {
        throw DivergenceError(e.what(), t);
    }
    ++state.step_index;
    state.t = state.step_index * dt;
    if (!state.u.allFinite() || !state.v.allFinite())
        throw DivergenceError("non-finite state after step", state.t);
}

// ---------------------------------------------------------------------------

/// Everything a run needs, already validated and resolved (tau an exact
/// multiple of dt, history span chosen, samplers bound).
struct RunSetup {
    explicit RunSetup(SpectralProblem p) : problem(std::move(p)) {}

    SpectralProblem problem;
    std::optional<MemoryKernel> kernel; // engaged unless the memory term is off
    HistoryMode history_mode = HistoryMode::PronyODE;
    double s_max = 0.0;
    DelayCoefficient coeff = DelayCoefficient::zero();
    double tau = 0.0;
    SimOptions opts;
    double dt = 1e-3;
    double t_final = 1.0;
    long sample_stride = 1;
    Field u0, u1;
    HistorySampler history_sampler;
    GSampler g_sampler;
    bool record_dense = false; // keep every displacement for oracle checks
};

struct Sample {
    double t = 0.0;
    EnergyBreakdown energy;
    double norm_U = 0.0;
    double cbar_t = 1.0;
    bool lb_holds = true;
};

enum class Termination { Completed, Diverged, EnergyPositivityLost };

inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::Completed: return "completed";
        case Termination::Diverged: return "diverged";
        case Termination::EnergyPositivityLost: return "energy_positivity_lost";
    }
    return "unknown";
}

struct Trajectory {
    std::vector<Sample> samples;
    Termination termination = Termination::Completed;
    double t_end = 0.0;
    std::optional<double> t_lb_lost; // first loss of the lower bound, if any
    SimState final_state;
    TrajectoryStore dense;
};

inline SimState make_initial_state(const RunSetup& setup) {
    SimState st;
    st.t = 0.0;
    st.step_index = 0;
    st.u = setup.u0;
    st.v = setup.u1;
    if (setup.kernel && !setup.opts.memory_off) {
        if (!setup.history_sampler)
            throw ConfigError("memory term enabled but no history sampler bound");
        st.hist = init_history(setup.problem, *setup.kernel, setup.history_mode, setup.dt,
                               setup.s_max, setup.history_sampler);
    }
    if (!setup.opts.delay_off) {
        if (!setup.g_sampler) throw ConfigError("delay term enabled but no g sampler bound");
        st.line = make_delay_line(setup.problem, setup.g_sampler, setup.tau, setup.dt);
    }
    return st;
}

/// Run to the horizon, sampling the energy breakdown every sample_stride
/// steps; stops early on divergence or (optionally) on loss of the energy
/// lower bound, recording which.
inline Trajectory simulate(const RunSetup& setup) {
    const bool memory_on = setup.kernel && !setup.opts.memory_off;
    const MemoryKernel* kernel = memory_on ? &*setup.kernel : nullptr;
    const bool delay_on = !setup.opts.delay_off;
    const DelayCoefficient* coeff = delay_on ? &setup.coeff : nullptr;
    const bool source_on = !setup.opts.source_off;
    StepContext ctx(setup.problem, kernel, coeff, setup.dt, source_on);

    SimState st = make_initial_state(setup);
    Trajectory traj;
    if (setup.record_dense) {
        traj.dense.dt = setup.dt;
        traj.dense.u.push_back(st.u);
    }

    const DelayCoefficient zero_coeff = DelayCoefficient::zero();
    const DelayCoefficient& ecoeff = delay_on ? setup.coeff : zero_coeff;
    const double b = setup.problem.b();

    auto take_sample = [&](const SimState& s) {
        Sample smp;
        smp.t = s.t;
        smp.energy = energy(setup.problem, ctx.mu_tilde_eff(), ecoeff, source_on, s);
        smp.norm_U = state_norm(smp.energy);
        smp.cbar_t = delay_on ? cbar(ecoeff, b, setup.tau, s.t) : 1.0;
        smp.lb_holds = energy_lower_bound_check(smp.energy).holds();
        return smp;
    };

    Sample first = take_sample(st);
    double threshold = setup.opts.divergence_factor * std::max(1.0, first.norm_U);
    traj.samples.push_back(first);
    if (!first.lb_holds) {
        traj.t_lb_lost = 0.0;
        if (setup.opts.stop_on_lb_loss) {
            traj.termination = Termination::EnergyPositivityLost;
            traj.t_end = 0.0;
            traj.final_state = std::move(st);
            return traj;
        }
    }

    const long n_steps = static_cast<long>(std::ceil(setup.t_final / setup.dt - 1e-9));
    for (long n = 0; n < n_steps; ++n) {
        try {
            step(ctx, st);
        } catch (const DivergenceError& e) {
            traj.termination = Termination::Diverged;
            traj.t_end = e.t >= 0.0 ? e.t : st.t;
            traj.final_state = std::move(st);
            return traj;
        }
        if (setup.record_dense) traj.dense.u.push_back(st.u);
        if (st.step_index % setup.sample_stride == 0 || n + 1 == n_steps) {
            Sample smp = take_sample(st);
            if (!smp.energy.finite() || smp.norm_U > threshold) {
                traj.termination = Termination::Diverged;
                traj.t_end = st.t;
                traj.final_state = std::move(st);
                return traj;
            }
            traj.samples.push_back(smp);
            if (!smp.lb_holds && !traj.t_lb_lost) {
                traj.t_lb_lost = st.t;
                if (setup.opts.stop_on_lb_loss) {
                    traj.termination = Termination::EnergyPositivityLost;
                    traj.t_end = st.t;
                    traj.final_state = std::move(st);
                    return traj;
                }
            }
        }
    }
    traj.termination = Termination::Completed;
    traj.t_end = st.t;
    traj.final_state = std::move(st);
    return traj;
}

} // namespace memwave
