#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "memwave/errors.hpp"
#include "memwave/kernels.hpp"
#include "memwave/spectral.hpp"

namespace memwave {

// Discretization of the relative-history field eta^t(s) = u(t) - u(t-s) and
// of the memory convolution m_k = lambda_k int_0^inf mu(s) eta_k(t,s) ds.
//
// Transport mode keeps the past trajectory u(t - j dt) on a uniform age grid
// s_j = j dt, so the transport equation eta_t = -eta_s + u_t is advanced by a
// pure index shift: no interpolation, and eta values are exact relative to
// the discrete trajectory. The convolution uses the product trapezoid rule
// against mu plus a constant-in-eta analytic tail beyond s_max.
//
// PronyODE mode tracks, per mode k and Prony term j,
//   y_kj = int a_j e^{-d_j s} eta_k ds     (for the convolution)
//   z_kj = int a_j e^{-d_j s} eta_k^2 ds   (for the memory energy)
// whose exact dynamics follow from the transport equation:
//   y' = -d y + (a/d) v,     z' = -d z + 2 v y.
// Both are advanced by variation of constants with the velocity taken linear
// across the step: exact in s, second order in t.

enum class HistoryMode { Transport, PronyODE };

using HistorySampler = std::function<Field(double)>; // s >= 0 -> u0(-s), modal

class HistoryField {
public:
    static HistoryField transport(const SpectralProblem& problem, const MemoryKernel& kernel,
                                  double dt, double s_max, const HistorySampler& sampler) {
        HistoryField h(HistoryMode::Transport, problem.n_modes(), dt);
        double range = kernel.range_end();
        long n_s = static_cast<long>(std::ceil(s_max / dt - 1e-9));
        if (std::isfinite(range)) n_s = std::min(n_s, static_cast<long>(std::floor(range / dt + 1e-9)));
        if (n_s < 1) throw ConfigError("history span shorter than one step");
        if (n_s * static_cast<long>(problem.n_modes()) > 16'000'000L)
            throw ConfigError("transport history grid too large; use the Prony mode or coarsen dt");
        h.n_s_ = n_s;
        h.s_max_ = n_s * dt;
        h.tail_mass_ = kernel_tail_mass(kernel, h.s_max_);
        h.mu_age_.resize(n_s + 1);
        for (long j = 0; j <= n_s; ++j) h.mu_age_[j] = kernel.eval(j * dt);
        h.ring_.resize(problem.n_modes(), n_s + 1);
        h.head_ = 0;
        for (long j = 0; j <= n_s; ++j) h.ring_.col(h.age_col(j)) = sampler(j * dt);
        return h;
    }

    static HistoryField prony(const SpectralProblem& problem, const MemoryKernel& kernel,
                              double dt, double s_max, const HistorySampler& sampler) {
        HistoryField h(HistoryMode::PronyODE, problem.n_modes(), dt);
        h.terms_ = kernel.prony_terms();
        h.s_max_ = s_max;
        std::size_t nj = h.terms_.size();
        h.exp_.resize(nj);
        h.i0_.resize(nj);
        h.i1_over_dt_.resize(nj);
        for (std::size_t j = 0; j < nj; ++j) {
            double d = h.terms_[j].d, theta = d * dt;
            double em = -std::expm1(-theta); // 1 - e^{-theta}
            h.exp_[j] = std::exp(-theta);
            h.i0_[j] = em / d;
            double i1 = (theta < 1e-4)
                            ? dt * dt * (0.5 - theta / 6.0 + theta * theta / 24.0)
                            : (dt - h.i0_[j]) / d;
            h.i1_over_dt_[j] = i1 / dt;
        }
        int K = problem.n_modes();
        h.y_.setZero(K, static_cast<Eigen::Index>(nj));
        h.z_.setZero(K, static_cast<Eigen::Index>(nj));
        h.y_snapshot_ = h.y_;

        // initialize y, z by product quadrature of the sampled initial
        // history against each exponential weight (exact for piecewise
        // linear eta), plus a constant-extension tail beyond s_max
        long n_init = std::max<long>(1024, std::min<long>(16384, static_cast<long>(std::ceil(s_max / dt))));
        double ds = s_max / n_init;
        Field u_now = sampler(0.0);
        // eta at s = 0 enters as its right limit (linear extrapolation from
        // ds/2 and ds), so jump data like eta == const integrate exactly
        Field eta_lo =
            2.0 * (u_now - sampler(0.5 * ds)) - (u_now - sampler(ds));
        for (long i = 0; i < n_init; ++i) {
            double s0 = i * ds;
            Field eta_hi = u_now - sampler((i + 1) * ds);
            for (std::size_t j = 0; j < nj; ++j) {
                auto [j0, j1] = segment_weights(h.terms_[j], s0, ds);
                h.y_.col(j) += j0 * eta_lo + j1 * (eta_hi - eta_lo);
                h.z_.col(j) += j0 * eta_lo.cwiseProduct(eta_lo) +
                               j1 * (eta_hi.cwiseProduct(eta_hi) - eta_lo.cwiseProduct(eta_lo));
            }
            eta_lo.swap(eta_hi);
        }
        for (std::size_t j = 0; j < nj; ++j) {
            double tail = h.terms_[j].a / h.terms_[j].d * std::exp(-h.terms_[j].d * s_max);
            h.y_.col(j) += tail * eta_lo;
            h.z_.col(j) += tail * eta_lo.cwiseProduct(eta_lo);
        }
        return h;
    }

    HistoryMode mode() const { return mode_; }
    double dt() const { return dt_; }
    double s_max() const { return s_max_; }
    double tail_mass() const { return tail_mass_; }
    long n_ages() const { return n_s_; }

    /// eta_k(s_j) on the transport grid (s_j = j dt).
    double value(int k, long j) const {
        require_transport();
        if (j < 0 || j > n_s_) throw MalformedInput("history age index outside the grid");
        return ring_(k, head_) - ring_(k, age_col(j));
    }

    /// Quadrature weight against mu at age j (tests check nonnegativity).
    double weight(long j) const {
        require_transport();
        if (j < 0 || j > n_s_) throw MalformedInput("history age index outside the grid");
        double tw = (j == 0 || j == n_s_) ? 0.5 * dt_ : dt_;
        return tw * mu_age_[j];
    }

    const Eigen::MatrixXd& prony_aux() const { return y_; }
    const std::vector<PronyTerm>& prony_terms() const { return terms_; }

    /// m_k = lambda_k int_0^inf mu(s) eta_k(t,s) ds.
    Field convolution(const SpectralProblem& problem) const {
        int K = static_cast<int>(y_.rows() ? y_.rows() : ring_.rows());
        Field m = Field::Zero(K);
        if (mode_ == HistoryMode::PronyODE) {
            for (Eigen::Index j = 0; j < y_.cols(); ++j) m += y_.col(j);
        } else {
            const Field u_now = ring_.col(head_);
            for (long j = 1; j <= n_s_; ++j) {
                double tw = (j == n_s_) ? 0.5 * dt_ : dt_;
                m += (tw * mu_age_[j]) * (u_now - ring_.col(age_col(j)));
            }
            m += tail_mass_ * (u_now - ring_.col(age_col(n_s_)));
        }
        return problem.eigenvalues().cwiseProduct(m);
    }

    /// (1/2) int_0^inf mu(s) ||A^{1/2} eta^t(s)||_H^2 ds.
    double memory_energy(const SpectralProblem& problem) const {
        const double half_l = 0.5 * problem.length();
        double acc = 0.0;
        if (mode_ == HistoryMode::PronyODE) {
            for (Eigen::Index j = 0; j < z_.cols(); ++j)
                acc += problem.eigenvalues().dot(z_.col(j));
        } else {
            const Field u_now = ring_.col(head_);
            for (long j = 1; j <= n_s_; ++j) {
                double tw = (j == n_s_) ? 0.5 * dt_ : dt_;
                Field eta = u_now - ring_.col(age_col(j));
                acc += tw * mu_age_[j] * problem.eigenvalues().dot(eta.cwiseAbs2());
            }
            Field eta_end = u_now - ring_.col(age_col(n_s_));
            acc += tail_mass_ * problem.eigenvalues().dot(eta_end.cwiseAbs2());
        }
        return 0.5 * half_l * acc;
    }

    /// First phase of the step update. Transport: exact shift (push the new
    /// displacement). Prony: variation-of-constants with velocity linear
    /// between v0 and the predicted end-of-step velocity.
    void advance_predict(const Field& u_new, const Field& v0, const Field& v1_pred) {
        if (mode_ == HistoryMode::Transport) {
            head_ = (head_ + 1) % (n_s_ + 1);
            ring_.col(head_) = u_new;
            return;
        }
        y_snapshot_ = y_;
        for (Eigen::Index j = 0; j < y_.cols(); ++j) {
            double ad = terms_[j].a / terms_[j].d;
            y_.col(j) = exp_[j] * y_.col(j) +
                        ad * (i0_[j] * v0 + i1_over_dt_[j] * (v1_pred - v0));
        }
    }

    /// Second phase, after the final velocity is known: re-linearize the y
    /// source with the corrected endpoint and advance the energy variable z.
    void advance_finalize(const Field& v0, const Field& v1, const Field& v1_pred) {
        if (mode_ == HistoryMode::Transport) return;
        for (Eigen::Index j = 0; j < y_.cols(); ++j) {
            double ad = terms_[j].a / terms_[j].d;
            y_.col(j) += ad * i1_over_dt_[j] * (v1 - v1_pred);
            Field g0 = 2.0 * v0.cwiseProduct(y_snapshot_.col(j));
            Field g1 = 2.0 * v1.cwiseProduct(y_.col(j));
            z_.col(j) = exp_[j] * z_.col(j) + i0_[j] * g0 + i1_over_dt_[j] * (g1 - g0);
            z_.col(j) = z_.col(j).cwiseMax(0.0); // int mu eta^2 >= 0
        }
    }

private:
    HistoryField(HistoryMode mode, int n_modes, double dt) : mode_(mode), dt_(dt) {
        if (!(dt > 0.0)) throw ConfigError("history needs dt > 0");
        if (mode == HistoryMode::Transport) ring_.resize(n_modes, 0);
    }

    void require_transport() const {
        if (mode_ != HistoryMode::Transport)
            throw MalformedInput("age-grid values only exist in transport mode");
    }

    long age_col(long age) const { return (head_ - age % (n_s_ + 1) + (n_s_ + 1)) % (n_s_ + 1); }

    // integral over [s0, s0+h] of a e^{-d s} times the linear hat pair:
    // returns (J0, J1) with  int w (f0 + (f1-f0)(s-s0)/h) = J0 f0 + J1 (f1-f0)
    static std::pair<double, double> segment_weights(const PronyTerm& t, double s0, double h) {
        double theta = t.d * h;
        double e0 = std::exp(-t.d * s0);
        double q = -std::expm1(-theta);
        double r;
        if (theta < 1e-4) {
            r = theta * theta * (0.5 - theta / 3.0 + theta * theta / 8.0);
        } else {
            r = q - theta * std::exp(-theta);
        }
        double j0 = t.a / t.d * e0 * q;
        double j1 = t.a / (t.d * t.d) * e0 * r / h;
        return {j0, j1};
    }

    HistoryMode mode_;
    double dt_;
    double s_max_ = 0.0, tail_mass_ = 0.0;

    // Transport
    long n_s_ = 0;
    long head_ = 0;
    Eigen::MatrixXd ring_; // K x (n_s+1), column = past displacement
    std::vector<double> mu_age_;

    // Prony
    std::vector<PronyTerm> terms_;
    std::vector<double> exp_, i0_, i1_over_dt_;
    Eigen::MatrixXd y_, z_, y_snapshot_;
};

inline HistoryField init_history(const SpectralProblem& problem, const MemoryKernel& kernel,
                                 HistoryMode mode, double dt, double s_max,
                                 const HistorySampler& sampler) {
    if (mode == HistoryMode::PronyODE && kernel.is_tabulated())
        throw ConfigError("tabulated kernels require the transport history mode");
    return mode == HistoryMode::Transport
               ? HistoryField::transport(problem, kernel, dt, s_max, sampler)
               : HistoryField::prony(problem, kernel, dt, s_max, sampler);
}

inline Field memory_convolution(const SpectralProblem& problem, const HistoryField& hist) {
    return hist.convolution(problem);
}

inline void advance_history(HistoryField& hist, const Field& u_new, const Field& v0,
                            const Field& v1) {
    hist.advance_predict(u_new, v0, v1);
    hist.advance_finalize(v0, v1, v1);
}

/// Dense per-step displacement record, filled by the driver when oracle
/// cross-checks are requested.
struct TrajectoryStore {
    double dt = 0.0;
    std::vector<Field> u; // u[n] = u(n dt), from t = 0
};

/// Brute-force reference for the memory convolution: direct trapezoid of
/// mu(s) (u(t) - u(t-s)) over the stored trajectory, the initial-history
/// sampler for ages older than t, and an analytic tail. Accuracy O(dt^2)
/// plus the tail truncation; independent of HistoryField's code paths.
inline Field oracle_convolution(const SpectralProblem& problem, const MemoryKernel& kernel,
                                const TrajectoryStore& store, const HistorySampler& sampler,
                                double t) {
    if (store.dt <= 0.0 || store.u.empty())
        throw OracleUnavailable("oracle needs a dense stored trajectory");
    long n = std::lround(t / store.dt);
    if (std::abs(n * store.dt - t) > 1e-9 * (1.0 + std::abs(t)) ||
        n >= static_cast<long>(store.u.size()))
        throw OracleUnavailable("oracle query off the stored step grid");
    double dt = store.dt;
    double span = choose_history_span(kernel, 1e-14);
    long n_s = static_cast<long>(std::ceil(span / dt));
    if (std::isfinite(kernel.range_end()))
        n_s = std::min(n_s, static_cast<long>(std::floor(kernel.range_end() / dt)));
    const Field& u_now = store.u[n];
    Field acc = Field::Zero(u_now.size());
    Field eta = Field::Zero(u_now.size());
    for (long i = 1; i <= n_s; ++i) {
        double s = i * dt;
        eta = u_now - (i <= n ? store.u[n - i] : sampler(s - t));
        double tw = (i == n_s) ? 0.5 * dt : dt;
        acc += tw * kernel.eval(s) * eta;
    }
    acc += kernel_tail_mass(kernel, n_s * dt) * eta;
    return problem.eigenvalues().cwiseProduct(acc);
}

} // namespace memwave
