#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "memwave/errors.hpp"
#include "memwave/rng.hpp"

namespace memwave {

/// Modal coefficients in the sine eigenbasis sin(k pi x / L), k = 1..K.
using Field = Eigen::VectorXd;

enum class ProblemKind { Wave, Plate };

// Realization of the abstract operator A on the interval (0, L) through its
// sine eigenbasis:
//   Wave : A = -d^2/dx^2 with Dirichlet ends,     lambda_k = (k pi / L)^2
//   Plate: A =  d^4/dx^4 with hinged ends,        lambda_k = (k pi / L)^4
// Physical values live on the N interior collocation points x_i = i L/(N+1),
// where the DST-I matrix is orthogonal, so modal<->physical roundtrips are
// exact and h * sum f(x_i) integrates trigonometric polynomials of degree
// <= 2N+1 exactly. N >= 2K keeps modes 1..K alias-free under the cubic
// source term.
class SpectralProblem {
public:
    SpectralProblem(ProblemKind kind, double length, int n_modes, int n_grid,
                    double support_lo, double support_hi, double sigma)
        : kind_(kind), length_(length), n_modes_(n_modes), n_grid_(n_grid),
          support_lo_(support_lo), support_hi_(support_hi), sigma_(sigma) {
        if (!(length > 0.0)) throw MalformedInput("length must be positive");
        if (n_modes < 1) throw MalformedInput("n_modes must be >= 1");
        if (n_grid < 2 * n_modes) throw MalformedInput("n_grid must be >= 2*n_modes");
        if (!(support_lo >= 0.0 && support_lo <= support_hi && support_hi <= length))
            throw MalformedInput("feedback support must satisfy 0 <= o1 <= o2 <= L");
        if (kind == ProblemKind::Wave && !(sigma > 0.0))
            throw MalformedInput("wave problem requires sigma > 0");
        if (!(sigma >= 0.0)) throw MalformedInput("sigma must be >= 0");

        eigenvalues_.resize(n_modes);
        for (int k = 1; k <= n_modes; ++k) {
            double base = k * M_PI / length;
            eigenvalues_[k - 1] = (kind == ProblemKind::Wave) ? base * base
                                                              : base * base * base * base;
        }

        dx_ = length / (n_grid + 1);
        grid_.resize(n_grid);
        for (int i = 1; i <= n_grid; ++i) grid_[i - 1] = i * dx_;

        sine_.resize(n_grid, n_modes);
        for (int i = 0; i < n_grid; ++i)
            for (int k = 0; k < n_modes; ++k)
                sine_(i, k) = std::sin((k + 1) * M_PI * grid_[i] / length);

        mask_.resize(n_grid);
        for (int i = 0; i < n_grid; ++i) {
            double x = grid_[i];
            double up = std::clamp((x - support_lo) / dx_, 0.0, 1.0);
            double dn = std::clamp((support_hi - x) / dx_, 0.0, 1.0);
            mask_[i] = up * dn;
        }
    }

    ProblemKind kind() const { return kind_; }
    double length() const { return length_; }
    int n_modes() const { return n_modes_; }
    int n_grid() const { return n_grid_; }
    double sigma() const { return sigma_; }
    double support_lo() const { return support_lo_; }
    double support_hi() const { return support_hi_; }
    double dx() const { return dx_; }
    const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
    const Eigen::VectorXd& grid() const { return grid_; }
    const Eigen::VectorXd& mask() const { return mask_; }

    /// ||B|| = ||B*||; exactly 1 for a nonempty support, 0 otherwise.
    double b() const { return support_hi_ > support_lo_ ? 1.0 : 0.0; }

    Field zero_field() const { return Field::Zero(n_modes_); }

    Eigen::VectorXd to_physical(const Field& modal) const { return sine_ * modal; }

    Field to_modal(const Eigen::VectorXd& physical) const {
        return (2.0 / (n_grid_ + 1)) * (sine_.transpose() * physical);
    }

    /// h * sum of grid values; exact for the sine-band integrands used here
    /// because the boundary values vanish.
    double quadrature(const Eigen::VectorXd& grid_values) const {
        return dx_ * grid_values.sum();
    }

    double h_norm(const Field& u) const {
        return std::sqrt(0.5 * length_ * u.squaredNorm());
    }

    double a_half_norm(const Field& u) const {
        return std::sqrt(0.5 * length_ *
                         (eigenvalues_.array() * u.array().square()).sum());
    }

    /// L2 norm of a physical-grid function (all N grid modes, not truncated).
    double grid_norm(const Eigen::VectorXd& physical) const {
        return std::sqrt(dx_ * physical.squaredNorm());
    }

    /// Modal coefficients of grad psi(u) = |u|^sigma u, evaluated
    /// pseudo-spectrally on the collocation grid.
    Field eval_source(const Field& u) const {
        Eigen::VectorXd p = to_physical(u);
        Eigen::VectorXd w(p.size());
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            double a = std::abs(p[i]);
            if (!(a < 1e100))
                throw DivergenceError("source term overflow: |u|^sigma blow-up");
            w[i] = std::pow(a, sigma_) * p[i];
        }
        return to_modal(w);
    }

    /// psi(u) = (sigma+2)^-1 int |u|^{sigma+2}.
    double psi_value(const Field& u) const {
        Eigen::VectorXd p = to_physical(u);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            double a = std::abs(p[i]);
            if (!(a < 1e100))
                throw DivergenceError("source functional overflow");
            acc += std::pow(a, sigma_ + 2.0);
        }
        return dx_ * acc / (sigma_ + 2.0);
    }

    /// Multiplication by the indicator of the feedback support, smoothed over
    /// one grid cell at the endpoints. Self-adjoint, so B = B*.
    Field apply_B(const Field& v) const {
        return to_modal(mask_.cwiseProduct(to_physical(v)));
    }

    Field apply_Bstar(const Field& v) const { return apply_B(v); }

    Field apply_BBstar(const Field& v) const { return apply_B(apply_B(v)); }

private:
    ProblemKind kind_;
    double length_;
    int n_modes_, n_grid_;
    double support_lo_, support_hi_, sigma_;
    double dx_;
    Eigen::VectorXd eigenvalues_, grid_, mask_;
    Eigen::MatrixXd sine_;
};

inline SpectralProblem build_problem(ProblemKind kind, double length, int n_modes,
                                     double support_lo, double support_hi, double sigma,
                                     int n_grid = 0) {
    if (n_grid <= 0) n_grid = std::max(2 * n_modes, 32);
    return SpectralProblem(kind, length, n_modes, n_grid, support_lo, support_hi, sigma);
}

namespace detail {

/// Mixed smooth/rough modal samples for constant estimation; decay exponent
/// cycles through {0, 1, 2} so rough fields are represented.
inline Field sample_field(const SpectralProblem& p, Rng& rng, int which) {
    int decay = which % 3;
    Field u(p.n_modes());
    for (int k = 0; k < p.n_modes(); ++k)
        u[k] = rng.gaussian() / std::pow(k + 1.0, static_cast<double>(decay));
    return u;
}

} // namespace detail

/// C_h such that ||grad psi(u)|| <= C_h ||A^{1/2}u||^{sigma+1} over a fixed
/// pseudo-random sample of fields (documented seed), times a 1.5 safety
/// factor. The ratio is scale-invariant, so amplitudes are irrelevant.
inline double estimate_h_constant(const SpectralProblem& problem,
                                  std::uint64_t seed = 0x6d656d77617665ull,
                                  int n_samples = 256) {
    Rng rng(seed);
    double worst = 0.0;
    for (int i = 0; i < n_samples; ++i) {
        Field u = detail::sample_field(problem, rng, i);
        double r = problem.a_half_norm(u);
        if (r < 1e-12) continue;
        Eigen::VectorXd p = problem.to_physical(u);
        Eigen::VectorXd w(p.size());
        for (Eigen::Index j = 0; j < p.size(); ++j)
            w[j] = std::pow(std::abs(p[j]), problem.sigma()) * p[j];
        double ratio = problem.grid_norm(w) / std::pow(r, problem.sigma() + 1.0);
        worst = std::max(worst, ratio);
    }
    return 1.5 * worst;
}

} // namespace memwave
