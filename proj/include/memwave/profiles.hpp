#pragma once

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "memwave/delay.hpp"
#include "memwave/history.hpp"
#include "memwave/io.hpp"
#include "memwave/spectral.hpp"

namespace memwave {

// Named analytic initial-data profiles. Every profile has a closed form for
// the induced relative history eta_0, so expected values in tests never rely
// on the code under test:
//   shape "mode(k, a)":            u(x) = a sin(k pi x / L)
//   shape "bump(c, w, a)":         u(x) = a exp(-(x-c)^2 / (2 w^2)), projected
//   shape "csv(path)":             column data (x,u) interpolated to the grid
//   history "frozen":              u0(t) = u0      => eta_0(s) = 0
//   history "ramp(rate)":          u0(t) = (1 + rate t) u0
//                                   => eta_0(s) = rate s u0
//   g "zero" / "const(shape)":     B* u_t datum on (-tau, 0]
//   g "consistent":                g = B* d/dt u0 = B*(rate u0) for ramp

struct ShapeZero {};
struct ShapeMode {
    int k = 1;
    double amplitude = 0.0;
};
struct ShapeBump {
    double center = 0.0, width = 1.0, amplitude = 0.0;
};
struct ShapeCsv {
    std::string path;
};
using ShapeSpec = std::variant<ShapeZero, ShapeMode, ShapeBump, ShapeCsv>;

struct HistoryFrozen {};
struct HistoryRamp {
    double rate = 0.0;
};
using HistoryProfile = std::variant<HistoryFrozen, HistoryRamp>;

struct GZero {};
struct GConstant {
    ShapeSpec shape;
};
struct GConsistent {};
using GProfile = std::variant<GZero, GConstant, GConsistent>;

inline Field make_shape(const SpectralProblem& problem, const ShapeSpec& spec) {
    if (std::holds_alternative<ShapeZero>(spec)) return problem.zero_field();
    if (const auto* m = std::get_if<ShapeMode>(&spec)) {
        if (m->k < 1 || m->k > problem.n_modes())
            throw MalformedInput("mode profile index outside 1..n_modes");
        Field u = problem.zero_field();
        u[m->k - 1] = m->amplitude;
        return u;
    }
    if (const auto* b = std::get_if<ShapeBump>(&spec)) {
        if (!(b->width > 0.0)) throw MalformedInput("bump profile needs width > 0");
        Eigen::VectorXd p(problem.n_grid());
        for (int i = 0; i < problem.n_grid(); ++i) {
            double x = problem.grid()[i];
            double z = (x - b->center) / b->width;
            p[i] = b->amplitude * std::exp(-0.5 * z * z);
        }
        return problem.to_modal(p);
    }
    const auto& csv = std::get<ShapeCsv>(spec);
    auto cols = read_csv(csv.path, "x,u");
    const auto& xs = cols[0];
    const auto& us = cols[1];
    if (xs.size() < 2) throw MalformedInput("csv shape needs at least two samples");
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1]))
            throw MalformedInput("csv shape x-column must be strictly increasing");
    Eigen::VectorXd p(problem.n_grid());
    for (int i = 0; i < problem.n_grid(); ++i) {
        double x = problem.grid()[i];
        if (x <= xs.front() || x >= xs.back()) {
            p[i] = 0.0;
            continue;
        }
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        std::size_t hi = static_cast<std::size_t>(it - xs.begin());
        double w = (x - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
        p[i] = (1.0 - w) * us[hi - 1] + w * us[hi];
    }
    return problem.to_modal(p);
}

/// Sampler of u0(-s), s >= 0, for history initialization.
inline HistorySampler make_history_sampler(const Field& u0, const HistoryProfile& profile) {
    if (std::holds_alternative<HistoryFrozen>(profile))
        return [u0](double) -> Field { return u0; };
    double rate = std::get<HistoryRamp>(profile).rate;
    return [u0, rate](double s) -> Field { return (1.0 - rate * s) * u0; };
}

/// Sampler of the delayed-velocity datum g(t) = B* u_t(t) on [-tau, 0].
inline GSampler make_g_sampler(const SpectralProblem& problem, const GProfile& profile,
                               const Field& u0, const HistoryProfile& history) {
    if (std::holds_alternative<GZero>(profile)) {
        Field z = problem.zero_field();
        return [z](double) -> Field { return z; };
    }
    if (const auto* c = std::get_if<GConstant>(&profile)) {
        Field g = problem.apply_Bstar(make_shape(problem, c->shape));
        return [g](double) -> Field { return g; };
    }
    // consistent with the displacement history: g = B* d/dt u0(t)
    Field g = problem.zero_field();
    if (const auto* r = std::get_if<HistoryRamp>(&history))
        g = problem.apply_Bstar(r->rate * u0);
    return [g](double) -> Field { return g; };
}

} // namespace memwave
