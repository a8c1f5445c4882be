#pragma once

#include <optional>

#include "memwave/delay.hpp"
#include "memwave/history.hpp"
#include "memwave/spectral.hpp"

namespace memwave {

struct SimOptions {
    bool memory_off = false;
    bool delay_off = false;
    bool source_off = false;
    bool stop_on_lb_loss = false;      // optional early stop when the energy lower bound fails
    double divergence_factor = 1e6;    // ||U|| > factor * max(1, ||U0||) ends the run
};

/// Full simulation state U = (u, u_t, eta^t) plus the delayed-velocity window.
struct SimState {
    double t = 0.0;
    long step_index = 0;
    Field u, v;
    std::optional<HistoryField> hist; // absent when the memory term is off
    std::optional<DelayLine> line;    // absent when the delay term is off
};

} // namespace memwave
