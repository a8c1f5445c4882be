#pragma once

#include <stdexcept>
#include <string>

namespace memwave {

/// Bad user-supplied data (tables, profiles, parameter ranges).
struct MalformedInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Evaluation requested outside a tabulated kernel's sample range.
struct ExtrapolationError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Inconsistent run configuration (schema violations, tau/dt mismatch, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Push/read order violated on the delay line; always a programming bug.
struct SequencingError : std::logic_error {
    using std::logic_error::logic_error;
};

/// State blew up (non-finite values or norm beyond the divergence threshold).
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what, double t_at = -1.0)
        : std::runtime_error(what), t(t_at) {}
    double t;
};

/// The brute-force convolution oracle lacks the stored trajectory it needs.
struct OracleUnavailable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Ensemble fit failed (e.g. non-decaying linear runs).
struct EstimationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Decay fit refused (non-positive energies in the fit window).
struct FitRefusal : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace memwave
