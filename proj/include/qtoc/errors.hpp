// errors.hpp — Exception types shared across the library.

#pragma once

#include <stdexcept>
#include <string>

namespace qtoc {

// Raised when a numerical procedure leaves its domain of validity. The CLI
// maps this family to exit code 4.
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Taylor series for exp(A)V did not converge within max_terms ("taylor-divergence").
struct taylor_divergence : numerical_error {
    using numerical_error::numerical_error;
};

// A trajectory state collapsed to the zero vector ("state-annihilated").
struct state_annihilated : numerical_error {
    using numerical_error::numerical_error;
};

// Non-finite gradient reached the optimizer ("gradient-blowup").
struct gradient_blowup : numerical_error {
    using numerical_error::numerical_error;
};

// Density-matrix invariants violated beyond tolerance ("cptp-violation").
struct cptp_violation : numerical_error {
    using numerical_error::numerical_error;
};

// Euler-Maruyama step too coarse for the requested norm-drift bound
// ("sde-step-too-coarse").
struct sde_step_too_coarse : numerical_error {
    using numerical_error::numerical_error;
};

// Filter kernel is identically zero ("degenerate-filter").
struct degenerate_filter : numerical_error {
    using numerical_error::numerical_error;
};

// Tape operation on an invalid value, e.g. division by zero ("singular-op").
struct singular_op : numerical_error {
    using numerical_error::numerical_error;
};

// Backward pass requested from a node that is not a real scalar
// ("non-scalar-cost").
struct non_scalar_cost : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Configuration parsing / schema problems. CLI exit code 2.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A validation run found failing checks. CLI exit code 3.
struct validation_failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace qtoc
