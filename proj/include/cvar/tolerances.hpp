#pragma once

#include <algorithm>
#include <cmath>

// Numeric tolerances used across the library. Relative tolerances are scaled
// by max(1, |value|) so that they behave absolutely near zero.
namespace cvar::tol {

// Probability rows must sum to 1 within this bound; inside it they are
// renormalized, beyond it the input is rejected.
inline constexpr double prob_sum = 1e-9;

// Slopes closer than this (relative) are treated as one linear piece.
inline constexpr double slope_rel = 1e-9;

// Subderivative bookkeeping tolerance for the online runner.
inline constexpr double deriv_rel = 1e-9;

// Optimal-action membership: Q <= V + opt_rel * max(1, |V|).
inline constexpr double opt_rel = 1e-9;

// Distribution atoms with equal payoff within this are coalesced.
inline constexpr double atom_abs = 1e-12;

// Segments shorter than length_drop_rel * domain are folded into a neighbor.
inline constexpr double length_drop_rel = 1e-15;

// Segment lengths must sum to the domain within this (relative).
inline constexpr double length_sum_rel = 1e-12;

inline double rel(double scale, double a) {
    return scale * std::max(1.0, std::fabs(a));
}

inline double rel(double scale, double a, double b) {
    return scale * std::max({1.0, std::fabs(a), std::fabs(b)});
}

inline bool slopes_equal(double a, double b) {
    return std::fabs(a - b) <= rel(slope_rel, a, b);
}

}  // namespace cvar::tol
