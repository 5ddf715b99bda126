#pragma once

#include <string>
#include <vector>

namespace cvar {

struct Segment {
    double slope;
    double length;
};

// Result of inverting the superdifferential of a concave function: either a
// unique argument where u is a supergradient, or the maximal interval of a
// linear piece whose slope equals u.
struct SuperdiffResult {
    bool unique;
    double point;   // set when unique
    double lo;      // set when !unique
    double hi;
    double slope;   // slope of the matched piece when !unique
};

/**
 * Non-decreasing concave piecewise-linear function on [0, L].
 *
 * Stored as the value at 0 plus ordered segments with strictly decreasing
 * non-negative slopes and positive lengths summing to L. Derivative
 * conventions at the boundary: left derivative at 0 is +infinity, right
 * derivative at L is 0, so the superdifferential covers [0, +inf) over the
 * whole domain.
 */
class PwlConcave {
public:
    // Validates and normalizes: folds dust segments into a neighbor,
    // coalesces near-equal slopes, checks concavity and the length sum.
    static PwlConcave make(double value_at_zero, std::vector<Segment> segments,
                           double domain_length);

    // Single linear piece: f(y) = value_at_zero + slope * y on [0, L].
    static PwlConcave affine(double value_at_zero, double slope, double domain_length);

    double value_at_zero() const { return value_at_zero_; }
    double domain_length() const { return domain_length_; }
    const std::vector<Segment>& segments() const { return segments_; }

    // Positions 0 = y_0 < y_1 < ... < y_k = L where the slope changes.
    std::vector<double> breakpoints() const;

    double eval(double y) const;

    // Right derivative; 0 at y = L by convention.
    double right_deriv(double y) const;

    // Left derivative; +infinity at y = 0 by convention.
    double left_deriv(double y) const;

    // Finds where u is a supergradient. Slopes within the relative slope
    // tolerance of u match their whole piece; u below 0 is clamped to 0.
    SuperdiffResult invert_superdifferential(double u) const;

    // Optional lossy compaction: merges adjacent pieces whose slopes differ
    // by at most slope_tol, using the length-weighted average slope. Intended
    // for long-horizon runs only; exact computations never call this.
    PwlConcave simplified(double slope_tol) const;

    // Throws std::logic_error if any structural invariant is broken.
    void validate() const;

private:
    PwlConcave() = default;

    double value_at_zero_ = 0;
    double domain_length_ = 0;
    std::vector<Segment> segments_;
};

// g(y) = mean_cost + beta * f(0) + pieces with slopes cvar_cost + beta * q.
// This is the one-step image of a successor's value function under the
// backward-induction rewrite; costs must be non-negative.
PwlConcave transform_successor(const PwlConcave& f, double mean_cost, double cvar_cost,
                               double beta);

// v(z) = p * f(z / p) on [0, p * L]: slopes are preserved, lengths and the
// value at 0 are scaled by p.
PwlConcave scale_argument(const PwlConcave& f, double p);

// Sum-supremal convolution of concave parts: the pointwise-maximal way to
// split a budget y across the parts. Equals the concatenation of all pieces
// sorted by slope descending; the value at 0 is the sum of the parts'.
PwlConcave merge_sources(const std::vector<PwlConcave>& parts);

// Pointwise minimum of concave functions on a common domain.
PwlConcave min_envelope(const std::vector<PwlConcave>& parts);

// max_y |f(y) - g(y)| over the common domain (exact for piecewise-linear).
double sup_distance(const PwlConcave& f, const PwlConcave& g);

// CSV dump with header y,value,right_slope, one row per breakpoint in
// increasing y; the final row carries the boundary convention slope 0.
std::string to_csv(const PwlConcave& f);

}  // namespace cvar
