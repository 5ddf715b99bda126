#pragma once

#include <vector>

#include "cvar/pwl.hpp"

namespace cvar {

// One adversarial response problem: the Nature splits the current tail-risk
// budget y across successors, weighted by their transition probabilities.
// Each successor carries a concave non-decreasing value function on [0, 1].
struct TransferInstance {
    std::vector<double> probs;        // strictly positive, sums to 1
    std::vector<PwlConcave> funcs;    // per-successor value on [0, 1]
    std::vector<int> labels;          // caller tags (e.g. successor states)

    int size() const { return static_cast<int>(probs.size()); }
    void validate() const;  // throws std::invalid_argument
};

// The Nature's best split of budget y: z[i] is the mass routed to successor
// i in the probability-scaled coordinate (0 <= z[i] <= probs[i], sum = y),
// and b[i] = z[i] / (y * probs[i]) is the distortion factor (b == 1 at y = 0).
struct NatureAllocation {
    double y = 0;
    std::vector<double> z;
    std::vector<double> b;
    double value = 0;  // objective at this split
};

// Successor functions rescaled into the shared mass coordinate:
// v_i(z) = probs[i] * funcs[i](z / probs[i]) on [0, probs[i]].
std::vector<PwlConcave> scaled_sources(const TransferInstance& inst);

// Upper envelope of the transfer problem as a function of the budget y:
// all scaled pieces merged by descending slope. Evaluating it at y gives the
// Nature's best response value.
PwlConcave transfer_value(const TransferInstance& inst);

// Greedy fill by marginal slope; ties resolved in declared successor order,
// which makes the allocation deterministic and monotone in y.
NatureAllocation optimal_allocation(const TransferInstance& inst, double y);

}  // namespace cvar
