#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cvar/solver.hpp"

namespace cvar {

enum class DerivativeSide { left, right };

// Tail-risk position recovered while executing the policy: either an exact
// point or the flat stretch of one linear piece. Action choices use the
// midpoint of an interval; every point of the interval is equivalent.
struct RiskEstimate {
    bool known = true;
    double lo = 0;
    double hi = 0;
    double chosen() const { return known ? lo : 0.5 * (lo + hi); }
};

struct RunnerState {
    int t = 0;
    int state = 0;
    int action = -1;  // -1 once past the last decision epoch
    RiskEstimate risk;
    double u = 0;  // subderivative bookkeeping value for the current stage
    DerivativeSide side = DerivativeSide::right;
};

// Starts the optimal policy at tail-risk level alpha: picks the first optimal
// action and seeds u with the chosen one-sided derivative of its Q function.
RunnerState init_runner(const ValueTables& tables, int start, double alpha,
                        DerivativeSide side);

// Advances one observed transition: updates u by unwinding the step cost and
// the discount, inverts the superdifferential of the next value function to
// recover the next tail-risk position, and picks the next action. When the
// position is an interval, u keeps the interval's slope until it collapses
// back to a point; re-seeding from Q is skipped there.
RunnerState runner_step(const ValueTables& tables, const RunnerState& state, int next_state);

struct TraceRow {
    int t;
    int state;
    int action;  // -1 on the terminal row
    double y_lo;
    double y_hi;
    double y_chosen;
    double u;
    double step_cost;  // original-scale tail-risk cost paid leaving this state
    double cum_cost;   // discounted total of step costs so far
};

// Replays a fixed state sequence (states[0] is the start) through the runner.
// Throws TraceError on a transition the model forbids.
std::vector<TraceRow> run_trajectory(const ValueTables& tables, double alpha,
                                     DerivativeSide side, const std::vector<int>& states);

// Samples successor states from the model dynamics. Finite tables run all
// horizon steps; infinite tables stop once the discounted tail weight of the
// remaining steps drops under tail_cutoff.
std::vector<TraceRow> run_trajectory_random(const ValueTables& tables, int start, double alpha,
                                            DerivativeSide side, std::uint64_t seed,
                                            double tail_cutoff = 1e-9);

std::string trace_to_csv(const ValueTables& tables, const std::vector<TraceRow>& rows);

}  // namespace cvar
