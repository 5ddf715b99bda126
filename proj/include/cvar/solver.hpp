#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cvar/mdp.hpp"
#include "cvar/pwl.hpp"

namespace cvar {

struct SolveOptions {
    long segment_cap = 1000000;     // total stored segments per stage
    int max_iterations = 100000;    // infinite-horizon iteration cap
    double simplify_slope_tol = 0;  // lossy compaction per stage; 0 keeps exact
};

// One stage of value functions over the tail-risk level y in [0, 1].
// V[x](y) is the scaled stage value: mean-channel cost plus y times the
// CVaR at level y. Q mirrors it per action; stage 0 carries no Q.
struct StageTable {
    std::vector<PwlConcave> V;
    std::vector<std::vector<PwlConcave>> Q;
};

struct ConvergenceInfo {
    int iterations = 0;
    double error_bound = 0;      // certified sup-norm distance to the fixed point
    double epsilon = 0;          // requested accuracy
    std::vector<double> deltas;  // sup-norm step sizes, one per iteration
};

struct ValueTables {
    MdpSpec spec;  // normalized model actually solved (costs shifted non-negative)
    CostShift shift;
    Horizon horizon;
    std::vector<StageTable> stages;  // finite: index n = n steps to go; infinite: one entry
    std::optional<ConvergenceInfo> convergence;
    std::string hash;  // content hash of the model as given, pre-shift

    const PwlConcave& V(int stage, int x) const;
    const PwlConcave& Q(int stage, int x, int a) const;
    int final_stage() const;
};

// One backward-induction sweep: for every (state, action) the Nature's best
// response envelope over the successors of the previous stage, minimized over
// actions. prev must hold one function on [0, 1] per state.
StageTable backup(const MdpSpec& spec, const std::vector<PwlConcave>& prev,
                  const SolveOptions& options = {});

// Applies backup horizon times starting from the terminal stage. Costs are
// shifted non-negative internally; the recorded shift lets queries report
// values of the original model.
ValueTables solve_finite(const MdpSpec& spec, int horizon, const SolveOptions& options = {});

// Iterates to the fixed point, stopping once the certified distance drops
// under epsilon. Requires discount < 1. Iterates start at zero, so stage
// values increase monotonically.
ValueTables solve_infinite(const MdpSpec& spec, double epsilon,
                           const SolveOptions& options = {});

enum class RiskObjective {
    pure_cvar,             // CVaR_alpha of the tail-risk channel; mean channel must be silent
    mean_plus_alpha_cvar,  // E[mean channel] + alpha * CVaR_alpha
    mean_plus_cvar,        // E[mean channel] + CVaR_alpha
};

// Objective value at the start state for risk level alpha, reported for the
// original (unshifted) model. alpha = 0 is served by worst_path_value except
// under mean_plus_alpha_cvar where the table value at 0 is already the answer.
double cvar_value(const ValueTables& tables, int x, double alpha, RiskObjective mode,
                  const SolveOptions& options = {});

// Deterministic worst-case game: min over actions, max over positive-
// probability successors, with the mean channel folded in by expectation.
// This is the alpha = 0 limit of the objective.
std::vector<double> worst_path_value(const MdpSpec& spec, const Horizon& horizon,
                                     double epsilon = 1e-9);

// Plain expected-cost dynamic program over both channels combined; the
// alpha = 1 cross-check.
std::vector<double> risk_neutral_value(const MdpSpec& spec, const Horizon& horizon,
                                       double epsilon = 1e-9);

// Actions whose Q matches V at (stage, x, y) within the optimality tolerance,
// in declaration order.
std::vector<int> optimal_action_set(const ValueTables& tables, int stage, int x, double y);

std::string serialize_tables(const ValueTables& tables);
ValueTables load_tables(const std::string& json_text);
ValueTables load_tables_file(const std::string& path);

}  // namespace cvar
