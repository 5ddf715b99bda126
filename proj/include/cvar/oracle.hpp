#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "cvar/mdp.hpp"
#include "cvar/nature.hpp"

// Brute-force reference implementations. Nothing here shares code with the
// backward-induction solver; agreement between the two is the main evidence
// of correctness.
namespace cvar::oracle {

// Exact discounted-cost distribution of a policy, atoms sorted ascending and
// coalesced when equal. mean_channel is the expectation of the second cost
// channel over the same trajectories.
struct OutcomeDistribution {
    std::vector<std::pair<double, double>> atoms;  // (cost, probability)
    double mean_channel = 0;
    double total_prob() const;
    double max_outcome() const;
};

// Deterministic history-dependent policy: the key is the full history
// x0, a0, x1, a1, ..., xt as dense indices.
struct HistoryPolicy {
    std::map<std::vector<int>, int> choice;
    int action_at(const std::vector<int>& history) const;  // throws when missing
};

OutcomeDistribution enumerate_distribution(const MdpSpec& spec, const HistoryPolicy& policy,
                                           int start, int horizon, long max_paths = 100000);

// Tail average over the worst alpha-mass of outcomes; alpha = 0 gives the
// worst outcome and alpha = 1 the mean. Internally cross-checked against the
// variational form min_w {w + E[(Z - w)+] / alpha}.
double cvar_of_distribution(const OutcomeDistribution& dist, double alpha);

enum class ObjectiveMode {
    pure_cvar,             // CVaR_alpha(Z), mean channel must be silent
    mean_plus_alpha_cvar,  // E[Z1] + alpha * CVaR_alpha(Z)
    mean_plus_cvar,        // E[Z1] + CVaR_alpha(Z)
};

double objective_of(const OutcomeDistribution& dist, double alpha, ObjectiveMode mode);

struct SearchResult {
    HistoryPolicy policy;
    double value = 0;
};

// Enumerates every deterministic history-dependent policy (first minimizer in
// lexicographic order wins ties). Throws GuardError beyond max_policies.
SearchResult exhaustive_policy_search(const MdpSpec& spec, int start, double alpha, int horizon,
                                      ObjectiveMode mode, long max_policies = 1000000);

// Same sweep evaluated at several risk levels in one pass.
std::vector<SearchResult> exhaustive_policy_search_all(const MdpSpec& spec, int start,
                                                       const std::vector<double>& alphas,
                                                       int horizon, ObjectiveMode mode,
                                                       long max_policies = 1000000);

long count_history_policies(const MdpSpec& spec, int start, int horizon, long cap = 1000000);

// Discretized lower bound on the Nature's best-response value at budget y:
// exhaustive grid over feasible splits with the given step. Throws GuardError
// when the grid would exceed max_points.
double grid_best_response(const TransferInstance& inst, double y, double resolution,
                          long max_points = 20000000);

// Deterministic random model generator used by verification suites: dyadic
// probabilities (multiples of 1/8) and small integer costs, sized so that the
// history-policy count stays within exhaustive reach.
struct RandomSpecOptions {
    int max_states = 3;
    int max_actions = 2;
    int max_successors = 2;
    int max_cost = 10;
    bool zero_terminals = true;
    bool with_mean_costs = false;
    std::vector<double> discounts = {1.0, 0.5, 0.75};
    int horizon = 3;          // used for the policy-count cap
    long policy_cap = 30000;  // resample until under this
};

MdpSpec random_spec(std::uint64_t seed, const RandomSpecOptions& opt);
RandomCostSpec random_cost_spec(std::uint64_t seed, const RandomSpecOptions& opt);

// Random composition of `parts` positive dyadic weights summing to one, each a
// multiple of 1/pieces.  Dyadic weights keep downstream arithmetic exact.
std::vector<double> dyadic_composition(std::mt19937_64& rng, int parts, int pieces);

}  // namespace cvar::oracle
