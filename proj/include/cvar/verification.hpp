#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cvar/mdp.hpp"
#include "cvar/nature.hpp"
#include "cvar/oracle.hpp"
#include "cvar/policy.hpp"
#include "cvar/solver.hpp"

// Cross-checks between the solver, the online runner, and the brute-force
// oracles. Shared by the verify CLI command and the acceptance suite.
namespace cvar::verify {

struct CheckResult {
    std::string name;
    bool pass = true;
    bool skipped = false;
    long cases = 0;
    double max_err = 0;
    std::string detail;
};

// Structural audit over solved tables: every stored function must satisfy the
// shape invariants, and at every breakpoint of V the one-sided derivatives
// must equal the extremal one-sided derivatives of the optimal actions' Q.
struct ShapeAudit {
    long tables_checked = 0;
    long functions_checked = 0;
    long breakpoints_checked = 0;
    long violations = 0;
    double max_err = 0;

    void inspect(const ValueTables& tables);
    CheckResult result() const;
};

// Random adversarial split problem: up to max_successors parts with dyadic
// probabilities and small concave functions with slopes in [0, max_slope].
TransferInstance random_transfer_instance(std::uint64_t seed, int max_successors = 4,
                                          double max_slope = 4.0);

// Replays the runner over every positive-probability history of the model,
// collecting the actions it takes into an explicit history policy.
oracle::HistoryPolicy induced_history_policy(const ValueTables& tables, int start, double alpha,
                                             DerivativeSide side);

// Solver value vs exhaustive policy search on every spec and risk level.
CheckResult check_oracle_agreement(const std::vector<MdpSpec>& specs, int horizon,
                                   const std::vector<double>& alphas,
                                   oracle::ObjectiveMode mode, ShapeAudit* audit = nullptr);

// The runner's induced policy must achieve the solved value exactly, from
// both derivative-side seedings.
CheckResult check_runner_optimality(const std::vector<MdpSpec>& specs, int horizon,
                                    const std::vector<double>& alphas,
                                    oracle::ObjectiveMode mode, ShapeAudit* audit = nullptr);

// Derivative identities of the adversarial best response at breakpoints and
// random budgets, plus allocation feasibility and monotonicity.
CheckResult check_transfer_derivatives(int instances, int random_budgets,
                                       std::uint64_t seed_base = 900);

// Merged envelope vs discretized grid search over splits.
CheckResult check_transfer_grid(int instances, double resolution, double tolerance,
                                std::uint64_t seed_base = 2700);

// alpha = 1 equals the risk-neutral DP; the right slope at 0 equals the
// worst-path game; deterministic models have risk-independent values.
CheckResult check_boundary_consistency(const std::vector<MdpSpec>& pure_zero_terminal,
                                       int horizon, ShapeAudit* audit = nullptr);

// Per-iteration contraction of the infinite-horizon iteration and the final
// certified bound against a doubled-length reference run.
CheckResult check_contraction(int spec_count, double epsilon, std::uint64_t seed_base = 4600,
                              ShapeAudit* audit = nullptr);

// The Nature's true tail-risk path always lies in the runner's recovered
// point or interval, and u stays inside the superdifferential.
CheckResult check_nature_consistency(const std::vector<MdpSpec>& specs, int horizon,
                                     const std::vector<double>& alphas,
                                     ShapeAudit* audit = nullptr);

// Random-cost expansion: label-independent values that match an independently
// built product model and the oracle.
CheckResult check_random_cost_augmentation(int spec_count, int horizon,
                                           std::uint64_t seed_base = 7300,
                                           ShapeAudit* audit = nullptr);

std::string format_result(const CheckResult& r);

}  // namespace cvar::verify
