#include "cvar/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "cvar/errors.hpp"
#include "cvar/tolerances.hpp"

namespace cvar {

namespace {

// Stage index holding the value functions in effect at time t.
int stage_at(const ValueTables& tables, int t) {
    return tables.horizon.infinite ? 0 : tables.horizon.steps - t;
}

bool past_last_decision(const ValueTables& tables, int t) {
    return !tables.horizon.infinite && t >= tables.horizon.steps;
}

double side_deriv(const PwlConcave& f, double y, DerivativeSide side) {
    return side == DerivativeSide::right ? f.right_deriv(y) : f.left_deriv(y);
}

// Orders two tied Q curves by their values to the right of y: negative when
// a sits strictly below b at the first segment midpoint where they differ,
// positive for the reverse, zero when they coincide on all of [y, 1].
int compare_right_of(const PwlConcave& a, const PwlConcave& b, double y) {
    std::vector<double> pts{y};
    for (const PwlConcave* f : {&a, &b})
        for (double p : f->breakpoints())
            if (p > y) pts.push_back(p);
    pts.push_back(std::min(a.domain_length(), b.domain_length()));
    std::sort(pts.begin(), pts.end());
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        if (pts[i + 1] - pts[i] < tol::length_drop_rel) continue;
        const double m = 0.5 * (pts[i] + pts[i + 1]);
        const double va = a.eval(m);
        const double vb = b.eval(m);
        if (std::fabs(va - vb) > tol::rel(tol::opt_rel, va, vb)) return va < vb ? -1 : 1;
    }
    return 0;
}

// Among tied optimal actions, commits to the one whose Q stays lowest to the
// right of y. Ties in value happen at kinks of the envelope, at starved
// positions (y = 0, where every action evaluates to zero), and on linear
// stretches where two actions' curves coincide; there the scaled objective
// cannot separate the actions, but the branch's realized costs still land in
// the outcome distribution, and the continuation that stays flattest as the
// tail budget grows keeps them smallest. On the first segment this matches
// the envelope identity d+V = min over tied actions of d+Q, so the
// bookkeeping slope stays the envelope's. Remaining ties fall back to the
// lowest action index.
int preferred_optimal_action(const ValueTables& tables, int stage, int x, double y) {
    const std::vector<int> best = optimal_action_set(tables, stage, x, y);
    int pick = best.front();
    if (best.size() == 1) return pick;
    for (std::size_t i = 1; i < best.size(); ++i)
        if (compare_right_of(tables.Q(stage, x, best[i]), tables.Q(stage, x, pick), y) < 0)
            pick = best[i];
    return pick;
}

const Transition& find_edge(const ValueTables& tables, int x, int a, int to) {
    for (const auto& t :
         tables.spec.transitions[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)])
        if (t.to == to) return t;
    throw TraceError("trace: transition " + tables.spec.state_names[static_cast<std::size_t>(x)] +
                     " -> " + tables.spec.state_names[static_cast<std::size_t>(to)] +
                     " has zero probability");
}

}  // namespace

RunnerState init_runner(const ValueTables& tables, int start, double alpha,
                        DerivativeSide side) {
    if (start < 0 || start >= tables.spec.num_states())
        throw ValidationError("runner: bad start state");
    if (!(alpha > 0 && alpha <= 1))
        throw ValidationError("runner: alpha must lie in (0, 1]");

    RunnerState s;
    s.t = 0;
    s.state = start;
    s.risk = RiskEstimate{true, alpha, alpha};
    s.side = side;
    const int stage = stage_at(tables, 0);
    s.action = preferred_optimal_action(tables, stage, start, alpha);
    s.u = side_deriv(tables.Q(stage, start, s.action), alpha, side);
    return s;
}

RunnerState runner_step(const ValueTables& tables, const RunnerState& state, int next_state) {
    if (state.action < 0) throw TraceError("runner: stepped past the last decision epoch");
    if (next_state < 0 || next_state >= tables.spec.num_states())
        throw ValidationError("runner: bad successor state");
    const Transition& edge = find_edge(tables, state.state, state.action, next_state);

    // Unwind one stage of the subderivative bookkeeping.
    double u = (state.u - edge.cvar_cost) / tables.spec.discount;

    RunnerState next;
    next.t = state.t + 1;
    next.state = next_state;
    next.side = state.side;

    const int stage = stage_at(tables, next.t);
    const PwlConcave& value_next = tables.V(stage, next_state);
    SuperdiffResult inv;
    if (u < -tol::rel(tol::deriv_rel, u)) {
        // The tracked slope fell below the step cost, which can only happen
        // when the adversary routed this successor its full budget: the
        // superdifferential at the right domain end reaches down past any
        // negative value, so the tail-risk level is exactly 1.
        u = 0;
        inv = SuperdiffResult{};
        inv.unique = true;
        inv.point = value_next.domain_length();
    } else {
        if (u < 0) u = 0;
        inv = value_next.invert_superdifferential(u);
    }
    if (inv.unique) {
        next.risk = RiskEstimate{true, inv.point, inv.point};
        if (past_last_decision(tables, next.t)) {
            next.action = -1;
            next.u = u;
        } else {
            next.action = preferred_optimal_action(tables, stage, next_state, inv.point);
            next.u = side_deriv(tables.Q(stage, next_state, next.action), inv.point, state.side);
        }
    } else {
        next.risk = RiskEstimate{false, inv.lo, inv.hi};
        next.u = inv.slope;  // interval slope carries until the position collapses
        next.action = past_last_decision(tables, next.t)
                          ? -1
                          : preferred_optimal_action(tables, stage, next_state, next.risk.chosen());
    }
    return next;
}

namespace {

std::vector<TraceRow> walk_states(const ValueTables& tables, double alpha, DerivativeSide side,
                                  const std::vector<int>& states) {
    if (states.empty()) throw ValidationError("trace: empty state sequence");
    std::vector<TraceRow> rows;
    RunnerState cur = init_runner(tables, states.front(), alpha, side);
    double cum = 0;
    double beta_t = 1.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
        TraceRow row{};
        row.t = cur.t;
        row.state = cur.state;
        row.action = cur.action;
        row.y_lo = cur.risk.lo;
        row.y_hi = cur.risk.hi;
        row.y_chosen = cur.risk.chosen();
        row.u = cur.u;
        row.step_cost = 0;
        if (i + 1 < states.size()) {
            const Transition& edge = find_edge(tables, cur.state, cur.action, states[i + 1]);
            row.step_cost = edge.cvar_cost - tables.shift.cvar_shift;
            cum += beta_t * row.step_cost;
            beta_t *= tables.spec.discount;
            cur = runner_step(tables, cur, states[i + 1]);
        }
        row.cum_cost = cum;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

std::vector<TraceRow> run_trajectory(const ValueTables& tables, double alpha,
                                     DerivativeSide side, const std::vector<int>& states) {
    return walk_states(tables, alpha, side, states);
}

std::vector<TraceRow> run_trajectory_random(const ValueTables& tables, int start, double alpha,
                                            DerivativeSide side, std::uint64_t seed,
                                            double tail_cutoff) {
    int steps;
    if (tables.horizon.infinite) {
        const double beta = tables.spec.discount;
        const double weight = tables.spec.max_stage_cost() / (1.0 - beta);
        steps = 1;
        double tail = weight;
        while (tail > tail_cutoff && steps < 1000000) {
            tail *= beta;
            ++steps;
        }
    } else {
        steps = tables.horizon.steps;
    }

    std::mt19937_64 rng(seed);
    std::vector<int> states{start};
    // Peek actions by replaying the runner as states are drawn.
    RunnerState cur = init_runner(tables, start, alpha, side);
    for (int t = 0; t < steps; ++t) {
        const auto& row = tables.spec.transitions[static_cast<std::size_t>(cur.state)]
                                                 [static_cast<std::size_t>(cur.action)];
        const double coin =
            std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        double acc = 0;
        int chosen = row.back().to;
        for (const auto& tr : row) {
            acc += tr.prob;
            if (coin < acc) {
                chosen = tr.to;
                break;
            }
        }
        states.push_back(chosen);
        cur = runner_step(tables, cur, chosen);
        if (cur.action < 0) break;
    }
    return walk_states(tables, alpha, side, states);
}

std::string trace_to_csv(const ValueTables& tables, const std::vector<TraceRow>& rows) {
    std::ostringstream out;
    out.precision(12);
    out << "t,state,action,y_lo,y_hi,y_chosen,u,step_cost,cumulative_discounted_cost\n";
    for (const auto& row : rows) {
        const auto xi = static_cast<std::size_t>(row.state);
        out << row.t << ',' << tables.spec.state_names[xi] << ',';
        if (row.action >= 0)
            out << tables.spec.action_names[xi][static_cast<std::size_t>(row.action)];
        out << ',' << row.y_lo << ',' << row.y_hi << ',' << row.y_chosen << ',' << row.u << ','
            << row.step_cost << ',' << row.cum_cost << '\n';
    }
    return out.str();
}

}  // namespace cvar
