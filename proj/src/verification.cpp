#include "cvar/verification.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cvar/errors.hpp"
#include "cvar/pwl.hpp"
#include "cvar/tolerances.hpp"

namespace cvar::verify {

namespace {

constexpr double kTol = 1e-9;

template <typename... Ts>
std::string describe(const Ts&... parts) {
    std::ostringstream os;
    os << std::setprecision(17);
    (os << ... << parts);
    return os.str();
}

// Accumulates pass/fail evidence; keeps the first failing case as the detail.
struct Recorder {
    CheckResult r;

    void require(bool ok, double err, const std::string& what) {
        ++r.cases;
        if (!std::isfinite(err)) err = ok ? 0.0 : 1.0;
        if (err > r.max_err) r.max_err = err;
        if (!ok && r.pass) {
            r.pass = false;
            r.detail = what;
        }
    }

    // |a - b| <= tol, relative to max(1, |a|, |b|); infinities match by sign.
    void close(double a, double b, double tol, const std::string& what) {
        if (std::isinf(a) || std::isinf(b)) {
            const bool same = std::isinf(a) && std::isinf(b) && (a > 0) == (b > 0);
            require(same, same ? 0.0 : 1.0, what);
            return;
        }
        const double err = std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
        require(err <= tol, err, what);
    }

    // a <= b within the relative tolerance.
    void bounded(double a, double b, double tol, const std::string& what) {
        if (std::isinf(b)) {
            require(b > 0, b > 0 ? 0.0 : 1.0, what);
            return;
        }
        if (std::isinf(a)) {
            require(a < 0, a < 0 ? 0.0 : 1.0, what);
            return;
        }
        const double err = (a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
        require(err <= tol, std::max(0.0, err), what);
    }
};

const char* mode_name(oracle::ObjectiveMode mode) {
    switch (mode) {
        case oracle::ObjectiveMode::pure_cvar: return "cvar";
        case oracle::ObjectiveMode::mean_plus_alpha_cvar: return "mean+alpha*cvar";
        case oracle::ObjectiveMode::mean_plus_cvar: return "mean+cvar";
    }
    return "?";
}

RiskObjective to_risk(oracle::ObjectiveMode mode) {
    switch (mode) {
        case oracle::ObjectiveMode::pure_cvar: return RiskObjective::pure_cvar;
        case oracle::ObjectiveMode::mean_plus_alpha_cvar: return RiskObjective::mean_plus_alpha_cvar;
        case oracle::ObjectiveMode::mean_plus_cvar: return RiskObjective::mean_plus_cvar;
    }
    return RiskObjective::pure_cvar;
}

int stage_of(const ValueTables& tables, int t) {
    return tables.horizon.infinite ? 0 : tables.horizon.steps - t;
}

// Independent product-space expansion of random edge costs, built with the
// opposite (label-major) state ordering so indexing mistakes in the library
// construction cannot cancel out here.
MdpSpec label_major_product(const RandomCostSpec& r) {
    int labels = 1;
    for (const auto& per_state : r.transitions)
        for (const auto& row : per_state)
            for (const auto& rt : row)
                labels = std::max(labels, static_cast<int>(rt.outcomes.size()));
    const int n = r.num_states();
    MdpSpec m;
    m.discount = r.discount;
    for (int w = 0; w < labels; ++w) {
        for (int x = 0; x < n; ++x) {
            m.state_names.push_back(r.state_names[static_cast<std::size_t>(x)] + "@" +
                                    std::to_string(w));
            m.action_names.push_back(r.action_names[static_cast<std::size_t>(x)]);
            m.terminal_cvar.push_back(r.terminal_cvar[static_cast<std::size_t>(x)]);
            m.terminal_mean.push_back(r.terminal_mean[static_cast<std::size_t>(x)]);
            std::vector<std::vector<Transition>> rows;
            for (const auto& row : r.transitions[static_cast<std::size_t>(x)]) {
                std::vector<Transition> out;
                for (const auto& rt : row)
                    for (std::size_t j = 0; j < rt.outcomes.size(); ++j)
                        out.push_back(Transition{static_cast<int>(j) * n + rt.to,
                                                 rt.prob * rt.outcomes[j].prob,
                                                 rt.outcomes[j].cost, rt.mean_cost});
                rows.push_back(std::move(out));
            }
            m.transitions.push_back(std::move(rows));
        }
    }
    m.finalize();
    return m;
}

}  // namespace

void ShapeAudit::inspect(const ValueTables& tables) {
    ++tables_checked;
    auto note = [&](double err) {
        if (err > max_err) max_err = err;
        if (err > kTol) ++violations;
    };
    auto deriv_err = [](double a, double b) {
        if (std::isinf(a) || std::isinf(b))
            return std::isinf(a) && std::isinf(b) && (a > 0) == (b > 0) ? 0.0 : 1.0;
        return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
    };
    for (std::size_t s = 0; s < tables.stages.size(); ++s) {
        const StageTable& stage = tables.stages[s];
        for (const PwlConcave& f : stage.V) {
            f.validate();
            ++functions_checked;
        }
        for (const auto& row : stage.Q)
            for (const PwlConcave& f : row) {
                f.validate();
                ++functions_checked;
            }
        if (stage.Q.empty()) continue;
        const int si = static_cast<int>(s);
        for (std::size_t x = 0; x < stage.V.size(); ++x) {
            const PwlConcave& v = stage.V[x];
            for (double y : v.breakpoints()) {
                ++breakpoints_checked;
                const std::vector<int> best =
                    optimal_action_set(tables, si, static_cast<int>(x), y);
                double min_right = std::numeric_limits<double>::infinity();
                double max_left = -std::numeric_limits<double>::infinity();
                for (int a : best) {
                    const PwlConcave& q = stage.Q[x][static_cast<std::size_t>(a)];
                    min_right = std::min(min_right, q.right_deriv(y));
                    max_left = std::max(max_left, q.left_deriv(y));
                }
                note(deriv_err(v.right_deriv(y), min_right));
                note(deriv_err(v.left_deriv(y), max_left));
            }
        }
    }
}

CheckResult ShapeAudit::result() const {
    CheckResult r;
    r.name = "stored value functions: shape invariants and envelope derivatives";
    r.cases = breakpoints_checked;
    r.max_err = max_err;
    r.pass = violations == 0;
    r.skipped = tables_checked == 0;
    if (!r.pass)
        r.detail = describe(violations, " derivative identity violations across ", tables_checked,
                            " solved tables");
    return r;
}

TransferInstance random_transfer_instance(std::uint64_t seed, int max_successors,
                                          double max_slope) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> n_succ(1, std::min(max_successors, 8));
    const int k = n_succ(rng);
    TransferInstance inst;
    inst.probs = oracle::dyadic_composition(rng, k, 8);
    std::uniform_int_distribution<int> n_seg(1, 3);
    std::uniform_real_distribution<double> slope(0.0, max_slope);
    std::uniform_int_distribution<int> level(0, 16);
    for (int i = 0; i < k; ++i) {
        const int m = n_seg(rng);
        std::vector<double> slopes;
        for (int j = 0; j < m; ++j) slopes.push_back(slope(rng));
        std::sort(slopes.begin(), slopes.end(), std::greater<>());
        const std::vector<double> lengths = oracle::dyadic_composition(rng, m, 8);
        std::vector<Segment> segs;
        for (int j = 0; j < m; ++j)
            segs.push_back(Segment{slopes[static_cast<std::size_t>(j)],
                                   lengths[static_cast<std::size_t>(j)]});
        inst.funcs.push_back(PwlConcave::make(level(rng) / 8.0, std::move(segs), 1.0));
        inst.labels.push_back(i);
    }
    return inst;
}

oracle::HistoryPolicy induced_history_policy(const ValueTables& tables, int start, double alpha,
                                             DerivativeSide side) {
    oracle::HistoryPolicy pol;
    const MdpSpec& spec = tables.spec;
    std::vector<int> history{start};
    std::function<void(const RunnerState&)> walk = [&](const RunnerState& rs) {
        if (rs.action < 0) return;
        pol.choice[history] = rs.action;
        for (const Transition& tr : spec.transitions[static_cast<std::size_t>(rs.state)]
                                                    [static_cast<std::size_t>(rs.action)]) {
            history.push_back(rs.action);
            history.push_back(tr.to);
            walk(runner_step(tables, rs, tr.to));
            history.pop_back();
            history.pop_back();
        }
    };
    walk(init_runner(tables, start, alpha, side));
    return pol;
}

CheckResult check_oracle_agreement(const std::vector<MdpSpec>& specs, int horizon,
                                   const std::vector<double>& alphas,
                                   oracle::ObjectiveMode mode, ShapeAudit* audit) {
    Recorder rec;
    rec.r.name = describe("solver vs exhaustive policy search, ", mode_name(mode), ", horizon ",
                          horizon);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const ValueTables tables = solve_finite(specs[i], horizon);
        if (audit) audit->inspect(tables);
        const std::vector<oracle::SearchResult> best =
            oracle::exhaustive_policy_search_all(specs[i], 0, alphas, horizon, mode);
        for (std::size_t j = 0; j < alphas.size(); ++j) {
            const double got = cvar_value(tables, 0, alphas[j], to_risk(mode));
            rec.close(got, best[j].value, kTol,
                      describe("spec ", i, ", alpha ", alphas[j], ": solver ", got,
                               ", exhaustive ", best[j].value));
        }
    }
    return rec.r;
}

CheckResult check_runner_optimality(const std::vector<MdpSpec>& specs, int horizon,
                                    const std::vector<double>& alphas,
                                    oracle::ObjectiveMode mode, ShapeAudit* audit) {
    Recorder rec;
    rec.r.name = describe("runner-induced policy achieves the solved value, ", mode_name(mode));
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const ValueTables tables = solve_finite(specs[i], horizon);
        if (audit) audit->inspect(tables);
        for (double alpha : alphas) {
            const double want = cvar_value(tables, 0, alpha, to_risk(mode));
            for (DerivativeSide side : {DerivativeSide::right, DerivativeSide::left}) {
                const oracle::HistoryPolicy pol =
                    induced_history_policy(tables, 0, alpha, side);
                const oracle::OutcomeDistribution dist =
                    oracle::enumerate_distribution(specs[i], pol, 0, horizon);
                const double got = oracle::objective_of(dist, alpha, mode);
                rec.close(got, want, kTol,
                          describe("spec ", i, ", alpha ", alpha, ", ",
                                   side == DerivativeSide::right ? "right" : "left",
                                   " seeding: induced policy ", got, ", solved ", want));
            }
        }
    }
    return rec.r;
}

CheckResult check_transfer_derivatives(int instances, int random_budgets,
                                       std::uint64_t seed_base) {
    Recorder rec;
    rec.r.name = "adversarial best response: derivatives, feasibility, monotonicity";
    for (int i = 0; i < instances; ++i) {
        const TransferInstance inst =
            random_transfer_instance(seed_base + static_cast<std::uint64_t>(i));
        inst.validate();
        const PwlConcave F = transfer_value(inst);
        F.validate();
        const std::vector<PwlConcave> sources = scaled_sources(inst);
        std::vector<double> ys = F.breakpoints();
        std::mt19937_64 rng(seed_base * 1000003ULL + static_cast<std::uint64_t>(i));
        std::uniform_real_distribution<double> uy(0.0, 1.0);
        for (int r = 0; r < random_budgets; ++r) ys.push_back(uy(rng));
        std::sort(ys.begin(), ys.end());
        std::vector<double> prev_z;
        for (double y : ys) {
            const NatureAllocation alloc = optimal_allocation(inst, y);
            const double mass = std::accumulate(alloc.z.begin(), alloc.z.end(), 0.0);
            rec.close(mass, y, kTol, describe("instance ", i, ": allocated mass ", mass,
                                              " at budget ", y));
            double stochastic = 0;
            for (int s = 0; s < inst.size(); ++s) {
                const auto si = static_cast<std::size_t>(s);
                rec.bounded(0.0, alloc.z[si], kTol,
                            describe("instance ", i, ": negative mass at budget ", y));
                rec.bounded(alloc.z[si], inst.probs[si], kTol,
                            describe("instance ", i, ": mass over capacity at budget ", y));
                stochastic += alloc.b[si] * inst.probs[si];
            }
            if (y > 0)
                rec.close(stochastic, 1.0, kTol,
                          describe("instance ", i, ": distortion mean ", stochastic,
                                   " at budget ", y));
            else
                for (double b : alloc.b)
                    rec.close(b, 1.0, kTol,
                              describe("instance ", i, ": distortion at zero budget is ", b));
            rec.close(alloc.value, F.eval(y), kTol,
                      describe("instance ", i, ": allocation value ", alloc.value,
                               " vs envelope ", F.eval(y), " at budget ", y));
            double max_right = -std::numeric_limits<double>::infinity();
            double min_left = std::numeric_limits<double>::infinity();
            for (int s = 0; s < inst.size(); ++s) {
                const auto si = static_cast<std::size_t>(s);
                max_right = std::max(max_right, sources[si].right_deriv(alloc.z[si]));
                min_left = std::min(min_left, sources[si].left_deriv(alloc.z[si]));
            }
            rec.close(F.right_deriv(y), max_right, kTol,
                      describe("instance ", i, ": right derivative ", F.right_deriv(y),
                               " vs max marginal ", max_right, " at budget ", y));
            rec.close(F.left_deriv(y), min_left, kTol,
                      describe("instance ", i, ": left derivative ", F.left_deriv(y),
                               " vs min marginal ", min_left, " at budget ", y));
            rec.bounded(max_right, min_left, kTol,
                        describe("instance ", i, ": marginal ordering at budget ", y));
            if (!prev_z.empty())
                for (int s = 0; s < inst.size(); ++s)
                    rec.bounded(prev_z[static_cast<std::size_t>(s)],
                                alloc.z[static_cast<std::size_t>(s)], kTol,
                                describe("instance ", i, ": allocation not monotone at budget ",
                                         y));
            prev_z = alloc.z;
        }
    }
    return rec.r;
}

CheckResult check_transfer_grid(int instances, double resolution, double tolerance,
                                std::uint64_t seed_base) {
    Recorder rec;
    rec.r.name = describe("adversarial best response vs grid search, step ", resolution);
    for (int i = 0; i < instances; ++i) {
        const TransferInstance inst = random_transfer_instance(
            seed_base + static_cast<std::uint64_t>(i), /*max_successors=*/3, /*max_slope=*/4.0);
        const PwlConcave F = transfer_value(inst);
        std::mt19937_64 rng(seed_base * 7919ULL + static_cast<std::uint64_t>(i));
        std::uniform_real_distribution<double> uy(0.05, 1.0);
        for (double y : {uy(rng), 1.0}) {
            const double lower = oracle::grid_best_response(inst, y, resolution);
            const double got = F.eval(y);
            rec.bounded(lower, got, kTol,
                        describe("instance ", i, ": grid value ", lower,
                                 " exceeds envelope ", got, " at budget ", y));
            rec.require(got - lower <= tolerance, got - lower,
                        describe("instance ", i, ": envelope ", got, " vs grid ", lower,
                                 " at budget ", y));
        }
    }
    return rec.r;
}

CheckResult check_boundary_consistency(const std::vector<MdpSpec>& pure_zero_terminal,
                                       int horizon, ShapeAudit* audit) {
    Recorder rec;
    rec.r.name = "boundary risk levels: mean, worst path, deterministic models";
    for (std::size_t i = 0; i < pure_zero_terminal.size(); ++i) {
        const MdpSpec& spec = pure_zero_terminal[i];
        const ValueTables tables = solve_finite(spec, horizon);
        if (audit) audit->inspect(tables);
        const Horizon h = Horizon::finite(horizon);
        const std::vector<double> mean = risk_neutral_value(spec, h);
        const std::vector<double> worst = worst_path_value(spec, h);
        const double offset = tables.shift.offset_cvar + tables.shift.offset_mean;
        for (int x = 0; x < spec.num_states(); ++x) {
            const double at_one = cvar_value(tables, x, 1.0, RiskObjective::pure_cvar);
            rec.close(at_one, mean[static_cast<std::size_t>(x)], kTol,
                      describe("spec ", i, ", state ", x, ": value at level 1 is ", at_one,
                               ", risk-neutral value is ", mean[static_cast<std::size_t>(x)]));
            const double slope0 = tables.V(tables.final_stage(), x).right_deriv(0.0);
            rec.close(slope0, worst[static_cast<std::size_t>(x)] + offset, kTol,
                      describe("spec ", i, ", state ", x, ": slope at zero is ", slope0,
                               ", worst path gives ",
                               worst[static_cast<std::size_t>(x)] + offset));
        }
    }
    // Deterministic models: one successor per action, so the realized total is
    // a constant per policy and the value cannot depend on the risk level.
    for (int i = 0; i < 10; ++i) {
        oracle::RandomSpecOptions opt;
        opt.max_successors = 1;
        opt.max_actions = 2;
        opt.zero_terminals = false;
        MdpSpec spec = oracle::random_spec(5500 + static_cast<std::uint64_t>(i), opt);
        const ValueTables tables = solve_finite(spec, horizon);
        if (audit) audit->inspect(tables);
        for (int x = 0; x < spec.num_states(); ++x) {
            const PwlConcave& v = tables.V(tables.final_stage(), x);
            const double spread = v.segments().front().slope - v.segments().back().slope;
            rec.require(std::fabs(spread) <= 1e-12, std::fabs(spread),
                        describe("deterministic spec ", i, ", state ", x, ": slope spread ",
                                 spread));
            const double lo = cvar_value(tables, x, 0.25, RiskObjective::pure_cvar);
            const double hi = cvar_value(tables, x, 1.0, RiskObjective::pure_cvar);
            rec.close(lo, hi, kTol,
                      describe("deterministic spec ", i, ", state ", x, ": value ", lo,
                               " at 0.25 vs ", hi, " at 1"));
        }
    }
    return rec.r;
}

CheckResult check_contraction(int spec_count, double epsilon, std::uint64_t seed_base,
                              ShapeAudit* audit) {
    Recorder rec;
    rec.r.name = describe("infinite horizon: contraction and certified bound, epsilon ",
                          epsilon);
    for (int i = 0; i < spec_count; ++i) {
        oracle::RandomSpecOptions opt;
        opt.discounts = {0.5};
        opt.zero_terminals = true;
        if (i % 5 == 4) {
            opt.max_actions = 2;
            opt.max_successors = 1;
        } else {
            opt.max_actions = 1;
            opt.max_successors = 2;
        }
        const MdpSpec spec = oracle::random_spec(seed_base + static_cast<std::uint64_t>(i), opt);
        const ValueTables tables = solve_infinite(spec, epsilon);
        if (audit) audit->inspect(tables);
        const ConvergenceInfo& info = *tables.convergence;
        const double beta = spec.discount;
        for (std::size_t k = 0; k + 1 < info.deltas.size(); ++k)
            rec.bounded(info.deltas[k + 1], beta * info.deltas[k], kTol,
                        describe("spec ", i, ": step ", k + 1, " moved ", info.deltas[k + 1],
                                 " after ", info.deltas[k]));
        // Double-length reference run from the same zero start: monotone
        // iterates keep it within the certified bound of the returned table.
        std::vector<PwlConcave> cur(static_cast<std::size_t>(spec.num_states()),
                                    PwlConcave::affine(0.0, 0.0, 1.0));
        for (int n = 0; n < 2 * info.iterations; ++n) cur = backup(tables.spec, cur).V;
        double dist = 0;
        for (int x = 0; x < spec.num_states(); ++x)
            dist = std::max(dist, sup_distance(tables.V(tables.final_stage(), x),
                                               cur[static_cast<std::size_t>(x)]));
        rec.bounded(dist, info.error_bound, kTol,
                    describe("spec ", i, ": doubled run moved ", dist,
                             " past the certified bound ", info.error_bound));
    }
    return rec.r;
}

CheckResult check_nature_consistency(const std::vector<MdpSpec>& specs, int horizon,
                                     const std::vector<double>& alphas, ShapeAudit* audit) {
    Recorder rec;
    rec.r.name = "runner tracks the adversary's true tail-risk path";
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const ValueTables tables = solve_finite(specs[i], horizon);
        if (audit) audit->inspect(tables);
        const MdpSpec& spec = tables.spec;
        for (double alpha : alphas) {
            for (DerivativeSide side : {DerivativeSide::right, DerivativeSide::left}) {
                std::function<void(const RunnerState&, double)> walk =
                    [&](const RunnerState& rs, double true_y) {
                        if (rs.action < 0) return;
                        const int stage = stage_of(tables, rs.t);
                        const auto& row = spec.transitions[static_cast<std::size_t>(rs.state)]
                                                          [static_cast<std::size_t>(rs.action)];
                        TransferInstance inst;
                        for (const Transition& tr : row) {
                            inst.probs.push_back(tr.prob);
                            inst.funcs.push_back(transform_successor(tables.V(stage - 1, tr.to),
                                                                     tr.mean_cost, tr.cvar_cost,
                                                                     spec.discount));
                            inst.labels.push_back(tr.to);
                        }
                        const NatureAllocation alloc = optimal_allocation(inst, true_y);
                        rec.close(alloc.value,
                                  tables.Q(stage, rs.state, rs.action).eval(true_y), kTol,
                                  describe("spec ", i, ", t ", rs.t,
                                           ": best response vs stored Q at ", true_y));
                        for (std::size_t e = 0; e < row.size(); ++e) {
                            const double next_y = alloc.z[e] / row[e].prob;
                            const RunnerState nxt = runner_step(tables, rs, row[e].to);
                            if (nxt.risk.known)
                                rec.close(nxt.risk.lo, next_y, kTol,
                                          describe("spec ", i, ", t ", rs.t, ": recovered point ",
                                                   nxt.risk.lo, " vs true level ", next_y));
                            else {
                                rec.bounded(nxt.risk.lo, next_y, kTol,
                                            describe("spec ", i, ", t ", rs.t,
                                                     ": true level ", next_y,
                                                     " under interval floor ", nxt.risk.lo));
                                rec.bounded(next_y, nxt.risk.hi, kTol,
                                            describe("spec ", i, ", t ", rs.t,
                                                     ": true level ", next_y,
                                                     " over interval ceiling ", nxt.risk.hi));
                            }
                            const PwlConcave& nv = tables.V(stage - 1, row[e].to);
                            rec.bounded(nv.right_deriv(next_y), nxt.u, kTol,
                                        describe("spec ", i, ", t ", rs.t, ": u ", nxt.u,
                                                 " under the right derivative at ", next_y));
                            rec.bounded(nxt.u, nv.left_deriv(next_y), kTol,
                                        describe("spec ", i, ", t ", rs.t, ": u ", nxt.u,
                                                 " over the left derivative at ", next_y));
                            walk(nxt, next_y);
                        }
                    };
                walk(init_runner(tables, 0, alpha, side), alpha);
            }
        }
    }
    return rec.r;
}

CheckResult check_random_cost_augmentation(int spec_count, int horizon,
                                           std::uint64_t seed_base, ShapeAudit* audit) {
    Recorder rec;
    rec.r.name = "random edge costs: product expansion, label independence, oracle";
    long oracle_runs = 0;
    for (int i = 0; i < spec_count; ++i) {
        oracle::RandomSpecOptions opt;
        opt.horizon = horizon;
        // Keep the expanded product enumerable: randomness comes from either
        // the transitions or the edge costs, not both at once.
        if (i % 2 == 0) {
            opt.max_actions = 2;
            opt.max_successors = 1;
        } else {
            opt.max_actions = 1;
            opt.max_successors = 2;
        }
        const RandomCostSpec rspec =
            oracle::random_cost_spec(seed_base + static_cast<std::uint64_t>(i), opt);
        const MdpSpec aug = augment_random_costs(rspec);
        const MdpSpec manual = label_major_product(rspec);
        const ValueTables ta = solve_finite(aug, horizon);
        const ValueTables tm = solve_finite(manual, horizon);
        if (audit) audit->inspect(ta);
        for (int s = 0; s < aug.num_states(); ++s) {
            const std::string& name = aug.state_names[static_cast<std::size_t>(s)];
            const int m = manual.state_index(name);
            rec.require(m >= 0, m >= 0 ? 0.0 : 1.0,
                        describe("spec ", i, ": state ", name, " missing from the reference"));
            if (m < 0) continue;
            const double d =
                sup_distance(ta.V(ta.final_stage(), s), tm.V(tm.final_stage(), m));
            rec.bounded(d, 0.0, kTol,
                        describe("spec ", i, ": state ", name,
                                 " differs from the reference product by ", d));
            const std::string base = name.substr(0, name.find('@')) + "@0";
            const int b = aug.state_index(base);
            const double dl = sup_distance(ta.V(ta.final_stage(), s), ta.V(ta.final_stage(), b));
            rec.bounded(dl, 0.0, kTol,
                        describe("spec ", i, ": state ", name, " depends on its label by ", dl));
        }
        const int start = initial_augmented_state(aug, rspec.state_names[0]);
        if (oracle::count_history_policies(aug, start, horizon, opt.policy_cap) <=
            opt.policy_cap) {
            ++oracle_runs;
            for (double alpha : {0.25, 1.0}) {
                const double got = cvar_value(ta, start, alpha, RiskObjective::pure_cvar);
                const oracle::SearchResult best = oracle::exhaustive_policy_search(
                    aug, start, alpha, horizon, oracle::ObjectiveMode::pure_cvar);
                rec.close(got, best.value, kTol,
                          describe("spec ", i, ", alpha ", alpha, ": solver ", got,
                                   ", exhaustive ", best.value));
            }
        }
    }
    rec.require(oracle_runs > 0, oracle_runs > 0 ? 0.0 : 1.0,
                "no expanded model was small enough for the exhaustive oracle");
    return rec.r;
}

std::string format_result(const CheckResult& r) {
    std::ostringstream os;
    os << (r.skipped ? "SKIP" : r.pass ? "PASS" : "FAIL") << "  " << r.name << "  (cases="
       << r.cases << ", max_err=" << std::scientific << std::setprecision(3) << r.max_err
       << ")";
    if (r.skipped && !r.detail.empty())
        os << "\n      skipped (guard): " << r.detail;
    else if (!r.pass && !r.detail.empty())
        os << "\n      first failure: " << r.detail;
    return os.str();
}

}  // namespace cvar::verify
