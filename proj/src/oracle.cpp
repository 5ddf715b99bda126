#include "cvar/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "cvar/errors.hpp"
#include "cvar/tolerances.hpp"

namespace cvar::oracle {

double OutcomeDistribution::total_prob() const {
    double s = 0;
    for (const auto& [z, p] : atoms) s += p;
    return s;
}

double OutcomeDistribution::max_outcome() const {
    if (atoms.empty()) throw std::invalid_argument("distribution: empty");
    return atoms.back().first;
}

int HistoryPolicy::action_at(const std::vector<int>& history) const {
    const auto it = choice.find(history);
    if (it == choice.end())
        throw std::logic_error("history policy: no action for a reachable history");
    return it->second;
}

OutcomeDistribution enumerate_distribution(const MdpSpec& spec, const HistoryPolicy& policy,
                                           int start, int horizon, long max_paths) {
    if (start < 0 || start >= spec.num_states())
        throw std::invalid_argument("enumerate_distribution: bad start state");
    if (horizon < 0) throw std::invalid_argument("enumerate_distribution: bad horizon");

    OutcomeDistribution dist;
    long paths = 0;
    std::vector<int> history{start};

    std::function<void(int, int, double, double, double, double)> walk =
        [&](int x, int t, double prob, double z, double z1, double beta_t) {
            if (t == horizon) {
                if (++paths > max_paths)
                    throw GuardError("enumerate_distribution: more than " +
                                     std::to_string(max_paths) + " paths");
                const auto xi = static_cast<std::size_t>(x);
                dist.atoms.emplace_back(z + beta_t * spec.terminal_cvar[xi], prob);
                dist.mean_channel += prob * (z1 + beta_t * spec.terminal_mean[xi]);
                return;
            }
            const int a = policy.action_at(history);
            const auto& row =
                spec.transitions[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)];
            for (const auto& tr : row) {
                history.push_back(a);
                history.push_back(tr.to);
                walk(tr.to, t + 1, prob * tr.prob, z + beta_t * tr.cvar_cost,
                     z1 + beta_t * tr.mean_cost, beta_t * spec.discount);
                history.pop_back();
                history.pop_back();
            }
        };
    walk(start, 0, 1.0, 0.0, 0.0, 1.0);

    std::sort(dist.atoms.begin(), dist.atoms.end());
    std::vector<std::pair<double, double>> merged;
    for (const auto& [z, p] : dist.atoms) {
        if (!merged.empty() && z - merged.back().first <= tol::atom_abs)
            merged.back().second += p;
        else
            merged.emplace_back(z, p);
    }
    dist.atoms = std::move(merged);
    return dist;
}

double cvar_of_distribution(const OutcomeDistribution& dist, double alpha) {
    if (dist.atoms.empty()) throw std::invalid_argument("cvar: empty distribution");
    if (alpha < 0 || alpha > 1) throw std::invalid_argument("cvar: alpha outside [0, 1]");
    if (alpha == 0) return dist.max_outcome();

    double acc = 0;
    if (alpha == 1) {
        for (const auto& [z, p] : dist.atoms) acc += z * p;
        return acc;
    }
    double need = alpha;
    for (auto it = dist.atoms.rbegin(); it != dist.atoms.rend() && need > 0; ++it) {
        const double take = std::min(it->second, need);
        acc += take * it->first;
        need -= take;
    }
    const double tail_avg = acc / alpha;

    // Cross-check through the variational form min_w {w + E[(Z - w)+] / alpha}.
    double var_min = std::numeric_limits<double>::infinity();
    for (const auto& [w, unused] : dist.atoms) {
        double exp_excess = 0;
        for (const auto& [z, p] : dist.atoms) exp_excess += std::max(z - w, 0.0) * p;
        var_min = std::min(var_min, w + exp_excess / alpha);
    }
    if (std::fabs(var_min - tail_avg) > tol::rel(1e-9, tail_avg))
        throw std::logic_error("cvar: tail average and variational form disagree");
    return tail_avg;
}

double objective_of(const OutcomeDistribution& dist, double alpha, ObjectiveMode mode) {
    switch (mode) {
        case ObjectiveMode::pure_cvar:
            return cvar_of_distribution(dist, alpha);
        case ObjectiveMode::mean_plus_alpha_cvar:
            return dist.mean_channel + alpha * cvar_of_distribution(dist, alpha);
        case ObjectiveMode::mean_plus_cvar:
            return dist.mean_channel + cvar_of_distribution(dist, alpha);
    }
    throw std::logic_error("objective_of: unknown mode");
}

namespace {

struct DecisionPoint {
    std::vector<int> history;
    int state;
    int actions;
};

std::vector<DecisionPoint> collect_decision_points(const MdpSpec& spec, int start, int horizon) {
    std::vector<DecisionPoint> points;
    std::vector<int> history{start};
    std::function<void(int, int)> walk = [&](int x, int t) {
        if (t == horizon) return;
        points.push_back(DecisionPoint{history, x, spec.num_actions(x)});
        for (int a = 0; a < spec.num_actions(x); ++a) {
            const auto& row =
                spec.transitions[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)];
            for (const auto& tr : row) {
                history.push_back(a);
                history.push_back(tr.to);
                walk(tr.to, t + 1);
                history.pop_back();
                history.pop_back();
            }
        }
    };
    walk(start, 0);
    return points;
}

}  // namespace

long count_history_policies(const MdpSpec& spec, int start, int horizon, long cap) {
    long count = 1;
    std::vector<int> history{start};
    std::function<void(int, int)> walk = [&](int x, int t) {
        if (t == horizon || count > cap) return;
        const long na = spec.num_actions(x);
        count = (count > cap / na) ? cap + 1 : count * na;
        for (int a = 0; a < spec.num_actions(x) && count <= cap; ++a) {
            const auto& row =
                spec.transitions[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)];
            for (const auto& tr : row) {
                walk(tr.to, t + 1);
                if (count > cap) return;
            }
        }
    };
    walk(start, 0);
    return count;
}

std::vector<SearchResult> exhaustive_policy_search_all(const MdpSpec& spec, int start,
                                                       const std::vector<double>& alphas,
                                                       int horizon, ObjectiveMode mode,
                                                       long max_policies) {
    const long n_policies = count_history_policies(spec, start, horizon, max_policies);
    if (n_policies > max_policies)
        throw GuardError("exhaustive_policy_search: more than " + std::to_string(max_policies) +
                         " history policies");
    const std::vector<DecisionPoint> points = collect_decision_points(spec, start, horizon);

    std::vector<SearchResult> best(alphas.size());
    for (auto& b : best) b.value = std::numeric_limits<double>::infinity();
    std::vector<int> assign(points.size(), 0);
    while (true) {
        HistoryPolicy policy;
        for (std::size_t i = 0; i < points.size(); ++i)
            policy.choice[points[i].history] = assign[i];
        const OutcomeDistribution dist = enumerate_distribution(spec, policy, start, horizon);
        for (std::size_t j = 0; j < alphas.size(); ++j) {
            const double value = objective_of(dist, alphas[j], mode);
            if (value < best[j].value) {
                best[j].value = value;
                best[j].policy = policy;
            }
        }
        // advance lexicographically, last decision point least significant
        std::size_t i = points.size();
        while (i > 0) {
            --i;
            if (++assign[i] < points[i].actions) break;
            assign[i] = 0;
            if (i == 0) return best;
        }
        if (points.empty()) return best;
    }
}

SearchResult exhaustive_policy_search(const MdpSpec& spec, int start, double alpha, int horizon,
                                      ObjectiveMode mode, long max_policies) {
    return exhaustive_policy_search_all(spec, start, {alpha}, horizon, mode, max_policies)
        .front();
}

double grid_best_response(const TransferInstance& inst, double y, double resolution,
                          long max_points) {
    inst.validate();
    if (y < 0 || y > 1 + 1e-12) throw std::invalid_argument("grid_best_response: bad budget");
    if (!(resolution > 0)) throw std::invalid_argument("grid_best_response: bad resolution");
    y = std::min(y, 1.0);

    const std::vector<PwlConcave> sources = scaled_sources(inst);
    const int k = inst.size();

    double est = 1;
    for (int i = 0; i + 1 < k; ++i) {
        const double cap = std::min(inst.probs[static_cast<std::size_t>(i)], y);
        est *= std::floor(cap / resolution) + 2;
        if (est > static_cast<double>(max_points))
            throw GuardError("grid_best_response: grid exceeds " + std::to_string(max_points) +
                             " points");
    }

    double best = -std::numeric_limits<double>::infinity();
    std::function<void(int, double, double)> sweep = [&](int i, double rem, double acc) {
        const auto& v = sources[static_cast<std::size_t>(i)];
        const double cap = std::min(v.domain_length(), rem);
        if (i + 1 == k) {
            best = std::max(best, acc + v.eval(cap));
            return;
        }
        long s = 0;
        while (true) {
            double z = static_cast<double>(s) * resolution;
            if (z >= cap) z = cap;
            sweep(i + 1, rem - z, acc + v.eval(z));
            if (z >= cap) break;
            ++s;
        }
    };
    sweep(0, y, 0.0);
    return best;
}

// Splits total into parts positive dyadic fractions (multiples of 1 / pieces).
std::vector<double> dyadic_composition(std::mt19937_64& rng, int parts, int eighths) {
    std::vector<int> cuts(static_cast<std::size_t>(eighths - 1));
    std::iota(cuts.begin(), cuts.end(), 1);
    std::shuffle(cuts.begin(), cuts.end(), rng);
    cuts.resize(static_cast<std::size_t>(parts - 1));
    std::sort(cuts.begin(), cuts.end());
    std::vector<double> probs;
    int prev = 0;
    for (int c : cuts) {
        probs.push_back(static_cast<double>(c - prev) / eighths);
        prev = c;
    }
    probs.push_back(static_cast<double>(eighths - prev) / eighths);
    return probs;
}

namespace {

MdpSpec build_candidate(std::mt19937_64& rng, const RandomSpecOptions& opt) {
    MdpSpec spec;
    std::uniform_int_distribution<int> n_states(2, std::max(2, opt.max_states));
    std::uniform_int_distribution<int> cost(0, opt.max_cost);
    const int n = n_states(rng);
    for (int x = 0; x < n; ++x) spec.state_names.push_back("s" + std::to_string(x));
    spec.action_names.resize(static_cast<std::size_t>(n));
    spec.transitions.resize(static_cast<std::size_t>(n));
    spec.discount = opt.discounts[std::uniform_int_distribution<std::size_t>(
        0, opt.discounts.size() - 1)(rng)];
    std::uniform_int_distribution<int> n_actions(1, opt.max_actions);
    std::uniform_int_distribution<int> n_succ(1, std::min(opt.max_successors, n));
    for (int x = 0; x < n; ++x) {
        const auto xi = static_cast<std::size_t>(x);
        const int na = n_actions(rng);
        for (int a = 0; a < na; ++a) {
            spec.action_names[xi].push_back("a" + std::to_string(a));
            const int k = n_succ(rng);
            std::vector<int> targets(static_cast<std::size_t>(n));
            std::iota(targets.begin(), targets.end(), 0);
            std::shuffle(targets.begin(), targets.end(), rng);
            targets.resize(static_cast<std::size_t>(k));
            std::sort(targets.begin(), targets.end());
            const std::vector<double> probs = dyadic_composition(rng, k, 8);
            std::vector<Transition> row;
            for (int i = 0; i < k; ++i)
                row.push_back(Transition{targets[static_cast<std::size_t>(i)],
                                         probs[static_cast<std::size_t>(i)],
                                         static_cast<double>(cost(rng)),
                                         opt.with_mean_costs ? static_cast<double>(cost(rng))
                                                             : 0.0});
            spec.transitions[xi].push_back(std::move(row));
        }
    }
    std::uniform_int_distribution<int> term(0, 3);
    for (int x = 0; x < n; ++x) {
        spec.terminal_cvar.push_back(opt.zero_terminals ? 0.0 : static_cast<double>(term(rng)));
        spec.terminal_mean.push_back(
            (opt.zero_terminals || !opt.with_mean_costs) ? 0.0 : static_cast<double>(term(rng)));
    }
    spec.finalize();
    return spec;
}

}  // namespace

MdpSpec random_spec(std::uint64_t seed, const RandomSpecOptions& opt) {
    std::mt19937_64 rng(seed);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        MdpSpec spec = build_candidate(rng, opt);
        if (count_history_policies(spec, 0, opt.horizon, opt.policy_cap) <= opt.policy_cap)
            return spec;
    }
    throw std::logic_error("random_spec: could not satisfy the policy-count cap");
}

RandomCostSpec random_cost_spec(std::uint64_t seed, const RandomSpecOptions& opt) {
    std::mt19937_64 rng(seed);
    const MdpSpec base = random_spec(rng(), opt);
    std::uniform_int_distribution<int> n_outcomes(1, 2);
    std::uniform_int_distribution<int> cost(0, opt.max_cost);

    RandomCostSpec rspec;
    rspec.state_names = base.state_names;
    rspec.action_names = base.action_names;
    rspec.terminal_cvar = base.terminal_cvar;
    rspec.terminal_mean = base.terminal_mean;
    rspec.discount = base.discount;
    rspec.transitions.resize(base.state_names.size());
    for (int x = 0; x < base.num_states(); ++x) {
        const auto xi = static_cast<std::size_t>(x);
        rspec.transitions[xi].resize(base.transitions[xi].size());
        for (std::size_t a = 0; a < base.transitions[xi].size(); ++a) {
            for (const auto& t : base.transitions[xi][a]) {
                RandomTransition rt;
                rt.to = t.to;
                rt.prob = t.prob;
                rt.mean_cost = t.mean_cost;
                const int m = n_outcomes(rng);
                const std::vector<double> probs = dyadic_composition(rng, m, 4);
                for (int i = 0; i < m; ++i)
                    rt.outcomes.push_back(
                        CostOutcome{static_cast<double>(cost(rng)), probs[static_cast<std::size_t>(i)]});
                rspec.transitions[xi][a].push_back(std::move(rt));
            }
        }
    }
    rspec.finalize();
    return rspec;
}

}  // namespace cvar::oracle
