#include "cvar/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cvar/errors.hpp"
#include "cvar/tolerances.hpp"

namespace cvar {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
}

double finite_number(const json& j, const std::string& where) {
    require(j.is_number(), where + ": expected a number");
    const double v = j.get<double>();
    require(std::isfinite(v), where + ": non-finite value");
    return v;
}

// Renormalizes a probability row to sum exactly 1 or rejects it.
template <typename Row>
void fix_prob_row(Row& row, const std::string& where) {
    double sum = 0;
    for (const auto& e : row) {
        require(e.prob >= 0, where + ": negative probability");
        sum += e.prob;
    }
    require(std::fabs(sum - 1.0) <= tol::prob_sum,
            where + ": probabilities sum to " + std::to_string(sum));
    for (auto& e : row) e.prob /= sum;
}

}  // namespace

int MdpSpec::state_index(std::string_view name) const {
    for (int i = 0; i < num_states(); ++i)
        if (state_names[static_cast<std::size_t>(i)] == name) return i;
    return -1;
}

int MdpSpec::action_index(int x, std::string_view name) const {
    const auto& names = action_names[static_cast<std::size_t>(x)];
    for (int a = 0; a < static_cast<int>(names.size()); ++a)
        if (names[static_cast<std::size_t>(a)] == name) return a;
    return -1;
}

bool MdpSpec::mean_channel_zero() const {
    for (const auto& per_state : transitions)
        for (const auto& row : per_state)
            for (const auto& t : row)
                if (t.mean_cost != 0) return false;
    for (double v : terminal_mean)
        if (v != 0) return false;
    return true;
}

bool MdpSpec::nonnegative_costs() const {
    for (const auto& per_state : transitions)
        for (const auto& row : per_state)
            for (const auto& t : row)
                if (t.cvar_cost < 0 || t.mean_cost < 0) return false;
    for (double v : terminal_cvar)
        if (v < 0) return false;
    for (double v : terminal_mean)
        if (v < 0) return false;
    return true;
}

double MdpSpec::max_stage_cost() const {
    double m = 0;
    for (const auto& per_state : transitions)
        for (const auto& row : per_state)
            for (const auto& t : row) m = std::max(m, t.cvar_cost + t.mean_cost);
    return m;
}

void MdpSpec::finalize() {
    require(!state_names.empty(), "spec: no states");
    require(discount > 0 && discount <= 1.0,
            "spec: discount must lie in (0, 1], got " + std::to_string(discount));
    require(action_names.size() == state_names.size(), "spec: actions shape mismatch");
    require(transitions.size() == state_names.size(), "spec: transitions shape mismatch");
    if (terminal_cvar.empty()) terminal_cvar.assign(state_names.size(), 0.0);
    if (terminal_mean.empty()) terminal_mean.assign(state_names.size(), 0.0);
    require(terminal_cvar.size() == state_names.size(), "spec: terminal_cvar_cost shape");
    require(terminal_mean.size() == state_names.size(), "spec: terminal_mean_cost shape");

    std::set<std::string> seen_states(state_names.begin(), state_names.end());
    require(seen_states.size() == state_names.size(), "spec: duplicate state names");

    for (int x = 0; x < num_states(); ++x) {
        const auto xi = static_cast<std::size_t>(x);
        const std::string& sx = state_names[xi];
        require(!action_names[xi].empty(), "spec: state " + sx + " has no actions");
        std::set<std::string> seen_actions(action_names[xi].begin(), action_names[xi].end());
        require(seen_actions.size() == action_names[xi].size(),
                "spec: duplicate action names at state " + sx);
        require(transitions[xi].size() == action_names[xi].size(),
                "spec: transition rows mismatch at state " + sx);
        for (int a = 0; a < num_actions(x); ++a) {
            const auto ai = static_cast<std::size_t>(a);
            const std::string where = "(" + sx + ", " + action_names[xi][ai] + ")";
            auto& row = transitions[xi][ai];
            std::erase_if(row, [](const Transition& t) { return t.prob == 0; });
            require(!row.empty(), "spec: no transitions for " + where);
            std::set<int> targets;
            for (const auto& t : row) {
                require(t.to >= 0 && t.to < num_states(),
                        "spec: bad transition target for " + where);
                require(targets.insert(t.to).second,
                        "spec: duplicate transition " + where + " -> " +
                            state_names[static_cast<std::size_t>(t.to)]);
                require(std::isfinite(t.cvar_cost) && std::isfinite(t.mean_cost),
                        "spec: non-finite cost for " + where);
            }
            fix_prob_row(row, "spec: " + where);
        }
    }
    validate();
}

void MdpSpec::validate() const {
    for (int x = 0; x < num_states(); ++x) {
        for (int a = 0; a < num_actions(x); ++a) {
            const auto& row = transitions[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)];
            require(!row.empty(), "spec: empty transition row");
            double sum = 0;
            for (const auto& t : row) {
                require(t.prob > 0, "spec: stored zero-probability edge");
                sum += t.prob;
            }
            require(std::fabs(sum - 1.0) <= 1e-12, "spec: unnormalized probability row");
        }
    }
}

int RandomCostSpec::state_index(std::string_view name) const {
    for (int i = 0; i < num_states(); ++i)
        if (state_names[static_cast<std::size_t>(i)] == name) return i;
    return -1;
}

void RandomCostSpec::finalize() {
    require(!state_names.empty(), "spec: no states");
    require(discount > 0 && discount <= 1.0, "spec: discount must lie in (0, 1]");
    if (terminal_cvar.empty()) terminal_cvar.assign(state_names.size(), 0.0);
    if (terminal_mean.empty()) terminal_mean.assign(state_names.size(), 0.0);
    for (int x = 0; x < num_states(); ++x) {
        const auto xi = static_cast<std::size_t>(x);
        const std::string& sx = state_names[xi];
        require(!action_names[xi].empty(), "spec: state " + sx + " has no actions");
        for (std::size_t ai = 0; ai < action_names[xi].size(); ++ai) {
            const std::string where = "(" + sx + ", " + action_names[xi][ai] + ")";
            auto& row = transitions[xi][ai];
            std::erase_if(row, [](const RandomTransition& t) { return t.prob == 0; });
            require(!row.empty(), "spec: no transitions for " + where);
            std::set<int> targets;
            for (auto& t : row) {
                require(t.to >= 0 && t.to < num_states(), "spec: bad target for " + where);
                require(targets.insert(t.to).second, "spec: duplicate transition for " + where);
                std::erase_if(t.outcomes, [](const CostOutcome& o) { return o.prob == 0; });
                require(!t.outcomes.empty(), "spec: no cost outcomes for " + where);
                for (const auto& o : t.outcomes)
                    require(std::isfinite(o.cost), "spec: non-finite outcome cost for " + where);
                fix_prob_row(t.outcomes, "spec: outcome row for " + where);
            }
            fix_prob_row(row, "spec: " + where);
        }
    }
}

namespace {

ParsedSpec parse_json(const json& doc) {
    require(doc.is_object(), "spec: top-level document must be an object");
    require(doc.contains("states") && doc["states"].is_array(), "spec: missing states array");
    require(doc.contains("actions") && doc["actions"].is_object(), "spec: missing actions map");
    require(doc.contains("transitions") && doc["transitions"].is_array(),
            "spec: missing transitions array");

    RandomCostSpec rspec;  // parse into the general form, collapse later
    for (const auto& s : doc["states"]) {
        require(s.is_string(), "spec: state names must be strings");
        rspec.state_names.push_back(s.get<std::string>());
    }
    const int n = rspec.num_states();
    rspec.action_names.resize(static_cast<std::size_t>(n));
    rspec.transitions.resize(static_cast<std::size_t>(n));
    rspec.terminal_cvar.assign(static_cast<std::size_t>(n), 0.0);
    rspec.terminal_mean.assign(static_cast<std::size_t>(n), 0.0);

    rspec.discount = doc.contains("discount") ? finite_number(doc["discount"], "spec: discount") : 1.0;

    for (const auto& [sname, alist] : doc["actions"].items()) {
        const int x = rspec.state_index(sname);
        require(x >= 0, "spec: actions for unknown state " + sname);
        require(alist.is_array(), "spec: actions for " + sname + " must be an array");
        for (const auto& a : alist) {
            require(a.is_string(), "spec: action names must be strings");
            rspec.action_names[static_cast<std::size_t>(x)].push_back(a.get<std::string>());
        }
        rspec.transitions[static_cast<std::size_t>(x)]
            .resize(rspec.action_names[static_cast<std::size_t>(x)].size());
    }

    bool any_outcomes = false;
    for (const auto& t : doc["transitions"]) {
        require(t.is_object(), "spec: transitions must be objects");
        for (const auto& key : {"from", "action", "to"})
            require(t.contains(key) && t[key].is_string(),
                    std::string("spec: transition missing ") + key);
        const std::string from = t["from"], action = t["action"], to = t["to"];
        const std::string where = "(" + from + ", " + action + ")";
        const int x = rspec.state_index(from);
        require(x >= 0, "spec: transition from unknown state " + from);
        const int x2 = rspec.state_index(to);
        require(x2 >= 0, "spec: transition " + where + " to unknown state " + to);
        const auto& anames = rspec.action_names[static_cast<std::size_t>(x)];
        const auto it = std::find(anames.begin(), anames.end(), action);
        require(it != anames.end(), "spec: transition " + where + " uses undeclared action");
        const auto a = static_cast<std::size_t>(it - anames.begin());

        RandomTransition rt;
        rt.to = x2;
        require(t.contains("prob"), "spec: transition " + where + " missing prob");
        rt.prob = finite_number(t["prob"], "spec: prob for " + where);
        require(rt.prob >= 0, "spec: negative probability for " + where);
        rt.mean_cost = t.contains("mean_cost")
                           ? finite_number(t["mean_cost"], "spec: mean_cost for " + where)
                           : 0.0;
        if (t.contains("outcomes")) {
            require(!t.contains("cvar_cost"),
                    "spec: transition " + where + " has both cvar_cost and outcomes");
            require(t["outcomes"].is_array() && !t["outcomes"].empty(),
                    "spec: outcomes for " + where + " must be a non-empty array");
            for (const auto& o : t["outcomes"]) {
                require(o.is_object() && o.contains("cost") && o.contains("prob"),
                        "spec: outcome entries for " + where + " need cost and prob");
                rt.outcomes.push_back(CostOutcome{finite_number(o["cost"], "spec: outcome cost"),
                                                  finite_number(o["prob"], "spec: outcome prob")});
            }
            any_outcomes = true;
        } else {
            require(t.contains("cvar_cost"),
                    "spec: transition " + where + " missing cvar_cost");
            rt.outcomes.push_back(
                CostOutcome{finite_number(t["cvar_cost"], "spec: cvar_cost for " + where), 1.0});
        }
        rspec.transitions[static_cast<std::size_t>(x)][a].push_back(std::move(rt));
    }

    for (const auto& key : {"terminal_cvar_cost", "terminal_mean_cost"}) {
        if (!doc.contains(key)) continue;
        require(doc[key].is_object(), std::string("spec: ") + key + " must map states to numbers");
        for (const auto& [sname, v] : doc[key].items()) {
            const int x = rspec.state_index(sname);
            require(x >= 0, std::string("spec: ") + key + " for unknown state " + sname);
            auto& dst = (std::string_view(key) == "terminal_cvar_cost") ? rspec.terminal_cvar
                                                                        : rspec.terminal_mean;
            dst[static_cast<std::size_t>(x)] = finite_number(v, std::string("spec: ") + key);
        }
    }

    rspec.finalize();
    if (any_outcomes) return rspec;

    MdpSpec spec;
    spec.state_names = rspec.state_names;
    spec.action_names = rspec.action_names;
    spec.terminal_cvar = rspec.terminal_cvar;
    spec.terminal_mean = rspec.terminal_mean;
    spec.discount = rspec.discount;
    spec.transitions.resize(static_cast<std::size_t>(n));
    for (int x = 0; x < n; ++x) {
        const auto xi = static_cast<std::size_t>(x);
        spec.transitions[xi].resize(rspec.action_names[xi].size());
        for (std::size_t a = 0; a < rspec.transitions[xi].size(); ++a)
            for (const auto& rt : rspec.transitions[xi][a])
                spec.transitions[xi][a].push_back(
                    Transition{rt.to, rt.prob, rt.outcomes.front().cost, rt.mean_cost});
    }
    spec.finalize();
    return spec;
}

}  // namespace

ParsedSpec parse_spec(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("spec: invalid JSON: ") + e.what());
    }
    return parse_json(doc);
}

ParsedSpec parse_spec_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("spec: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_spec(buf.str());
}

std::string serialize_spec(const MdpSpec& spec) {
    json doc;
    doc["states"] = spec.state_names;
    json actions = json::object();
    for (int x = 0; x < spec.num_states(); ++x)
        actions[spec.state_names[static_cast<std::size_t>(x)]] =
            spec.action_names[static_cast<std::size_t>(x)];
    doc["actions"] = actions;
    doc["discount"] = spec.discount;
    json trans = json::array();
    for (int x = 0; x < spec.num_states(); ++x) {
        const auto xi = static_cast<std::size_t>(x);
        for (int a = 0; a < spec.num_actions(x); ++a) {
            for (const auto& t : spec.transitions[xi][static_cast<std::size_t>(a)]) {
                json e;
                e["from"] = spec.state_names[xi];
                e["action"] = spec.action_names[xi][static_cast<std::size_t>(a)];
                e["to"] = spec.state_names[static_cast<std::size_t>(t.to)];
                e["prob"] = t.prob;
                e["cvar_cost"] = t.cvar_cost;
                e["mean_cost"] = t.mean_cost;
                trans.push_back(e);
            }
        }
    }
    doc["transitions"] = trans;
    json tc = json::object(), tm = json::object();
    for (int x = 0; x < spec.num_states(); ++x) {
        tc[spec.state_names[static_cast<std::size_t>(x)]] =
            spec.terminal_cvar[static_cast<std::size_t>(x)];
        tm[spec.state_names[static_cast<std::size_t>(x)]] =
            spec.terminal_mean[static_cast<std::size_t>(x)];
    }
    doc["terminal_cvar_cost"] = tc;
    doc["terminal_mean_cost"] = tm;
    return doc.dump();
}

std::string spec_hash(const MdpSpec& spec) {
    const std::string text = serialize_spec(spec);
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::pair<MdpSpec, CostShift> shift_costs(const MdpSpec& spec, const Horizon& horizon) {
    double min_cvar = 0, min_mean = 0;
    for (const auto& per_state : spec.transitions)
        for (const auto& row : per_state)
            for (const auto& t : row) {
                min_cvar = std::min(min_cvar, t.cvar_cost);
                min_mean = std::min(min_mean, t.mean_cost);
            }
    for (double v : spec.terminal_cvar) min_cvar = std::min(min_cvar, v);
    for (double v : spec.terminal_mean) min_mean = std::min(min_mean, v);

    CostShift shift;
    shift.cvar_shift = -min_cvar;
    shift.mean_shift = -min_mean;

    const double beta = spec.discount;
    double factor;  // sum of beta^t over every stage the shift touches
    if (horizon.infinite) {
        if (!(beta < 1)) throw ValidationError("shift_costs: infinite horizon needs discount < 1");
        factor = 1.0 / (1.0 - beta);
    } else if (beta == 1.0) {
        factor = static_cast<double>(horizon.steps + 1);
    } else {
        factor = (1.0 - std::pow(beta, horizon.steps + 1)) / (1.0 - beta);
    }
    shift.offset_cvar = shift.cvar_shift * factor;
    shift.offset_mean = shift.mean_shift * factor;

    MdpSpec out = spec;
    if (shift.cvar_shift != 0 || shift.mean_shift != 0) {
        for (auto& per_state : out.transitions)
            for (auto& row : per_state)
                for (auto& t : row) {
                    t.cvar_cost += shift.cvar_shift;
                    t.mean_cost += shift.mean_shift;
                }
        for (auto& v : out.terminal_cvar) v += shift.cvar_shift;
        for (auto& v : out.terminal_mean) v += shift.mean_shift;
    }
    return {std::move(out), shift};
}

MdpSpec augment_random_costs(const RandomCostSpec& rspec) {
    std::size_t labels = 1;
    for (const auto& per_state : rspec.transitions)
        for (const auto& row : per_state)
            for (const auto& t : row) labels = std::max(labels, t.outcomes.size());

    const int n = rspec.num_states();
    MdpSpec out;
    out.discount = rspec.discount;
    for (int x = 0; x < n; ++x)
        for (std::size_t w = 0; w < labels; ++w)
            out.state_names.push_back(rspec.state_names[static_cast<std::size_t>(x)] + "@" +
                                      std::to_string(w));
    const auto aug = [labels](int x, std::size_t w) {
        return static_cast<int>(static_cast<std::size_t>(x) * labels + w);
    };
    out.action_names.resize(out.state_names.size());
    out.transitions.resize(out.state_names.size());
    out.terminal_cvar.resize(out.state_names.size());
    out.terminal_mean.resize(out.state_names.size());
    for (int x = 0; x < n; ++x) {
        const auto xi = static_cast<std::size_t>(x);
        for (std::size_t w = 0; w < labels; ++w) {
            const auto yi = static_cast<std::size_t>(aug(x, w));
            out.action_names[yi] = rspec.action_names[xi];
            out.terminal_cvar[yi] = rspec.terminal_cvar[xi];
            out.terminal_mean[yi] = rspec.terminal_mean[xi];
            out.transitions[yi].resize(rspec.transitions[xi].size());
            for (std::size_t a = 0; a < rspec.transitions[xi].size(); ++a)
                for (const auto& rt : rspec.transitions[xi][a])
                    for (std::size_t w2 = 0; w2 < rt.outcomes.size(); ++w2)
                        out.transitions[yi][a].push_back(
                            Transition{aug(rt.to, w2), rt.prob * rt.outcomes[w2].prob,
                                       rt.outcomes[w2].cost, rt.mean_cost});
        }
    }
    out.finalize();
    return out;
}

int initial_augmented_state(const MdpSpec& spec, std::string_view name) {
    const int direct = spec.state_index(name);
    if (direct >= 0) return direct;
    return spec.state_index(std::string(name) + "@0");
}

}  // namespace cvar
