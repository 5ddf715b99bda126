#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace cvar {

struct Transition {
    int to;
    double prob;
    double cvar_cost;  // cost entering the tail-risk objective
    double mean_cost;  // cost entering the plain expectation channel
};

// Finite MDP with two cost channels, dense 0-based state and action indices,
// declaration order preserved. Zero-probability edges are never stored.
struct MdpSpec {
    std::vector<std::string> state_names;
    std::vector<std::vector<std::string>> action_names;            // [state]
    std::vector<std::vector<std::vector<Transition>>> transitions; // [state][action]
    std::vector<double> terminal_cvar;
    std::vector<double> terminal_mean;
    double discount = 1.0;

    int num_states() const { return static_cast<int>(state_names.size()); }
    int num_actions(int x) const { return static_cast<int>(action_names[x].size()); }
    int state_index(std::string_view name) const;      // -1 when absent
    int action_index(int x, std::string_view name) const;
    bool mean_channel_zero() const;
    bool nonnegative_costs() const;
    double max_stage_cost() const;  // max over edges of cvar_cost + mean_cost

    // Drops zero-probability edges and renormalizes probability rows that are
    // within the acceptance tolerance of 1; throws ValidationError otherwise.
    void finalize();
    void validate() const;
};

struct CostOutcome {
    double cost;
    double prob;
};

// Variant where the tail-risk cost of an edge is random with finitely many
// outcomes per (state, action, successor).
struct RandomTransition {
    int to;
    double prob;
    std::vector<CostOutcome> outcomes;
    double mean_cost;
};

struct RandomCostSpec {
    std::vector<std::string> state_names;
    std::vector<std::vector<std::string>> action_names;
    std::vector<std::vector<std::vector<RandomTransition>>> transitions;
    std::vector<double> terminal_cvar;
    std::vector<double> terminal_mean;
    double discount = 1.0;

    int num_states() const { return static_cast<int>(state_names.size()); }
    int state_index(std::string_view name) const;
    void finalize();
};

using ParsedSpec = std::variant<MdpSpec, RandomCostSpec>;

// JSON document with keys: states, actions, discount, transitions,
// terminal_cvar_cost, terminal_mean_cost. A transition carries either
// cvar_cost or an outcomes list; any outcomes list selects the random-cost
// variant for the whole document.
ParsedSpec parse_spec(const std::string& json_text);
ParsedSpec parse_spec_file(const std::string& path);

std::string serialize_spec(const MdpSpec& spec);  // canonical document
std::string spec_hash(const MdpSpec& spec);       // stable content hash

struct Horizon {
    bool infinite = false;
    int steps = 0;

    static Horizon finite(int n) { return Horizon{false, n}; }
    static Horizon forever() { return Horizon{true, 0}; }
};

// Per-channel constant added to make all costs non-negative, with the exact
// offset it adds to the objective at the given horizon.
struct CostShift {
    double cvar_shift = 0;
    double mean_shift = 0;
    double offset_cvar = 0;
    double offset_mean = 0;
};

// Shifts each channel by K = max(0, -min cost of the channel), terminal
// values included, so the realized discounted total moves by the exact
// constant K * sum_{t=0..N} beta^t (K / (1 - beta) for the infinite horizon).
std::pair<MdpSpec, CostShift> shift_costs(const MdpSpec& spec, const Horizon& horizon);

// Product-space expansion of random edge costs: states become pairs
// (state, outcome label) named "x@w"; the label only records which cost was
// drawn on the incoming edge, so values never depend on it. Label 0 is the
// designated initial label.
MdpSpec augment_random_costs(const RandomCostSpec& spec);

// Index of "name@0" (or of name itself for specs without labels); -1 if absent.
int initial_augmented_state(const MdpSpec& spec, std::string_view name);

}  // namespace cvar
