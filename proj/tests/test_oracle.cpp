#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cvar/errors.hpp"
#include "cvar/mdp.hpp"
#include "cvar/oracle.hpp"

using cvar::MdpSpec;
using namespace cvar::oracle;

namespace {

MdpSpec parse_plain(const std::string& text) {
    auto parsed = cvar::parse_spec(text);
    REQUIRE(std::holds_alternative<MdpSpec>(parsed));
    return std::get<MdpSpec>(parsed);
}

MdpSpec safe_vs_risky_spec() {
    return parse_plain(R"({
      "states": ["s", "t", "g", "b"],
      "actions": {"s": ["safe", "risky"], "t": ["stay"], "g": ["stay"], "b": ["stay"]},
      "transitions": [
        {"from": "s", "action": "safe", "to": "t", "prob": 1.0, "cvar_cost": 6},
        {"from": "s", "action": "risky", "to": "g", "prob": 0.5, "cvar_cost": 0},
        {"from": "s", "action": "risky", "to": "b", "prob": 0.5, "cvar_cost": 10},
        {"from": "t", "action": "stay", "to": "t", "prob": 1.0, "cvar_cost": 0},
        {"from": "g", "action": "stay", "to": "g", "prob": 1.0, "cvar_cost": 0},
        {"from": "b", "action": "stay", "to": "b", "prob": 1.0, "cvar_cost": 0}
      ]
    })");
}

OutcomeDistribution coin_dist() {
    OutcomeDistribution d;
    d.atoms = {{0.0, 0.5}, {10.0, 0.5}};
    return d;
}

}  // namespace

TEST_CASE("cvar_of_distribution on the fair 0-or-10 coin") {
    OutcomeDistribution d = coin_dist();
    CHECK(cvar_of_distribution(d, 0.25) == doctest::Approx(10.0));
    CHECK(cvar_of_distribution(d, 0.5) == doctest::Approx(10.0));
    CHECK(cvar_of_distribution(d, 0.75) == doctest::Approx(20.0 / 3.0));
    CHECK(cvar_of_distribution(d, 1.0) == doctest::Approx(5.0));
    CHECK(cvar_of_distribution(d, 0.0) == doctest::Approx(10.0));
    CHECK(d.total_prob() == doctest::Approx(1.0));
    CHECK(d.max_outcome() == 10.0);
    CHECK_THROWS_AS(cvar_of_distribution(d, 1.5), std::invalid_argument);
}

TEST_CASE("cvar is non-increasing in alpha and caps the mean") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> cost(-5.0, 15.0);
    for (int trial = 0; trial < 40; ++trial) {
        OutcomeDistribution d;
        int n = 1 + static_cast<int>(rng() % 5);
        std::vector<double> w = dyadic_composition(rng, n, 16);
        for (int i = 0; i < n; ++i) d.atoms.push_back({cost(rng), w[static_cast<std::size_t>(i)]});
        std::sort(d.atoms.begin(), d.atoms.end());
        double prev = cvar_of_distribution(d, 0.0);
        for (int k = 1; k <= 20; ++k) {
            double cur = cvar_of_distribution(d, k / 20.0);
            CHECK(cur <= prev + 1e-12);
            prev = cur;
        }
        CHECK(cvar_of_distribution(d, 1.0) >= d.atoms.front().first - 1e-12);
    }
}

TEST_CASE("alpha times cvar is concave and non-decreasing in alpha") {
    OutcomeDistribution d;
    d.atoms = {{1.0, 0.25}, {4.0, 0.5}, {9.0, 0.25}};
    auto g = [&](double a) { return a * cvar_of_distribution(d, a); };
    for (int k = 1; k < 20; ++k) {
        double a = k / 20.0;
        CHECK(g(a + 0.05) >= g(a) - 1e-12);
        CHECK(g(a) >= 0.5 * (g(a - 0.05) + g(a + 0.05)) - 1e-12);
    }
}

TEST_CASE("enumerate_distribution walks every positive-probability history") {
    MdpSpec spec = parse_plain(R"({
      "states": ["s", "m", "g", "b"],
      "actions": {"s": ["go"], "m": ["flip"], "g": ["stay"], "b": ["stay"]},
      "transitions": [
        {"from": "s", "action": "go", "to": "m", "prob": 1.0, "cvar_cost": 1},
        {"from": "m", "action": "flip", "to": "g", "prob": 0.5, "cvar_cost": 0},
        {"from": "m", "action": "flip", "to": "b", "prob": 0.5, "cvar_cost": 10},
        {"from": "g", "action": "stay", "to": "g", "prob": 1.0, "cvar_cost": 0},
        {"from": "b", "action": "stay", "to": "b", "prob": 1.0, "cvar_cost": 0}
      ]
    })");
    HistoryPolicy pol;
    pol.choice[{0}] = 0;          // s: go
    pol.choice[{0, 0, 1}] = 0;    // s,go,m: flip
    OutcomeDistribution d = enumerate_distribution(spec, pol, 0, 2);
    REQUIRE(d.atoms.size() == 2);
    CHECK(d.atoms[0].first == doctest::Approx(1.0));
    CHECK(d.atoms[0].second == doctest::Approx(0.5));
    CHECK(d.atoms[1].first == doctest::Approx(11.0));
    CHECK(d.atoms[1].second == doctest::Approx(0.5));
    CHECK(d.mean_channel == 0.0);

    SUBCASE("a missing history entry is a logic error") {
        HistoryPolicy incomplete;
        incomplete.choice[{0}] = 0;
        CHECK_THROWS_AS(enumerate_distribution(spec, incomplete, 0, 2), std::logic_error);
    }
    SUBCASE("the path guard trips") {
        CHECK_THROWS_AS(enumerate_distribution(spec, pol, 0, 2, 1), cvar::GuardError);
    }
}

TEST_CASE("enumerate_distribution discounts both channels") {
    MdpSpec spec = parse_plain(R"({
      "states": ["s"],
      "actions": {"s": ["loop"]},
      "discount": 0.5,
      "transitions": [
        {"from": "s", "action": "loop", "to": "s", "prob": 1.0, "cvar_cost": 1, "mean_cost": 2}
      ]
    })");
    HistoryPolicy pol;
    pol.choice[{0}] = 0;
    pol.choice[{0, 0, 0}] = 0;
    OutcomeDistribution d = enumerate_distribution(spec, pol, 0, 2);
    REQUIRE(d.atoms.size() == 1);
    CHECK(d.atoms[0].first == doctest::Approx(1.5));
    CHECK(d.mean_channel == doctest::Approx(3.0));
}

TEST_CASE("objective_of combines the channels per mode") {
    OutcomeDistribution d = coin_dist();
    d.mean_channel = 2.0;
    CHECK(objective_of(d, 0.25, ObjectiveMode::mean_plus_alpha_cvar) == doctest::Approx(4.5));
    CHECK(objective_of(d, 0.25, ObjectiveMode::mean_plus_cvar) == doctest::Approx(12.0));
    OutcomeDistribution silent = coin_dist();
    CHECK(objective_of(silent, 0.25, ObjectiveMode::pure_cvar) == doctest::Approx(10.0));
}

TEST_CASE("count_history_policies multiplies the reachable decision points") {
    CHECK(count_history_policies(safe_vs_risky_spec(), 0, 1) == 2);
    MdpSpec twoact = parse_plain(R"({
      "states": ["s"],
      "actions": {"s": ["a", "b"]},
      "transitions": [
        {"from": "s", "action": "a", "to": "s", "prob": 1.0, "cvar_cost": 0},
        {"from": "s", "action": "b", "to": "s", "prob": 1.0, "cvar_cost": 1}
      ]
    })");
    // decision points: the root plus one per single-step history: 1 + 2 = 3
    CHECK(count_history_policies(twoact, 0, 2) == 8);
    CHECK(count_history_policies(twoact, 0, 3) == 128);
    // the cap reports cap + 1 instead of running away
    CHECK(count_history_policies(twoact, 0, 10, 100) == 101);
}

TEST_CASE("exhaustive search finds the risk-dependent optimum") {
    MdpSpec spec = safe_vs_risky_spec();
    SearchResult averse = exhaustive_policy_search(spec, 0, 0.25, 1, ObjectiveMode::pure_cvar);
    CHECK(averse.value == doctest::Approx(6.0));
    CHECK(averse.policy.action_at({0}) == 0);
    SearchResult neutral = exhaustive_policy_search(spec, 0, 1.0, 1, ObjectiveMode::pure_cvar);
    CHECK(neutral.value == doctest::Approx(5.0));
    CHECK(neutral.policy.action_at({0}) == 1);

    SUBCASE("the multi-level sweep matches the single calls") {
        auto all = exhaustive_policy_search_all(spec, 0, {0.25, 1.0}, 1, ObjectiveMode::pure_cvar);
        REQUIRE(all.size() == 2);
        CHECK(all[0].value == doctest::Approx(6.0));
        CHECK(all[1].value == doctest::Approx(5.0));
    }
    SUBCASE("the policy guard trips") {
        CHECK_THROWS_AS(exhaustive_policy_search(spec, 0, 0.5, 1, ObjectiveMode::pure_cvar, 1),
                        cvar::GuardError);
    }
}

TEST_CASE("random_spec is deterministic and respects its caps") {
    RandomSpecOptions opt;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        MdpSpec a = random_spec(seed, opt);
        MdpSpec b = random_spec(seed, opt);
        CHECK(cvar::serialize_spec(a) == cvar::serialize_spec(b));
        a.validate();
        CHECK(a.num_states() <= opt.max_states);
        CHECK(count_history_policies(a, 0, opt.horizon) <= opt.policy_cap);
        CHECK(a.mean_channel_zero());
    }
    SUBCASE("mean costs appear when requested") {
        RandomSpecOptions with_mean;
        with_mean.with_mean_costs = true;
        bool any = false;
        for (std::uint64_t seed = 1; seed <= 20 && !any; ++seed)
            any = !random_spec(seed, with_mean).mean_channel_zero();
        CHECK(any);
    }
}

TEST_CASE("random_cost_spec expands cleanly") {
    RandomSpecOptions opt;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        cvar::RandomCostSpec rspec = random_cost_spec(seed, opt);
        MdpSpec aug = cvar::augment_random_costs(rspec);
        aug.validate();
        CHECK(cvar::initial_augmented_state(aug, rspec.state_names[0]) >= 0);
    }
}

TEST_CASE("dyadic_composition yields exact dyadic weights") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        int parts = 1 + static_cast<int>(rng() % 4);
        auto w = dyadic_composition(rng, parts, 8);
        CHECK(w.size() == static_cast<std::size_t>(parts));
        double sum = 0;
        for (double v : w) {
            CHECK(v > 0);
            CHECK(std::round(v * 8) == v * 8);  // an exact multiple of 1/8
            sum += v;
        }
        CHECK(sum == 1.0);  // dyadic arithmetic is exact
    }
}
