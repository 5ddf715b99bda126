#include <doctest.h>

#include <json.hpp>

#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cvar/errors.hpp"
#include "cvar/mdp.hpp"
#include "cvar/oracle.hpp"
#include "cvar/solver.hpp"

using cvar::MdpSpec;
using cvar::RiskObjective;
using cvar::SolveOptions;
using cvar::ValueTables;

namespace {

MdpSpec parse_plain(const std::string& text) {
    auto parsed = cvar::parse_spec(text);
    REQUIRE(std::holds_alternative<MdpSpec>(parsed));
    return std::get<MdpSpec>(parsed);
}

MdpSpec coin_spec() {
    return parse_plain(R"({
      "states": ["s", "g", "b"],
      "actions": {"s": ["go"], "g": ["stay"], "b": ["stay"]},
      "transitions": [
        {"from": "s", "action": "go", "to": "g", "prob": 0.5, "cvar_cost": 0},
        {"from": "s", "action": "go", "to": "b", "prob": 0.5, "cvar_cost": 10},
        {"from": "g", "action": "stay", "to": "g", "prob": 1.0, "cvar_cost": 0},
        {"from": "b", "action": "stay", "to": "b", "prob": 1.0, "cvar_cost": 0}
      ]
    })");
}

MdpSpec two_stage_spec() {
    return parse_plain(R"({
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
}

// One safe action with a sure cost of 6 against a fair 0-or-10 gamble: the
// optimal choice flips as the risk level moves from averse to neutral.
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

}  // namespace

TEST_CASE("one-step coin flip: value function, risk profile, boundaries") {
    MdpSpec spec = coin_spec();
    ValueTables tables = cvar::solve_finite(spec, 1);
    REQUIRE(tables.stages.size() == 2);
    CHECK(tables.final_stage() == 1);

    const auto& V = tables.V(1, 0);
    REQUIRE(V.segments().size() == 2);
    CHECK(V.eval(0.0) == 0.0);
    CHECK(V.segments()[0].slope == doctest::Approx(10.0));
    CHECK(V.segments()[0].length == doctest::Approx(0.5));
    CHECK(V.segments()[1].slope == doctest::Approx(0.0));

    CHECK(cvar::cvar_value(tables, 0, 0.25, RiskObjective::pure_cvar) == doctest::Approx(10.0));
    CHECK(cvar::cvar_value(tables, 0, 0.75, RiskObjective::pure_cvar) ==
          doctest::Approx(20.0 / 3.0));
    CHECK(cvar::cvar_value(tables, 0, 1.0, RiskObjective::pure_cvar) == doctest::Approx(5.0));

    CHECK(cvar::worst_path_value(spec, cvar::Horizon::finite(1))[0] == doctest::Approx(10.0));
    CHECK(cvar::risk_neutral_value(spec, cvar::Horizon::finite(1))[0] == doctest::Approx(5.0));

    SUBCASE("terminal stage carries no action values") {
        CHECK_THROWS_AS(tables.Q(0, 0, 0), std::logic_error);
        CHECK(tables.V(0, 0).eval(1.0) == 0.0);
    }
    SUBCASE("alpha zero is not served by the pure objective") {
        CHECK_THROWS_AS(cvar::cvar_value(tables, 0, 0.0, RiskObjective::pure_cvar),
                        std::invalid_argument);
    }
}

TEST_CASE("two-step chain stacks the sure first-step cost onto the gamble") {
    MdpSpec spec = two_stage_spec();
    ValueTables tables = cvar::solve_finite(spec, 2);
    const auto& V = tables.V(2, 0);
    REQUIRE(V.segments().size() == 2);
    CHECK(V.segments()[0].slope == doctest::Approx(11.0));
    CHECK(V.segments()[0].length == doctest::Approx(0.5));
    CHECK(V.segments()[1].slope == doctest::Approx(1.0));
    CHECK(cvar::cvar_value(tables, 0, 0.25, RiskObjective::pure_cvar) == doctest::Approx(11.0));
    CHECK(cvar::cvar_value(tables, 0, 1.0, RiskObjective::pure_cvar) == doctest::Approx(6.0));
    CHECK(cvar::worst_path_value(spec, cvar::Horizon::finite(2))[0] == doctest::Approx(11.0));
}

TEST_CASE("risk aversion flips the optimal action") {
    MdpSpec spec = safe_vs_risky_spec();
    ValueTables tables = cvar::solve_finite(spec, 1);
    CHECK(cvar::cvar_value(tables, 0, 0.25, RiskObjective::pure_cvar) == doctest::Approx(6.0));
    CHECK(cvar::cvar_value(tables, 0, 1.0, RiskObjective::pure_cvar) == doctest::Approx(5.0));

    // the averse side picks the sure thing, the neutral side the gamble
    CHECK(cvar::optimal_action_set(tables, 1, 0, 0.25) == std::vector<int>{0});
    CHECK(cvar::optimal_action_set(tables, 1, 0, 1.0) == std::vector<int>{1});
    // at the crossing both actions are optimal, listed in declaration order
    CHECK(cvar::optimal_action_set(tables, 1, 0, 5.0 / 6.0) == std::vector<int>{0, 1});
}

TEST_CASE("mean-channel objectives") {
    MdpSpec spec = parse_plain(R"({
      "states": ["s", "g", "b"],
      "actions": {"s": ["go"], "g": ["stay"], "b": ["stay"]},
      "transitions": [
        {"from": "s", "action": "go", "to": "g", "prob": 0.5, "cvar_cost": 0, "mean_cost": 2},
        {"from": "s", "action": "go", "to": "b", "prob": 0.5, "cvar_cost": 10, "mean_cost": 2},
        {"from": "g", "action": "stay", "to": "g", "prob": 1.0, "cvar_cost": 0},
        {"from": "b", "action": "stay", "to": "b", "prob": 1.0, "cvar_cost": 0}
      ]
    })");
    ValueTables tables = cvar::solve_finite(spec, 1);
    SUBCASE("mean plus alpha times the tail") {
        CHECK(cvar::cvar_value(tables, 0, 0.25, RiskObjective::mean_plus_alpha_cvar) ==
              doctest::Approx(2.0 + 0.25 * 10.0));
        CHECK(cvar::cvar_value(tables, 0, 1.0, RiskObjective::mean_plus_alpha_cvar) ==
              doctest::Approx(7.0));
        // at alpha 0 only the mean channel remains
        CHECK(cvar::cvar_value(tables, 0, 0.0, RiskObjective::mean_plus_alpha_cvar) ==
              doctest::Approx(2.0));
    }
    SUBCASE("mean plus the full tail, via the rescaled re-solve") {
        CHECK(cvar::cvar_value(tables, 0, 0.25, RiskObjective::mean_plus_cvar) ==
              doctest::Approx(12.0));
        CHECK(cvar::cvar_value(tables, 0, 1.0, RiskObjective::mean_plus_cvar) ==
              doctest::Approx(7.0));
    }
    SUBCASE("the pure objective refuses a live mean channel") {
        CHECK_THROWS_AS(cvar::cvar_value(tables, 0, 0.5, RiskObjective::pure_cvar),
                        std::invalid_argument);
    }
}

TEST_CASE("negative costs are shifted internally and reported unshifted") {
    MdpSpec spec = parse_plain(R"({
      "states": ["s", "t", "u"],
      "actions": {"s": ["go"], "t": ["stay"], "u": ["stay"]},
      "transitions": [
        {"from": "s", "action": "go", "to": "t", "prob": 0.5, "cvar_cost": -2},
        {"from": "s", "action": "go", "to": "u", "prob": 0.5, "cvar_cost": 4},
        {"from": "t", "action": "stay", "to": "t", "prob": 1.0, "cvar_cost": -1},
        {"from": "u", "action": "stay", "to": "u", "prob": 1.0, "cvar_cost": 0}
      ]
    })");
    ValueTables tables = cvar::solve_finite(spec, 2);
    CHECK(tables.shift.cvar_shift == 2.0);
    CHECK(tables.shift.offset_cvar == doctest::Approx(6.0));
    CHECK(tables.spec.nonnegative_costs());
    // the stored hash identifies the model as given, not the shifted one
    CHECK(tables.hash == cvar::spec_hash(spec));
    CHECK(tables.hash != cvar::spec_hash(tables.spec));

    // outcome distribution: -3 or 4 with equal probability
    CHECK(cvar::cvar_value(tables, 0, 1.0, RiskObjective::pure_cvar) == doctest::Approx(0.5));
    CHECK(cvar::cvar_value(tables, 0, 0.25, RiskObjective::pure_cvar) == doctest::Approx(4.0));
    CHECK(cvar::cvar_value(tables, 0, 0.75, RiskObjective::pure_cvar) ==
          doctest::Approx(5.0 / 3.0));
    CHECK(cvar::worst_path_value(spec, cvar::Horizon::finite(2))[0] == doctest::Approx(4.0));

    SUBCASE("exhaustive search sees the same numbers on the raw model") {
        for (double alpha : {0.25, 0.5, 0.75, 1.0}) {
            auto best = cvar::oracle::exhaustive_policy_search(
                spec, 0, alpha, 2, cvar::oracle::ObjectiveMode::pure_cvar);
            CHECK(best.value ==
                  doctest::Approx(cvar::cvar_value(tables, 0, alpha, RiskObjective::pure_cvar))
                      .epsilon(1e-12));
        }
    }
}

TEST_CASE("infinite-horizon fixed point on the discounted self-loop") {
    MdpSpec spec = parse_plain(R"({
      "states": ["s"],
      "actions": {"s": ["loop"]},
      "discount": 0.5,
      "transitions": [{"from": "s", "action": "loop", "to": "s", "prob": 1.0, "cvar_cost": 1}]
    })");
    ValueTables tables = cvar::solve_infinite(spec, 1e-6);
    REQUIRE(tables.stages.size() == 1);
    CHECK(tables.final_stage() == 0);
    REQUIRE(tables.convergence.has_value());
    const auto& conv = *tables.convergence;
    CHECK(conv.error_bound <= 1e-6);
    CHECK(conv.epsilon == 1e-6);
    for (std::size_t k = 1; k < conv.deltas.size(); ++k)
        CHECK(conv.deltas[k] <= 0.5 * conv.deltas[k - 1] + 1e-12);

    // every path pays 1 each step: total 2, independent of the risk level
    for (double alpha : {0.125, 0.5, 1.0})
        CHECK(cvar::cvar_value(tables, 0, alpha, RiskObjective::pure_cvar) ==
              doctest::Approx(2.0).epsilon(1e-5));
    CHECK(cvar::worst_path_value(spec, cvar::Horizon::forever())[0] ==
          doctest::Approx(2.0).epsilon(1e-6));
    CHECK(cvar::risk_neutral_value(spec, cvar::Horizon::forever())[0] ==
          doctest::Approx(2.0).epsilon(1e-6));

    SUBCASE("iteration cap trips the guard") {
        SolveOptions opt;
        opt.max_iterations = 3;
        CHECK_THROWS_AS(cvar::solve_infinite(spec, 1e-9, opt), cvar::GuardError);
    }
    SUBCASE("undiscounted models cannot run forever") {
        MdpSpec und = spec;
        und.discount = 1.0;
        CHECK_THROWS_AS(cvar::solve_infinite(und, 1e-6), cvar::ValidationError);
    }
}

TEST_CASE("solve guards") {
    MdpSpec spec = coin_spec();
    CHECK_THROWS_AS(cvar::solve_finite(spec, 0), cvar::ValidationError);
    SolveOptions tight;
    tight.segment_cap = 1;
    CHECK_THROWS_AS(cvar::solve_finite(spec, 1, tight), cvar::GuardError);
}

TEST_CASE("serialize_tables round trips exactly") {
    MdpSpec spec = two_stage_spec();
    ValueTables tables = cvar::solve_finite(spec, 2);
    std::string text = cvar::serialize_tables(tables);
    ValueTables back = cvar::load_tables(text);
    CHECK(back.hash == tables.hash);
    CHECK(back.horizon.infinite == tables.horizon.infinite);
    CHECK(back.horizon.steps == tables.horizon.steps);
    REQUIRE(back.stages.size() == tables.stages.size());
    for (std::size_t n = 0; n < tables.stages.size(); ++n) {
        for (int x = 0; x < spec.num_states(); ++x) {
            CHECK(cvar::sup_distance(back.stages[n].V[static_cast<std::size_t>(x)],
                                     tables.stages[n].V[static_cast<std::size_t>(x)]) <= 1e-12);
        }
    }
    CHECK(cvar::cvar_value(back, 0, 0.25, RiskObjective::pure_cvar) == doctest::Approx(11.0));

    SUBCASE("unknown format is rejected") {
        auto doc = nlohmann::json::parse(text);
        doc["format"] = "something-else";
        CHECK_THROWS_AS(cvar::load_tables(doc.dump()), cvar::ValidationError);
    }
    SUBCASE("tampered breakpoint values are rejected") {
        auto doc = nlohmann::json::parse(text);
        auto& rows = doc["stages"][2]["V"]["s"];
        rows[1][1] = rows[1][1].get<double>() + 0.5;
        CHECK_THROWS_AS(cvar::load_tables(doc.dump()), cvar::ValidationError);
    }
    SUBCASE("stage count must match the horizon") {
        auto doc = nlohmann::json::parse(text);
        doc["horizon"] = 7;
        CHECK_THROWS_AS(cvar::load_tables(doc.dump()), cvar::ValidationError);
    }
}

TEST_CASE("identical actions are all reported optimal") {
    MdpSpec spec = parse_plain(R"({
      "states": ["s", "t"],
      "actions": {"s": ["a", "b"], "t": ["stay"]},
      "transitions": [
        {"from": "s", "action": "a", "to": "t", "prob": 1.0, "cvar_cost": 3},
        {"from": "s", "action": "b", "to": "t", "prob": 1.0, "cvar_cost": 3},
        {"from": "t", "action": "stay", "to": "t", "prob": 1.0, "cvar_cost": 0}
      ]
    })");
    ValueTables tables = cvar::solve_finite(spec, 1);
    CHECK(cvar::optimal_action_set(tables, 1, 0, 0.5) == std::vector<int>{0, 1});
}
