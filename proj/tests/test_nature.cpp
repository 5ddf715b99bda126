#include <doctest.h>

#include <random>
#include <stdexcept>
#include <vector>

#include "cvar/errors.hpp"
#include "cvar/nature.hpp"
#include "cvar/oracle.hpp"
#include "cvar/pwl.hpp"
#include "cvar/verification.hpp"

using cvar::PwlConcave;
using cvar::TransferInstance;

namespace {

// Two equally likely successors, one free and one costing 10: the canonical
// coin-flip response problem.
TransferInstance coin_instance() {
    TransferInstance inst;
    inst.probs = {0.5, 0.5};
    inst.funcs = {PwlConcave::affine(0.0, 0.0, 1.0), PwlConcave::affine(0.0, 10.0, 1.0)};
    inst.labels = {1, 2};
    return inst;
}

}  // namespace

TEST_CASE("scaled_sources compresses each successor into its probability slot") {
    TransferInstance inst = coin_instance();
    auto scaled = cvar::scaled_sources(inst);
    REQUIRE(scaled.size() == 2);
    CHECK(scaled[0].domain_length() == doctest::Approx(0.5));
    CHECK(scaled[1].domain_length() == doctest::Approx(0.5));
    CHECK(scaled[1].eval(0.3) == doctest::Approx(0.5 * inst.funcs[1].eval(0.6)));
}

TEST_CASE("transfer_value is the merged envelope over the full budget") {
    TransferInstance inst = coin_instance();
    PwlConcave F = cvar::transfer_value(inst);
    CHECK(F.domain_length() == doctest::Approx(1.0));
    CHECK(F.eval(0.0) == 0.0);
    CHECK(F.eval(0.3) == doctest::Approx(3.0));
    CHECK(F.eval(0.5) == doctest::Approx(5.0));
    CHECK(F.eval(1.0) == doctest::Approx(5.0));
    CHECK(F.right_deriv(0.0) == doctest::Approx(10.0));
}

TEST_CASE("optimal_allocation fills the steepest source first") {
    TransferInstance inst = coin_instance();
    SUBCASE("partial budget routes to the costly successor") {
        auto alloc = cvar::optimal_allocation(inst, 0.3);
        CHECK(alloc.y == 0.3);
        CHECK(alloc.z[0] == doctest::Approx(0.0));
        CHECK(alloc.z[1] == doctest::Approx(0.3));
        CHECK(alloc.b[0] == doctest::Approx(0.0));
        // b = z / (y * p) = 0.3 / (0.3 * 0.5)
        CHECK(alloc.b[1] == doctest::Approx(2.0));
        CHECK(alloc.value == doctest::Approx(3.0));
    }
    SUBCASE("full budget recovers the undistorted distribution") {
        auto alloc = cvar::optimal_allocation(inst, 1.0);
        CHECK(alloc.z[0] == doctest::Approx(0.5));
        CHECK(alloc.z[1] == doctest::Approx(0.5));
        CHECK(alloc.b[0] == doctest::Approx(1.0));
        CHECK(alloc.b[1] == doctest::Approx(1.0));
        CHECK(alloc.value == doctest::Approx(5.0));
    }
    SUBCASE("zero budget keeps b at one and sums the intercepts") {
        auto alloc = cvar::optimal_allocation(inst, 0.0);
        CHECK(alloc.z[0] == 0.0);
        CHECK(alloc.z[1] == 0.0);
        CHECK(alloc.b[0] == 1.0);
        CHECK(alloc.b[1] == 1.0);
        CHECK(alloc.value == doctest::Approx(0.0));
    }
    SUBCASE("equal slopes break ties in declared order") {
        TransferInstance tie;
        tie.probs = {0.5, 0.5};
        tie.funcs = {PwlConcave::affine(0.0, 2.0, 1.0), PwlConcave::affine(0.0, 2.0, 1.0)};
        tie.labels = {0, 1};
        auto alloc = cvar::optimal_allocation(tie, 0.3);
        CHECK(alloc.z[0] == doctest::Approx(0.3));
        CHECK(alloc.z[1] == doctest::Approx(0.0));
    }
}

TEST_CASE("allocation value always matches the merged envelope") {
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> budget(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        TransferInstance inst = cvar::verify::random_transfer_instance(1000 + i);
        PwlConcave F = cvar::transfer_value(inst);
        double y = budget(rng);
        auto alloc = cvar::optimal_allocation(inst, y);
        CHECK(alloc.value == doctest::Approx(F.eval(y)).epsilon(1e-12));
        double sum = 0;
        for (int j = 0; j < inst.size(); ++j) {
            CHECK(alloc.z[j] >= -1e-15);
            CHECK(alloc.z[j] <= inst.probs[j] + 1e-15);
            sum += alloc.z[j];
        }
        CHECK(sum == doctest::Approx(y).epsilon(1e-12));
    }
}

TEST_CASE("derivative identities hold at breakpoints and random budgets") {
    auto r = cvar::verify::check_transfer_derivatives(15, 15, 333);
    INFO(r.detail);
    CHECK(r.pass);
    CHECK(r.cases > 0);
}

TEST_CASE("grid search lower-bounds the exact envelope") {
    TransferInstance inst = coin_instance();
    SUBCASE("interior budget") {
        double grid = cvar::oracle::grid_best_response(inst, 0.3, 1e-3);
        CHECK(grid <= 3.0 + 1e-12);
        CHECK(3.0 - grid < 1e-2);
    }
    SUBCASE("full budget is exact on the grid") {
        double grid = cvar::oracle::grid_best_response(inst, 1.0, 1e-3);
        CHECK(grid == doctest::Approx(5.0).epsilon(1e-9));
    }
    SUBCASE("a too-fine grid trips the guard") {
        TransferInstance wide;
        wide.probs = {0.25, 0.25, 0.25, 0.25};
        for (int i = 0; i < 4; ++i) wide.funcs.push_back(PwlConcave::affine(0.0, i + 1.0, 1.0));
        wide.labels = {0, 1, 2, 3};
        CHECK_THROWS_AS(cvar::oracle::grid_best_response(wide, 0.9, 1e-7), cvar::GuardError);
    }
}

TEST_CASE("allocations are monotone in the budget") {
    for (int i = 0; i < 20; ++i) {
        TransferInstance inst = cvar::verify::random_transfer_instance(5000 + i);
        std::vector<double> prev(static_cast<std::size_t>(inst.size()), 0.0);
        for (int k = 0; k <= 16; ++k) {
            auto alloc = cvar::optimal_allocation(inst, k / 16.0);
            for (int j = 0; j < inst.size(); ++j) {
                CHECK(alloc.z[j] >= prev[static_cast<std::size_t>(j)] - 1e-15);
                prev[static_cast<std::size_t>(j)] = alloc.z[j];
            }
        }
    }
}

TEST_CASE("instance validation rejects malformed inputs") {
    TransferInstance bad = coin_instance();
    bad.probs = {0.5, 0.6};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    TransferInstance zero = coin_instance();
    zero.probs = {1.0, 0.0};
    CHECK_THROWS_AS(zero.validate(), std::invalid_argument);
}
