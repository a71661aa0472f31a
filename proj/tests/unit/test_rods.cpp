#include <doctest.h>

#include "phlab/rng.hpp"
#include "phlab/rods.hpp"

#include <cmath>

using namespace phlab;
using namespace phlab::rods;

TEST_CASE("two-rod worked example") {
    const auto r = total_counts<double>({-3.0}, {1.0, 10.0});
    REQUIRE(r.per_permutation.size() == 2);
    CHECK(r.per_permutation[0].bruteforce == 2);
    CHECK(r.per_permutation[1].bruteforce == 0);
    CHECK(r.total == 2);
    CHECK(r.methods_agree);
    CHECK(r.factorial == 2);
}

TEST_CASE("the same instance counts identically in exact arithmetic") {
    const auto d = total_counts<double>({-3.0}, {1.0, 10.0});
    const auto q = total_counts<Rational>({Rational(-3)}, {Rational(1), Rational(10)});
    CHECK(q.total == d.total);
}

TEST_CASE("plain sweeps always total n!") {
    for (int n = 2; n <= 5; ++n) {
        const auto rows = sweep(SweepKind::plain, n, 40, 17, 1);
        for (const auto& r : rows) {
            CHECK(r.agree);
            CHECK(r.equals_factorial);
        }
    }
}

TEST_CASE("anchored identity holds under the constraint and can fail without it") {
    for (const auto& r : sweep(SweepKind::anchored, 4, 40, 5, 1)) {
        CHECK(r.constraint_ok);
        CHECK(r.equals_factorial);
    }
    std::size_t differ = 0;
    for (const auto& r : sweep(SweepKind::anchored_violating, 4, 40, 5, 1)) {
        CHECK_FALSE(r.constraint_ok);
        differ += !r.equals_factorial;
    }
    CHECK(differ > 0);
}

TEST_CASE("sweeps do not depend on the thread count") {
    const auto a = sweep(SweepKind::plain, 4, 30, 99, 1);
    const auto b = sweep(SweepKind::plain, 4, 30, 99, 3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].total == b[i].total);
}

TEST_CASE("resolved clusters match independent interval merging") {
    Rng rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        RodPlacement<double> p;
        const int n = 2 + static_cast<int>(rng.below(6));
        for (int i = 0; i < n; ++i) {
            p.x.push_back(-20.0 * rng.uniform());
            p.l.push_back(0.1 + 5.0 * rng.uniform());
        }
        const auto r = resolve(p);
        REQUIRE(cluster_identity_holds(r));
        const auto bodies = merged_bodies(p);
        REQUIRE(bodies.size() == r.clusters.size());
        for (std::size_t c = 0; c < bodies.size(); ++c) {
            CHECK(r.body_begin(r.clusters[c]) == doctest::Approx(bodies[c].first));
            CHECK(r.body_end(r.clusters[c]) == doctest::Approx(bodies[c].second));
        }
    }
}

TEST_CASE("input validation") {
    CHECK_THROWS_AS(total_counts<double>({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(total_counts<double>({-1.0, -2.0}, {1.0, 2.0}), std::invalid_argument);
    const std::vector<double> nine(9, 1.0), eight_points(8, -1.0);
    CHECK_THROWS_AS(total_counts<double>(eight_points, nine), BudgetError);
}
