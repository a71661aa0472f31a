#include <doctest.h>

#include "phlab/rng.hpp"
#include "phlab/stats.hpp"

#include <cmath>
#include <set>

using namespace phlab;

TEST_CASE("streams are reproducible and distinct") {
    Rng a(42, stream::sample, 3), b(42, stream::sample, 3), c(42, stream::sample, 4), d(42, stream::path, 3);
    std::set<std::uint64_t> firsts;
    for (int i = 0; i < 100; ++i) {
        const auto x = a();
        CHECK(x == b());
        firsts.insert(x);
    }
    CHECK(c() != Rng(42, stream::sample, 3)());
    CHECK(d() != Rng(42, stream::sample, 3)());
    CHECK(firsts.size() == 100);
}

TEST_CASE("uniform lies in the open unit interval with mean one half") {
    Rng r(7);
    double s = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        s += u;
    }
    CHECK(std::abs(s / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST_CASE("exponential and poisson means") {
    Rng r(11);
    const int n = 200000;
    double se = 0.0, sp = 0.0;
    for (int i = 0; i < n; ++i) {
        se += r.exponential(2.0);
        sp += static_cast<double>(r.poisson(3.5));
    }
    CHECK(std::abs(se / n - 0.5) < 4.0 * 0.5 / std::sqrt(n));
    CHECK(std::abs(sp / n - 3.5) < 4.0 * std::sqrt(3.5 / n));
}

TEST_CASE("below stays in range and covers it") {
    Rng r(5);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        const auto k = r.below(7);
        REQUIRE(k < 7);
        seen.insert(k);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("wilson interval brackets the estimate") {
    const auto p = wilson(0, 100);
    CHECK(p.p == 0.0);
    CHECK(p.lo == 0.0);
    CHECK(p.hi > 0.0);
    CHECK(p.hi < 0.05);
    const auto q = wilson(50, 100);
    CHECK(q.lo < 0.5);
    CHECK(q.hi > 0.5);
}

TEST_CASE("parallel_for result does not depend on thread count") {
    std::vector<double> a(1000), b(1000);
    auto fill = [](std::vector<double>& v) {
        return [&v](std::size_t i) {
            Rng r(9, stream::sample, i);
            v[i] = r.uniform();
        };
    };
    parallel_for(a.size(), 1, fill(a));
    parallel_for(b.size(), 4, fill(b));
    CHECK(a == b);
}
