#include <doctest.h>

#include "phlab/dist.hpp"
#include "phlab/queue.hpp"
#include "phlab/rng.hpp"

#include <cmath>

using namespace phlab;

TEST_CASE("rate function integrals are exact for piecewise constants") {
    const RateFunction r(0.5, {1.0, 3.0, 2.0});
    CHECK(r.integral(0.0, 1.5) == doctest::Approx(0.5 + 1.5 + 1.0));
    CHECK(r.integral(0.25, 0.75) == doctest::Approx(0.25 + 0.75));
    CHECK(r(0.6) == 3.0);
    CHECK(r.horizon() == 1.5);
    const auto c = RateFunction::constant(0.4, 0.01, 10.0);
    CHECK(c.integral(2.0, 7.0) == doctest::Approx(2.0));
}

TEST_CASE("rate function contract") {
    CHECK_THROWS_AS(RateFunction(0.0, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(RateFunction(0.1, {1.0, -0.5}), std::invalid_argument);
    RateFunction r(0.1, {1.0, 2.0}, 1.5);
    CHECK_THROWS_AS(r.checked_max(), ContractError);
}

TEST_CASE("idle periods of the simulation equal the zero set of the workload") {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto lam = RateFunction::constant(0.8, 0.01, 50.0);
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(s, stream::path, 0);
        const auto tr = simulate_path(ServerConfiguration::idle(), lam, d, 50.0, rng);
        const auto w = workload(tr.arrivals, tr.services, 0.0);
        const auto zs = w.zero_set(50.0);
        REQUIRE(zs.size() == tr.idle_periods.size());
        for (std::size_t i = 0; i < zs.size(); ++i) {
            CHECK(zs[i].first == doctest::Approx(tr.idle_periods[i].first).epsilon(1e-9));
            CHECK(zs[i].second == doctest::Approx(tr.idle_periods[i].second).epsilon(1e-9));
        }
    }
}

TEST_CASE("forced input reproduces a hand-computed FIFO trace") {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto lam = RateFunction::constant(0.0, 0.01, 10.0);
    const ForcedInput in{{1.0, 1.5, 5.0}, {1.0, 1.0, 0.5}};
    Rng rng(1);
    const auto tr = simulate_path(ServerConfiguration::idle(), lam, d, 10.0, rng, &in);
    REQUIRE(tr.departures.size() == 3);
    CHECK(tr.departures[0] == doctest::Approx(2.0));
    CHECK(tr.departures[1] == doctest::Approx(3.0));
    CHECK(tr.departures[2] == doctest::Approx(5.5));
    CHECK(queue_length_at(in.arrivals, in.services, 2.5) == 1);
    CHECK(queue_length_at(in.arrivals, in.services, 1.7) == 2);
    CHECK(queue_length_at(in.arrivals, in.services, 4.0) == 0);
}

TEST_CASE("poisson arrivals have the integrated rate as mean count") {
    const auto lam = RateFunction::from_function([](double t) { return 0.5 * (1.0 + 0.8 * std::sin(t)); }, 0.01, 20.0, 0.9);
    double total = 0.0;
    const int reps = 2000;
    for (int k = 0; k < reps; ++k) {
        Rng rng(4, stream::path, static_cast<std::uint64_t>(k));
        total += static_cast<double>(poisson_arrivals(lam, 0.0, 20.0, rng).size());
    }
    const double mean = lam.integral(0.0, 20.0);
    CHECK(std::abs(total / reps - mean) < 4.0 * std::sqrt(mean / reps));
}

TEST_CASE("suffix order check") {
    std::vector<double> a(1000), b(1000);
    for (std::size_t k = 0; k < 1000; ++k) {
        a[k] = k < 500 ? 1.0 : 0.2;
        b[k] = k < 500 ? 0.2 : 1.0;
    }
    const RateFunction front(0.01, a), late(0.01, b);
    CHECK(check_order(front, late, 10.0).holds);
    const auto rev = check_order(late, front, 10.0);
    CHECK_FALSE(rev.holds);
    CHECK(rev.worst_margin == doctest::Approx(-4.0).epsilon(1e-9));
}
