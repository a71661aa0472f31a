#include <doctest.h>

#include "phlab/dist.hpp"
#include "phlab/master.hpp"
#include "phlab/queue.hpp"

#include <cmath>

using namespace phlab;

TEST_CASE("M/M/1 stationary state at load one half") {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto nu = stationary_state(0.5, d);
    const auto ob = observables(nu, d);
    CHECK(std::abs(ob.idle - 0.5) < 1e-3);
    CHECK(std::abs(ob.N - 1.0) < 1e-2);
    const auto q = nu.queue_marginal();
    for (int n = 0; n <= 5; ++n) CHECK(std::abs(q[static_cast<std::size_t>(n)] - std::pow(0.5, n + 1)) < 2e-3);
}

TEST_CASE("evolution conserves mass and output rate approaches the input rate") {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto tr = evolve_master(StateDistribution::idle_state(d), RateFunction::constant(0.5, 0.01, 100.0), d, 100.0);
    CHECK(tr.max_mass_drift < 1e-9);
    CHECK(std::abs(tr.final_state.total() - 1.0) < 1e-9);
    double b = 0.0;
    for (std::size_t k = tr.b.size() - 100; k < tr.b.size(); ++k) b += tr.b[k];
    CHECK(std::abs(b / 100.0 - 0.5) < 2e-3);
    for (double v : tr.b) CHECK(v <= d.hazard_cap + 1e-9);
}

TEST_CASE("flow identity: arrivals minus departures equals the change in N") {
    const auto d = ServiceDistribution::gamma(2.0, 2.0);
    const auto lam = RateFunction::constant(0.6, 0.01, 10.0);
    const auto mu0 = StateDistribution::point_mass(d, 2, 0.5);
    const auto tr = evolve_master(mu0, lam, d, 10.0);
    double dep = 0.0;
    for (double v : tr.b) dep += v * tr.h;
    CHECK(std::abs((0.6 * 10.0 - dep) - (tr.N.back() - mu0.mean_queue())) < 1e-3);
}

TEST_CASE("point mass and idle state") {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto p = StateDistribution::point_mass(d, 3, 0.0);
    CHECK(p.idle == 0.0);
    CHECK(p.total() == doctest::Approx(1.0));
    CHECK(p.mean_queue() == doctest::Approx(3.0));
    const auto i = StateDistribution::idle_state(d);
    CHECK(i.idle == 1.0);
    CHECK(i.mean_queue() == 0.0);
    CHECK(total_variation(p, p) == 0.0);
    CHECK(total_variation(p, i) == doctest::Approx(1.0));
}
