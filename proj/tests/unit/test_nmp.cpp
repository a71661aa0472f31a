#include <doctest.h>

#include "phlab/dist.hpp"
#include "phlab/master.hpp"
#include "phlab/nmp.hpp"

#include <cmath>

using namespace phlab;

TEST_CASE("load one corresponds to input rate one half for exp(1)") {
    CHECK(std::abs(load_to_rate(1.0, ServiceDistribution::exponential(1.0)) - 0.5) < 2e-3);
    CHECK(load_to_rate(0.0, ServiceDistribution::exponential(1.0)) == 0.0);
    CHECK_THROWS_AS(load_to_rate(-1.0, ServiceDistribution::exponential(1.0)), std::invalid_argument);
}

TEST_CASE("the stationary state is a fixed point with constant rate") {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto nu = stationary_state(0.5, d);
    FixedPointConfig cfg;
    cfg.horizon = 20.0;
    const auto sol = solve_fixed_point(nu, d, cfg);
    CHECK(sol.converged);
    double dev = 0.0;
    for (double v : sol.lam.values()) dev = std::max(dev, std::abs(v - 0.5));
    CHECK(dev < 1e-4);
}

TEST_CASE("a perturbed start conserves the mean queue length") {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto mu = StateDistribution::point_mass(d, 1, 0.0);
    FixedPointConfig cfg;
    cfg.horizon = 40.0;
    const auto sol = solve_fixed_point(mu, d, cfg);
    CHECK(sol.converged);
    const auto dr = conservation_check(sol, mu, d);
    CHECK(dr.pass);
    CHECK(sol.residual <= cfg.tolerance * 10.0);
}
