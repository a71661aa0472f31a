#include <doctest.h>

#include "phlab/dist.hpp"
#include "phlab/kernel.hpp"
#include "phlab/master.hpp"

#include <boost/math/distributions/poisson.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>

using namespace phlab;

namespace {

// Initial work of three unit-exponential customers plus compound Poisson
// arrivals at rate 0.4: the work offered before x exceeds x with probability
// Σ_m Pois(m; 0.4x) Q(3 + m, x).
double epsilon_oracle(double x) {
    const boost::math::poisson_distribution<> pois(0.4 * x);
    double s = 0.0;
    for (int m = 0; m < 400; ++m) s += boost::math::pdf(pois, m) * boost::math::gamma_q(3.0 + m, x);
    return s;
}

}  // namespace

TEST_CASE("noise probability matches the compound-Poisson oracle") {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto mu = StateDistribution::point_mass(d, 3, 0.0);
    const auto lam = RateFunction::constant(0.4, 0.01, 20.0);
    const auto rows = epsilon_noise(mu, lam, d, {2.0, 5.0, 10.0}, 40000, 8, 1);
    for (const auto& r : rows) {
        INFO("x = " << r.x);
        CHECK(std::abs(r.eps - epsilon_oracle(r.x)) < 4.0 * r.se);
    }
    CHECK(rows[0].eps > rows[1].eps);
    CHECK(rows[1].eps > rows[2].eps);
}

TEST_CASE("self-averaging identity at a single point") {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto lam =
        RateFunction::from_function([](double t) { return 0.5 * (1.0 + 0.8 * std::sin(t)); }, 0.01, 21.0, 1.0);
    const auto rows = verify_self_averaging(lam, d, {20.0}, 100000, 2);
    REQUIRE(rows.size() == 1);
    CHECK(std::abs(rows[0].z) <= 4.0);
    CHECK(rows[0].mass <= 1.0 + 3.0 * rows[0].mass_se);
}

TEST_CASE("zero input rate leaves nothing to estimate") {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto k = estimate_kernel(RateFunction::constant(0.0, 0.01, 11.0), d, 10.0, 1000, 1);
    CHECK(k.kernel.no_data);
}

TEST_CASE("windowed rate margin of a constant rate") {
    CHECK(windowed_rate_margin(RateFunction::constant(0.4, 0.01, 50.0), 5.0) == doctest::Approx(0.6));
}
