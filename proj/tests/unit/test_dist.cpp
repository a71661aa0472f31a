#include <doctest.h>

#include "phlab/dist.hpp"
#include "phlab/rng.hpp"

#include <cmath>
#include <numeric>

using namespace phlab;

TEST_CASE("exponential law matches its closed form") {
    const auto d = ServiceDistribution::exponential(1.0);
    for (double t : {0.0, 0.3, 1.0, 4.5}) {
        CHECK(d.pdf(t) == doctest::Approx(std::exp(-t)).epsilon(1e-12));
        CHECK(d.cdf(t) == doctest::Approx(1.0 - std::exp(-t)).epsilon(1e-12));
        CHECK(d.hazard(t) == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(d.mean() == doctest::Approx(1.0));
    CHECK(d.memoryless());
    CHECK(d.ph_class());
}

TEST_CASE("gamma(2,2) has mean one and hazard tending to the rate") {
    const auto d = ServiceDistribution::gamma(2.0, 2.0);
    CHECK(d.mean() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d.pdf(0.5) == doctest::Approx(4.0 * 0.5 * std::exp(-1.0)).epsilon(1e-12));
    CHECK(d.hazard_limit() == doctest::Approx(2.0).epsilon(2e-2));
}

TEST_CASE("spec parsing accepts known families and rejects malformed ones") {
    CHECK(ServiceDistribution::parse("exp:1").family == Family::exponential);
    CHECK(ServiceDistribution::parse("gamma:2,2").family == Family::gamma);
    for (const char* bad : {"bogus:1", "exp:", "exp:-1", "gamma:2", "exp:1,2,3", "gamma:a,b"})
        CHECK_THROWS_AS(ServiceDistribution::parse(bad), std::invalid_argument);
}

TEST_CASE("sampling reproduces the mean") {
    const auto d = ServiceDistribution::gamma(2.0, 2.0);
    Rng r(1);
    double s = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) s += d.sample(r);
    CHECK(std::abs(s / n - 1.0) < 4.0 * std::sqrt(0.5 / n));
}

TEST_CASE("quadrature weights integrate polynomials") {
    for (auto rule : {QuadratureRule::trapezoid, QuadratureRule::gregory}) {
        const auto w = quadrature_weights(20, rule);
        CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(20.0).epsilon(1e-12));
    }
    // Gregory is exact for cubics.
    const auto w = quadrature_weights(20, QuadratureRule::gregory);
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * std::pow(static_cast<double>(k), 3);
    CHECK(s == doctest::Approx(std::pow(20.0, 4) / 4.0).epsilon(1e-10));
}

TEST_CASE("grid convolution of two unit exponentials gives x e^{-x}") {
    const double h = 0.01;
    std::vector<double> f(1001);
    for (std::size_t k = 0; k < f.size(); ++k) f[k] = std::exp(-h * static_cast<double>(k));
    const auto g = grid_convolve(f, f, h, QuadratureRule::gregory, f.size());
    for (std::size_t k : {100u, 500u, 1000u}) {
        const double x = h * static_cast<double>(k);
        CHECK(g[k] == doctest::Approx(x * std::exp(-x)).epsilon(1e-8));
    }
}

TEST_CASE("renewal density of exp(1) is identically one") {
    const auto r = renewal_density(ServiceDistribution::exponential(1.0), 20.0, 80);
    CHECK(r.tail_ok);
    double worst = 0.0;
    for (std::size_t k = 0; k < r.s.size(); ++k) worst = std::max(worst, std::abs(r.s.v[k] - 1.0));
    CHECK(worst < 1e-6);
}

TEST_CASE("exp(1) satisfies every class condition") {
    const auto rep = verify_class(ServiceDistribution::exponential(1.0));
    CHECK(rep.checks.size() == 6);
    CHECK(rep.all_pass());
}
