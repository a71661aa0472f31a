#include <doctest.h>

#include "phlab/dist.hpp"
#include "phlab/queue.hpp"
#include "phlab/rng.hpp"

using namespace phlab;

namespace {

RateFunction two_level(double first, double second) {
    std::vector<double> v(1000);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = k < 500 ? first : second;
    return RateFunction(0.01, v);
}

}  // namespace

TEST_CASE("coupling map is nondecreasing and preserves suffix masses") {
    const auto chi1 = two_level(1.0, 0.2), chi2 = two_level(0.2, 1.0);
    const CouplingMap f(chi1, chi2, 10.0);
    double prev = -1.0;
    for (double x = f.matched_start(); x <= 10.0; x += 0.05) {
        const double y = f(x);
        CHECK(y >= prev - 1e-12);
        CHECK(y >= x - 1e-9);  // arrivals are only delayed
        CHECK(chi2.integral(y, 10.0) == doctest::Approx(chi1.integral(x, 10.0)).epsilon(1e-6));
        prev = y;
    }
}

TEST_CASE("coupled queues stay ordered at the horizon") {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto rep = order_and_couple(two_level(1.0, 0.2), two_level(0.2, 1.0), d, 10.0, 2000, 3, 1);
    CHECK(rep.order.holds);
    CHECK(rep.replicas == 2000);
    CHECK(rep.violations == 0);
    CHECK(rep.mean_n1 <= rep.mean_n2);
}

TEST_CASE("coupling reports, and does not simulate, inputs without suffix domination") {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto rep = order_and_couple(two_level(0.2, 1.0), two_level(1.0, 0.2), d, 10.0, 10, 3, 1);
    CHECK_FALSE(rep.order.holds);
    CHECK(rep.violations == 0);
    CHECK(rep.mean_n2 == 0.0);
}
