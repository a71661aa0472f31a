#include <doctest.h>

#include "phlab/dist.hpp"
#include "phlab/queue.hpp"
#include "phlab/relax.hpp"
#include "phlab/rng.hpp"

#include <cmath>
#include <numbers>

using namespace phlab;

namespace {

double bump(double x) { return x > -1.0 ? 2.0 * std::sin(-std::numbers::pi * x) : 0.0; }

double sup_diff(const std::vector<double>& a, const std::vector<double>& b, double scale = 1.0) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - scale * b[i]));
    return m;
}

}  // namespace

TEST_CASE("jacobi iteration is monotone from zero and agrees with gauss-seidel") {
    const auto fam = stationary_family(ServiceDistribution::exponential(1.0));
    const auto init = IterationState::make([](double) { return 1.0; }, 5.0, 20.0);
    const auto jac = iterate_self_averaging(init, fam, 1000, IterationMode::jacobi);
    const auto gs = iterate_self_averaging(init, fam, 1000, IterationMode::gauss_seidel);
    CHECK(jac.monotone);
    CHECK(sup_diff(jac.f, gs.f) < 1e-9);
    CHECK(fixed_point_residual(gs, fam) < 1e-12);
}

TEST_CASE("iteration against the renewal solution and its analytic value") {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto one = [](double) { return 1.0; };
    const auto gs = iterate_self_averaging(IterationState::make(one, 5.0, 20.0), stationary_family(d), 1000,
                                           IterationMode::gauss_seidel);
    const auto rs = renewal_solution(one, 5.0, d, 20.0);
    CHECK(rs.tail_ok);
    // With p = e^{-t} the solution is flat and equals 1 − e^{−5}.
    CHECK(rs.limit == doctest::Approx(1.0 - std::exp(-5.0)).epsilon(1e-6));
    CHECK(std::abs(gs.f.back() - rs.limit) < 1e-5);
}

TEST_CASE("property: the solution is linear in the boundary") {
    const auto fam = uniform_triangular_family(0.1);
    Rng rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        const double a = rng.uniform() * 3.0, w = 1.0 + rng.uniform() * 4.0;
        const auto phi = [a, w](double x) { return a * std::cos(w * x); };
        const auto base = iterate_self_averaging(IterationState::make(phi, 2.0, 15.0), fam, 400,
                                                 IterationMode::gauss_seidel);
        const auto twice = iterate_self_averaging(
            IterationState::make([&](double x) { return 2.0 * phi(x); }, 2.0, 15.0), fam, 400,
            IterationMode::gauss_seidel);
        CHECK(sup_diff(twice.f, base.f, 2.0) < 1e-9 * (1.0 + a));
    }
    const auto zero = iterate_self_averaging(IterationState::make([](double) { return 0.0; }, 2.0, 15.0), fam, 50);
    CHECK(sup_diff(zero.f, std::vector<double>(zero.f.size(), 0.0)) == 0.0);
}

TEST_CASE("finite-range verdicts") {
    const auto init = IterationState::make(bump, 2.0, 60.0);
    const auto u = finite_range_check(init, uniform_family(), 1e-4, 50.0);
    CHECK(u.verdict == Verdict::relaxes);
    CHECK(u.final_osc < 1e-4);
    CHECK(finite_range_check(init, gapped_family(), 1e-4, 50.0).verdict == Verdict::withheld);
    const auto sh = check_finite_range(shifted_family(1), 10.0);
    CHECK_FALSE(sh.all());
    CHECK(check_finite_range(uniform_triangular_family(0.1), 10.0).all());
}

TEST_CASE("family parsing") {
    CHECK(parse_family("uniform").kind == FamilyKind::generic);
    CHECK(parse_family("shift:2").shift == 2);
    CHECK(parse_family("trap:5").kind == FamilyKind::dyadic_trap);
    CHECK(parse_family("lomax:3.5,2.5").beta == doctest::Approx(2.0));
    for (const char* bad : {"nope", "shift:", "lomax:1", "gapped:0.6,0.4"})
        CHECK_THROWS_AS(parse_family(bad), std::invalid_argument);
}

TEST_CASE("shifted walkers stay localized and keep parity") {
    const auto one = localize_shifted(shifted_family(1), 0.37, 20000, 1);
    CHECK(one.violations == 0);
    const auto two = localize_shifted(shifted_family(2), 0.37, 20000, 1);
    CHECK(two.violations == 0);
    CHECK(two.parity_preserved);
}

TEST_CASE("absorption estimates") {
    WalkerSpec trap{dyadic_trap_family(5.0), 50.0, 5.0};
    const auto t = walker_and_absorption(trap, 200, 3);
    CHECK(t.visits == 0);
    CHECK(t.undecided == 0);
    WalkerSpec ex{exponential_family(1.0), 50.0, 20.0};
    const auto e = walker_and_absorption(ex, 2000, 3);
    CHECK(e.gamma.p >= 0.99);
    CHECK(e.gamma.p >= e.gamma_bound);
    WalkerSpec bad{uniform_triangular_family(0.1), 0.0, 5.0};
    CHECK_THROWS_AS(walker_and_absorption(bad, 10, 3), std::invalid_argument);
    auto light_moment = uniform_family();
    light_moment.beta = 0.9;
    WalkerSpec heavy{light_moment, 10.0, 5.0};
    CHECK_THROWS_AS(walker_and_absorption(heavy, 10, 3), PreconditionError);
}

TEST_CASE("walker results do not depend on the thread count") {
    WalkerSpec w{lomax_family(3.5, 2.5), 30.0, 10.0};
    const auto a = walker_and_absorption(w, 3000, 9, 1);
    const auto b = walker_and_absorption(w, 3000, 9, 3);
    CHECK(a.visits == b.visits);
    CHECK(a.total_steps == b.total_steps);
}

TEST_CASE("segment lemma: constant rate returns the whole interval") {
    const auto chi = RateFunction::constant(1.0, 0.05, 11.0);
    const auto r = calcul_segment(chi, 0.0, 10.0, 0.2, 1.0);
    CHECK(r.segment.a == 0.0);
    CHECK(r.segment.b == doctest::Approx(10.0));
    CHECK(r.length_ok);
    CHECK(r.domination_ok);
}

TEST_CASE("property: segment lemma invariants on random rates") {
    int made = 0;
    for (std::uint64_t i = 0; made < 60; ++i) {
        Rng rng(31, stream::instances, i);
        const double h = 0.05;
        const double A = 3.0 * rng.uniform(), B = A + 1.0 + 10.0 * rng.uniform();
        const double L = 1.0 + 2.0 * rng.uniform();
        std::vector<double> v(static_cast<std::size_t>(std::ceil(B / h)) + 1);
        for (auto& x : v) x = rng.uniform() < 0.3 ? 0.0 : L * rng.uniform();
        const RateFunction chi(h, v);
        const double eps_lo = std::max(0.01, 1.0 - chi.integral(A, B) / (B - A));
        if (eps_lo >= 0.49) continue;
        ++made;
        const double eps = eps_lo + (0.49 - eps_lo) * rng.uniform();
        const auto r = calcul_segment(chi, A, B, eps, L);
        CHECK(r.segment.a == A);
        CHECK(r.segment.b <= B + 1e-12);
        CHECK(r.length_ok);
        CHECK(r.domination_ok);
        // Suffix domination checked independently at a few interior points.
        for (int k = 1; k < 10; ++k) {
            const double s = r.segment.a + (r.segment.b - r.segment.a) * k / 10.0;
            CHECK(chi.integral(s, r.segment.b) >= (1.0 - 2.0 * eps) * (r.segment.b - s) - 1e-9);
        }
    }
}
