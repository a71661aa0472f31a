#include <doctest.h>

#include "phlab/dist.hpp"
#include "phlab/meanfield.hpp"

using namespace phlab;

TEST_CASE("network conserves customers and is reproducible") {
    const auto d = ServiceDistribution::exponential(1.0);
    NetworkConfig cfg;
    cfg.M = 20;
    cfg.N = 30;
    cfg.horizon = 50.0;
    cfg.audit = true;
    const auto a = simulate_network(cfg, d, 5);
    CHECK(a.conserved);
    CHECK(a.final_state.customers() == 30);
    const auto b = simulate_network(cfg, d, 5);
    CHECK(a.events == b.events);
    CHECK(a.checkpoints == b.checkpoints);
}

TEST_CASE("symmetrized atoms carry the mean load") {
    const auto d = ServiceDistribution::exponential(1.0);
    NetworkConfig cfg;
    cfg.M = 10;
    cfg.N = 25;
    cfg.horizon = 10.0;
    const auto run = simulate_network(cfg, d, 2);
    CHECK(atom_mean(symmetrize(run.final_state)) == doctest::Approx(2.5));
}

TEST_CASE("placement names") {
    CHECK(parse_placement("round-robin") == Placement::round_robin);
    CHECK(parse_placement("stationary") == Placement::stationary);
    CHECK_THROWS_AS(parse_placement("everywhere"), std::invalid_argument);
}

TEST_CASE("all-at-one placement starts with every customer on server 0") {
    const auto d = ServiceDistribution::exponential(1.0);
    NetworkConfig cfg;
    cfg.M = 5;
    cfg.N = 7;
    cfg.horizon = 1.0;
    cfg.placement = Placement::all_at_one;
    const auto run = simulate_network(cfg, d, 1);
    REQUIRE(!run.checkpoints.empty());
    CHECK(run.checkpoints.front()[0] == 7);
}
