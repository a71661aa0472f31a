#pragma once

#include "phlab/dist.hpp"
#include "phlab/master.hpp"
#include "phlab/stats.hpp"

#include <cstdint>
#include <deque>
#include <vector>

namespace phlab {

enum class Placement {
    round_robin,  ///< customer k joins server k mod M
    all_at_one,   ///< every customer starts at server 0
    stationary,   ///< queue lengths drawn from ν_c's marginal, then trimmed to N
};

Placement parse_placement(const std::string& s);

/// Closed network: per-server FIFO queues of customer ids, plus the start time
/// of the service in progress. τ_i = clock − service_start_i.
struct NetworkState {
    double clock = 0.0;
    std::vector<std::deque<int>> queues;
    std::vector<double> service_start;

    std::size_t servers() const { return queues.size(); }
    int customers() const;
    double tau(std::size_t i) const { return queues[i].empty() ? 0.0 : clock - service_start[i]; }
};

/// Arrivals to and departures from one server, with customer ids so FIFO order
/// can be audited.
struct TaggedFlow {
    int server = 0;
    std::vector<double> arrivals;
    std::vector<double> departures;
    std::vector<int> initial_ids;
    std::vector<int> arrival_ids;
    std::vector<int> departure_ids;
};

struct NetworkConfig {
    int M = 1;
    int N = 0;
    double horizon = 300.0;
    double checkpoint_every = 1.0;
    int tagged = 10;               ///< servers 0..tagged−1 record their flows
    Placement placement = Placement::round_robin;
    bool record_log = false;       ///< keep every (time, from, to) event
    bool audit = false;            ///< recount Σ n_i after every event
};

struct NetworkEvent {
    double t;
    int from;
    int to;
};

struct NetworkRun {
    NetworkConfig config;
    std::vector<TaggedFlow> flows;
    std::vector<double> checkpoint_times;
    std::vector<std::vector<int>> checkpoints;  ///< queue lengths of all servers
    std::vector<NetworkEvent> log;
    NetworkState final_state;
    std::uint64_t events = 0;
    bool conserved = true;                      ///< Σ n_i = N at every check
};

/// Event-driven simulation; each completion routes the customer to a uniform
/// server (itself included). `nu` is required by the stationary placement.
NetworkRun simulate_network(const NetworkConfig& cfg, const ServiceDistribution& d, std::uint64_t seed,
                            const StateDistribution* nu = nullptr);

struct FlowReport {
    std::size_t interarrivals = 0;
    KsResult ks;
    std::vector<double> acf;     ///< lags 1..10, per flow then pooled by weight
    double acf_band = 0.0;       ///< 1.96/√n
    bool acf_within_band = false;
    bool small_M = false;        ///< M < 100: deviations from Poisson are expected
    bool rate_plateaued = true;  ///< arrival rate in the two halves after burn-in agrees within 3 se
};

/// Pooled interarrival tests over the tagged flows. Throws
/// std::invalid_argument with fewer than 500 post-burn-in arrivals.
FlowReport tagged_flow_tests(const std::vector<TaggedFlow>& flows, double burn_in, int M, std::uint64_t seed,
                             int bootstrap_draws = 199);

struct CorrelationEstimate {
    double rho = 0.0;
    double se = 0.0;     ///< block bootstrap over checkpoint blocks
    std::size_t pairs = 0;
    std::size_t points = 0;
};

/// Pearson correlation of (n_i, n_j) over checkpoints after burn-in.
CorrelationEstimate pair_correlation(const NetworkRun& run, int i, int j, double burn_in, std::uint64_t seed);
/// Same, pooling the disjoint pairs (0,1), (2,3), … with `pairs` pairs (0 = all).
CorrelationEstimate pooled_pair_correlation(const NetworkRun& run, double burn_in, std::uint64_t seed,
                                            int pairs = 0);

struct FixedPointComparison {
    double tv = 0.0;
    double mean_queue = 0.0;
    double rho = 0.0;                   ///< N/M
    double c = 0.0;
    std::vector<double> empirical;      ///< [P(0), P(1), …]
    std::vector<double> reference;
    bool limit_regime = true;           ///< false when M < 100
};

/// Pools post-burn-in queue lengths across servers and checkpoints and
/// compares them with the marginal of ν.
FixedPointComparison compare_to_fixed_point(const NetworkRun& run, const StateDistribution& nu, double c,
                                            double burn_in);

struct Atom {
    int n = 0;
    double tau = 0.0;
    double weight = 0.0;
};

/// Empirical measure (1/M) Σ δ_{(n_i, τ_i)}, equal atoms merged, idle first.
std::vector<Atom> symmetrize(const NetworkState& s);
double atom_mean(const std::vector<Atom>& atoms);
/// Bins the atoms onto the master-equation grid of d.
StateDistribution atoms_to_state(const std::vector<Atom>& atoms, const ServiceDistribution& d,
                                 const MasterOptions& opt = {});

}  // namespace phlab
