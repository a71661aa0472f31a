#pragma once

#include "phlab/dist.hpp"
#include "phlab/queue.hpp"

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace phlab {

struct IntegratorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonConvergence : std::runtime_error {
    NonConvergence(const std::string& what, double gap) : std::runtime_error(what), last_gap(gap) {}
    double last_gap;
};

struct MasterOptions {
    double h = 0.01;
    int n_max = 200;
    /// Snapshot spacing in time units; 0 keeps only the final state.
    double snapshot_every = 0.0;
};

/// Discretized measure on {0} ∪ {(n, τ)}: idle mass plus masses on (n, τ-bin),
/// n = 1..n_max, bins of width h. The last τ-bin collects τ ≥ (K−1)h. For a
/// memoryless service law the τ coordinate is lumped into a single bin.
class StateDistribution {
public:
    double h = 0.01;
    std::size_t K = 1;
    int n_max = 200;
    double idle = 1.0;
    std::vector<double> m;    ///< m[(n−1)*K + k]
    double n_clipped = 0.0;   ///< cumulative mass pushed against n_max
    int top = 0;              ///< rows above `top` are exactly zero

    static StateDistribution idle_state(const ServiceDistribution& d, const MasterOptions& opt = {});
    static StateDistribution point_mass(const ServiceDistribution& d, int n, double tau, const MasterOptions& opt = {});

    /// Mutable access also raises `top` so written rows are never skipped.
    double& at(int n, std::size_t k) {
        top = std::max(top, n);
        return m[static_cast<std::size_t>(n - 1) * K + k];
    }
    double at(int n, std::size_t k) const { return m[static_cast<std::size_t>(n - 1) * K + k]; }
    double total() const;
    /// Mass in the absorbing last τ-bin (zero when lumped).
    double tau_tail() const;
    /// [P(idle), P(n = 1), …, P(n = n_max)].
    std::vector<double> queue_marginal() const;
    double mean_queue() const;
};

double total_variation(const StateDistribution& a, const StateDistribution& b);

/// μ1 ⪰ μ2: the queue-length marginal of μ1 stochastically dominates that of μ2.
bool higher(const StateDistribution& a, const StateDistribution& b, double tol = 1e-12);
/// μ1 taller than μ2: per τ-bin tail domination of the n-marginals, so a
/// coupling with equal τ and n1 ≥ n2 exists off the idle state of μ2.
bool taller(const StateDistribution& a, const StateDistribution& b, double tol = 1e-12);

struct Observables {
    double N = 0.0;
    double S = 0.0;
    double idle = 1.0;
};
Observables observables(const StateDistribution& mu, const ServiceDistribution& d);

/// One step of length h is split as arrivals(h/2), service(h), arrivals(h/2).
/// Arrivals are exact Poisson transitions; the service part ages τ by one bin,
/// completes with probability 1 − S(τ+h)/S(τ), lets the next customer complete
/// with probability 1 − S(h/2), and starts fresh services half in bin 0 and
/// half in bin 1. Local error is O(h³); mass is conserved exactly.
class MasterIntegrator {
public:
    MasterIntegrator(const ServiceDistribution& d, double h, int n_max);

    struct Prepared {
        double idle = 0.0;
        std::vector<double> col;   ///< busy mass per τ-bin
        std::vector<double> row1;  ///< mass with n = 1 per τ-bin
    };
    /// Summaries of mu sufficient to evaluate completions_for at any rate.
    void prepare(const StateDistribution& mu, Prepared& out) const;
    /// Expected number of completions in the next step if the rate is lam.
    double completions_for(const Prepared& p, double lam) const;
    /// Advances mu by one step at rate lam; returns the expected completions.
    double advance(StateDistribution& mu, double lam);

    double h() const { return h_; }
    std::size_t bins() const { return K_; }

private:
    void arrivals(StateDistribution& mu, double lam);
    void service(StateDistribution& mu, double& completions);
    void prune(StateDistribution& mu) const;

    double h_;
    int n_max_;
    std::size_t K_;
    std::vector<double> sigma_, dcomp_;
    double r_ = 0.0;
    std::vector<double> buf_;
    int buf_top_ = 0;  ///< rows of buf_ above this are zero
    std::vector<double> pois_;
};

struct MasterTrajectory {
    double h = 0.01;
    std::vector<double> b;      ///< output rate per step (completions / h), step k covers [kh, (k+1)h)
    std::vector<double> N;      ///< mean queue length at the end of each step
    std::vector<double> idle;   ///< idle mass at the end of each step
    std::vector<double> snapshot_times;
    std::vector<StateDistribution> snapshots;
    StateDistribution final_state;
    double max_mass_drift = 0.0;
};

/// Forward equations under rate lam on [0, horizon).
MasterTrajectory evolve_master(const StateDistribution& mu0, const RateFunction& lam, const ServiceDistribution& d,
                               double horizon, const MasterOptions& opt = {});

struct StationaryOptions {
    MasterOptions master;
    double tv_tol = 1e-8;
    double max_time = 2e5;
};

/// ν_c: evolve from Idle (or `warm`) under λ ≡ c until snapshots one time unit
/// apart differ by less than tv_tol in total variation.
StateDistribution stationary_state(double c, const ServiceDistribution& d, const StationaryOptions& opt = {},
                                   const StateDistribution* warm = nullptr);

}  // namespace phlab
