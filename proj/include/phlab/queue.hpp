#pragma once

#include "phlab/dist.hpp"
#include "phlab/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace phlab {

struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Idle, or Busy with n ≥ 1 customers and elapsed service tau of the one in service.
struct ServerConfiguration {
    bool busy = false;
    int n = 0;
    double tau = 0.0;

    static ServerConfiguration idle() { return {}; }
    static ServerConfiguration with(int n, double tau) {
        if (n < 1 || tau < 0.0) throw std::invalid_argument("ServerConfiguration: need n >= 1, tau >= 0");
        return {true, n, tau};
    }
};

/// Piecewise-constant rate: values[k] on [k*h, (k+1)*h). Zero for t < 0; the
/// last value is held beyond the table.
class RateFunction {
public:
    RateFunction() = default;
    RateFunction(double h, std::vector<double> values, double cap = -1.0);

    static RateFunction constant(double c, double h, double horizon);
    /// Bin averages of f on [0, horizon) by 5-point Gauss-Legendre per bin.
    static RateFunction from_function(const std::function<double(double)>& f, double h, double horizon,
                                      double cap = -1.0);

    double h() const { return h_; }
    double cap() const { return cap_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& mutable_values() { return values_; }
    std::size_t size() const { return values_.size(); }
    double horizon() const { return h_ * static_cast<double>(values_.size()); }

    double operator()(double t) const;
    /// ∫_a^b λ, exact for the piecewise-constant function.
    double integral(double a, double b) const;
    /// Average of λ over [a, b).
    double average(double a, double b) const { return b > a ? integral(a, b) / (b - a) : (*this)(a); }
    /// Max value; throws ContractError when it exceeds the declared cap.
    double checked_max() const;
    void set_cap(double cap) { cap_ = cap; }

private:
    double h_ = 0.01;
    std::vector<double> values_;
    double cap_ = 0.0;
};

/// Arrivals and services supplied by a test in place of the random input.
struct ForcedInput {
    std::vector<double> arrivals;
    std::vector<double> services;
};

struct FlowTrace {
    double horizon = 0.0;
    std::vector<double> arrivals;        ///< post-zero arrival times
    std::vector<double> services;        ///< service requirement of each arrival
    std::vector<double> departures;      ///< all departures ≤ horizon, FIFO order
    std::vector<double> departure_root;  ///< busy-period start of each departure; −1 for the initial busy period
    std::vector<std::pair<double, double>> idle_periods;  ///< within [0, horizon]
    int initial_customers = 0;
    std::vector<std::pair<double, double>> workload_samples;  ///< (t, W(t)) at jumps and idle starts
};

/// Event-driven FIFO single-server path with nonhomogeneous Poisson input
/// (thinning against the declared cap). The in-service customer's remaining
/// time is drawn from the law of η − τ given η > τ.
FlowTrace simulate_path(const ServerConfiguration& initial, const RateFunction& lam, const ServiceDistribution& d,
                        double horizon, Rng& rng, const ForcedInput* forced = nullptr);

/// Arrival times on [0, horizon) of a Poisson process with rate lam, by thinning.
std::vector<double> poisson_arrivals(const RateFunction& lam, double from, double to, Rng& rng);

/// Unfinished work W(t): jumps by the service requirement at each arrival and
/// decreases at unit rate while positive. Right-continuous.
class Workload {
public:
    Workload(std::vector<double> arrivals, std::vector<double> services, double initial_work);

    double operator()(double t) const;
    /// Maximal intervals in [0, until] where W = 0.
    std::vector<std::pair<double, double>> zero_set(double until) const;
    /// Maximal intervals where W > 0 (busy periods).
    std::vector<std::pair<double, double>> busy_periods() const;

private:
    std::vector<double> t_;   ///< jump times, with 0 first
    std::vector<double> w_;   ///< level just after each jump
};

Workload workload(const std::vector<double>& arrivals, const std::vector<double>& services, double initial_work);

// ---------------------------------------------------------------- ordering and coupling

struct OrderCheck {
    bool holds = true;
    double worst_margin = 0.0;     ///< min over suffixes of χ2([a,B]) − χ1([a,B])
    double violating_suffix = -1;  ///< a of the worst violating suffix, −1 if none
};

/// χ1 ≺ χ2 on [0, B]: χ1([a, B]) ≤ χ2([a, B]) for every grid point a.
OrderCheck check_order(const RateFunction& chi1, const RateFunction& chi2, double B, double tol = 1e-12);

/// Minimal monotone map f with f(x) ≥ x pushing χ1 on [0, B] into χ2:
/// χ2([f(x), B]) = χ1([x, B]).
class CouplingMap {
public:
    CouplingMap(const RateFunction& chi1, const RateFunction& chi2, double B);
    double operator()(double x) const;
    /// Start of the matched region: χ2 on [0, f(0)) is left for the extra customers.
    double matched_start() const { return f0_; }

private:
    const RateFunction* chi2_;
    double B_;
    double f0_;
    std::vector<double> g1_, g2_;  ///< suffix masses at grid nodes
    double h1_, h2_;
    double suffix1(double x) const;
    double inverse_suffix2(double mass) const;
};

struct CouplingReport {
    OrderCheck order;
    std::size_t replicas = 0;
    std::size_t violations = 0;      ///< replicas with N1(B) > N2(B)
    std::size_t equal_paths = 0;     ///< replicas with N1(B) = N2(B)
    double mean_n1 = 0.0;
    double mean_n2 = 0.0;
};

/// Runs the constructive coupling on `replicas` pairs (process 1 starts Idle,
/// process 2 Idle) and counts violations of N1(B) ≤ N2(B).
CouplingReport order_and_couple(const RateFunction& chi1, const RateFunction& chi2, const ServiceDistribution& d,
                                double B, std::size_t replicas, std::uint64_t seed, int threads = 1);

/// N(B) for FIFO arrivals with services, starting empty.
int queue_length_at(const std::vector<double>& arrivals, const std::vector<double>& services, double B);

}  // namespace phlab
