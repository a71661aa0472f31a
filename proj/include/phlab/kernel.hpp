#pragma once

#include "phlab/dist.hpp"
#include "phlab/master.hpp"
#include "phlab/queue.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace phlab {

/// Too few conditioning events to form a ratio estimate.
struct StatisticalPowerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct KernelOptions {
    double w = 0.05;          ///< departure window for b(x)
    double du = 0.05;         ///< histogram bin width in the start time u (and so in t)
    int batches = 20;         ///< jackknife batches; replica r belongs to batch r·B/samples
    int threads = 1;
    std::uint64_t min_events = 100;  ///< busy-period starts required per contributing u-bin
};

/// e(u) = Pr{server idle at u}, sampled at bin midpoints.
struct IdleProfile {
    double du = 0.05;
    std::vector<double> u;
    std::vector<double> e;
    std::vector<double> se;
};

/// Histogram of q_{λ,x}(t). Bin j pairs busy periods started in
/// [j·du, (j+1)·du) with departures in [x, x+w), so it sits at offset
/// t_j = x + w/2 − (j + 1/2)·du.
struct KernelEstimate {
    double x = 0.0;
    double w = 0.05;
    double du = 0.05;
    std::vector<double> t;
    std::vector<double> q;
    std::vector<double> se;
    std::vector<double> lam_bar;   ///< λ averaged over each start bin
    double mass = 0.0;
    double mass_se = 0.0;
    double conv = 0.0;             ///< Σ λ̄_j q_j du
    double conv_se = 0.0;
    std::uint64_t samples = 0;
    std::uint64_t conditioned = 0; ///< replicas on which the kernel is built
    std::uint64_t min_events = 0;  ///< smallest busy-start count among contributing bins
    bool no_data = false;          ///< λ ≡ 0 on [0, x]: no busy period ever starts
};

struct KernelResult {
    KernelEstimate kernel;
    IdleProfile idle;
};

/// Kernel at x for the queue started Idle. Throws StatisticalPowerError when a
/// contributing bin has fewer than opt.min_events busy-period starts even after
/// pooling with its neighbours.
KernelResult estimate_kernel(const RateFunction& lam, const ServiceDistribution& d, double x, std::uint64_t samples,
                             std::uint64_t seed, const KernelOptions& opt = {});

struct SelfAveragingRow {
    double x = 0.0;
    double lhs = 0.0;     ///< b(x) from departure counts, independent replicas
    double lhs_se = 0.0;
    double rhs = 0.0;     ///< Σ λ̄ q̂ du
    double rhs_se = 0.0;
    double se = 0.0;      ///< combined
    double z = 0.0;
    double mass = 0.0;
    double mass_se = 0.0;
    bool pass = false;    ///< |z| ≤ 3 and mass ≤ 1 + 3·mass_se
    KernelResult kernel;
};

std::vector<SelfAveragingRow> verify_self_averaging(const RateFunction& lam, const ServiceDistribution& d,
                                                    const std::vector<double>& xs, std::uint64_t samples,
                                                    std::uint64_t seed, const KernelOptions& opt = {});

/// Departures at y by a lone first customer: its arrival at X ≤ y starts the
/// first busy period and nobody else arrives before it leaves. The rate is
/// e^{−I(y)}·∫λ(y−l)p(l)dl.
struct FirstTermCheck {
    double y = 0.0;
    double mc = 0.0;       ///< window rate from simulation
    double mc_se = 0.0;
    double oracle = 0.0;   ///< window average of e^{−I(s)} b_1(s)
    double b1 = 0.0;       ///< ∫_0^y λ(y−l)p(l)dl
    double rescaled = 0.0; ///< mc·e^{I(y)}, the simulated b_1(y)
    double z = 0.0;
};
FirstTermCheck first_term_check(const RateFunction& lam, const ServiceDistribution& d, double y,
                                std::uint64_t samples, std::uint64_t seed, const KernelOptions& opt = {});

/// Samples (n, τ) from a discretized state; τ is the left edge of its bin.
class InitialLaw {
public:
    explicit InitialLaw(const StateDistribution& mu);
    ServerConfiguration draw(Rng& rng) const;
    double mean_work(const ServiceDistribution& d) const;

private:
    std::vector<double> cum_;
    std::vector<ServerConfiguration> cells_;
};

struct EpsilonRow {
    double x = 0.0;
    double eps = 0.0;
    double se = 0.0;
};

/// ε(x) = Pr{initial residual + queued services + services of arrivals in
/// [0, x) ≥ x}. Throws std::invalid_argument when the initial state has
/// infinite mean work.
std::vector<EpsilonRow> epsilon_noise(const StateDistribution& mu, const RateFunction& lam,
                                      const ServiceDistribution& d, const std::vector<double>& xs,
                                      std::uint64_t samples, std::uint64_t seed, int threads = 1);

struct NoisyRow {
    double x = 0.0;
    double lhs = 0.0;      ///< b(x), independent replicas
    double lhs_se = 0.0;
    double rhs = 0.0;      ///< (1 − ε)[λ∗q](x) + ε·Q
    double rhs_se = 0.0;
    double se = 0.0;
    double z = 0.0;
    double eps = 0.0;
    double eps_se = 0.0;
    double conv = 0.0;     ///< [λ∗q](x) for the kernel built on the event Σ η < x
    double Q = 0.0;        ///< output rate on the complement
    double Q_se = 0.0;
    double q_cap = 0.0;    ///< sup of the hazard: no server completes faster
    double q_cap_ratio = 0.0;  ///< 1/C′ with C′ the density ratio constant
    bool q_within_cap = false;
    bool q_within_ratio_cap = false;
    double mass = 0.0;
    double mass_se = 0.0;
    bool pass = false;     ///< |z| ≤ 3, mass ≤ 1 + 3se and Q ≤ q_cap + 3se
    KernelResult kernel;
};

std::vector<NoisyRow> verify_noisy(const StateDistribution& mu, const RateFunction& lam,
                                   const ServiceDistribution& d, const std::vector<double>& xs,
                                   std::uint64_t samples, std::uint64_t seed, const KernelOptions& opt = {});

/// 1 − max over windows of length T ≥ t_min of the mean rate, scanning
/// T = t_min, 2·t_min, … up to the rate function's horizon.
double windowed_rate_margin(const RateFunction& lam, double t_min);

struct BoundCheck {
    double value = 0.0;      ///< worst margin (positive means the bound holds)
    double tolerance = 0.0;  ///< allowance in standard errors
    bool pass = false;
};

struct BoundsReport {
    double eps_prime = 0.0;          ///< windowed-rate margin of λ
    BoundCheck lower;                ///< min_j q̂_j − (p·ê)_j + 3se_j
    std::vector<double> envelope;    ///< 𝒬 averaged over each bin with t ≤ t_envelope
    BoundCheck upper;                ///< min_j 𝒬_j + 3se_j − q̂_j over those bins
    double t_envelope = 5.0;
    double uniform_cap = 0.0;        ///< C̃ = sup Σ p^{*n}
    BoundCheck cap;                  ///< C̃ + 3se − max_j q̂_j
    double b = 0.0;                  ///< fractional moment order
    double moment = 0.0;             ///< Σ t^b q̂ du
    double moment_se = 0.0;
    double moment_bound = 0.0;       ///< Σ t^b max(𝒬, q̂) du over the histogram support
    BoundCheck moment_check;
    bool all_pass() const { return lower.pass && upper.pass && cap.pass && moment_check.pass; }
};

/// Throws std::invalid_argument when λ violates the windowed-rate condition
/// (margin ≤ 0 at t_min = 10).
BoundsReport bounds_and_moments(const RateFunction& lam, const ServiceDistribution& d, const KernelResult& k,
                                double b = -1.0, double t_envelope = 5.0);

/// L1 distance between two kernel histograms on the common t grid.
double kernel_l1(const KernelEstimate& a, const KernelEstimate& b);

}  // namespace phlab
