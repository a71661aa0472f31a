#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace phlab {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

/// Sample mean with the standard error of the mean.
MeanSe mean_se(const std::vector<double>& xs);

/// Delete-one jackknife over batches. `estimate` maps a set of batch weights
/// (1 for kept batches, 0 for the dropped one) to a statistic.
MeanSe jackknife(std::size_t batches, const std::function<double(const std::vector<double>&)>& estimate);

/// Wilson score interval for a binomial proportion.
struct Proportion {
    double p = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};
Proportion wilson(std::uint64_t successes, std::uint64_t trials, double z = 1.96);

/// Asymptotic Kolmogorov survival function Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}.
double kolmogorov_q(double lambda);

struct KsResult {
    double statistic = 0.0;
    double rate = 0.0;             ///< fitted exponential rate
    double p_value = 0.0;          ///< parametric-bootstrap p-value (rate re-estimated per draw)
    double p_value_asymptotic = 0.0;  ///< Kolmogorov p-value ignoring the fitted parameter
    std::size_t n = 0;
};
/// One-sample KS statistic against exponential(rate).
double ks_statistic_exponential(std::vector<double> xs, double rate);
/// KS test against the exponential law with the empirical rate.
KsResult ks_exponential(const std::vector<double>& xs, std::uint64_t seed, int bootstrap_draws = 199);

/// Lag-k sample autocorrelations for k = 1..max_lag.
std::vector<double> autocorrelations(const std::vector<double>& xs, int max_lag);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

/// Run fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; callers store results per index so reductions
/// stay order-independent.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Threads requested via PH_LAB_THREADS, defaulting to 1.
int default_threads();

}  // namespace phlab
