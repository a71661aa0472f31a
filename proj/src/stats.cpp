#include "phlab/stats.hpp"

#include "phlab/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace phlab {

MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe r;
    if (xs.empty()) return r;
    const double n = static_cast<double>(xs.size());
    r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() < 2) return r;
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / (n - 1.0) / n);
    return r;
}

MeanSe jackknife(std::size_t batches, const std::function<double(const std::vector<double>&)>& estimate) {
    MeanSe r;
    std::vector<double> weights(batches, 1.0);
    r.mean = estimate(weights);
    if (batches < 2) return r;
    std::vector<double> loo(batches);
    for (std::size_t b = 0; b < batches; ++b) {
        weights[b] = 0.0;
        loo[b] = estimate(weights);
        weights[b] = 1.0;
    }
    const double m = std::accumulate(loo.begin(), loo.end(), 0.0) / static_cast<double>(batches);
    double ss = 0.0;
    for (double v : loo) ss += (v - m) * (v - m);
    r.se = std::sqrt(ss * static_cast<double>(batches - 1) / static_cast<double>(batches));
    return r;
}

Proportion wilson(std::uint64_t successes, std::uint64_t trials, double z) {
    Proportion r;
    if (trials == 0) {
        r.hi = 1.0;
        return r;
    }
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    r.p = p;
    r.lo = std::max(0.0, centre - half);
    r.hi = std::min(1.0, centre + half);
    return r;
}

double kolmogorov_q(double lambda) {
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        if (term < 1e-16) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_statistic_exponential(std::vector<double> xs, double rate) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = 1.0 - std::exp(-rate * xs[i]);
        d = std::max(d, std::max(f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f));
    }
    return d;
}

static double fitted_rate(const std::vector<double>& xs) {
    const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    return 1.0 / m;
}

KsResult ks_exponential(const std::vector<double>& xs, std::uint64_t seed, int bootstrap_draws) {
    if (xs.size() < 2) throw std::invalid_argument("ks_exponential: need at least two observations");
    KsResult r;
    r.n = xs.size();
    r.rate = fitted_rate(xs);
    r.statistic = ks_statistic_exponential(xs, r.rate);
    const double sn = std::sqrt(static_cast<double>(r.n));
    r.p_value_asymptotic = kolmogorov_q((sn + 0.12 + 0.11 / sn) * r.statistic);
    // The statistic is scale-free under a fitted rate, so unit-rate draws suffice.
    Rng rng(seed, stream::bootstrap);
    std::vector<double> sim(r.n);
    int exceed = 0;
    for (int b = 0; b < bootstrap_draws; ++b) {
        for (auto& v : sim) v = rng.exponential(1.0);
        if (ks_statistic_exponential(sim, fitted_rate(sim)) >= r.statistic) ++exceed;
    }
    r.p_value = (1.0 + exceed) / (1.0 + bootstrap_draws);
    return r;
}

std::vector<double> autocorrelations(const std::vector<double>& xs, int max_lag) {
    std::vector<double> out;
    const std::size_t n = xs.size();
    if (n < 2) return std::vector<double>(static_cast<std::size_t>(std::max(0, max_lag)), 0.0);
    const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
    double c0 = 0.0;
    for (double x : xs) c0 += (x - m) * (x - m);
    for (int k = 1; k <= max_lag; ++k) {
        double ck = 0.0;
        for (std::size_t i = 0; i + static_cast<std::size_t>(k) < n; ++i) ck += (xs[i] - m) * (xs[i + k] - m);
        out.push_back(c0 > 0.0 ? ck / c0 : 0.0);
    }
    return out;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: size mismatch");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < n; i = next++) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
                next = n;
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

int default_threads() {
    if (const char* env = std::getenv("PH_LAB_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

}  // namespace phlab
