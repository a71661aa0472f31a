#include "phlab/queue.hpp"

#include "phlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace phlab {

// ---------------------------------------------------------------- RateFunction

RateFunction::RateFunction(double h, std::vector<double> values, double cap) : h_(h), values_(std::move(values)) {
    if (!(h > 0.0)) throw std::invalid_argument("RateFunction: step must be positive");
    double mx = 0.0;
    for (double v : values_) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("RateFunction: values must be finite and >= 0");
        mx = std::max(mx, v);
    }
    cap_ = cap >= 0.0 ? cap : mx;
}

RateFunction RateFunction::constant(double c, double h, double horizon) {
    const auto n = static_cast<std::size_t>(std::ceil(horizon / h - 1e-9));
    return RateFunction(h, std::vector<double>(std::max<std::size_t>(n, 1), c));
}

RateFunction RateFunction::from_function(const std::function<double(double)>& f, double h, double horizon,
                                         double cap) {
    static const double xg[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                 0.9061798459386640};
    static const double wg[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                                 0.2369268850561891};
    const auto n = static_cast<std::size_t>(std::ceil(horizon / h - 1e-9));
    std::vector<double> v(std::max<std::size_t>(n, 1));
    for (std::size_t k = 0; k < v.size(); ++k) {
        const double a = h * static_cast<double>(k), mid = a + 0.5 * h;
        double s = 0.0;
        for (int i = 0; i < 5; ++i) s += wg[i] * f(mid + 0.5 * h * xg[i]);
        v[k] = std::max(0.0, 0.5 * s);
    }
    return RateFunction(h, std::move(v), cap);
}

double RateFunction::operator()(double t) const {
    if (t < 0.0 || values_.empty()) return 0.0;
    const auto k = static_cast<std::size_t>(t / h_);
    return k < values_.size() ? values_[k] : values_.back();
}

double RateFunction::integral(double a, double b) const {
    if (b <= a) return 0.0;
    a = std::max(a, 0.0);
    if (b <= 0.0 || values_.empty()) return 0.0;
    const double end = horizon();
    double s = 0.0;
    if (b > end) {
        s += values_.back() * (b - std::max(a, end));
        b = end;
    }
    if (a >= b) return s;
    auto ka = static_cast<std::size_t>(a / h_);
    const auto kb = std::min(static_cast<std::size_t>(b / h_), values_.size() - 1);
    if (ka == kb) return s + values_[ka] * (b - a);
    s += values_[ka] * (h_ * static_cast<double>(ka + 1) - a);
    for (std::size_t k = ka + 1; k < kb; ++k) s += values_[k] * h_;
    s += values_[kb] * (b - h_ * static_cast<double>(kb));
    return s;
}

double RateFunction::checked_max() const {
    double mx = 0.0;
    for (double v : values_) mx = std::max(mx, v);
    if (mx > cap_ * (1.0 + 1e-12)) throw ContractError("rate function exceeds its declared cap");
    return mx;
}

std::vector<double> poisson_arrivals(const RateFunction& lam, double from, double to, Rng& rng) {
    std::vector<double> out;
    const double cap = lam.cap();
    lam.checked_max();
    if (!(cap > 0.0)) return out;
    double t = from;
    for (;;) {
        t += rng.exponential(cap);
        if (t >= to) break;
        if (rng.uniform() * cap < lam(t)) out.push_back(t);
    }
    return out;
}

// ---------------------------------------------------------------- paths

FlowTrace simulate_path(const ServerConfiguration& initial, const RateFunction& lam, const ServiceDistribution& d,
                        double horizon, Rng& rng, const ForcedInput* forced) {
    if (!(horizon > 0.0)) throw std::invalid_argument("simulate_path: horizon must be positive");
    FlowTrace tr;
    tr.horizon = horizon;
    ServiceSampler draw(d);
    if (forced) {
        if (forced->arrivals.size() != forced->services.size())
            throw std::invalid_argument("simulate_path: forced arrivals and services differ in length");
        if (!std::is_sorted(forced->arrivals.begin(), forced->arrivals.end()))
            throw std::invalid_argument("simulate_path: forced arrivals must be sorted");
        tr.arrivals = forced->arrivals;
        tr.services = forced->services;
    } else {
        tr.arrivals = poisson_arrivals(lam, 0.0, horizon, rng);
        tr.services.reserve(tr.arrivals.size());
        for (std::size_t i = 0; i < tr.arrivals.size(); ++i) tr.services.push_back(draw(rng));
    }

    // Initial customers: the one in service keeps its elapsed time.
    double free_at = 0.0;  // time the server finishes all work seen so far
    double root = -1.0;
    bool busy = false;
    double work0 = 0.0;
    if (initial.busy) {
        tr.initial_customers = initial.n;
        double t = d.sample_residual(rng, initial.tau);
        work0 += t;
        if (t <= horizon) {
            tr.departures.push_back(t);
            tr.departure_root.push_back(-1.0);
        }
        for (int i = 1; i < initial.n; ++i) {
            const double s = draw(rng);
            t += s;
            work0 += s;
            if (t <= horizon) {
                tr.departures.push_back(t);
                tr.departure_root.push_back(-1.0);
            }
        }
        free_at = t;
        busy = true;
    }
    tr.workload_samples.emplace_back(0.0, work0);
    double idle_from = busy ? -1.0 : 0.0;
    for (std::size_t i = 0; i < tr.arrivals.size(); ++i) {
        const double a = tr.arrivals[i];
        if (a >= horizon) break;
        if (!busy || a > free_at) {
            if (busy) idle_from = free_at;
            if (idle_from >= 0.0 && idle_from < a) tr.idle_periods.emplace_back(idle_from, a);
            if (busy) tr.workload_samples.emplace_back(free_at, 0.0);
            root = a;
            free_at = a;
            busy = true;
        }
        free_at += tr.services[i];
        tr.workload_samples.emplace_back(a, free_at - a);
        if (free_at <= horizon) {
            tr.departures.push_back(free_at);
            tr.departure_root.push_back(root);
        }
    }
    if (!busy) {
        tr.idle_periods.emplace_back(0.0, horizon);
    } else if (free_at < horizon) {
        tr.idle_periods.emplace_back(free_at, horizon);
        tr.workload_samples.emplace_back(free_at, 0.0);
    }
    return tr;
}

// ---------------------------------------------------------------- workload

Workload::Workload(std::vector<double> arrivals, std::vector<double> services, double initial_work) {
    if (arrivals.size() != services.size()) throw std::invalid_argument("workload: arrivals and services differ");
    if (!std::is_sorted(arrivals.begin(), arrivals.end())) throw std::invalid_argument("workload: arrivals must be sorted");
    if (initial_work < 0.0) throw std::invalid_argument("workload: initial work must be >= 0");
    t_.push_back(0.0);
    w_.push_back(initial_work);
    for (std::size_t i = 0; i < arrivals.size(); ++i) {
        const double before = std::max(0.0, w_.back() - (arrivals[i] - t_.back()));
        if (arrivals[i] == t_.back() && i == 0) {
            w_.back() += services[i];
            continue;
        }
        t_.push_back(arrivals[i]);
        w_.push_back(before + services[i]);
    }
}

double Workload::operator()(double t) const {
    if (t < 0.0) return 0.0;
    const auto it = std::upper_bound(t_.begin(), t_.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - t_.begin()) - 1;
    return std::max(0.0, w_[k] - (t - t_[k]));
}

std::vector<std::pair<double, double>> Workload::busy_periods() const {
    std::vector<std::pair<double, double>> out;
    for (std::size_t k = 0; k < t_.size(); ++k) {
        if (w_[k] <= 0.0) continue;
        const double end = t_[k] + w_[k];
        if (!out.empty() && t_[k] <= out.back().second)
            out.back().second = end;
        else
            out.emplace_back(t_[k], end);
    }
    return out;
}

std::vector<std::pair<double, double>> Workload::zero_set(double until) const {
    std::vector<std::pair<double, double>> out;
    double from = 0.0;
    for (const auto& [a, b] : busy_periods()) {
        if (a >= until) break;
        if (a > from) out.emplace_back(from, a);
        from = std::max(from, b);
    }
    if (from < until) out.emplace_back(from, until);
    return out;
}

Workload workload(const std::vector<double>& arrivals, const std::vector<double>& services, double initial_work) {
    return Workload(arrivals, services, initial_work);
}

// ---------------------------------------------------------------- ordering

OrderCheck check_order(const RateFunction& chi1, const RateFunction& chi2, double B, double tol) {
    OrderCheck oc;
    oc.worst_margin = std::numeric_limits<double>::infinity();
    const double h = std::min(chi1.h(), chi2.h());
    const auto n = static_cast<std::size_t>(std::ceil(B / h - 1e-9));
    for (std::size_t k = 0; k <= n; ++k) {
        const double a = std::min(B, h * static_cast<double>(k));
        const double margin = chi2.integral(a, B) - chi1.integral(a, B);
        if (margin < oc.worst_margin) {
            oc.worst_margin = margin;
            if (margin < -tol) oc.violating_suffix = a;
        }
    }
    oc.holds = oc.worst_margin >= -tol;
    if (oc.holds) oc.violating_suffix = -1.0;
    return oc;
}

CouplingMap::CouplingMap(const RateFunction& chi1, const RateFunction& chi2, double B)
    : chi2_(&chi2), B_(B), h1_(chi1.h()), h2_(chi2.h()) {
    auto suffixes = [B](const RateFunction& f, double h) {
        const auto n = static_cast<std::size_t>(std::ceil(B / h - 1e-9));
        std::vector<double> g(n + 1, 0.0);
        for (std::size_t k = n; k-- > 0;) {
            const double a = h * static_cast<double>(k);
            g[k] = g[k + 1] + f.integral(a, std::min(B, a + h));
        }
        return g;
    };
    g1_ = suffixes(chi1, h1_);
    g2_ = suffixes(chi2, h2_);
    if (g1_[0] > g2_[0] * (1 + 1e-12) + 1e-12) throw ContractError("CouplingMap: total mass of χ1 exceeds χ2");
    f0_ = inverse_suffix2(g1_[0]);
}

double CouplingMap::suffix1(double x) const {
    if (x >= B_) return 0.0;
    const auto k = static_cast<std::size_t>(x / h1_);
    const double a = h1_ * static_cast<double>(k);
    const double seg = g1_[k] - g1_[k + 1];
    const double len = std::min(B_, a + h1_) - a;
    return g1_[k + 1] + seg * (std::min(B_, a + h1_) - x) / len;
}

double CouplingMap::inverse_suffix2(double mass) const {
    // Largest y with χ2([y, B]) ≥ mass; suffix masses decrease in y.
    if (mass <= 0.0) return B_;
    const std::size_t n = g2_.size() - 1;
    // Find k with g2[k] ≥ mass > g2[k+1].
    std::size_t lo = 0, hi = n;
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        (g2_[mid] >= mass ? lo : hi) = mid;
    }
    const double a = h2_ * static_cast<double>(lo);
    const double b = std::min(B_, a + h2_);
    const double seg = g2_[lo] - g2_[lo + 1];
    if (seg <= 0.0) return a;
    // g(y) = g2[lo+1] + seg*(b − y)/(b − a) = mass.
    return b - (mass - g2_[lo + 1]) / seg * (b - a);
}

double CouplingMap::operator()(double x) const {
    const double y = inverse_suffix2(suffix1(x));
    return std::max(x, y);  // equal up to rounding when the order holds
}

int queue_length_at(const std::vector<double>& arrivals, const std::vector<double>& services, double B) {
    double free_at = 0.0;
    int n = 0;
    std::vector<double> deps;
    deps.reserve(arrivals.size());
    for (std::size_t i = 0; i < arrivals.size(); ++i) {
        if (arrivals[i] > B) break;
        free_at = std::max(free_at, arrivals[i]) + services[i];
        deps.push_back(free_at);
    }
    for (double t : deps)
        if (t > B) ++n;
    return n;
}

CouplingReport order_and_couple(const RateFunction& chi1, const RateFunction& chi2, const ServiceDistribution& d,
                                double B, std::size_t replicas, std::uint64_t seed, int threads) {
    CouplingReport rep;
    rep.order = check_order(chi1, chi2, B);
    rep.replicas = replicas;
    if (!rep.order.holds) return rep;
    const CouplingMap f(chi1, chi2, B);
    // Extra customers of process 2: Poisson with rate χ2 on [0, f(0)).
    std::vector<int> n1(replicas), n2(replicas);
    parallel_for(replicas, threads, [&](std::size_t r) {
        Rng rng(seed, stream::coupling, r);
        ServiceSampler draw(d);
        auto a1 = poisson_arrivals(chi1, 0.0, B, rng);
        std::vector<double> s1;
        s1.reserve(a1.size());
        for (std::size_t i = 0; i < a1.size(); ++i) s1.push_back(draw(rng));
        // Process 2: mapped copies keep their services; extras draw fresh ones.
        std::vector<std::pair<double, double>> c2;
        c2.reserve(a1.size() + 8);
        for (std::size_t i = 0; i < a1.size(); ++i) c2.emplace_back(f(a1[i]), s1[i]);
        const double cut = f.matched_start();
        double t = 0.0;
        const double cap = chi2.cap();
        if (cap > 0.0)
            for (;;) {
                t += rng.exponential(cap);
                if (t >= cut) break;
                if (rng.uniform() * cap < chi2(t)) c2.emplace_back(t, draw(rng));
            }
        std::sort(c2.begin(), c2.end());
        std::vector<double> a2, s2;
        for (const auto& [a, s] : c2) {
            a2.push_back(a);
            s2.push_back(s);
        }
        n1[r] = queue_length_at(a1, s1, B);
        n2[r] = queue_length_at(a2, s2, B);
    });
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t r = 0; r < replicas; ++r) {
        if (n1[r] > n2[r]) ++rep.violations;
        if (n1[r] == n2[r]) ++rep.equal_paths;
        s1 += n1[r];
        s2 += n2[r];
    }
    if (replicas) {
        rep.mean_n1 = s1 / static_cast<double>(replicas);
        rep.mean_n2 = s2 / static_cast<double>(replicas);
    }
    return rep;
}

}  // namespace phlab
