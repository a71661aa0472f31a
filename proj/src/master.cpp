#include "phlab/master.hpp"

#include <algorithm>
#include <cmath>

#if defined(__x86_64__) || defined(__i386__)
#include <xmmintrin.h>
#endif

namespace phlab {

namespace {

std::size_t bins_for(const ServiceDistribution& d, double h) {
    if (d.memoryless()) return 1;
    return static_cast<std::size_t>(std::ceil(d.tail_cut / h - 1e-9)) + 1;
}

// Denormals from geometrically decaying rows slow the sweeps by orders of magnitude.
void flush_denormals() {
#if defined(__x86_64__) || defined(__i386__)
    _mm_setcsr(_mm_getcsr() | 0x8040);
#endif
}

}  // namespace

// ---------------------------------------------------------------- StateDistribution

StateDistribution StateDistribution::idle_state(const ServiceDistribution& d, const MasterOptions& opt) {
    if (!(opt.h > 0.0) || opt.n_max < 1) throw std::invalid_argument("StateDistribution: need h > 0 and n_max >= 1");
    StateDistribution s;
    s.h = opt.h;
    s.K = bins_for(d, opt.h);
    s.n_max = opt.n_max;
    s.idle = 1.0;
    s.m.assign(static_cast<std::size_t>(opt.n_max) * s.K, 0.0);
    s.top = 0;
    return s;
}

StateDistribution StateDistribution::point_mass(const ServiceDistribution& d, int n, double tau,
                                                const MasterOptions& opt) {
    StateDistribution s = idle_state(d, opt);
    if (n == 0) return s;
    if (n < 1 || n > opt.n_max || tau < 0.0) throw std::invalid_argument("point_mass: need 1 <= n <= n_max, tau >= 0");
    const std::size_t k = std::min(s.K - 1, static_cast<std::size_t>(std::llround(tau / s.h)));
    s.idle = 0.0;
    s.at(n, k) = 1.0;
    s.top = n;
    return s;
}

double StateDistribution::total() const {
    double t = idle;
    for (double v : m) t += v;
    return t;
}

double StateDistribution::tau_tail() const {
    if (K == 1) return 0.0;
    double t = 0.0;
    for (int n = 1; n <= n_max; ++n) t += at(n, K - 1);
    return t;
}

std::vector<double> StateDistribution::queue_marginal() const {
    std::vector<double> q(static_cast<std::size_t>(n_max) + 1, 0.0);
    q[0] = idle;
    for (int n = 1; n <= n_max; ++n) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += at(n, k);
        q[static_cast<std::size_t>(n)] = s;
    }
    return q;
}

double StateDistribution::mean_queue() const {
    const auto q = queue_marginal();
    double s = 0.0;
    for (std::size_t n = 1; n < q.size(); ++n) s += static_cast<double>(n) * q[n];
    return s;
}

double total_variation(const StateDistribution& a, const StateDistribution& b) {
    if (a.K != b.K || a.n_max != b.n_max) throw std::invalid_argument("total_variation: incompatible grids");
    double s = std::abs(a.idle - b.idle);
    for (std::size_t i = 0; i < a.m.size(); ++i) s += std::abs(a.m[i] - b.m[i]);
    return 0.5 * s;
}

bool higher(const StateDistribution& a, const StateDistribution& b, double tol) {
    const auto qa = a.queue_marginal(), qb = b.queue_marginal();
    const std::size_t n = std::max(qa.size(), qb.size());
    double ta = 0.0, tb = 0.0;
    for (std::size_t j = n; j-- > 1;) {
        ta += j < qa.size() ? qa[j] : 0.0;
        tb += j < qb.size() ? qb[j] : 0.0;
        if (ta < tb - tol) return false;
    }
    return true;
}

bool taller(const StateDistribution& a, const StateDistribution& b, double tol) {
    if (a.K != b.K) throw std::invalid_argument("taller: incompatible τ grids");
    const int nm = std::max(a.n_max, b.n_max);
    for (std::size_t k = 0; k < a.K; ++k) {
        double ta = 0.0, tb = 0.0;
        for (int n = nm; n >= 1; --n) {
            ta += n <= a.n_max ? a.at(n, k) : 0.0;
            tb += n <= b.n_max ? b.at(n, k) : 0.0;
            if (ta < tb - tol) return false;
        }
    }
    return true;
}

Observables observables(const StateDistribution& mu, const ServiceDistribution& d) {
    Observables o;
    o.idle = mu.idle;
    std::vector<double> R(mu.K);
    for (std::size_t k = 0; k < mu.K; ++k)
        R[k] = d.memoryless() ? d.mean() : residual_mean(d, std::min(d.tail_cut, mu.h * static_cast<double>(k)));
    for (int n = 1; n <= mu.n_max; ++n)
        for (std::size_t k = 0; k < mu.K; ++k) {
            const double x = mu.at(n, k);
            if (x == 0.0) continue;
            o.N += n * x;
            o.S += (n - 1 + R[k]) * x;
        }
    return o;
}

// ---------------------------------------------------------------- integrator

MasterIntegrator::MasterIntegrator(const ServiceDistribution& d, double h, int n_max)
    : h_(h), n_max_(n_max), K_(bins_for(d, h)) {
    if (!(h > 0.0) || n_max < 1) throw std::invalid_argument("MasterIntegrator: need h > 0 and n_max >= 1");
    flush_denormals();
    sigma_.resize(K_);
    dcomp_.resize(K_);
    const double tail_sigma = std::exp(-h * d.hazard_limit());
    if (K_ == 1) {
        sigma_[0] = tail_sigma;
    } else {
        for (std::size_t k = 0; k + 1 < K_; ++k) {
            const double s0 = d.survival(h * static_cast<double>(k));
            const double s1 = d.survival(h * static_cast<double>(k + 1));
            sigma_[k] = s0 > 0.0 ? s1 / s0 : 0.0;
        }
        sigma_[K_ - 1] = tail_sigma;
    }
    for (std::size_t k = 0; k < K_; ++k) dcomp_[k] = 1.0 - sigma_[k];
    r_ = 1.0 - d.survival(0.5 * h);
    buf_.assign(static_cast<std::size_t>(n_max) * K_, 0.0);
    buf_top_ = 0;
}

void MasterIntegrator::prepare(const StateDistribution& mu, Prepared& out) const {
    out.idle = mu.idle;
    out.col.assign(K_, 0.0);
    out.row1.assign(K_, 0.0);
    for (std::size_t k = 0; k < K_; ++k) out.row1[k] = mu.m[k];
    for (int n = 1; n <= std::min(mu.top, mu.n_max); ++n) {
        const double* row = &mu.m[static_cast<std::size_t>(n - 1) * K_];
        for (std::size_t k = 0; k < K_; ++k) out.col[k] += row[k];
    }
}

double MasterIntegrator::completions_for(const Prepared& p, double lam) const {
    const double l = 0.5 * lam * h_;
    const double p0 = std::exp(-l), p1 = l * p0;
    double c = 0.0;
    for (std::size_t k = 0; k < K_; ++k) {
        double col = p.col[k], row1 = p.row1[k] * p0;
        if (k == 0) {
            col += p.idle * (1.0 - p0);
            row1 += p.idle * p1;
        }
        c += dcomp_[k] * (col + r_ * (col - row1));
    }
    return c;
}

void MasterIntegrator::arrivals(StateDistribution& mu, double lam) {
    const double l = 0.5 * lam * h_;
    if (l <= 0.0) return;
    // Poisson(l) probabilities until the terms are negligible; p0 absorbs the
    // remainder so each row's mass is conserved.
    pois_.clear();
    double p = std::exp(-l);
    pois_.push_back(p);
    for (int a = 1; a < 200; ++a) {
        p *= l / a;
        if (p < 1e-20 && a > l) break;
        pois_.push_back(p);
    }
    double rest = 0.0;
    for (std::size_t a = 1; a < pois_.size(); ++a) rest += pois_[a];
    pois_[0] = 1.0 - rest;
    const int A = static_cast<int>(pois_.size()) - 1;
    const std::size_t K = K_;
    const int top = std::min(mu.top, n_max_);
    const int new_top = std::min(n_max_, std::max(top, 1) + A);
    std::fill(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(std::max(buf_top_, new_top) * K), 0.0);
    for (int n = 1; n <= top; ++n) {
        const double* src = &mu.m[static_cast<std::size_t>(n - 1) * K];
        bool any = false;
        for (std::size_t k = 0; k < K; ++k)
            if (src[k] != 0.0) {
                any = true;
                break;
            }
        if (!any) continue;
        for (int a = 0; a <= A; ++a) {
            int j = n + a;
            const double pa = pois_[static_cast<std::size_t>(a)];
            if (j > n_max_) {
                j = n_max_;
                for (std::size_t k = 0; k < K; ++k) mu.n_clipped += src[k] * pa;
            }
            double* dst = &buf_[static_cast<std::size_t>(j - 1) * K];
            for (std::size_t k = 0; k < K; ++k) dst[k] += src[k] * pa;
        }
    }
    const double idle = mu.idle;
    for (int a = 1; a <= A; ++a) {
        const int j = std::min(a, n_max_);
        buf_[static_cast<std::size_t>(j - 1) * K] += idle * pois_[static_cast<std::size_t>(a)];
    }
    mu.idle = idle * pois_[0];
    mu.top = new_top;
    mu.m.swap(buf_);
    buf_top_ = top;
}

void MasterIntegrator::service(StateDistribution& mu, double& completions) {
    const std::size_t K = K_;
    const int top = std::min(mu.top, n_max_);
    std::fill(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(std::max(buf_top_, top) * K), 0.0);
    auto deposit = [&](int j, double x) {
        double* row = &buf_[static_cast<std::size_t>(j - 1) * K];
        if (K == 1) {
            row[0] += x;
        } else {
            row[0] += 0.5 * x;
            row[1] += 0.5 * x;
        }
    };
    double idle_gain = 0.0;
    for (int n = 1; n <= top; ++n) {
        const double* src = &mu.m[static_cast<std::size_t>(n - 1) * K];
        double* dst = &buf_[static_cast<std::size_t>(n - 1) * K];
        double done = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double x = src[k];
            if (x == 0.0) continue;
            const std::size_t nk = k + 1 < K ? k + 1 : K - 1;
            dst[nk] += x * sigma_[k];
            done += x * dcomp_[k];
        }
        if (done == 0.0) continue;
        completions += done;
        if (n == 1) {
            idle_gain += done;
            continue;
        }
        const double second = done * r_;
        completions += second;
        deposit(n - 1, done - second);
        if (n == 2)
            idle_gain += second;
        else
            deposit(n - 2, second);
    }
    mu.idle += idle_gain;
    mu.m.swap(buf_);
    buf_top_ = top;
    prune(mu);
}

void MasterIntegrator::prune(StateDistribution& mu) const {
    // Negligible top rows are folded into the row below, keeping mass exact.
    const std::size_t K = K_;
    while (mu.top > 1) {
        double* row = &mu.m[static_cast<std::size_t>(mu.top - 1) * K];
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += row[k];
        if (s > 1e-25) break;
        double* below = row - K;
        for (std::size_t k = 0; k < K; ++k) {
            below[k] += row[k];
            row[k] = 0.0;
        }
        --mu.top;
    }
}

double MasterIntegrator::advance(StateDistribution& mu, double lam) {
    if (mu.K != K_ || mu.n_max != n_max_ || std::abs(mu.h - h_) > 1e-15)
        throw std::invalid_argument("MasterIntegrator: state grid does not match the integrator");
    if (buf_.size() != mu.m.size()) {
        buf_.assign(mu.m.size(), 0.0);
        buf_top_ = 0;
    }
    double completions = 0.0;
    arrivals(mu, lam);
    service(mu, completions);
    arrivals(mu, lam);
    return completions;
}

// ---------------------------------------------------------------- trajectories

MasterTrajectory evolve_master(const StateDistribution& mu0, const RateFunction& lam, const ServiceDistribution& d,
                               double horizon, const MasterOptions& opt) {
    if (!(horizon >= 0.0)) throw std::invalid_argument("evolve_master: horizon must be >= 0");
    if (std::abs(mu0.total() - 1.0) > 1e-9) throw std::invalid_argument("evolve_master: initial state is not normalized");
    MasterIntegrator integ(d, mu0.h, mu0.n_max);
    MasterTrajectory tr;
    tr.h = mu0.h;
    StateDistribution mu = mu0;
    const auto steps = static_cast<std::size_t>(std::llround(horizon / mu0.h));
    tr.b.reserve(steps);
    tr.N.reserve(steps);
    tr.idle.reserve(steps);
    const std::size_t snap = opt.snapshot_every > 0.0
                                 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opt.snapshot_every / mu0.h)))
                                 : 0;
    if (snap) {
        tr.snapshot_times.push_back(0.0);
        tr.snapshots.push_back(mu);
    }
    for (std::size_t k = 0; k < steps; ++k) {
        const double t0 = mu0.h * static_cast<double>(k);
        const double rate = lam.average(t0, t0 + mu0.h);
        const double c = integ.advance(mu, rate);
        tr.b.push_back(c / mu0.h);
        tr.N.push_back(mu.mean_queue());
        tr.idle.push_back(mu.idle);
        const double drift = std::abs(mu.total() - 1.0);
        tr.max_mass_drift = std::max(tr.max_mass_drift, drift);
        if (drift > 1e-6) throw IntegratorError("evolve_master: mass drift exceeds 1e-6; reduce the step");
        if (snap && (k + 1) % snap == 0) {
            tr.snapshot_times.push_back(mu0.h * static_cast<double>(k + 1));
            tr.snapshots.push_back(mu);
        }
    }
    tr.final_state = std::move(mu);
    return tr;
}

StateDistribution stationary_state(double c, const ServiceDistribution& d, const StationaryOptions& opt,
                                   const StateDistribution* warm) {
    if (!(c >= 0.0) || !(c < 1.0)) throw std::invalid_argument("stationary_state: need 0 <= c < 1");
    StateDistribution mu = warm ? *warm : StateDistribution::idle_state(d, opt.master);
    MasterIntegrator integ(d, mu.h, mu.n_max);
    const auto per_unit = static_cast<std::size_t>(std::llround(1.0 / mu.h));
    double gap = 1.0;
    for (double t = 0.0; t < opt.max_time; t += 1.0) {
        StateDistribution prev = mu;
        for (std::size_t k = 0; k < per_unit; ++k) integ.advance(mu, c);
        gap = total_variation(prev, mu);
        if (gap < opt.tv_tol) return mu;
    }
    throw NonConvergence("stationary_state: no convergence within the time budget", gap);
}

}  // namespace phlab
