#include "phlab/nmp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace phlab {

namespace {

std::size_t steps_for(double horizon, double h) { return static_cast<std::size_t>(std::llround(horizon / h)); }

/// Solves λ = completions(μ, λ)/h for the current step by fixed-point iteration;
/// the map is a contraction with factor O(h).
double self_consistent_rate(const MasterIntegrator& integ, const MasterIntegrator::Prepared& p, double guess) {
    double lam = std::max(0.0, guess);
    for (int it = 0; it < 100; ++it) {
        const double next = integ.completions_for(p, lam) / integ.h();
        if (std::abs(next - lam) <= 1e-15 * std::max(1.0, lam)) return next;
        lam = next;
    }
    return lam;
}

struct Sweep {
    std::vector<double> b, N, idle;
    std::vector<double> snap_t;
    std::vector<StateDistribution> snaps;
};

/// Runs the master equation from nu; rate per step is given by `rate(k, integ, prepared, mu)`.
template <class RateFn>
Sweep sweep(const StateDistribution& nu, const ServiceDistribution& d, std::size_t steps, double snapshot_every,
            RateFn&& rate, std::vector<double>* used_rates) {
    MasterIntegrator integ(d, nu.h, nu.n_max);
    MasterIntegrator::Prepared prep;
    StateDistribution mu = nu;
    Sweep s;
    s.b.reserve(steps);
    s.N.reserve(steps);
    s.idle.reserve(steps);
    const std::size_t snap = snapshot_every > 0.0
                                 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(snapshot_every / nu.h)))
                                 : 0;
    s.snap_t.push_back(0.0);
    s.snaps.push_back(mu);
    if (used_rates) used_rates->resize(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        integ.prepare(mu, prep);
        const double lam = rate(k, integ, prep);
        if (used_rates) (*used_rates)[k] = lam;
        const double c = integ.advance(mu, lam);
        s.b.push_back(c / nu.h);
        s.N.push_back(mu.mean_queue());
        s.idle.push_back(mu.idle);
        if (std::abs(mu.total() - 1.0) > 1e-6) throw IntegratorError("nmp: mass drift exceeds 1e-6");
        if (snap && (k + 1) % snap == 0) {
            s.snap_t.push_back(nu.h * static_cast<double>(k + 1));
            s.snaps.push_back(mu);
        }
    }
    return s;
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
    return s;
}

}  // namespace

std::vector<double> output_rate(const StateDistribution& nu, const RateFunction& lam, const ServiceDistribution& d,
                                double horizon) {
    const std::size_t steps = steps_for(horizon, nu.h);
    auto s = sweep(nu, d, steps, 0.0,
                   [&](std::size_t k, const MasterIntegrator&, const MasterIntegrator::Prepared&) {
                       const double t0 = nu.h * static_cast<double>(k);
                       return lam.average(t0, t0 + nu.h);
                   },
                   nullptr);
    return s.b;
}

NMPSolution solve_fixed_point(const StateDistribution& nu0, const ServiceDistribution& d, const FixedPointConfig& cfg) {
    if (!(cfg.damping > 0.0 && cfg.damping <= 1.0)) throw std::invalid_argument("solve_fixed_point: damping must be in (0, 1]");
    if (!(cfg.h > 0.0) || !(cfg.horizon > 0.0)) throw std::invalid_argument("solve_fixed_point: need h > 0 and horizon > 0");
    if (std::abs(nu0.total() - 1.0) > 1e-9) throw std::invalid_argument("solve_fixed_point: initial state is not normalized");
    // Re-grid when the configured step differs from the state's grid.
    StateDistribution nu = nu0;
    if (std::abs(nu0.h - cfg.h) > 1e-15 || nu0.n_max != cfg.n_max) {
        MasterOptions mo;
        mo.h = cfg.h;
        mo.n_max = cfg.n_max;
        nu = StateDistribution::idle_state(d, mo);
        nu.idle = nu0.idle;
        for (int n = 1; n <= std::min(nu0.n_max, cfg.n_max); ++n)
            for (std::size_t k = 0; k < nu0.K; ++k) {
                const double x = nu0.at(n, k);
                if (x == 0.0) continue;
                const double tau = nu0.h * static_cast<double>(k);
                const std::size_t kk = std::min(nu.K - 1, static_cast<std::size_t>(std::llround(tau / cfg.h)));
                nu.at(n, kk) += x;
            }
    }
    const std::size_t steps = steps_for(cfg.horizon, cfg.h);
    NMPSolution sol;
    sol.h = cfg.h;
    sol.N0 = nu.mean_queue();

    std::vector<double> lam(steps, 0.0);
    Sweep last;
    if (cfg.init == NmpInit::marching) {
        double guess = 0.0;
        last = sweep(nu, d, steps, cfg.snapshot_every,
                     [&](std::size_t, const MasterIntegrator& integ, const MasterIntegrator::Prepared& p) {
                         guess = self_consistent_rate(integ, p, guess);
                         return guess;
                     },
                     &lam);
        sol.iterations = 1;
    } else {
        MasterOptions mo;
        mo.h = cfg.h;
        mo.n_max = cfg.n_max;
        std::fill(lam.begin(), lam.end(), load_to_rate(sol.N0, d, 1e-3, mo));
    }

    // Damped Picard: λ ← (1−γ)λ + γ A(ν, λ). For the marching start this is a
    // verification pass whose residual is at rounding level.
    for (int it = 0; it < cfg.max_iterations; ++it) {
        last = sweep(nu, d, steps, cfg.snapshot_every,
                     [&](std::size_t k, const MasterIntegrator&, const MasterIntegrator::Prepared&) { return lam[k]; },
                     nullptr);
        ++sol.iterations;
        const double res = sup_diff(lam, last.b);
        sol.residual_history.push_back(res);
        sol.residual = res;
        if (res < cfg.tolerance) {
            sol.converged = true;
            break;
        }
        for (std::size_t k = 0; k < steps; ++k) lam[k] = (1.0 - cfg.damping) * lam[k] + cfg.damping * last.b[k];
    }
    if (!sol.converged)
        throw NonConvergence("solve_fixed_point: damped iteration did not reach the tolerance", sol.residual);
    const double cap = std::max(d.hazard_cap, *std::max_element(lam.begin(), lam.end()));
    sol.lam = RateFunction(cfg.h, lam, cap);
    sol.N_trace = std::move(last.N);
    sol.idle_trace = std::move(last.idle);
    sol.snapshot_times = std::move(last.snap_t);
    sol.snapshots = std::move(last.snaps);
    return sol;
}

DriftReport conservation_check(const NMPSolution& sol, const StateDistribution& nu, const ServiceDistribution& d,
                               double budget, double reference_h) {
    DriftReport r;
    r.budget = budget;
    r.reference_h = reference_h;
    for (double n : sol.N_trace) r.own_drift = std::max(r.own_drift, std::abs(n - sol.N0));
    MasterOptions mo;
    mo.h = reference_h;
    mo.n_max = nu.n_max;
    // Re-grid ν at the reference step.
    StateDistribution ref = StateDistribution::idle_state(d, mo);
    ref.idle = nu.idle;
    for (int n = 1; n <= nu.n_max; ++n)
        for (std::size_t k = 0; k < nu.K; ++k) {
            const double x = nu.at(n, k);
            if (x == 0.0) continue;
            const std::size_t kk =
                std::min(ref.K - 1, static_cast<std::size_t>(std::llround(nu.h * static_cast<double>(k) / reference_h)));
            ref.at(n, kk) += x;
        }
    const double N0 = ref.mean_queue();
    const auto tr = evolve_master(ref, sol.lam, d, sol.lam.horizon(), mo);
    for (double n : tr.N) r.drift = std::max(r.drift, std::abs(n - N0));
    r.pass = r.drift <= budget && r.own_drift <= budget;
    return r;
}

double load_to_rate(double rho, const ServiceDistribution& d, double tol, const MasterOptions& opt) {
    if (!(rho >= 0.0)) throw std::invalid_argument("load_to_rate: rho must be >= 0");
    if (rho == 0.0) return 0.0;
    StationaryOptions so;
    so.master = opt;
    double lo = 0.0, hi = 1.0;
    StateDistribution warm = StateDistribution::idle_state(d, opt);
    double best_c = 0.0;
    for (int it = 0; it < 60; ++it) {
        const double c = 0.5 * (lo + hi);
        const StateDistribution nu = stationary_state(c, d, so, &warm);
        const double N = nu.mean_queue();
        best_c = c;
        if (std::abs(N - rho) <= tol * 0.25) break;
        if (N < rho) {
            lo = c;
            warm = nu;  // states at lower load start below the target
        } else {
            hi = c;
        }
        if (hi - lo < 1e-12) break;
    }
    return best_c;
}

double RelaxationReport::osc_at(double t) const {
    for (std::size_t i = 0; i < T.size(); ++i)
        if (T[i] >= t - 1e-9) return osc[i];
    return std::numeric_limits<double>::quiet_NaN();
}

RelaxationReport relaxation_diagnostic(const NMPSolution& sol, double window, double idle_from) {
    RelaxationReport r;
    r.window = window;
    const double h = sol.h;
    const auto& v = sol.lam.values();
    const std::size_t w = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(window / h)));
    const std::size_t per = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(1.0 / h)));
    for (std::size_t s = 0; s + w <= v.size(); s += per) {
        const auto [mn, mx] = std::minmax_element(v.begin() + static_cast<std::ptrdiff_t>(s),
                                                  v.begin() + static_cast<std::ptrdiff_t>(s + w));
        r.T.push_back(h * static_cast<double>(s));
        r.osc.push_back(*mx - *mn);
    }
    if (v.size() >= w) {
        double s = 0.0;
        for (std::size_t k = v.size() - w; k < v.size(); ++k) s += v[k];
        r.plateau = s / static_cast<double>(w);
        // Windowed rate over all starts by a running sum.
        double run = 0.0, best = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) {
            run += v[k];
            if (k >= w) run -= v[k - w];
            if (k + 1 >= w) best = std::max(best, run * h);
        }
        r.eps_prime = 1.0 - best / window;
    }
    r.idle_floor_from = idle_from;
    r.idle_floor = 1.0;
    for (std::size_t k = 0; k < sol.idle_trace.size(); ++k)
        if (h * static_cast<double>(k + 1) >= idle_from) r.idle_floor = std::min(r.idle_floor, sol.idle_trace[k]);
    return r;
}

NMPSolution empty_start_scenario(const RateFunction& head, double T, const ServiceDistribution& d,
                                 const FixedPointConfig& cfg, double head_cap) {
    if (!(T >= 0.0)) throw std::invalid_argument("empty_start_scenario: T must be >= 0");
    if (head.integral(0.0, T) > head_cap) throw std::invalid_argument("empty_start_scenario: head mass exceeds the cap");
    MasterOptions mo;
    mo.h = cfg.h;
    mo.n_max = cfg.n_max;
    const StateDistribution nu = StateDistribution::idle_state(d, mo);
    const std::size_t steps = steps_for(cfg.horizon, cfg.h);
    const std::size_t head_steps = steps_for(T, cfg.h);
    NMPSolution sol;
    sol.h = cfg.h;
    std::vector<double> lam;
    double guess = 0.0;
    auto s = sweep(nu, d, steps, cfg.snapshot_every,
                   [&](std::size_t k, const MasterIntegrator& integ, const MasterIntegrator::Prepared& p) {
                       if (k < head_steps) {
                           const double t0 = cfg.h * static_cast<double>(k);
                           guess = head.average(t0, t0 + cfg.h);
                           return guess;
                       }
                       guess = self_consistent_rate(integ, p, guess);
                       return guess;
                   },
                   &lam);
    sol.iterations = 1;
    // Residual of λ = A(0, λ) on the self-consistent part.
    double res = 0.0;
    for (std::size_t k = head_steps; k < steps; ++k) res = std::max(res, std::abs(lam[k] - s.b[k]));
    sol.residual = res;
    sol.residual_history.push_back(res);
    sol.converged = res < cfg.tolerance;
    sol.N0 = head_steps > 0 && head_steps <= s.N.size() ? s.N[head_steps - 1] : 0.0;
    const double cap = std::max({d.hazard_cap, head.cap(), lam.empty() ? 0.0 : *std::max_element(lam.begin(), lam.end())});
    sol.lam = RateFunction(cfg.h, lam.empty() ? std::vector<double>{0.0} : lam, cap);
    sol.N_trace = std::move(s.N);
    sol.idle_trace = std::move(s.idle);
    sol.snapshot_times = std::move(s.snap_t);
    sol.snapshots = std::move(s.snaps);
    return sol;
}

}  // namespace phlab
