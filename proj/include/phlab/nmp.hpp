#pragma once

#include "phlab/dist.hpp"
#include "phlab/master.hpp"
#include "phlab/queue.hpp"

#include <vector>

namespace phlab {

enum class NmpInit {
    marching,  ///< causal solve λ_k = completions(μ_k, λ_k)/h, then Picard verification
    plateau,   ///< λ_0 ≡ load_to_rate(N(ν)), then damped Picard
};

struct FixedPointConfig {
    double damping = 0.5;
    double tolerance = 1e-8;
    int max_iterations = 500;
    double horizon = 500.0;
    double h = 0.01;
    int n_max = 200;
    double snapshot_every = 50.0;
    NmpInit init = NmpInit::marching;
};

struct NMPSolution {
    RateFunction lam;
    std::vector<double> snapshot_times;
    std::vector<StateDistribution> snapshots;
    std::vector<double> N_trace;     ///< N(μ_t) at the end of each step
    std::vector<double> idle_trace;  ///< idle mass at the end of each step
    int iterations = 0;              ///< evaluations of A(ν, ·)
    double residual = 0.0;           ///< sup |λ − A(ν, λ)|
    std::vector<double> residual_history;
    double N0 = 0.0;
    double h = 0.01;
    bool converged = false;
};

/// Output rate A(ν, λ) per step of the master equation driven by lam.
std::vector<double> output_rate(const StateDistribution& nu, const RateFunction& lam, const ServiceDistribution& d,
                                double horizon);

/// Fixed point λ = A(ν, λ). Throws NonConvergence with the last residual when
/// the damped iteration does not meet the tolerance.
NMPSolution solve_fixed_point(const StateDistribution& nu, const ServiceDistribution& d,
                              const FixedPointConfig& cfg = {});

struct DriftReport {
    double drift = 0.0;            ///< max_t |N(μ_t) − N(ν)| re-evolved at the reference step
    double own_drift = 0.0;        ///< same, from the solution's own trace
    double budget = 1e-3;
    double reference_h = 0.01;
    bool pass = false;
};

/// Re-evolves ν under sol.lam with step reference_h and reports N drift.
DriftReport conservation_check(const NMPSolution& sol, const StateDistribution& nu, const ServiceDistribution& d,
                               double budget = 1e-3, double reference_h = 0.01);

/// c(ρ) solving N(ν_c) = ρ by bisection.
double load_to_rate(double rho, const ServiceDistribution& d, double tol = 1e-3, const MasterOptions& opt = {});

struct RelaxationReport {
    double window = 10.0;
    std::vector<double> T;     ///< window starts
    std::vector<double> osc;   ///< sup − inf of λ over [T, T + window]
    double plateau = 0.0;      ///< mean of λ over the last window
    double eps_prime = 0.0;    ///< 1 − max_s (1/window)∫_s^{s+window} λ
    double idle_floor = 0.0;   ///< min idle mass over [T_idle, horizon]
    double idle_floor_from = 0.0;
    double osc_at(double t) const;
};

RelaxationReport relaxation_diagnostic(const NMPSolution& sol, double window = 10.0, double idle_from = 10.0);

/// Empty start with a prescribed head on [0, T]; beyond T the rate follows
/// λ = A(0, λ). Throws std::invalid_argument when ∫ head exceeds head_cap.
NMPSolution empty_start_scenario(const RateFunction& head, double T, const ServiceDistribution& d,
                                 const FixedPointConfig& cfg = {}, double head_cap = 1e9);

}  // namespace phlab
