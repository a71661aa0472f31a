#pragma once

#include "phlab/dist.hpp"
#include "phlab/queue.hpp"
#include "phlab/rng.hpp"
#include "phlab/stats.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace phlab {

/// A hypothesis of a theorem is not met; the verdict is withheld.
struct PreconditionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

enum class FamilyKind {
    generic,
    shifted,     ///< q_x(t) = u_x(t − (s − {x})) with integer shift s
    dyadic_trap, ///< the family that keeps the leftward walk in (0, 1] until it jumps over [−T, 0]
};

/// Family of step densities q_x on t ≥ 0. Every q_x is described by its
/// distribution function, so cell masses are exact and sum to one.
struct KernelFamily {
    std::string name;
    double support = 1.0;   ///< q_x(t) = 0 for t > support; infinite for walker-only families
    bool stationary = false;
    std::function<double(double x, double t)> cdf;
    std::function<double(double x, Rng&)> sample;
    double floor = 0.0;     ///< declared κ on [0, support]
    double cap = std::numeric_limits<double>::infinity();  ///< declared bound on q_x(t) near 0
    double beta = 0.0;      ///< moment order with ∫ t^β q_x ≤ moment_B
    double moment_B = 0.0;
    FamilyKind kind = FamilyKind::generic;
    int shift = 0;          ///< integer shift of a shifted family
    std::function<double(double x, Rng&)> base_sample;  ///< u_x for shifted families
    double trap_T = 0.0;

    /// Mass of q_x on [a, b].
    double mass(double x, double a, double b) const { return cdf(x, b) - cdf(x, a); }
};

/// q_x = p truncated at d.tail_cut and renormalized, so the support is compact.
KernelFamily stationary_family(const ServiceDistribution& d);
/// Untruncated exponential steps, for walkers.
KernelFamily exponential_family(double rate = 1.0);
KernelFamily uniform_family();
/// q_x = w(x)·uniform[0,1] + (1 − w(x))·triangular[0,1], w(x) = floor + (1 − floor)(1 + sin x)/2.
KernelFamily uniform_triangular_family(double floor = 0.1);
/// Uniform on [0, 1] \ (a, b), renormalized: its density vanishes on a subinterval.
KernelFamily gapped_family(double a = 0.4, double b = 0.6);
/// u_x(s) = 1 + amp·sin(2πs + x) on [0, 1], shifted by (shift − {x}).
KernelFamily shifted_family(int shift, double amp = 0.5);
KernelFamily dyadic_trap_family(double T);
/// Lomax (Pareto II) steps with tail (1 + t/scale)^{−alpha}.
KernelFamily lomax_family(double alpha, double scale);
/// x-dependent mixture of exp(1) and Lomax(alpha, scale) steps, both with finite moment of order 2.
KernelFamily exp_lomax_family(double alpha, double scale);
/// Names: stationary:<service law>, exp:<rate>, uniform, uniform-triangular:<floor>, gapped:<a>,<b>, shift:<s>[,<amp>],
/// trap:<T>, lomax:<alpha>,<scale>, exp-lomax:<alpha>,<scale>.
KernelFamily parse_family(const std::string& spec);

// ---------------------------------------------------------------- iteration

enum class IterationMode {
    jacobi,        ///< f_{n+1} = [f_n ∗ q_x](x): the monotone construction
    gauss_seidel,  ///< in-place sweep in increasing x with the t = 0 cell solved exactly
};

/// Grid data for f(x) = [f ∗ q_x](x). Boundary cell j covers [−(j+1)h, −jh)
/// with constant value phi[j]; f[i] is the value at x = i·h.
struct IterationState {
    double h = 0.01;
    std::vector<double> phi;
    std::vector<double> f;
    int iteration = 0;
    std::vector<double> increments;  ///< sup-norm change per sweep
    bool monotone = true;            ///< no node ever decreased (Jacobi from f ≡ 0)

    static IterationState make(const std::function<double(double)>& boundary, double boundary_length, double x_max,
                               double h = 0.01);
    double x(std::size_t i) const { return h * static_cast<double>(i); }
};

/// Runs up to `steps` sweeps, stopping early once a sweep changes f by less
/// than tol. Throws PreconditionError when |phi| exceeds bound.
IterationState iterate_self_averaging(IterationState state, const KernelFamily& family, int steps,
                                      IterationMode mode = IterationMode::jacobi, double tol = 1e-13,
                                      double bound = 1e6);

/// sup_x |f(x) − [f ∗ q_x](x)| on the grid.
double fixed_point_residual(const IterationState& state, const KernelFamily& family);

struct RenewalSolution {
    Table f;        ///< on [0, x_max]
    double limit = 0.0;  ///< (1/m)∫_0^∞ [φ ∗ p]
    double mean = 1.0;
    bool tail_ok = true;
};

/// f = φ∗p + (φ∗p|_{x≥0}) ∗ s with s the renewal density of d.
RenewalSolution renewal_solution(const std::function<double(double)>& phi, double boundary_length,
                                 const ServiceDistribution& d, double x_max);

struct FamilyCheck {
    bool support_ok = false;     ///< i) mass one on [0, T] and none beyond
    bool continuity_ok = false;  ///< ii) cell masses move by O(δ) when x moves by δ
    bool floor_ok = false;       ///< iii) κ ≤ q_x ≤ C with κ > 0
    double min_density = 0.0;
    double max_density = 0.0;
    double continuity = 0.0;     ///< max cell-mass change per unit x
    bool all() const { return support_ok && continuity_ok && floor_ok; }
};
FamilyCheck check_finite_range(const KernelFamily& family, double x_max, double h = 0.01);

enum class Verdict { relaxes, inconclusive, withheld };
std::string verdict_name(Verdict v);

struct FiniteRangeReport {
    FamilyCheck check;
    Verdict verdict = Verdict::withheld;
    double settle_x = -1.0;     ///< first x from which every window has osc < threshold
    double final_osc = 0.0;
    double limit = 0.0;
    double residual = 0.0;
    std::vector<double> window_x;
    std::vector<double> osc;    ///< sup − inf of f over [x, x + 2T]
    bool osc_monotone = false;
    IterationState state;
};

FiniteRangeReport finite_range_check(const IterationState& init, const KernelFamily& family, double threshold = 1e-4,
                                     double x_budget = 100.0);

/// For each width W, a window of width W where f is within tol of its tail
/// limsup, and one where it is within tol of its tail liminf.
struct LemmaTScan {
    std::vector<double> widths;
    std::vector<bool> upper_found, lower_found;
    bool all() const;
};
LemmaTScan lemma_t_scan(const IterationState& s, const std::vector<double>& widths, double tail_from, double tol = 1e-3);

// ---------------------------------------------------------------- infinite-range conditions

/// K(ε): sup over x in the grid of the (1 − ε)-quantile of q_x.
double compactness_profile(const KernelFamily& family, double eps, const std::vector<double>& xs);
/// F_T(δ): inf over the grid of the q_x-mass of the lowest-density set of measure δ in [0, T].
double mass_floor_profile(const KernelFamily& family, double T, double delta, const std::vector<double>& xs,
                          double h = 0.01);

/// Bounds k ≤ q_{x1}(t)/q_{x2}(t) ≤ K over grid pairs where a value is positive.
/// Exploratory: a sufficient condition conjectured for a local limit theorem.
struct RatioCondition {
    double k = 0.0;
    double K = 0.0;
    bool holds = false;  ///< 0 < k and K < ∞
};
RatioCondition ratio_condition(const KernelFamily& family, const std::vector<double>& xs, double h = 0.01);

// ---------------------------------------------------------------- walkers

/// Position n + frac with frac in [0, 1), used where localization must be exact.
struct UnitPosition {
    std::int64_t n = 0;
    double frac = 0.0;
    double value() const { return static_cast<double>(n) + frac; }
};

struct LocalizationReport {
    std::uint64_t steps = 0;
    std::uint64_t violations = 0;   ///< positions outside [⌊x⌋ + k·s, ⌊x⌋ + k·s + 1]
    std::vector<std::uint64_t> parity_counts;  ///< integer parts modulo 2
    bool parity_preserved = false;
    UnitPosition final_position;
};

/// Rightward walk S̄_{k,x} of a shifted family, in exact unit-position arithmetic.
LocalizationReport localize_shifted(const KernelFamily& family, double x, std::uint64_t steps, std::uint64_t seed);

/// Variance of S̄_{n,x} across replicas at the listed n (exploratory CLT probe).
struct CltProbe {
    std::vector<int> n;
    std::vector<double> variance;
    double slope = 0.0;   ///< least-squares slope of variance against n
};
CltProbe clt_probe(const KernelFamily& family, double x, const std::vector<int>& ns, int replicas, std::uint64_t seed);

struct WalkerSpec {
    KernelFamily family;
    double x = 1.0;
    double T = 10.0;
    std::uint64_t max_steps = 1'000'000;
};

struct AbsorptionEstimate {
    double T = 0.0;
    std::uint64_t replicas = 0;
    std::uint64_t visits = 0;
    std::uint64_t misses = 0;
    std::uint64_t undecided = 0;   ///< still positive after max_steps
    Proportion gamma;              ///< visit probability with a Wilson interval
    double gamma_bound = 0.0;      ///< 1 − B·K(C)·Σ (n+T)^{−β} when β > 1, else 0
    std::uint64_t total_steps = 0;
    int min_width_log2 = 0;        ///< trap family: log2 of the narrowest step support met
};

/// Leftward walk X_{k+1} = X_k − t with t ~ q_{X_k}, until it lands in
/// [−T, 0] (visit) or below −T (miss). Throws PreconditionError when the
/// family declares neither β > 1 nor a finite cap and is not a trap family.
AbsorptionEstimate walker_and_absorption(const WalkerSpec& spec, std::uint64_t replicas, std::uint64_t seed,
                                         int threads = 1);

// ---------------------------------------------------------------- segment lemma

struct Segment {
    double a = 0.0;
    double b = 0.0;
};

struct CalculResult {
    Segment segment;                 ///< [A, C]
    std::vector<Segment> maximal;    ///< disjoint maximal segments with the domination property
    double length_bound = 0.0;       ///< (ε/L)(B − A)
    bool length_ok = false;          ///< C − A > bound
    bool domination_ok = false;      ///< χ([s, C]) ≥ (1 − 2ε)(C − s) at every grid s, by direct summation
    double worst_margin = 0.0;
};

/// chi is read on [A, B] as a piecewise-constant density. Throws
/// PreconditionError when χ([A,B]) < (1 − ε)(B − A) or the density leaves [0, L].
CalculResult calcul_segment(const RateFunction& chi, double A, double B, double eps, double L);

}  // namespace phlab
