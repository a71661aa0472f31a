#pragma once

#include "phlab/rng.hpp"

#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace phlab {

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};
/// Raised when a conditional quantity is requested beyond the survival tail.
struct TailExhausted : std::domain_error {
    using std::domain_error::domain_error;
};
/// Raised when a tabulation would exceed its memory budget.
struct CapacityError : std::length_error {
    using std::length_error::length_error;
};

/// Function tabulated on the uniform grid x0 + k*h.
struct Table {
    double h = 0.01;
    double x0 = 0.0;
    std::vector<double> v;

    std::size_t size() const { return v.size(); }
    double x(std::size_t k) const { return x0 + h * static_cast<double>(k); }
    /// Linear interpolation; zero outside the table.
    double at(double x) const;
    /// Fourth-order (Gregory) quadrature over the whole table.
    double integral() const;
    /// Fourth-order quadrature of x^a * v(x).
    double moment(double a) const;
};

/// Weights of the quadrature rule used for grid convolutions.
enum class QuadratureRule { trapezoid, gregory };

/// Quadrature weights for n+1 equally spaced points (unit spacing).
std::vector<double> quadrature_weights(std::size_t n, QuadratureRule rule);

/// (f*g)(x_k) = ∫_0^{x_k} f(u) g(x_k - u) du on a common grid starting at 0.
std::vector<double> grid_convolve(const std::vector<double>& f, const std::vector<double>& g, double h,
                                  QuadratureRule rule, std::size_t out_len);

enum class Family { exponential, gamma, lognormal_truncated, mixture, tabulated };

std::string family_name(Family f);

struct Evaluation {
    double pdf = 0.0;
    double cdf = 0.0;
    double hazard = 0.0;
};

/// Law of the service time η. Immutable after construction; derived constants
/// (tail_cut, hazard_cap, lipschitz_C, moment_bound) are measured on the grid.
class ServiceDistribution {
public:
    Family family = Family::exponential;
    std::vector<double> params;
    double grid_step = 0.01;
    double tail_cut = 0.0;
    double lipschitz_C = 0.0;
    double moment_delta = 0.5;
    double moment_bound = 0.0;
    double hazard_cap = 0.0;

    static ServiceDistribution exponential(double rate = 1.0, double grid_step = 0.01);
    static ServiceDistribution gamma(double shape, double rate, double grid_step = 0.01);
    /// Lognormal(mu, sigma) conditioned on η ≤ cut.
    static ServiceDistribution lognormal_truncated(double mu, double sigma, double cut, double grid_step = 0.01);
    /// Mixture of gamma components; params are (weight, shape, rate) triples.
    static ServiceDistribution mixture(const std::vector<double>& triples, double grid_step = 0.01);
    /// Density given at points t (increasing, starting at 0), linearly interpolated.
    static ServiceDistribution tabulated(const std::vector<double>& t, const std::vector<double>& p,
                                         double grid_step = 0.01);
    /// Parses "exp:1", "gamma:2,2", "lognormal:mu,sigma,cut", "mixture:w,k,r,...",
    /// "table:<csv path>". Throws std::invalid_argument on malformed specs.
    static ServiceDistribution parse(const std::string& spec, double grid_step = 0.01);

    std::string spec() const;

    double pdf(double t) const;
    double cdf(double t) const;
    double survival(double t) const;
    double hazard(double t) const;
    Evaluation evaluate(double t) const;

    double mean() const { return mean_; }
    /// Limit of the hazard as τ → ∞ (exact where known, else the last grid value).
    double hazard_limit() const { return hazard_limit_; }
    bool memoryless() const { return family == Family::exponential; }
    /// Mean one within 1e−6 and density positive on (0, tail_cut].
    bool ph_class() const { return ph_class_; }
    /// Sup over 0 < t < 1 and grid x of p(x)/p(x+t), the constant C′ of the
    /// conditional-density ratio bound.
    double ratio_constant() const { return ratio_constant_; }

    double sample(Rng& rng) const;
    /// Draw of η − τ given η > τ.
    double sample_residual(Rng& rng, double tau) const;

private:
    void finalize();

    double mean_ = 1.0;
    double hazard_limit_ = 0.0;
    double ratio_constant_ = 0.0;
    bool ph_class_ = false;
    std::vector<double> tab_t_, tab_p_, tab_cdf_;  // tabulated family only
    double lognormal_norm_ = 1.0;
};

/// Sampler holding per-caller distribution objects; cheap to construct.
class ServiceSampler {
public:
    explicit ServiceSampler(const ServiceDistribution& d);
    double operator()(Rng& rng);

private:
    const ServiceDistribution* d_;
    std::vector<std::gamma_distribution<double>> gammas_;
    std::vector<double> cumulative_weights_;
};

Evaluation evaluate(const ServiceDistribution& d, double t);

/// E(η − τ | η > τ) by adaptive quadrature of the survival function.
double residual_mean(const ServiceDistribution& d, double tau);

/// p(τ+t)/(1−F(τ)) on the distribution grid, extended until the conditional
/// survival drops below 1e−10.
Table conditional_density(const ServiceDistribution& d, double tau);

std::vector<double> sample(const ServiceDistribution& d, Rng& rng, std::size_t k);

struct ConvolutionTable {
    int order_max = 0;
    double h = 0.01;
    std::vector<Table> tables;  ///< tables[n-1] holds p^{*n}
};

struct ConvolutionOptions {
    double x_max = 0.0;                 ///< 0 selects order_max * tail_cut
    QuadratureRule rule = QuadratureRule::trapezoid;
    std::size_t budget = 50'000'000;    ///< max total table cells
};

ConvolutionTable convolve_power(const ServiceDistribution& d, int n_max, const ConvolutionOptions& opt = {});

struct RenewalDensity {
    Table s;                  ///< Σ_{n ≤ n_used} p^{*n} on [0, x_max]
    int n_used = 0;
    double tail_bound = 0.0;  ///< sup(s) · Pr{η_1+…+η_n ≤ x_max}
    bool tail_ok = true;      ///< tail_bound < 1e−10
};

/// Renewal density s(x) = Σ p^{*n}(x), computed with fourth-order convolutions.
RenewalDensity renewal_density(const ServiceDistribution& d, double x_max, int n_max);

struct ConditionCheck {
    int condition = 0;
    bool pass = false;
    double measured = 0.0;
    std::string detail;
};

struct ClassReport {
    std::vector<ConditionCheck> checks;  ///< conditions 1..6 in order
    double delta = 0.5;
    double forward_lipschitz = 0.0;      ///< sup over 0 < Δ < 1 only
    double two_sided_lipschitz = 0.0;    ///< sup over 0 < |Δ| < 1
    bool all_pass() const;
};

ClassReport verify_class(const ServiceDistribution& d);

}  // namespace phlab
