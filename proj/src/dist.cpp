#include "phlab/dist.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace phlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double integrate(const std::function<double(double)>& f, double a, double b) {
    using boost::math::quadrature::gauss_kronrod;
    return gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-13);
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("distribution spec: bad number '" + item + "'");
        }
        while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
        if (used != item.size()) throw std::invalid_argument("distribution spec: bad number '" + item + "'");
        out.push_back(v);
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------- Table

double Table::at(double x) const {
    if (v.empty()) return 0.0;
    const double u = (x - x0) / h;
    if (u < 0.0 || u > static_cast<double>(v.size() - 1)) return 0.0;
    const std::size_t k = std::min(static_cast<std::size_t>(u), v.size() - 1);
    if (k + 1 >= v.size()) return v.back();
    const double f = u - static_cast<double>(k);
    return v[k] * (1.0 - f) + v[k + 1] * f;
}

std::vector<double> quadrature_weights(std::size_t n, QuadratureRule rule) {
    std::vector<double> w(n + 1, 1.0);
    if (n == 0) {
        w[0] = 0.0;
        return w;
    }
    if (rule == QuadratureRule::gregory && n >= 5) {
        const double e[3] = {3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0};
        for (int i = 0; i < 3; ++i) {
            w[i] = e[i];
            w[n - i] = e[i];
        }
        return w;
    }
    w[0] = 0.5;
    w[n] = 0.5;
    return w;
}

double Table::integral() const {
    if (v.size() < 2) return 0.0;
    const auto w = quadrature_weights(v.size() - 1, QuadratureRule::gregory);
    double s = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) s += w[k] * v[k];
    return s * h;
}

double Table::moment(double a) const {
    if (v.size() < 2) return 0.0;
    const auto w = quadrature_weights(v.size() - 1, QuadratureRule::gregory);
    double s = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        const double xk = x(k);
        s += w[k] * v[k] * (a == 0.0 ? 1.0 : std::pow(xk, a));
    }
    return s * h;
}

std::vector<double> grid_convolve(const std::vector<double>& f, const std::vector<double>& g, double h,
                                  QuadratureRule rule, std::size_t out_len) {
    std::vector<double> out(out_len, 0.0);
    const std::size_t lf = f.size(), lg = g.size();
    for (std::size_t k = 1; k < out_len; ++k) {
        // Terms with j > lf-1 or k-j > lg-1 vanish (tables are zero beyond their end).
        const std::size_t jlo = k >= lg ? k - (lg - 1) : 0;
        const std::size_t jhi = std::min(k, lf - 1);
        if (jlo > jhi) continue;
        double s = 0.0;
        for (std::size_t j = jlo; j <= jhi; ++j) s += f[j] * g[k - j];
        // End corrections only touch the first/last three nodes of [0, k].
        const bool greg = rule == QuadratureRule::gregory && k >= 5;
        auto term = [&](std::size_t j) {
            return (j < lf && k - j < lg) ? f[j] * g[k - j] : 0.0;
        };
        if (greg) {
            const double e[3] = {3.0 / 8.0 - 1.0, 7.0 / 6.0 - 1.0, 23.0 / 24.0 - 1.0};
            for (std::size_t i = 0; i < 3; ++i) s += e[i] * (term(i) + term(k - i));
        } else {
            s -= 0.5 * (term(0) + term(k));
        }
        out[k] = s * h;
    }
    return out;
}

// ---------------------------------------------------------------- families

std::string family_name(Family f) {
    switch (f) {
        case Family::exponential: return "exponential";
        case Family::gamma: return "gamma";
        case Family::lognormal_truncated: return "lognormal-truncated";
        case Family::mixture: return "mixture";
        case Family::tabulated: return "tabulated-density";
    }
    return "unknown";
}

ServiceDistribution ServiceDistribution::exponential(double rate, double grid_step) {
    if (!(rate > 0.0)) throw std::invalid_argument("exponential: rate must be positive");
    ServiceDistribution d;
    d.family = Family::exponential;
    d.params = {rate};
    d.grid_step = grid_step;
    d.finalize();
    return d;
}

ServiceDistribution ServiceDistribution::gamma(double shape, double rate, double grid_step) {
    if (!(shape > 0.0) || !(rate > 0.0)) throw std::invalid_argument("gamma: shape and rate must be positive");
    ServiceDistribution d;
    d.family = Family::gamma;
    d.params = {shape, rate};
    d.grid_step = grid_step;
    d.finalize();
    return d;
}

ServiceDistribution ServiceDistribution::lognormal_truncated(double mu, double sigma, double cut, double grid_step) {
    if (!(sigma > 0.0) || !(cut > 0.0)) throw std::invalid_argument("lognormal: sigma and cut must be positive");
    ServiceDistribution d;
    d.family = Family::lognormal_truncated;
    d.params = {mu, sigma, cut};
    d.grid_step = grid_step;
    d.lognormal_norm_ = norm_cdf((std::log(cut) - mu) / sigma);
    if (d.lognormal_norm_ <= 0.0) throw std::invalid_argument("lognormal: truncation removes all mass");
    d.finalize();
    return d;
}

ServiceDistribution ServiceDistribution::mixture(const std::vector<double>& triples, double grid_step) {
    if (triples.empty() || triples.size() % 3 != 0)
        throw std::invalid_argument("mixture: params must be (weight, shape, rate) triples");
    double wsum = 0.0;
    for (std::size_t i = 0; i < triples.size(); i += 3) {
        if (!(triples[i] > 0.0) || !(triples[i + 1] > 0.0) || !(triples[i + 2] > 0.0))
            throw std::invalid_argument("mixture: weights, shapes and rates must be positive");
        wsum += triples[i];
    }
    ServiceDistribution d;
    d.family = Family::mixture;
    d.params = triples;
    for (std::size_t i = 0; i < d.params.size(); i += 3) d.params[i] /= wsum;
    d.grid_step = grid_step;
    d.finalize();
    return d;
}

ServiceDistribution ServiceDistribution::tabulated(const std::vector<double>& t, const std::vector<double>& p,
                                                   double grid_step) {
    if (t.size() != p.size() || t.size() < 2) throw std::invalid_argument("tabulated: need matching t, p columns");
    if (t.front() != 0.0) throw std::invalid_argument("tabulated: first abscissa must be 0");
    for (std::size_t i = 1; i < t.size(); ++i)
        if (!(t[i] > t[i - 1])) throw std::invalid_argument("tabulated: abscissae must increase");
    for (double v : p)
        if (v < 0.0 || !std::isfinite(v)) throw std::invalid_argument("tabulated: density must be finite, >= 0");
    ServiceDistribution d;
    d.family = Family::tabulated;
    d.grid_step = grid_step;
    d.tab_t_ = t;
    d.tab_p_ = p;
    d.tab_cdf_.assign(t.size(), 0.0);
    for (std::size_t i = 1; i < t.size(); ++i)
        d.tab_cdf_[i] = d.tab_cdf_[i - 1] + 0.5 * (p[i] + p[i - 1]) * (t[i] - t[i - 1]);
    const double total = d.tab_cdf_.back();
    if (!(total > 0.0)) throw std::invalid_argument("tabulated: density has zero mass");
    for (auto& v : d.tab_p_) v /= total;
    for (auto& v : d.tab_cdf_) v /= total;
    d.finalize();
    return d;
}

ServiceDistribution ServiceDistribution::parse(const std::string& spec, double grid_step) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("distribution spec '" + spec + "' lacks ':'");
    const std::string name = spec.substr(0, colon);
    const std::string rest = spec.substr(colon + 1);
    if (name == "table") {
        std::ifstream in(rest);
        if (!in) throw std::invalid_argument("tabulated density file not readable: " + rest);
        std::vector<double> t, p;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto comma = line.find(',');
            if (comma == std::string::npos) throw std::invalid_argument("tabulated density: expected t,p rows");
            try {
                t.push_back(std::stod(line.substr(0, comma)));
                p.push_back(std::stod(line.substr(comma + 1)));
            } catch (const std::exception&) {
                if (t.empty() && p.empty()) continue;  // header row
                throw std::invalid_argument("tabulated density: bad row '" + line + "'");
            }
        }
        return tabulated(t, p, grid_step);
    }
    const auto v = parse_list(rest);
    if (name == "exp" || name == "exponential") {
        if (v.size() != 1) throw std::invalid_argument("exp takes one parameter (rate)");
        return exponential(v[0], grid_step);
    }
    if (name == "gamma") {
        if (v.size() != 2) throw std::invalid_argument("gamma takes two parameters (shape, rate)");
        return gamma(v[0], v[1], grid_step);
    }
    if (name == "lognormal") {
        if (v.size() != 3) throw std::invalid_argument("lognormal takes three parameters (mu, sigma, cut)");
        return lognormal_truncated(v[0], v[1], v[2], grid_step);
    }
    if (name == "mixture") return mixture(v, grid_step);
    throw std::invalid_argument("unknown distribution family '" + name + "'");
}

std::string ServiceDistribution::spec() const {
    std::ostringstream os;
    os.precision(17);
    switch (family) {
        case Family::exponential: os << "exp:"; break;
        case Family::gamma: os << "gamma:"; break;
        case Family::lognormal_truncated: os << "lognormal:"; break;
        case Family::mixture: os << "mixture:"; break;
        case Family::tabulated: return "table:<inline>";
    }
    for (std::size_t i = 0; i < params.size(); ++i) os << (i ? "," : "") << params[i];
    return os.str();
}

double ServiceDistribution::pdf(double t) const {
    if (t < 0.0) return 0.0;
    switch (family) {
        case Family::exponential: return params[0] * std::exp(-params[0] * t);
        case Family::gamma: {
            const double k = params[0], r = params[1];
            if (t == 0.0) return k == 1.0 ? r : (k < 1.0 ? kInf : 0.0);
            return r * boost::math::gamma_p_derivative(k, r * t);
        }
        case Family::lognormal_truncated: {
            const double mu = params[0], s = params[1], cut = params[2];
            if (t <= 0.0 || t > cut) return 0.0;
            const double z = (std::log(t) - mu) / s;
            return std::exp(-0.5 * z * z) / (t * s * std::sqrt(2.0 * M_PI)) / lognormal_norm_;
        }
        case Family::mixture: {
            double s = 0.0;
            for (std::size_t i = 0; i < params.size(); i += 3) {
                const double w = params[i], k = params[i + 1], r = params[i + 2];
                if (t == 0.0)
                    s += w * (k == 1.0 ? r : (k < 1.0 ? kInf : 0.0));
                else
                    s += w * r * boost::math::gamma_p_derivative(k, r * t);
            }
            return s;
        }
        case Family::tabulated: {
            if (t > tab_t_.back()) return 0.0;
            const auto it = std::upper_bound(tab_t_.begin(), tab_t_.end(), t);
            const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - tab_t_.begin()), tab_t_.size() - 1);
            const std::size_t j = i - 1;
            const double f = (t - tab_t_[j]) / (tab_t_[i] - tab_t_[j]);
            return tab_p_[j] * (1.0 - f) + tab_p_[i] * f;
        }
    }
    return 0.0;
}

double ServiceDistribution::survival(double t) const {
    if (t <= 0.0) return 1.0;
    switch (family) {
        case Family::exponential: return std::exp(-params[0] * t);
        case Family::gamma: return boost::math::gamma_q(params[0], params[1] * t);
        case Family::lognormal_truncated: {
            const double mu = params[0], s = params[1], cut = params[2];
            if (t >= cut) return 0.0;
            const double zt = (std::log(t) - mu) / s, zc = (std::log(cut) - mu) / s;
            const double tail = 0.5 * (std::erfc(-zc / std::sqrt(2.0)) - std::erfc(-zt / std::sqrt(2.0)));
            return std::max(0.0, tail / lognormal_norm_);
        }
        case Family::mixture: {
            double s = 0.0;
            for (std::size_t i = 0; i < params.size(); i += 3)
                s += params[i] * boost::math::gamma_q(params[i + 1], params[i + 2] * t);
            return s;
        }
        case Family::tabulated: {
            if (t >= tab_t_.back()) return 0.0;
            const auto it = std::upper_bound(tab_t_.begin(), tab_t_.end(), t);
            const std::size_t i = static_cast<std::size_t>(it - tab_t_.begin());
            const std::size_t j = i - 1;
            const double dt = t - tab_t_[j];
            const double slope = (tab_p_[i] - tab_p_[j]) / (tab_t_[i] - tab_t_[j]);
            const double partial = tab_p_[j] * dt + 0.5 * slope * dt * dt;
            return std::max(0.0, 1.0 - (tab_cdf_[j] + partial));
        }
    }
    return 0.0;
}

double ServiceDistribution::cdf(double t) const { return t <= 0.0 ? 0.0 : 1.0 - survival(t); }

double ServiceDistribution::hazard(double t) const {
    if (family == Family::exponential) return params[0];
    const double s = survival(t);
    if (s < 1e-300) return hazard_cap;
    return pdf(t) / s;
}

Evaluation ServiceDistribution::evaluate(double t) const {
    if (t < 0.0) throw DomainError("evaluate: negative time");
    Evaluation e;
    e.pdf = pdf(t);
    e.cdf = cdf(t);
    e.hazard = hazard(t);
    return e;
}

Evaluation evaluate(const ServiceDistribution& d, double t) { return d.evaluate(t); }

void ServiceDistribution::finalize() {
    const double h = grid_step;
    if (!(h > 0.0)) throw std::invalid_argument("grid_step must be positive");
    // Support end, if bounded.
    double support_end = kInf;
    if (family == Family::lognormal_truncated) support_end = params[2];
    if (family == Family::tabulated) support_end = tab_t_.back();

    // tail_cut: first t with survival < 1e-8 (or the support end).
    {
        double hi = 1.0;
        while (survival(hi) >= 1e-8 && hi < 1e6) hi *= 2.0;
        double lo = 0.0;
        for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (survival(mid) < 1e-8 ? hi : lo) = mid;
        }
        tail_cut = std::min(hi, support_end);
    }

    // Mean and the (2+δ)-moment.
    switch (family) {
        case Family::exponential: mean_ = 1.0 / params[0]; break;
        case Family::gamma: mean_ = params[0] / params[1]; break;
        case Family::mixture:
            mean_ = 0.0;
            for (std::size_t i = 0; i < params.size(); i += 3) mean_ += params[i] * params[i + 1] / params[i + 2];
            break;
        case Family::lognormal_truncated:
            mean_ = integrate([&](double t) { return survival(t); }, 0.0, support_end);
            break;
        case Family::tabulated: {
            mean_ = 0.0;
            for (std::size_t i = 1; i < tab_t_.size(); ++i) {
                // ∫ t p(t) over a segment with linear p, exactly.
                const double a = tab_t_[i - 1], b = tab_t_[i], pa = tab_p_[i - 1], pb = tab_p_[i];
                const double m = (pb - pa) / (b - a);
                const double c = pa - m * a;
                mean_ += c * (b * b - a * a) / 2.0 + m * (b * b * b - a * a * a) / 3.0;
            }
            break;
        }
    }
    {
        const double e = 2.0 + moment_delta;
        auto integrand = [&](double t) { return e * std::pow(t, e - 1.0) * survival(t); };
        if (std::isfinite(support_end)) {
            moment_bound = integrate(integrand, 0.0, support_end);
        } else {
            // Split at the mean scale for accuracy, then the infinite tail.
            moment_bound = integrate(integrand, 0.0, tail_cut) + integrate(integrand, tail_cut, kInf);
        }
    }

    // Hazard cap and limit over the grid.
    const std::size_t K = static_cast<std::size_t>(std::floor(tail_cut / h + 1e-9));
    double hmax = 0.0;
    double hlast = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
        const double t = h * static_cast<double>(k);
        const double s = survival(t);
        if (s < 1e-300) break;
        const double hz = pdf(t) / s;
        if (std::isfinite(hz)) {
            hmax = std::max(hmax, hz);
            hlast = hz;
        }
    }
    switch (family) {
        case Family::exponential: hazard_limit_ = params[0]; break;
        case Family::gamma: hazard_limit_ = params[1]; break;
        case Family::mixture: {
            // The slowest-decaying component dominates the tail.
            double best_rate = kInf, best_shape = 0.0;
            for (std::size_t i = 0; i < params.size(); i += 3) {
                const double k = params[i + 1], r = params[i + 2];
                if (r < best_rate || (r == best_rate && k > best_shape)) {
                    best_rate = r;
                    best_shape = k;
                }
            }
            hazard_limit_ = best_rate;
            break;
        }
        default: hazard_limit_ = hlast; break;
    }
    hazard_cap = std::max(hmax, hazard_limit_);

    // Lipschitz constant of the density (two-sided) and the ratio constant C′.
    {
        const double step = std::max(h, tail_cut / 2000.0);
        const double deltas[] = {h, 2 * h, 5 * h, 0.05, 0.1, 0.25, 0.5, 0.75, 0.99};
        double two_sided = 0.0, ratio = 0.0;
        for (double t = 0.0; t <= tail_cut; t += step) {
            const double pt = pdf(t);
            if (!(pt > 0.0) || !std::isfinite(pt)) continue;
            for (double dl : deltas) {
                for (double sgn : {1.0, -1.0}) {
                    const double dd = sgn * dl;
                    if (t + dd <= 0.0) continue;
                    const double q = pdf(t + dd);
                    if (!std::isfinite(q)) continue;
                    two_sided = std::max(two_sided, std::abs(q - pt) / (pt * dl));
                }
                const double q = pdf(t + dl);
                if (q > 0.0) ratio = std::max(ratio, pt / q);
            }
        }
        lipschitz_C = two_sided;
        ratio_constant_ = ratio;
    }

    // PH class: mean one and positive density on the grid (0, tail_cut].
    bool positive = true;
    for (std::size_t k = 1; k <= K; ++k)
        if (!(pdf(h * static_cast<double>(k)) > 0.0)) {
            positive = false;
            break;
        }
    ph_class_ = positive && std::abs(mean_ - 1.0) <= 1e-6;
}

// ---------------------------------------------------------------- sampling

ServiceSampler::ServiceSampler(const ServiceDistribution& d) : d_(&d) {
    if (d.family == Family::gamma) gammas_.emplace_back(d.params[0], 1.0 / d.params[1]);
    if (d.family == Family::mixture) {
        double c = 0.0;
        for (std::size_t i = 0; i < d.params.size(); i += 3) {
            gammas_.emplace_back(d.params[i + 1], 1.0 / d.params[i + 2]);
            c += d.params[i];
            cumulative_weights_.push_back(c);
        }
    }
}

double ServiceSampler::operator()(Rng& rng) {
    const ServiceDistribution& d = *d_;
    switch (d.family) {
        case Family::exponential: return rng.exponential(d.params[0]);
        case Family::gamma: return gammas_[0](rng);
        case Family::mixture: {
            const double u = rng.uniform() * cumulative_weights_.back();
            std::size_t i = 0;
            while (i + 1 < cumulative_weights_.size() && u > cumulative_weights_[i]) ++i;
            return gammas_[i](rng);
        }
        case Family::lognormal_truncated: {
            for (;;) {
                const double x = std::exp(d.params[0] + d.params[1] * rng.normal());
                if (x <= d.params[2]) return x;
            }
        }
        case Family::tabulated: {
            // Invert the survival function by bisection.
            const double u = rng.uniform();
            double lo = 0.0, hi = d.tail_cut;
            for (int it = 0; it < 64; ++it) {
                const double mid = 0.5 * (lo + hi);
                (d.survival(mid) > u ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        }
    }
    return 0.0;
}

double ServiceDistribution::sample(Rng& rng) const {
    ServiceSampler s(*this);
    return s(rng);
}

double ServiceDistribution::sample_residual(Rng& rng, double tau) const {
    if (tau <= 0.0) return sample(rng);
    if (memoryless()) return rng.exponential(params[0]);
    const double s0 = survival(tau);
    if (!(s0 > 0.0)) throw TailExhausted("sample_residual: survival vanishes at tau");
    const double target = rng.uniform() * s0;
    double hi = 1.0;
    while (survival(tau + hi) > target) {
        hi *= 2.0;
        if (hi > 1e9) break;
    }
    double lo = 0.0;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (survival(tau + mid) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<double> sample(const ServiceDistribution& d, Rng& rng, std::size_t k) {
    std::vector<double> out;
    out.reserve(k);
    ServiceSampler s(d);
    for (std::size_t i = 0; i < k; ++i) out.push_back(s(rng));
    return out;
}

// ---------------------------------------------------------------- residual life

double residual_mean(const ServiceDistribution& d, double tau) {
    if (tau < 0.0) throw DomainError("residual_mean: negative tau");
    if (tau > d.tail_cut) throw TailExhausted("residual_mean: tau beyond tail_cut");
    const double s0 = d.survival(tau);
    if (!(s0 > 0.0)) throw TailExhausted("residual_mean: survival vanishes at tau");
    auto f = [&](double t) { return d.survival(t); };
    double upper = kInf;
    if (d.family == Family::lognormal_truncated) upper = d.params[2];
    if (d.family == Family::tabulated) upper = d.tail_cut;
    double integral = 0.0;
    if (std::isfinite(upper)) {
        integral = integrate(f, tau, upper);
    } else {
        // Finite piece up to a few mean-lengths past tau, then the infinite tail.
        const double mid = std::max(tau, d.tail_cut) + 1.0;
        integral = integrate(f, tau, mid) + integrate(f, mid, kInf);
    }
    return integral / s0;
}

Table conditional_density(const ServiceDistribution& d, double tau) {
    if (tau < 0.0) throw DomainError("conditional_density: negative tau");
    if (tau > d.tail_cut) throw TailExhausted("conditional_density: tau beyond tail_cut");
    const double s0 = d.survival(tau);
    if (!(s0 > 0.0)) throw TailExhausted("conditional_density: survival vanishes at tau");
    Table t;
    t.h = d.grid_step;
    const std::size_t cap = 10'000'000;
    for (std::size_t k = 0; k < cap; ++k) {
        const double x = tau + t.h * static_cast<double>(k);
        t.v.push_back(d.pdf(x) / s0);
        if (d.survival(x) / s0 < 1e-10 && k >= 6) break;
        if (d.survival(x) <= 0.0) break;
    }
    if (!t.v.empty() && !std::isfinite(t.v[0])) t.v[0] = t.v.size() > 1 ? t.v[1] : 0.0;
    return t;
}

// ---------------------------------------------------------------- convolutions

static std::vector<double> pdf_table(const ServiceDistribution& d, std::size_t len) {
    std::vector<double> p(len);
    for (std::size_t k = 0; k < len; ++k) {
        const double v = d.pdf(d.grid_step * static_cast<double>(k));
        p[k] = std::isfinite(v) ? v : 0.0;
    }
    return p;
}

ConvolutionTable convolve_power(const ServiceDistribution& d, int n_max, const ConvolutionOptions& opt) {
    if (n_max < 1) throw std::invalid_argument("convolve_power: n_max must be >= 1");
    const double h = d.grid_step;
    const double x_max = opt.x_max > 0.0 ? opt.x_max : n_max * d.tail_cut;
    const std::size_t len = static_cast<std::size_t>(std::ceil(x_max / h - 1e-9)) + 1;
    if (len * static_cast<std::size_t>(n_max) > opt.budget)
        throw CapacityError("convolve_power: table budget exceeded");
    ConvolutionTable ct;
    ct.order_max = n_max;
    ct.h = h;
    const auto p = pdf_table(d, len);
    ct.tables.push_back(Table{h, 0.0, p});
    for (int n = 2; n <= n_max; ++n) {
        auto next = grid_convolve(ct.tables.back().v, p, h, opt.rule, len);
        for (auto& v : next) v = std::max(0.0, v);
        ct.tables.push_back(Table{h, 0.0, std::move(next)});
    }
    return ct;
}

RenewalDensity renewal_density(const ServiceDistribution& d, double x_max, int n_max) {
    RenewalDensity r;
    r.s.h = d.grid_step;
    if (x_max <= 0.0) return r;
    if (n_max < 1) throw std::invalid_argument("renewal_density: n_max must be >= 1");
    const double h = d.grid_step;
    const std::size_t len = static_cast<std::size_t>(std::ceil(x_max / h - 1e-9)) + 1;
    const auto p = pdf_table(d, len);
    std::vector<double> cur = p;
    std::vector<double> s = p;
    for (int n = 2; n <= n_max; ++n) {
        cur = grid_convolve(cur, p, h, QuadratureRule::gregory, len);
        for (std::size_t k = 0; k < len; ++k) s[k] += cur[k];
    }
    r.n_used = n_max;
    r.s.v = std::move(s);
    // Mass of p^{*n_max} on [0, x_max] bounds the dropped tail together with sup s.
    const double mass = Table{h, 0.0, cur}.integral();
    const double sup_s = *std::max_element(r.s.v.begin(), r.s.v.end());
    r.tail_bound = std::max(0.0, mass) * sup_s;
    r.tail_ok = r.tail_bound < 1e-10;
    return r;
}

// ---------------------------------------------------------------- conditions

bool ClassReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const ConditionCheck& c) { return c.pass; });
}

ClassReport verify_class(const ServiceDistribution& d) {
    ClassReport rep;
    rep.delta = d.moment_delta;
    const double h = d.grid_step;
    const std::size_t K = static_cast<std::size_t>(std::floor(d.tail_cut / h + 1e-9));

    // 1: positive and bounded on the grid.
    {
        ConditionCheck c{1, true, 0.0, ""};
        double pmin = kInf, pmax = 0.0;
        for (std::size_t k = 1; k <= K; ++k) {
            const double v = d.pdf(h * static_cast<double>(k));
            pmin = std::min(pmin, v);
            pmax = std::max(pmax, v);
        }
        c.measured = pmin;
        c.pass = pmin > 0.0 && std::isfinite(pmax);
        std::ostringstream os;
        os << "min p on grid " << pmin << ", max p " << pmax;
        if (d.pdf(0.0) == 0.0) os << "; p(0) = 0 at the boundary";
        c.detail = os.str();
        rep.checks.push_back(c);
    }
    // 2: Lipschitz condition, forward and two-sided constants.
    {
        double fwd = 0.0, two = 0.0;
        const double step = std::max(h, d.tail_cut / 2000.0);
        const double deltas[] = {h, 2 * h, 5 * h, 0.05, 0.1, 0.25, 0.5, 0.75, 0.99};
        for (double t = 0.0; t <= d.tail_cut; t += step) {
            const double pt = d.pdf(t);
            if (!(pt > 0.0) || !std::isfinite(pt)) continue;
            for (double dl : deltas) {
                const double up = d.pdf(t + dl);
                const double f = std::abs(up - pt) / (pt * dl);
                fwd = std::max(fwd, f);
                two = std::max(two, f);
                if (t - dl > 0.0) two = std::max(two, std::abs(d.pdf(t - dl) - pt) / (pt * dl));
            }
        }
        rep.forward_lipschitz = fwd;
        rep.two_sided_lipschitz = two;
        ConditionCheck c{2, std::isfinite(two) && two < 1e6, two, ""};
        std::ostringstream os;
        os << "two-sided constant " << two << ", forward-only constant " << fwd;
        c.detail = os.str();
        rep.checks.push_back(c);
    }
    // 3: uniform (2+δ)-moment of the residual law over a τ grid.
    {
        const double e = 2.0 + d.moment_delta;
        double sup = 0.0;
        const bool bounded = d.family == Family::lognormal_truncated || d.family == Family::tabulated;
        for (int i = 0; i <= 40; ++i) {
            const double tau = 0.9 * d.tail_cut * i / 40.0;
            const double s0 = d.survival(tau);
            if (!(s0 > 1e-300)) continue;
            auto f = [&](double r) { return e * std::pow(r, e - 1.0) * d.survival(tau + r); };
            double m = 0.0;
            if (bounded)
                m = integrate(f, 0.0, d.tail_cut - tau);
            else
                m = integrate(f, 0.0, d.tail_cut) + integrate(f, d.tail_cut, kInf);
            sup = std::max(sup, m / s0);
        }
        ConditionCheck c{3, std::isfinite(sup) && sup < 1e12, sup, ""};
        std::ostringstream os;
        os << "delta " << d.moment_delta << ", sup_tau E(eta|tau)^(2+delta) " << sup << ", M_delta "
           << d.moment_bound;
        c.detail = os.str();
        rep.checks.push_back(c);
    }
    // 4: mean one.
    {
        ConditionCheck c{4, std::abs(d.mean() - 1.0) <= 1e-6, d.mean(), "mean"};
        rep.checks.push_back(c);
    }
    // 5: smooth density, bounded hazard and bounded hazard derivative.
    {
        double d2 = 0.0, dh = 0.0, hz = 0.0;
        for (std::size_t k = 1; k + 1 <= K; ++k) {
            const double t = h * static_cast<double>(k);
            const double a = d.pdf(t - h), b = d.pdf(t), cc = d.pdf(t + h);
            if (std::isfinite(a) && std::isfinite(cc)) d2 = std::max(d2, std::abs(a - 2 * b + cc) / (h * h));
            if (d.survival(t + h) > 1e-300) {
                dh = std::max(dh, std::abs(d.hazard(t + h) - d.hazard(t)) / h);
                hz = std::max(hz, d.hazard(t));
            }
        }
        const bool ok = std::isfinite(d2) && d2 < 1e6 && hz <= d.hazard_cap * (1 + 1e-12) && dh < 1e6;
        ConditionCheck c{5, ok, dh, ""};
        std::ostringstream os;
        os << "sup|p''| " << d2 << ", sup hazard " << hz << " (cap " << d.hazard_cap << "), sup|hazard'| " << dh;
        c.detail = os.str();
        rep.checks.push_back(c);
    }
    // 6: hazard and hazard-derivative limits by two-level Richardson
    // extrapolation over (τ, 2τ, 4τ) at the end of the grid, assuming an
    // expansion in powers of 1/τ. The first-level value is kept for comparison.
    {
        const double t3 = d.tail_cut * 0.9, t2 = t3 / 2.0, t1 = t3 / 4.0;
        auto dhz = [&](double t) { return (d.hazard(t + h) - d.hazard(t - h)) / (2 * h); };
        auto level1 = [](double a, double b) { return 2.0 * b - a; };  // cancels 1/τ
        auto level2 = [&](double a, double b, double c) { return (4.0 * level1(b, c) - level1(a, b)) / 3.0; };
        const double l1 = level1(d.hazard(t2), d.hazard(t3));
        const double l2 = level2(d.hazard(t1), d.hazard(t2), d.hazard(t3));
        const double g1 = level1(dhz(t2), dhz(t3));
        const double g2 = level2(dhz(t1), dhz(t2), dhz(t3));
        // With unit mean, the hazard scale also sets the scale of its time derivative.
        const double tol = 1e-2 * std::max(1.0, std::abs(l2));
        const bool ok = std::isfinite(l2) && std::isfinite(g2) && std::abs(l1 - l2) <= tol && std::abs(g1 - g2) <= tol;
        ConditionCheck c{6, ok, l2, ""};
        std::ostringstream os;
        os << "hazard limit " << l2 << " (prev " << l1 << "), derivative limit " << g2 << " (prev " << g1 << ")";
        c.detail = os.str();
        rep.checks.push_back(c);
    }
    return rep;
}

}  // namespace phlab
