#include "phlab/relax.hpp"

#include "phlab/io.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <sstream>

namespace phlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double frac_part(double x) { return x - std::floor(x); }

std::vector<double> parse_numbers(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double value = 0.0;
        try {
            value = std::stod(item, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("family: bad number '" + item + "'");
        }
        if (used != item.size()) throw std::invalid_argument("family: bad number '" + item + "'");
        v.push_back(value);
    }
    return v;
}

double triangular_cdf(double t) {
    t = clamp01(t);
    return t <= 0.5 ? 2.0 * t * t : 1.0 - 2.0 * (1.0 - t) * (1.0 - t);
}

// U_x(s) for u_x(s) = 1 + amp·sin(2πs + x) on [0, 1].
double wavy_cdf(double x, double s, double amp) {
    s = clamp01(s);
    const double tau = 2.0 * std::numbers::pi;
    return s - amp / tau * (std::cos(tau * s + x) - std::cos(x));
}

double wavy_sample(double x, double amp, Rng& rng) {
    const double tau = 2.0 * std::numbers::pi;
    for (;;) {
        const double s = rng.uniform();
        if (rng.uniform() * (1.0 + amp) <= 1.0 + amp * std::sin(tau * s + x)) return s;
    }
}

double lomax_cdf(double t, double alpha, double scale) {
    return t <= 0.0 ? 0.0 : 1.0 - std::pow(1.0 + t / scale, -alpha);
}

double lomax_sample(double alpha, double scale, Rng& rng) {
    return scale * (std::pow(rng.uniform(), -1.0 / alpha) - 1.0);
}

double lomax_second_moment(double alpha, double scale) {
    return alpha > 2.0 ? 2.0 * scale * scale / ((alpha - 1.0) * (alpha - 2.0)) : kInf;
}

double mix_weight(double x) { return 0.25 + 0.5 * (1.0 + std::sin(x)) / 2.0; }

// Cell masses m_c = ∫_{ch}^{(c+1)h} q_x for all grid x, cached when the
// table fits, recomputed per row otherwise.
class CellMasses {
public:
    CellMasses(const KernelFamily& fam, double h, std::size_t nx) : fam_(fam), h_(h) {
        if (!std::isfinite(fam.support) || fam.support <= 0.0)
            throw PreconditionError("iteration needs a family with compact support");
        kc_ = static_cast<std::size_t>(std::ceil(fam.support / h - 1e-9));
        rows_ = fam.stationary ? 1 : nx;
        if (rows_ * kc_ <= 40'000'000) {
            cache_.resize(rows_ * kc_);
            for (std::size_t i = 0; i < rows_; ++i) fill(i, cache_.data() + i * kc_);
            cached_ = true;
        } else {
            scratch_.resize(kc_);
        }
    }

    std::size_t cells() const { return kc_; }

    const double* row(std::size_t i) {
        const std::size_t r = fam_.stationary ? 0 : i;
        if (cached_) return cache_.data() + r * kc_;
        fill(r, scratch_.data());
        return scratch_.data();
    }

private:
    void fill(std::size_t i, double* out) const {
        const double x = h_ * static_cast<double>(i);
        double prev = fam_.cdf(x, 0.0);
        for (std::size_t c = 0; c < kc_; ++c) {
            const double cur = fam_.cdf(x, h_ * static_cast<double>(c + 1));
            out[c] = cur - prev;
            prev = cur;
        }
    }

    const KernelFamily& fam_;
    double h_;
    std::size_t kc_ = 0, rows_ = 0;
    bool cached_ = false;
    std::vector<double> cache_, scratch_;
};

// [f ∗ q_x](x_i) without the self term f[i]·m_0/2; `self` receives m_0/2.
// Cells c < i read f by trapezoid averaging; cells c ≥ i read boundary cell c − i.
double apply_row(const std::vector<double>& f, const std::vector<double>& phi, const double* m, std::size_t kc,
                 std::size_t i, double& self) {
    double s = 0.0;
    self = 0.0;
    const std::size_t interior = std::min(kc, i);
    for (std::size_t c = 0; c < interior; ++c) {
        const double right = f[i - c - 1];
        if (c == 0) {
            self = 0.5 * m[0];
            s += 0.5 * m[0] * right;
        } else {
            s += 0.5 * m[c] * (f[i - c] + right);
        }
    }
    const std::size_t nb = phi.size();
    for (std::size_t c = interior; c < kc; ++c) {
        const std::size_t j = c - i;
        if (j >= nb) break;
        s += m[c] * phi[j];
    }
    return s;
}

}  // namespace

// ---------------------------------------------------------------- families

KernelFamily stationary_family(const ServiceDistribution& d) {
    KernelFamily k;
    k.name = "stationary:" + d.spec();
    k.support = d.tail_cut;
    k.stationary = true;
    const double z = d.cdf(d.tail_cut);
    const double cut = d.tail_cut;
    k.cdf = [d, z, cut](double, double t) { return t <= 0.0 ? 0.0 : std::min(1.0, d.cdf(std::min(t, cut)) / z); };
    k.sample = [d, cut](double, Rng& rng) {
        for (;;) {
            const double t = d.sample(rng);
            if (t <= cut && t > 0.0) return t;
        }
    };
    const double h = d.grid_step;
    double lo = kInf, hi = 0.0, m2 = 0.0;
    const auto n = static_cast<std::size_t>(std::floor(cut / h));
    for (std::size_t i = 0; i < n; ++i) {
        const double a = h * static_cast<double>(i);
        const double mass = (d.cdf(a + h) - d.cdf(a)) / z;
        lo = std::min(lo, mass / h);
        hi = std::max(hi, mass / h);
        m2 += mass * (a + 0.5 * h) * (a + 0.5 * h);
    }
    k.floor = lo;
    k.cap = hi;
    k.beta = 2.0;
    k.moment_B = m2 * 1.01;
    return k;
}

KernelFamily exponential_family(double rate) {
    if (!(rate > 0.0)) throw std::invalid_argument("exp: rate must be positive");
    KernelFamily k;
    k.name = "exp:" + io::fmt(rate);
    k.support = kInf;
    k.stationary = true;
    k.cdf = [rate](double, double t) { return t <= 0.0 ? 0.0 : -std::expm1(-rate * t); };
    k.sample = [rate](double, Rng& rng) { return rng.exponential(rate); };
    k.cap = rate;
    k.beta = 2.0;
    k.moment_B = 2.0 / (rate * rate);
    return k;
}

KernelFamily uniform_family() {
    KernelFamily k;
    k.name = "uniform";
    k.support = 1.0;
    k.stationary = true;
    k.cdf = [](double, double t) { return clamp01(t); };
    k.sample = [](double, Rng& rng) { return rng.uniform(); };
    k.floor = 1.0;
    k.cap = 1.0;
    k.beta = 2.0;
    k.moment_B = 1.0 / 3.0;
    return k;
}

KernelFamily uniform_triangular_family(double floor) {
    if (!(floor > 0.0 && floor <= 1.0)) throw std::invalid_argument("uniform-triangular: floor must be in (0, 1]");
    KernelFamily k;
    k.name = "uniform-triangular:" + io::fmt(floor);
    k.support = 1.0;
    auto w = [floor](double x) { return floor + (1.0 - floor) * 0.5 * (1.0 + std::sin(x)); };
    k.cdf = [w](double x, double t) {
        const double a = w(x);
        return a * clamp01(t) + (1.0 - a) * triangular_cdf(t);
    };
    k.sample = [w](double x, Rng& rng) {
        if (rng.uniform() < w(x)) return rng.uniform();
        return 0.5 * (rng.uniform() + rng.uniform());
    };
    k.floor = floor;
    k.cap = 2.0;
    k.beta = 2.0;
    k.moment_B = 1.0 / 3.0;
    return k;
}

KernelFamily gapped_family(double a, double b) {
    if (!(0.0 <= a && a < b && b <= 1.0 && b - a < 1.0)) throw std::invalid_argument("gapped: need 0 <= a < b <= 1");
    KernelFamily k;
    k.name = "gapped:" + io::fmt(a) + "," + io::fmt(b);
    k.support = 1.0;
    k.stationary = true;
    const double z = 1.0 - (b - a);
    k.cdf = [a, b, z](double, double t) {
        t = clamp01(t);
        const double open = std::min(t, a) + std::max(0.0, t - b);
        return open / z;
    };
    k.sample = [a, b, z](double, Rng& rng) {
        const double u = rng.uniform() * z;
        return u < a ? u : u + (b - a);
    };
    k.floor = 0.0;
    k.cap = 1.0 / z;
    k.beta = 2.0;
    k.moment_B = 1.0;
    return k;
}

KernelFamily shifted_family(int shift, double amp) {
    if (shift < 1) throw std::invalid_argument("shift: integer shift must be >= 1");
    if (!(amp >= 0.0 && amp < 1.0)) throw std::invalid_argument("shift: amplitude must be in [0, 1)");
    KernelFamily k;
    k.name = "shift:" + std::to_string(shift);
    k.support = static_cast<double>(shift) + 1.0;
    k.kind = FamilyKind::shifted;
    k.shift = shift;
    const double s = static_cast<double>(shift);
    k.cdf = [s, amp](double x, double t) {
        const double off = s - frac_part(x);
        return t <= off ? 0.0 : wavy_cdf(x, t - off, amp);
    };
    k.base_sample = [amp](double x, Rng& rng) { return wavy_sample(x, amp, rng); };
    k.sample = [s, amp](double x, Rng& rng) { return s - frac_part(x) + wavy_sample(x, amp, rng); };
    k.floor = 0.0;  // q_x vanishes on [0, shift − {x})
    k.cap = 1.0 + amp;
    k.beta = 2.0;
    k.moment_B = (s + 1.0) * (s + 1.0);
    return k;
}

KernelFamily dyadic_trap_family(double T) {
    if (!(T > 0.0)) throw std::invalid_argument("trap: T must be positive");
    KernelFamily k;
    k.name = "trap:" + io::fmt(T);
    k.support = kInf;
    k.kind = FamilyKind::dyadic_trap;
    k.trap_T = T;
    const double jump = std::exp(-(T + 1.0));
    k.cdf = [T, jump](double x, double t) {
        if (t <= 0.0) return 0.0;
        if (x > 1.0) {
            const double kk = std::ceil(x) - 1.0;  // x in (kk, kk + 1]
            return clamp01(t - (kk - 1.0));
        }
        if (x <= 0.0) return 1.0 - std::exp(-t);
        int e = 0;
        std::frexp(x, &e);  // x in [2^{e−1}, 2^e)
        double top = std::ldexp(1.0, e);
        if (x == std::ldexp(1.0, e - 1)) top = x;
        const double lo = x - top / 2.0, hi = x - top / 4.0;  // land in [top/4, top/2]
        double c = (1.0 - jump) * clamp01((t - lo) / (hi - lo));
        if (t > T + 1.0) c += jump - std::exp(-t);
        return c;
    };
    k.sample = [T, jump](double x, Rng& rng) {
        if (x > 1.0) {
            const double kk = std::ceil(x) - 1.0;
            return kk - 1.0 + rng.uniform();
        }
        if (x <= 0.0) return rng.exponential(1.0);
        if (rng.uniform() < jump) return T + 1.0 + rng.exponential(1.0);
        int e = 0;
        std::frexp(x, &e);
        double top = std::ldexp(1.0, e);
        if (x == std::ldexp(1.0, e - 1)) top = x;
        return x - top / 2.0 + rng.uniform() * top / 4.0;
    };
    k.floor = 0.0;
    k.cap = kInf;  // the steps in (0, 1] concentrate on ever shorter intervals
    k.beta = 2.0;
    k.moment_B = 4.0 + jump * ((T + 1.0) * (T + 1.0) + 2.0 * (T + 1.0) + 2.0);
    return k;
}

KernelFamily lomax_family(double alpha, double scale) {
    if (!(alpha > 1.0 && scale > 0.0)) throw std::invalid_argument("lomax: need alpha > 1, scale > 0");
    KernelFamily k;
    k.name = "lomax:" + io::fmt(alpha) + "," + io::fmt(scale);
    k.support = kInf;
    k.stationary = true;
    k.cdf = [alpha, scale](double, double t) { return lomax_cdf(t, alpha, scale); };
    k.sample = [alpha, scale](double, Rng& rng) { return lomax_sample(alpha, scale, rng); };
    k.cap = alpha / scale;
    // Any β < α works; E t^β = scale^β Γ(β+1) Γ(α−β) / Γ(α).
    k.beta = alpha > 2.0 ? 2.0 : 0.5 * (1.0 + alpha);
    k.moment_B = std::pow(scale, k.beta) * std::tgamma(k.beta + 1.0) * std::tgamma(alpha - k.beta) / std::tgamma(alpha);
    return k;
}

KernelFamily exp_lomax_family(double alpha, double scale) {
    if (!(alpha > 2.0 && scale > 0.0)) throw std::invalid_argument("exp-lomax: need alpha > 2, scale > 0");
    KernelFamily k;
    k.name = "exp-lomax:" + io::fmt(alpha) + "," + io::fmt(scale);
    k.support = kInf;
    k.cdf = [alpha, scale](double x, double t) {
        if (t <= 0.0) return 0.0;
        const double v = mix_weight(x);
        return v * (1.0 - std::exp(-t)) + (1.0 - v) * lomax_cdf(t, alpha, scale);
    };
    k.sample = [alpha, scale](double x, Rng& rng) {
        if (rng.uniform() < mix_weight(x)) return rng.exponential(1.0);
        return lomax_sample(alpha, scale, rng);
    };
    k.cap = std::max(1.0, alpha / scale);
    k.beta = 2.0;
    k.moment_B = std::max(2.0, lomax_second_moment(alpha, scale));
    return k;
}

KernelFamily parse_family(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string name = spec.substr(0, colon);
    if (name == "stationary") {
        if (colon == std::string::npos) throw std::invalid_argument("stationary: service law required");
        return stationary_family(ServiceDistribution::parse(spec.substr(colon + 1)));
    }
    const std::vector<double> v = colon == std::string::npos ? std::vector<double>{} : parse_numbers(spec.substr(colon + 1));
    auto need = [&](std::size_t lo, std::size_t hi) {
        if (v.size() < lo || v.size() > hi) throw std::invalid_argument("family '" + name + "': wrong parameter count");
    };
    if (name == "exp") {
        need(0, 1);
        return exponential_family(v.empty() ? 1.0 : v[0]);
    }
    if (name == "uniform") {
        need(0, 0);
        return uniform_family();
    }
    if (name == "uniform-triangular") {
        need(0, 1);
        return uniform_triangular_family(v.empty() ? 0.1 : v[0]);
    }
    if (name == "gapped") {
        need(0, 2);
        return v.size() == 2 ? gapped_family(v[0], v[1]) : gapped_family();
    }
    if (name == "shift") {
        need(1, 2);
        if (v[0] != std::floor(v[0])) throw std::invalid_argument("shift: integer shift required");
        return shifted_family(static_cast<int>(v[0]), v.size() > 1 ? v[1] : 0.5);
    }
    if (name == "trap") {
        need(1, 1);
        return dyadic_trap_family(v[0]);
    }
    if (name == "lomax") {
        need(2, 2);
        return lomax_family(v[0], v[1]);
    }
    if (name == "exp-lomax") {
        need(2, 2);
        return exp_lomax_family(v[0], v[1]);
    }
    throw std::invalid_argument("unknown kernel family '" + spec + "'");
}

// ---------------------------------------------------------------- iteration

IterationState IterationState::make(const std::function<double(double)>& boundary, double boundary_length,
                                    double x_max, double h) {
    if (!(h > 0.0) || !(x_max > 0.0) || !(boundary_length >= 0.0))
        throw std::invalid_argument("IterationState: need h > 0, x_max > 0, boundary_length >= 0");
    IterationState s;
    s.h = h;
    const auto nb = static_cast<std::size_t>(std::llround(boundary_length / h));
    s.phi.resize(nb);
    for (std::size_t j = 0; j < nb; ++j) s.phi[j] = boundary(-(static_cast<double>(j) + 0.5) * h);
    s.f.assign(static_cast<std::size_t>(std::llround(x_max / h)) + 1, 0.0);
    return s;
}

IterationState iterate_self_averaging(IterationState s, const KernelFamily& family, int steps, IterationMode mode,
                                      double tol, double bound) {
    for (double v : s.phi)
        if (!std::isfinite(v) || std::abs(v) > bound)
            throw PreconditionError("boundary data exceeds the declared bound");
    CellMasses cm(family, s.h, s.f.size());
    const std::size_t kc = cm.cells(), nx = s.f.size();
    std::vector<double> next(nx);
    for (int it = 0; it < steps; ++it) {
        double inc = 0.0;
        if (mode == IterationMode::jacobi) {
            for (std::size_t i = 0; i < nx; ++i) {
                double self = 0.0;
                next[i] = apply_row(s.f, s.phi, cm.row(i), kc, i, self) + self * s.f[i];
                const double d = next[i] - s.f[i];
                if (d < -1e-14 * (1.0 + std::abs(s.f[i]))) s.monotone = false;
                inc = std::max(inc, std::abs(d));
            }
            s.f.swap(next);
        } else {
            for (std::size_t i = 0; i < nx; ++i) {
                double self = 0.0;
                const double rest = apply_row(s.f, s.phi, cm.row(i), kc, i, self);
                const double v = rest / (1.0 - self);
                const double d = v - s.f[i];
                if (d < -1e-14 * (1.0 + std::abs(s.f[i]))) s.monotone = false;
                inc = std::max(inc, std::abs(d));
                s.f[i] = v;
            }
        }
        ++s.iteration;
        s.increments.push_back(inc);
        if (inc < tol) break;
    }
    return s;
}

double fixed_point_residual(const IterationState& s, const KernelFamily& family) {
    CellMasses cm(family, s.h, s.f.size());
    double r = 0.0;
    for (std::size_t i = 0; i < s.f.size(); ++i) {
        double self = 0.0;
        const double v = apply_row(s.f, s.phi, cm.row(i), cm.cells(), i, self) + self * s.f[i];
        r = std::max(r, std::abs(v - s.f[i]));
    }
    return r;
}

RenewalSolution renewal_solution(const std::function<double(double)>& phi, double boundary_length,
                                 const ServiceDistribution& d, double x_max) {
    const double h = d.grid_step;
    const auto nb = static_cast<std::size_t>(std::llround(boundary_length / h));
    std::vector<double> cells(nb);
    for (std::size_t j = 0; j < nb; ++j) {
        cells[j] = phi(-(static_cast<double>(j) + 0.5) * h);
        if (!std::isfinite(cells[j])) throw std::invalid_argument("renewal_solution: phi must be bounded");
    }
    // g = φ∗p on x ≥ 0, exact per boundary cell; extended past x_max for the limit integral.
    const auto n_out = static_cast<std::size_t>(std::llround(x_max / h)) + 1;
    const auto n_ext = n_out + static_cast<std::size_t>(std::ceil(d.tail_cut / h)) + 1;
    std::vector<double> g(n_ext, 0.0);
    for (std::size_t i = 0; i < n_ext; ++i) {
        const double x = h * static_cast<double>(i);
        double s = 0.0;
        double prev = d.cdf(x);
        for (std::size_t j = 0; j < nb; ++j) {
            const double cur = d.cdf(x + h * static_cast<double>(j + 1));
            s += cells[j] * (cur - prev);
            prev = cur;
        }
        g[i] = s;
    }
    RenewalSolution r;
    r.mean = d.mean();
    r.limit = Table{h, 0.0, g}.integral() / r.mean;
    const int n_max = static_cast<int>(std::ceil(2.0 * x_max / d.mean())) + 40;
    const RenewalDensity s = renewal_density(d, x_max, n_max);
    r.tail_ok = s.tail_ok;
    std::vector<double> head(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n_out));
    const auto conv = grid_convolve(head, s.s.v, h, QuadratureRule::gregory, n_out);
    r.f.h = h;
    r.f.v.resize(n_out);
    for (std::size_t i = 0; i < n_out; ++i) r.f.v[i] = head[i] + conv[i];
    return r;
}

FamilyCheck check_finite_range(const KernelFamily& family, double x_max, double h) {
    FamilyCheck fc;
    if (!std::isfinite(family.support)) return fc;
    const auto kc = static_cast<std::size_t>(std::ceil(family.support / h - 1e-9));
    const double dx = 1e-6;
    fc.support_ok = true;
    fc.min_density = kInf;
    double worst_jump = 0.0;
    std::vector<double> m(kc), m_left(kc);
    for (double x = 0.0; x <= x_max + 1e-12; x += 0.05) {
        const double x_left = std::max(0.0, x - dx);
        const double total = family.cdf(x, family.support);
        if (std::abs(total - 1.0) > 1e-9 || std::abs(family.cdf(x, 0.0)) > 1e-12 ||
            std::abs(family.cdf(x, family.support + 1.0) - total) > 1e-12)
            fc.support_ok = false;
        double prev = 0.0, prev_l = family.cdf(x_left, 0.0);
        prev = family.cdf(x, 0.0);
        for (std::size_t c = 0; c < kc; ++c) {
            const double t = std::min(family.support, h * static_cast<double>(c + 1));
            const double cur = family.cdf(x, t), cur_l = family.cdf(x_left, t);
            m[c] = cur - prev;
            m_left[c] = cur_l - prev_l;
            prev = cur;
            prev_l = cur_l;
            const double width = t - h * static_cast<double>(c);
            if (width > 1e-12) {
                fc.min_density = std::min(fc.min_density, m[c] / width);
                fc.max_density = std::max(fc.max_density, m[c] / width);
            }
            if (x > 0.0) worst_jump = std::max(worst_jump, std::abs(m[c] - m_left[c]) / (x - x_left));
        }
    }
    fc.continuity = worst_jump;
    fc.continuity_ok = worst_jump < 1e3;
    fc.floor_ok = family.floor > 0.0 && fc.min_density >= family.floor - 1e-9 && fc.min_density > 0.0 &&
                  fc.max_density <= family.cap + 1e-9;
    return fc;
}

std::string verdict_name(Verdict v) {
    switch (v) {
        case Verdict::relaxes: return "relaxes";
        case Verdict::inconclusive: return "inconclusive";
        case Verdict::withheld: return "withheld";
    }
    return "?";
}

FiniteRangeReport finite_range_check(const IterationState& init, const KernelFamily& family, double threshold,
                                     double x_budget) {
    FiniteRangeReport rep;
    const double x_max = init.x(init.f.size() - 1);
    rep.check = check_finite_range(family, std::min(x_max, 20.0), init.h);
    if (!rep.check.all()) {
        rep.verdict = Verdict::withheld;
        rep.state = init;
        return rep;
    }
    rep.state = iterate_self_averaging(init, family, 50, IterationMode::gauss_seidel, 1e-14);
    rep.residual = fixed_point_residual(rep.state, family);
    const auto& f = rep.state.f;
    const double T = family.support;
    const auto win = static_cast<std::size_t>(std::llround(2.0 * T / init.h));
    if (f.size() <= win + 1) {
        rep.verdict = Verdict::inconclusive;
        return rep;
    }
    // Sliding max/min over [x, x + 2T] with monotone deques.
    const std::size_t nw = f.size() - win;
    std::deque<std::size_t> mx, mn;
    rep.osc.resize(nw);
    rep.window_x.resize(nw);
    for (std::size_t r = 0, l = 0; r < f.size(); ++r) {
        while (!mx.empty() && f[mx.back()] <= f[r]) mx.pop_back();
        while (!mn.empty() && f[mn.back()] >= f[r]) mn.pop_back();
        mx.push_back(r);
        mn.push_back(r);
        if (r >= win) {
            l = r - win;
            while (mx.front() < l) mx.pop_front();
            while (mn.front() < l) mn.pop_front();
            rep.osc[l] = f[mx.front()] - f[mn.front()];
            rep.window_x[l] = init.x(l);
        }
    }
    rep.final_osc = rep.osc.back();
    rep.limit = f.back();
    std::size_t settle = nw;
    while (settle > 0 && rep.osc[settle - 1] < threshold) --settle;
    rep.osc_monotone = true;
    for (std::size_t i = settle; i + 1 < nw; ++i)
        if (rep.osc[i + 1] > rep.osc[i] + 1e-12) rep.osc_monotone = false;
    if (settle < nw) rep.settle_x = init.x(settle);
    rep.verdict = (settle < nw && rep.settle_x <= x_budget && rep.osc_monotone) ? Verdict::relaxes
                                                                                 : Verdict::inconclusive;
    return rep;
}

bool LemmaTScan::all() const {
    return std::all_of(upper_found.begin(), upper_found.end(), [](bool b) { return b; }) &&
           std::all_of(lower_found.begin(), lower_found.end(), [](bool b) { return b; });
}

LemmaTScan lemma_t_scan(const IterationState& s, const std::vector<double>& widths, double tail_from, double tol) {
    LemmaTScan r;
    r.widths = widths;
    const auto& f = s.f;
    const auto from = std::min(f.size() - 1, static_cast<std::size_t>(std::llround(tail_from / s.h)));
    const double M = *std::max_element(f.begin() + static_cast<std::ptrdiff_t>(from), f.end());
    const double m = *std::min_element(f.begin() + static_cast<std::ptrdiff_t>(from), f.end());
    for (double W : widths) {
        const auto w = static_cast<std::size_t>(std::llround(W / s.h));
        bool up = false, low = false;
        for (std::size_t l = 0; l + w < f.size() && !(up && low); ++l) {
            const auto b = f.begin() + static_cast<std::ptrdiff_t>(l);
            const auto e = b + static_cast<std::ptrdiff_t>(w + 1);
            const auto [lo, hi] = std::minmax_element(b, e);
            if (*lo >= M - tol) up = true;
            if (*hi <= m + tol) low = true;
        }
        r.upper_found.push_back(up);
        r.lower_found.push_back(low);
    }
    return r;
}

// ---------------------------------------------------------------- infinite-range conditions

double compactness_profile(const KernelFamily& family, double eps, const std::vector<double>& xs) {
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("compactness_profile: eps must be in (0, 1)");
    double K = 0.0;
    for (double x : xs) {
        double hi = 1.0;
        while (family.cdf(x, hi) < 1.0 - eps) {
            hi *= 2.0;
            if (hi > 1e12) return kInf;
        }
        double lo = 0.0;
        for (int it = 0; it < 100 && hi - lo > 1e-10 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (family.cdf(x, mid) < 1.0 - eps ? lo : hi) = mid;
        }
        K = std::max(K, hi);
    }
    return K;
}

double mass_floor_profile(const KernelFamily& family, double T, double delta, const std::vector<double>& xs,
                          double h) {
    if (!(delta > 0.0 && delta <= T)) throw std::invalid_argument("mass_floor_profile: need 0 < delta <= T");
    const auto kc = static_cast<std::size_t>(std::llround(T / h));
    double inf = kInf;
    std::vector<double> m(kc);
    for (double x : xs) {
        double prev = family.cdf(x, 0.0);
        for (std::size_t c = 0; c < kc; ++c) {
            const double cur = family.cdf(x, h * static_cast<double>(c + 1));
            m[c] = cur - prev;
            prev = cur;
        }
        std::sort(m.begin(), m.end());
        // Equal-width cells: the δ-measure set of smallest density is the smallest cells.
        double left = delta, mass = 0.0;
        for (std::size_t c = 0; c < kc && left > 1e-15; ++c) {
            const double take = std::min(h, left);
            mass += m[c] * take / h;
            left -= take;
        }
        inf = std::min(inf, mass);
    }
    return inf;
}

RatioCondition ratio_condition(const KernelFamily& family, const std::vector<double>& xs, double h) {
    RatioCondition rc;
    const double top = std::isfinite(family.support) ? family.support : compactness_profile(family, 1e-9, xs);
    const auto kc = static_cast<std::size_t>(std::ceil(top / h - 1e-9));
    std::vector<double> lo(kc, kInf), hi(kc, 0.0);
    for (double x : xs) {
        double prev = family.cdf(x, 0.0);
        for (std::size_t c = 0; c < kc; ++c) {
            const double cur = family.cdf(x, h * static_cast<double>(c + 1));
            lo[c] = std::min(lo[c], cur - prev);
            hi[c] = std::max(hi[c], cur - prev);
            prev = cur;
        }
    }
    rc.k = kInf;
    rc.K = 0.0;
    for (std::size_t c = 0; c < kc; ++c) {
        if (hi[c] < 1e-13) continue;
        if (lo[c] <= 0.0) {
            rc.k = 0.0;
            rc.K = kInf;
            break;
        }
        rc.k = std::min(rc.k, lo[c] / hi[c]);
        rc.K = std::max(rc.K, hi[c] / lo[c]);
    }
    rc.holds = rc.k > 0.0 && std::isfinite(rc.K);
    return rc;
}

// ---------------------------------------------------------------- segment lemma

CalculResult calcul_segment(const RateFunction& chi, double A, double B, double eps, double L) {
    if (!(B > A)) throw std::invalid_argument("calcul_segment: need B > A");
    if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("calcul_segment: eps must be in (0, 1/2)");
    if (!(L > 0.0)) throw std::invalid_argument("calcul_segment: L must be positive");
    // Nodes: A, B and the breakpoints of χ in between; χ is constant on each cell.
    std::vector<double> x{A};
    const double h = chi.h();
    for (auto k = static_cast<long long>(std::floor(A / h)) + 1; h * static_cast<double>(k) < B; ++k) {
        const double t = h * static_cast<double>(k);
        if (t > A) x.push_back(t);
    }
    x.push_back(B);
    const std::size_t n = x.size();
    std::vector<double> rho(n - 1);
    const double scale = std::max(1.0, L) * (B - A);
    const double tol = 1e-12 * scale;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        rho[k] = chi.average(x[k], x[k + 1]);
        if (rho[k] < -1e-12 || rho[k] > L * (1.0 + 1e-12))
            throw PreconditionError("calcul_segment: density leaves [0, L]");
    }
    if (chi.integral(A, B) < (1.0 - eps) * (B - A) - tol)
        throw PreconditionError("calcul_segment: chi([A,B]) < (1 - eps)(B - A)");

    // G(s) = χ([A,s]) − a(s − A); [c, d] has the domination property iff G(d) = max_{[c,d]} G.
    const double a = 1.0 - 2.0 * eps;
    std::vector<double> G(n, 0.0);
    for (std::size_t k = 0; k + 1 < n; ++k) G[k + 1] = G[k] + (rho[k] - a) * (x[k + 1] - x[k]);

    CalculResult r;
    // Previous strictly greater node via a monotonic stack gives the leftmost start for each end d.
    std::vector<std::size_t> stack;
    for (std::size_t d = 0; d < n; ++d) {
        while (!stack.empty() && G[stack.back()] <= G[d] + tol) stack.pop_back();
        double c = A;
        if (!stack.empty()) {
            const std::size_t p = stack.back();
            const double drop = G[p] - G[p + 1];
            c = drop > 0.0 ? x[p] + (G[p] - G[d]) / drop * (x[p + 1] - x[p]) : x[p + 1];
        }
        stack.push_back(d);
        if (x[d] - c <= 0.0) continue;
        if (!r.maximal.empty() && c <= r.maximal.back().b) {
            r.maximal.back().a = std::min(r.maximal.back().a, c);
            r.maximal.back().b = x[d];
        } else {
            r.maximal.push_back({c, x[d]});
        }
    }
    // [A, C]: C is the last node where G attains its maximum over [A, B].
    std::size_t best = 0;
    for (std::size_t k = 1; k < n; ++k)
        if (G[k] >= G[best] - tol) best = k;
    r.segment = {A, x[best]};
    const double C = x[best];

    // Direct suffix sums; the margin is linear on each cell, so nodes suffice.
    r.worst_margin = 0.0;
    for (std::size_t k = 0; k <= best; ++k) {
        const double margin = chi.integral(x[k], C) - a * (C - x[k]);
        r.worst_margin = std::min(r.worst_margin, margin);
    }
    r.domination_ok = r.worst_margin >= -tol;
    r.length_bound = eps / L * (B - A);
    r.length_ok = C - A > r.length_bound;
    return r;
}

}  // namespace phlab
