#include "phlab/relax.hpp"

#include <algorithm>
#include <cmath>

namespace phlab {

namespace {

// Adds whole + part (part in [0, 2]) to p. The integer part is exact; only the
// fraction carries rounding, and it never accumulates.
UnitPosition advance(UnitPosition p, std::int64_t whole, double part) {
    const double sum = p.frac + part;
    const double carry = std::floor(sum);
    p.n += whole + static_cast<std::int64_t>(carry);
    p.frac = sum - carry;
    if (p.frac >= 1.0) {
        p.n += 1;
        p.frac -= 1.0;
    }
    return p;
}

UnitPosition unit_position(double x) {
    const double fl = std::floor(x);
    return {static_cast<std::int64_t>(fl), x - fl};
}

// One rightward step of a shifted family: t = (shift − {x}) + s, s ~ u_x.
UnitPosition shifted_step(const KernelFamily& fam, UnitPosition p, Rng& rng) {
    const double s = fam.base_sample(p.value(), rng);
    return advance(p, fam.shift - 1, (1.0 - p.frac) + s);
}

// Σ_{k≥0} Pr{ζ_1 + … + ζ_k ≤ 1} with ζ uniform on [0, 1/C]: one plus the
// uniform renewal function at C. Exact alternating sum for moderate C,
// Lorden's bound 2C + 4/3 beyond.
double visit_count_bound(double C) {
    if (!(C > 0.0)) return 1.0;
    if (C > 20.0) return 1.0 + 2.0 * C + 4.0 / 3.0;
    long double s = 0.0L, fact = 1.0L;
    const int top = static_cast<int>(std::floor(C));
    for (int k = 0; k <= top; ++k) {
        if (k > 0) fact *= k;
        const long double y = static_cast<long double>(C) - k;
        const long double term = std::pow(y, static_cast<long double>(k)) * std::exp(y) / fact;
        s += (k % 2 == 0) ? term : -term;
    }
    return static_cast<double>(s);
}

enum class Outcome : unsigned char { visit, miss, undecided };

struct WalkResult {
    Outcome outcome = Outcome::undecided;
    std::uint64_t steps = 0;
    int min_width_log2 = 0;
};

WalkResult walk_generic(const WalkerSpec& spec, Rng& rng) {
    WalkResult w;
    double x = spec.x;
    while (w.steps < spec.max_steps) {
        const double t = spec.family.sample(x, rng);
        if (!(t > 0.0)) continue;  // steps are strictly positive; a zero draw is redrawn
        ++w.steps;
        x -= t;
        if (x <= 0.0) {
            w.outcome = x >= -spec.T ? Outcome::visit : Outcome::miss;
            return w;
        }
    }
    return w;
}

// The trap family keeps the walker at dyadic level k, x ∈ (2^{−k}, 2^{1−k}],
// where each step lands uniformly one level lower. Positions below 1 are held
// as (level, mantissa) so no level is ever lost to underflow.
WalkResult walk_trap(const WalkerSpec& spec, Rng& rng) {
    WalkResult w;
    const double T = spec.family.trap_T;
    const double jump = std::exp(-(T + 1.0));
    double x = spec.x;
    while (x > 1.0 && w.steps < spec.max_steps) {
        x -= spec.family.sample(x, rng);
        ++w.steps;
    }
    if (x <= 0.0) {
        w.outcome = x >= -spec.T ? Outcome::visit : Outcome::miss;
        return w;
    }
    int e = 0;
    double m = std::frexp(x, &e);  // x = m·2^e, m in [0.5, 1)
    std::int64_t level = m == 0.5 ? 2 - e : 1 - e;
    double mant = std::ldexp(x, static_cast<int>(level));  // in (1, 2]
    while (w.steps < spec.max_steps) {
        ++w.steps;
        if (rng.uniform() < jump) {
            const double t = T + 1.0 + rng.exponential(1.0);
            const double pos = std::ldexp(mant, static_cast<int>(-std::min<std::int64_t>(level, 4000))) - t;
            w.outcome = pos >= -spec.T ? Outcome::visit : Outcome::miss;
            break;
        }
        ++level;
        mant = 1.0 + rng.uniform();
        w.min_width_log2 = static_cast<int>(-std::min<std::int64_t>(level, 1'000'000'000));
    }
    return w;
}

}  // namespace

LocalizationReport localize_shifted(const KernelFamily& family, double x, std::uint64_t steps, std::uint64_t seed) {
    if (family.kind != FamilyKind::shifted) throw std::invalid_argument("localize_shifted: needs a shifted family");
    if (!(x >= 0.0)) throw std::invalid_argument("localize_shifted: start must be >= 0");
    Rng rng(seed, stream::walker, 0);
    LocalizationReport rep;
    rep.parity_counts.assign(2, 0);
    UnitPosition p = unit_position(x);
    const std::int64_t n0 = p.n;
    for (std::uint64_t k = 1; k <= steps; ++k) {
        p = shifted_step(family, p, rng);
        // Predicted interval [⌊x⌋ + k·s, ⌊x⌋ + k·s + 1].
        const std::int64_t lo = n0 + static_cast<std::int64_t>(k) * family.shift;
        const bool inside = p.n == lo || (p.n == lo + 1 && p.frac == 0.0);
        if (!inside) ++rep.violations;
        ++rep.parity_counts[static_cast<std::size_t>(((p.n % 2) + 2) % 2)];
    }
    rep.steps = steps;
    rep.final_position = p;
    rep.parity_preserved = rep.parity_counts[0] == 0 || rep.parity_counts[1] == 0;
    return rep;
}

CltProbe clt_probe(const KernelFamily& family, double x, const std::vector<int>& ns, int replicas,
                   std::uint64_t seed) {
    if (replicas < 2) throw std::invalid_argument("clt_probe: need at least 2 replicas");
    if (!std::is_sorted(ns.begin(), ns.end()) || ns.empty() || ns.front() < 1)
        throw std::invalid_argument("clt_probe: n list must be increasing and positive");
    CltProbe r;
    r.n = ns;
    std::vector<std::vector<double>> pos(ns.size(), std::vector<double>(static_cast<std::size_t>(replicas)));
    for (int rep = 0; rep < replicas; ++rep) {
        Rng rng(seed, stream::walker, static_cast<std::uint64_t>(rep));
        UnitPosition p = unit_position(x);
        double y = x;
        std::size_t next = 0;
        for (int k = 1; k <= ns.back(); ++k) {
            if (family.kind == FamilyKind::shifted) {
                p = shifted_step(family, p, rng);
            } else {
                y += family.sample(y, rng);
            }
            if (k == ns[next]) {
                pos[next][static_cast<std::size_t>(rep)] =
                    family.kind == FamilyKind::shifted ? static_cast<double>(p.n - unit_position(x).n) + p.frac : y;
                ++next;
            }
        }
    }
    for (const auto& v : pos) {
        double m = 0.0;
        for (double a : v) m += a;
        m /= static_cast<double>(v.size());
        double s2 = 0.0;
        for (double a : v) s2 += (a - m) * (a - m);
        r.variance.push_back(s2 / static_cast<double>(v.size() - 1));
    }
    double mn = 0.0, mv = 0.0;
    for (std::size_t i = 0; i < ns.size(); ++i) {
        mn += ns[i];
        mv += r.variance[i];
    }
    mn /= static_cast<double>(ns.size());
    mv /= static_cast<double>(ns.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < ns.size(); ++i) {
        sxy += (ns[i] - mn) * (r.variance[i] - mv);
        sxx += (ns[i] - mn) * (ns[i] - mn);
    }
    r.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    return r;
}

AbsorptionEstimate walker_and_absorption(const WalkerSpec& spec, std::uint64_t replicas, std::uint64_t seed,
                                         int threads) {
    const KernelFamily& fam = spec.family;
    const bool trap = fam.kind == FamilyKind::dyadic_trap;
    if (!trap && !(fam.beta > 1.0 && std::isfinite(fam.moment_B) && std::isfinite(fam.cap)))
        throw PreconditionError("walker: family must declare beta > 1, finite B and a finite cap C");
    if (!(spec.x > 0.0)) throw std::invalid_argument("walker: start must be positive");
    if (!(spec.T > 0.0)) throw std::invalid_argument("walker: T must be positive");
    if (replicas == 0) throw std::invalid_argument("walker: need replicas >= 1");

    std::vector<WalkResult> out(replicas);
    parallel_for(replicas, threads, [&](std::size_t r) {
        Rng rng(seed, stream::walker, r);
        out[r] = trap ? walk_trap(spec, rng) : walk_generic(spec, rng);
    });
    AbsorptionEstimate est;
    est.T = spec.T;
    est.replicas = replicas;
    for (const auto& w : out) {
        est.total_steps += w.steps;
        est.min_width_log2 = std::min(est.min_width_log2, w.min_width_log2);
        switch (w.outcome) {
            case Outcome::visit: ++est.visits; break;
            case Outcome::miss: ++est.misses; break;
            case Outcome::undecided: ++est.undecided; break;
        }
    }
    est.gamma = wilson(est.visits, replicas);
    if (!trap) {
        double tail = 0.0;
        const auto top = static_cast<long long>(std::floor(spec.x)) + 1;
        for (long long n = 0; n <= top; ++n) tail += std::pow(static_cast<double>(n) + spec.T, -fam.beta);
        est.gamma_bound = std::max(0.0, 1.0 - visit_count_bound(fam.cap) * fam.moment_B * tail);
    }
    return est;
}

}  // namespace phlab
