#include "phlab/rods.hpp"

#include "phlab/rng.hpp"
#include "phlab/stats.hpp"

namespace phlab::rods {

namespace {

constexpr int kMaxAttempts = 1000;

Rng instance_rng(std::uint64_t seed, int n, std::uint64_t index, int attempt) {
    return Rng(seed, stream::instances, (static_cast<std::uint64_t>(n) << 48) ^ (index << 12) ^ static_cast<std::uint64_t>(attempt));
}

double u(Rng& r, double a, double b) { return a + (b - a) * r.uniform(); }

bool instance_generic(const Instance& in, bool anchored) {
    RodPlacement<double> p;
    p.x = in.points;
    p.l = in.lengths;
    std::vector<double> extra;
    if (anchored) {
        p.x.push_back(-in.T);
        extra.push_back(in.L);
        extra.push_back(in.T - in.L);
    }
    // Left ends are checked pairwise; lengths via all subset sums.
    return is_generic(p, extra);
}

}  // namespace

Instance InstanceGenerator::plain(int n, std::uint64_t index) const {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Rng r = instance_rng(seed_, n, index, attempt);
        Instance in;
        for (int i = 0; i < n; ++i) in.lengths.push_back(u(r, 0.1, 10.0));
        double x = 0.0;
        for (int i = 0; i + 1 < n; ++i) {
            x -= u(r, 0.1, 10.0);
            in.points.push_back(x);
        }
        std::reverse(in.points.begin(), in.points.end());
        if (instance_generic(in, false)) return in;
    }
    throw NonGeneric("InstanceGenerator: could not draw a generic instance");
}

Instance InstanceGenerator::anchored(int n, std::uint64_t index) const {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Rng r = instance_rng(seed_ ^ 0xA5A5A5A5ULL, n, index, attempt);
        Instance in;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            in.lengths.push_back(u(r, 0.1, 10.0));
            sum += in.lengths.back();
        }
        in.L = u(r, 0.1, 10.0);
        in.T = in.L + sum + u(r, 0.1, 10.0);
        for (int i = 0; i + 1 < n; ++i) in.points.push_back(-in.T * r.uniform());
        std::sort(in.points.begin(), in.points.end());
        if (instance_generic(in, true)) return in;
    }
    throw NonGeneric("InstanceGenerator: could not draw a generic anchored instance");
}

Instance InstanceGenerator::anchored_violating(int n, std::uint64_t index) const {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Rng r = instance_rng(seed_ ^ 0x5A5A5A5AULL, n, index, attempt);
        Instance in;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            in.lengths.push_back(u(r, 0.1, 10.0));
            sum += in.lengths.back();
        }
        in.L = u(r, 0.1, 10.0);
        in.T = (in.L + sum) * u(r, 0.2, 0.9);
        for (int i = 0; i + 1 < n; ++i) in.points.push_back(-in.T * r.uniform());
        std::sort(in.points.begin(), in.points.end());
        if (instance_generic(in, true)) return in;
    }
    throw NonGeneric("InstanceGenerator: could not draw a generic violating instance");
}

std::vector<SweepRow> sweep(SweepKind kind, int n, std::size_t instances, std::uint64_t seed, int threads) {
    if (n < 1 || n > 8) throw BudgetError("rods sweep: n must be in [1, 8]");
    std::vector<SweepRow> rows(instances);
    InstanceGenerator gen(seed);
    parallel_for(instances, threads, [&](std::size_t i) {
        // A drawn instance can still put a right end on a window boundary; redraw.
        for (std::uint64_t shift = 0;; shift += instances) {
            const std::uint64_t idx = i + shift;
            Instance in = kind == SweepKind::plain      ? gen.plain(n, idx)
                          : kind == SweepKind::anchored ? gen.anchored(n, idx)
                                                        : gen.anchored_violating(n, idx);
            try {
                std::optional<AnchorT<double>> anchor;
                if (kind != SweepKind::plain) anchor = AnchorT<double>{in.T, in.L};
                const auto rep = total_counts(in.points, in.lengths, anchor, true);
                SweepRow row;
                row.n = n;
                row.index = idx;
                row.total = rep.total;
                row.total_formula = rep.total_formula;
                row.total_bruteforce = rep.total_bruteforce;
                row.agree = rep.methods_agree;
                row.constraint_ok = rep.constraint_ok;
                row.equals_factorial = rep.total == rep.factorial;
                rows[i] = row;
                return;
            } catch (const NonGeneric&) {
                if (shift > 1000 * instances) throw;
            }
        }
    });
    return rows;
}

bool cluster_identity_holds(const ResolvedPlacement<double>& r) {
    for (const auto& c : r.clusters) {
        double acc = r.x[c.root];
        if (r.z[c.root] != r.x[c.root]) return false;
        for (std::size_t k = c.root; k <= c.head; ++k) {
            acc += r.l[k];
            if (std::abs(acc - r.y[k]) > 1e-9 * (1.0 + std::abs(acc))) return false;
        }
    }
    return true;
}

std::vector<std::pair<double, double>> merged_bodies(const RodPlacement<double>& p) {
    // Scan line over arrival events carrying pending work; a body closes when
    // the pending work drains before the next left end.
    std::vector<std::pair<double, double>> ev;
    for (std::size_t i = 0; i < p.size(); ++i) ev.emplace_back(p.x[i], p.l[i]);
    std::sort(ev.begin(), ev.end());
    std::vector<std::pair<double, double>> out;
    double start = 0.0, work_end = -std::numeric_limits<double>::infinity();
    for (const auto& [x, l] : ev) {
        if (x > work_end) {
            if (!out.empty() || std::isfinite(work_end)) out.emplace_back(start, work_end);
            start = x;
            work_end = x + l;
        } else {
            work_end += l;
        }
    }
    if (!ev.empty()) out.emplace_back(start, work_end);
    return out;
}

Rational to_rational(double v) {
    // Doubles are dyadic rationals; build m·2^e exactly.
    if (v == 0.0) return Rational(0);
    int e = 0;
    const double m = std::frexp(v, &e);
    const auto mant = static_cast<long long>(std::ldexp(m, 53));
    e -= 53;
    Rational r(mant);
    boost::multiprecision::cpp_int p2 = 1;
    p2 <<= std::abs(e);
    if (e >= 0)
        r *= Rational(p2);
    else
        r /= Rational(p2);
    return r;
}

RodPlacement<Rational> to_rational(const RodPlacement<double>& p) {
    RodPlacement<Rational> q;
    for (double v : p.x) q.x.push_back(to_rational(v));
    for (double v : p.l) q.l.push_back(to_rational(v));
    return q;
}

}  // namespace phlab::rods
