#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace phlab::rods {

using Rational = boost::multiprecision::cpp_rational;

/// Inputs within this distance of a tie are rejected in floating mode.
inline constexpr double kGenericMargin = 1e-9;

struct DegenerateInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct NonGeneric : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct BudgetError : std::length_error {
    using std::length_error::length_error;
};

template <class S>
struct RodPlacement {
    std::vector<S> x;  ///< left ends
    std::vector<S> l;  ///< lengths, paired with x
    std::size_t size() const { return x.size(); }
};

struct Cluster {
    std::size_t root = 0;  ///< index (in resolved order) of the first rod
    std::size_t head = 0;  ///< index of the last rod
};

template <class S>
struct ResolvedPlacement {
    std::vector<std::size_t> order;  ///< order[i] = input index of the i-th rod by left end
    std::vector<S> x;                ///< original left ends, sorted
    std::vector<S> l;
    std::vector<S> z;                ///< resolved left ends
    std::vector<S> y;                ///< right ends z + l
    std::vector<Cluster> clusters;

    S body_begin(const Cluster& c) const { return z[c.root]; }
    S body_end(const Cluster& c) const { return y[c.head]; }
};

namespace detail {

template <class S>
bool is_exact() {
    return !std::is_floating_point_v<S>;
}

template <class S>
bool close(const S& a, const S& b) {
    if constexpr (std::is_floating_point_v<S>)
        return std::abs(a - b) <= kGenericMargin;
    else
        return a == b;
}

}  // namespace detail

/// Sort by left end and apply z_i = max(z_{i-1} + l_{i-1}, x_i).
template <class S>
ResolvedPlacement<S> resolve(const RodPlacement<S>& p) {
    if (p.x.size() != p.l.size() || p.x.empty()) throw std::invalid_argument("resolve: need matching, nonempty x and l");
    for (const auto& v : p.l)
        if (!(v > S(0))) throw std::invalid_argument("resolve: lengths must be positive");
    const std::size_t n = p.size();
    ResolvedPlacement<S> r;
    r.order.resize(n);
    std::iota(r.order.begin(), r.order.end(), std::size_t{0});
    std::sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) { return p.x[a] < p.x[b]; });
    for (std::size_t i = 0; i < n; ++i) {
        r.x.push_back(p.x[r.order[i]]);
        r.l.push_back(p.l[r.order[i]]);
    }
    for (std::size_t i = 1; i < n; ++i)
        if (r.x[i] == r.x[i - 1]) throw DegenerateInput("resolve: coinciding left ends");
    r.z.resize(n);
    r.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (i == 0 || r.x[i] > r.y[i - 1]) {
            r.z[i] = r.x[i];
            r.clusters.push_back({i, i});
        } else {
            r.z[i] = r.y[i - 1];
            r.clusters.back().head = i;
        }
        r.y[i] = r.z[i] + r.l[i];
    }
    return r;
}

/// Resolve an already resolved placement (identity on conflict-free input).
template <class S>
ResolvedPlacement<S> resolve(const ResolvedPlacement<S>& r) {
    return resolve(RodPlacement<S>{r.z, r.l});
}

/// Genericity per the rod conventions: distinct left ends and distinct subset
/// sums of lengths, both separated by more than the margin (exact mode: strictly).
template <class S>
bool is_generic(const RodPlacement<S>& p, const std::vector<S>& extra_lengths = {}) {
    std::vector<S> xs = p.x;
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (detail::close(xs[i], xs[i - 1])) return false;
    std::vector<S> ls = p.l;
    ls.insert(ls.end(), extra_lengths.begin(), extra_lengths.end());
    if (ls.size() > 20) throw BudgetError("is_generic: too many lengths");
    std::vector<S> sums(std::size_t{1} << ls.size(), S(0));
    for (std::size_t m = 1; m < sums.size(); ++m) {
        const std::size_t low = static_cast<std::size_t>(__builtin_ctzll(m));
        sums[m] = sums[m & (m - 1)] + ls[low];
    }
    std::sort(sums.begin(), sums.end());
    for (std::size_t i = 1; i < sums.size(); ++i)
        if (detail::close(sums[i], sums[i - 1])) return false;
    return true;
}

/// Number of X positions for a free rod of length `free_length` that produce an
/// X-hit at the origin: right ends of the resolved fixed placement in
/// [−free_length, 0], plus one when −free_length lies outside every cluster body.
template <class S>
std::size_t count_hits_formula(const RodPlacement<S>& fixed, const S& free_length) {
    if (!(free_length > S(0))) throw std::invalid_argument("count_hits_formula: free length must be positive");
    if (fixed.size() == 0) return 1;
    const auto r = resolve(fixed);
    const S lo = -free_length;
    std::size_t count = 0;
    for (const auto& yy : r.y) {
        if (detail::close(yy, lo) || detail::close(yy, S(0)))
            throw NonGeneric("count_hits_formula: right end on the window boundary");
        if (yy >= lo && yy <= S(0)) ++count;
    }
    bool inside = false;
    for (const auto& c : r.clusters) {
        const S a = r.body_begin(c), b = r.body_end(c);
        if (detail::close(lo, a) || detail::close(lo, b)) throw NonGeneric("count_hits_formula: −l on a cluster boundary");
        if (lo > a && lo < b) inside = true;
    }
    return count + (inside ? 0 : 1);
}

/// Enumerates X ∈ {−Σ_A l : A ⊆ all lengths, A ≠ ∅}, inserts the free rod at X,
/// resolves and keeps X when the origin is a right end of the cluster rooted at X.
/// With a window, only X in the open interval (lo, hi) are considered.
template <class S>
std::size_t count_hits_bruteforce(const RodPlacement<S>& fixed, const S& free_length,
                                  std::optional<std::pair<S, S>> window = std::nullopt) {
    if (!(free_length > S(0))) throw std::invalid_argument("count_hits_bruteforce: free length must be positive");
    std::vector<S> ls = fixed.l;
    ls.push_back(free_length);
    if (ls.size() > 20) throw BudgetError("count_hits_bruteforce: too many rods");
    std::vector<S> sums(std::size_t{1} << ls.size(), S(0));
    for (std::size_t m = 1; m < sums.size(); ++m) {
        const std::size_t low = static_cast<std::size_t>(__builtin_ctzll(m));
        sums[m] = sums[m & (m - 1)] + ls[low];
    }
    std::vector<S> cand(sums.begin() + 1, sums.end());
    for (auto& c : cand) c = -c;
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end(), [](const S& a, const S& b) { return detail::close(a, b); }),
               cand.end());

    // Fixed rods sorted once; each candidate is merged in and resolved in place.
    const std::size_t m = fixed.size();
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fixed.x[a] < fixed.x[b]; });
    std::vector<S> fx(m), fl(m);
    for (std::size_t i = 0; i < m; ++i) {
        fx[i] = fixed.x[idx[i]];
        fl[i] = fixed.l[idx[i]];
    }
    std::size_t count = 0;
    for (const auto& X : cand) {
        if (window && !(X > window->first && X < window->second)) continue;
        for (const auto& xi : fx)
            if (detail::close(xi, X)) throw NonGeneric("count_hits_bruteforce: candidate coincides with a fixed left end");
        const std::size_t pos = static_cast<std::size_t>(std::lower_bound(fx.begin(), fx.end(), X) - fx.begin());
        // Lindley over the first pos rods gives the end of work before X.
        S end{};
        bool any = false;
        for (std::size_t i = 0; i < pos; ++i) {
            const S z = (!any || fx[i] > end) ? fx[i] : end;
            end = z + fl[i];
            any = true;
        }
        if (any && !(X > end)) continue;  // X is not a cluster root
        S y = X + free_length;
        bool hit = detail::close(y, S(0));
        for (std::size_t i = pos; i < m && !hit; ++i) {
            if (fx[i] > y) break;  // cluster rooted at X has ended
            y = y + fl[i];
            hit = detail::close(y, S(0));
        }
        if (hit) ++count;
    }    return count;
}

struct PermutationCount {
    std::vector<int> perm;  ///< perm[i] = index into the lengths for position i; last entry is the free rod
    std::size_t formula = 0;
    std::size_t bruteforce = 0;
    bool formula_valid = true;  ///< false when the formula does not apply (anchored, constraint violated)
};

struct HitCountReport {
    std::vector<PermutationCount> per_permutation;
    std::uint64_t total = 0;             ///< N (or Ñ when anchored)
    std::uint64_t total_formula = 0;
    std::uint64_t total_bruteforce = 0;
    bool anchored = false;
    bool constraint_ok = true;           ///< L + Σλ < T (anchored only)
    bool methods_agree = true;
    std::uint64_t factorial = 1;
};

template <class S>
struct AnchorT {
    S T;
    S L;
};

/// Sums N_π over all permutations of the n lengths (n−1 fixed at `points`, the
/// last one free). Anchored mode adds the rod L at −T and restricts X to (−T, 0).
template <class S>
HitCountReport total_counts(const std::vector<S>& points, const std::vector<S>& lengths,
                            std::optional<AnchorT<S>> anchor = std::nullopt, bool with_bruteforce = true) {
    const std::size_t n = lengths.size();
    if (n == 0 || points.size() + 1 != n) throw std::invalid_argument("total_counts: need n lengths and n−1 points");
    if (n > 8) throw BudgetError("total_counts: n > 8 exceeds the combinatorial budget");
    HitCountReport rep;
    rep.anchored = anchor.has_value();
    for (std::size_t k = 2; k <= n; ++k) rep.factorial *= k;
    if (anchor) {
        S sum = anchor->L;
        for (const auto& v : lengths) sum += v;
        rep.constraint_ok = sum < anchor->T;
        for (const auto& p : points)
            if (!(p > -anchor->T && p < S(0))) throw std::invalid_argument("total_counts: anchored points must lie in (−T, 0)");
    }
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
        RodPlacement<S> fixed;
        if (anchor) {
            fixed.x.push_back(-anchor->T);
            fixed.l.push_back(anchor->L);
        }
        for (std::size_t i = 0; i + 1 < n; ++i) {
            fixed.x.push_back(points[i]);
            fixed.l.push_back(lengths[static_cast<std::size_t>(perm[i])]);
        }
        const S free_len = lengths[static_cast<std::size_t>(perm[n - 1])];
        PermutationCount pc;
        pc.perm = perm;
        pc.formula_valid = !anchor || rep.constraint_ok;
        if (pc.formula_valid) pc.formula = count_hits_formula(fixed, free_len);
        if (with_bruteforce || !pc.formula_valid) {
            std::optional<std::pair<S, S>> window;
            if (anchor) window = std::make_pair(-anchor->T, S(0));
            pc.bruteforce = count_hits_bruteforce(fixed, free_len, window);
        }
        rep.total_formula += pc.formula;
        rep.total_bruteforce += pc.bruteforce;
        if (with_bruteforce && pc.formula_valid && pc.formula != pc.bruteforce) rep.methods_agree = false;
        rep.per_permutation.push_back(std::move(pc));
    } while (std::next_permutation(perm.begin(), perm.end()));
    // Anchored totals are defined by the restricted enumeration; otherwise the formula.
    if (anchor)
        rep.total = rep.total_bruteforce;
    else
        rep.total = with_bruteforce ? rep.total_bruteforce : rep.total_formula;
    return rep;
}

/// Random generic instance: lengths and gaps uniform(0.1, 10), points to the left of 0.
struct Instance {
    std::vector<double> points;
    std::vector<double> lengths;
    double T = 0.0;
    double L = 0.0;
};

class InstanceGenerator {
public:
    explicit InstanceGenerator(std::uint64_t seed) : seed_(seed) {}
    /// Generic instance for the plain theorem (resampled until generic).
    Instance plain(int n, std::uint64_t index) const;
    /// Anchored instance satisfying L + Σλ < T, points in (−T, 0).
    Instance anchored(int n, std::uint64_t index) const;
    /// Anchored instance violating the constraint (lengths large relative to T).
    Instance anchored_violating(int n, std::uint64_t index) const;

private:
    std::uint64_t seed_;
};

/// Sweep of random instances; one row per instance.
struct SweepRow {
    int n = 0;
    std::uint64_t index = 0;
    std::uint64_t total = 0;
    std::uint64_t total_formula = 0;
    std::uint64_t total_bruteforce = 0;
    bool agree = true;
    bool constraint_ok = true;
    bool equals_factorial = true;
};

enum class SweepKind { plain, anchored, anchored_violating };

std::vector<SweepRow> sweep(SweepKind kind, int n, std::size_t instances, std::uint64_t seed, int threads = 1);

/// Right end of each rod equals its cluster root's left end plus the lengths from
/// the root to itself.
bool cluster_identity_holds(const ResolvedPlacement<double>& r);

/// Union of occupied intervals by independent interval merging (oracle for clusters).
std::vector<std::pair<double, double>> merged_bodies(const RodPlacement<double>& p);

/// Converts a double instance to exact rationals (binary expansions are exact).
RodPlacement<Rational> to_rational(const RodPlacement<double>& p);
Rational to_rational(double v);

}  // namespace phlab::rods
