#include "phlab/meanfield.hpp"

#include "phlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace phlab {

Placement parse_placement(const std::string& s) {
    if (s == "round-robin" || s == "round_robin") return Placement::round_robin;
    if (s == "all-at-one" || s == "all_at_one" || s == "all-at-server-1") return Placement::all_at_one;
    if (s == "stationary" || s == "stationary-draw") return Placement::stationary;
    throw std::invalid_argument("unknown placement rule: " + s);
}

int NetworkState::customers() const {
    int n = 0;
    for (const auto& q : queues) n += static_cast<int>(q.size());
    return n;
}

namespace {

// Queue lengths per server for the stationary placement: i.i.d. draws from the
// marginal of ν, then customers added to or removed from uniform servers until
// the total is N.
std::vector<int> stationary_lengths(int M, int N, const StateDistribution& nu, Rng& rng) {
    const std::vector<double> marg = nu.queue_marginal();
    std::vector<double> cum(marg.size());
    std::partial_sum(marg.begin(), marg.end(), cum.begin());
    std::vector<int> n(static_cast<std::size_t>(M));
    long total = 0;
    for (int& v : n) {
        const double u = rng.uniform() * cum.back();
        v = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
        v = std::min(v, static_cast<int>(marg.size()) - 1);
        total += v;
    }
    while (total < N) {
        ++n[rng.below(static_cast<std::uint64_t>(M))];
        ++total;
    }
    while (total > N) {
        const std::size_t i = rng.below(static_cast<std::uint64_t>(M));
        if (n[i] > 0) {
            --n[i];
            --total;
        }
    }
    return n;
}

}  // namespace

NetworkRun simulate_network(const NetworkConfig& cfg, const ServiceDistribution& d, std::uint64_t seed,
                            const StateDistribution* nu) {
    if (cfg.M < 1) throw std::invalid_argument("simulate_network: need M >= 1");
    if (cfg.N < 0) throw std::invalid_argument("simulate_network: need N >= 0");
    if (!(cfg.horizon > 0.0)) throw std::invalid_argument("simulate_network: horizon must be positive");
    if (!(cfg.checkpoint_every > 0.0)) throw std::invalid_argument("simulate_network: checkpoint spacing must be positive");
    if (cfg.placement == Placement::stationary && !nu)
        throw std::invalid_argument("simulate_network: stationary placement needs a reference state");

    const std::size_t M = static_cast<std::size_t>(cfg.M);
    Rng rng(seed, stream::network, 0);
    ServiceSampler draw(d);
    NetworkRun run;
    run.config = cfg;
    NetworkState& s = run.final_state;
    s.queues.assign(M, {});
    s.service_start.assign(M, 0.0);

    switch (cfg.placement) {
        case Placement::round_robin:
            for (int k = 0; k < cfg.N; ++k) s.queues[static_cast<std::size_t>(k) % M].push_back(k);
            break;
        case Placement::all_at_one:
            for (int k = 0; k < cfg.N; ++k) s.queues[0].push_back(k);
            break;
        case Placement::stationary: {
            const std::vector<int> n = stationary_lengths(cfg.M, cfg.N, *nu, rng);
            int id = 0;
            for (std::size_t i = 0; i < M; ++i)
                for (int k = 0; k < n[i]; ++k) s.queues[i].push_back(id++);
            break;
        }
    }

    const int tagged = std::min(cfg.tagged, cfg.M);
    run.flows.resize(static_cast<std::size_t>(tagged));
    for (int i = 0; i < tagged; ++i) {
        TaggedFlow& f = run.flows[static_cast<std::size_t>(i)];
        f.server = i;
        f.initial_ids.assign(s.queues[static_cast<std::size_t>(i)].begin(), s.queues[static_cast<std::size_t>(i)].end());
    }

    // Min-heap of (completion time, server); ties go to the lower index.
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    for (std::size_t i = 0; i < M; ++i)
        if (!s.queues[i].empty()) heap.emplace(draw(rng), static_cast<int>(i));

    auto checkpoint = [&](double t) {
        run.checkpoint_times.push_back(t);
        std::vector<int> n(M);
        long total = 0;
        for (std::size_t i = 0; i < M; ++i) {
            n[i] = static_cast<int>(s.queues[i].size());
            total += n[i];
        }
        if (total != cfg.N) run.conserved = false;
        run.checkpoints.push_back(std::move(n));
    };
    double next_cp = 0.0;
    while (!heap.empty() && heap.top().first <= cfg.horizon) {
        const auto [t, from] = heap.top();
        heap.pop();
        while (next_cp <= t && next_cp <= cfg.horizon) {
            s.clock = next_cp;
            checkpoint(next_cp);
            next_cp += cfg.checkpoint_every;
        }
        s.clock = t;
        auto& qf = s.queues[static_cast<std::size_t>(from)];
        const int id = qf.front();
        qf.pop_front();
        if (from < tagged) {
            run.flows[static_cast<std::size_t>(from)].departures.push_back(t);
            run.flows[static_cast<std::size_t>(from)].departure_ids.push_back(id);
        }
        if (!qf.empty()) {
            s.service_start[static_cast<std::size_t>(from)] = t;
            heap.emplace(t + draw(rng), from);
        }
        const int to = static_cast<int>(rng.below(M));
        auto& qt = s.queues[static_cast<std::size_t>(to)];
        qt.push_back(id);
        if (qt.size() == 1) {
            s.service_start[static_cast<std::size_t>(to)] = t;
            heap.emplace(t + draw(rng), to);
        }
        if (to < tagged) {
            run.flows[static_cast<std::size_t>(to)].arrivals.push_back(t);
            run.flows[static_cast<std::size_t>(to)].arrival_ids.push_back(id);
        }
        if (cfg.record_log) run.log.push_back({t, from, to});
        if (cfg.audit && s.customers() != cfg.N) run.conserved = false;
        ++run.events;
    }
    while (next_cp <= cfg.horizon) {
        s.clock = next_cp;
        checkpoint(next_cp);
        next_cp += cfg.checkpoint_every;
    }
    s.clock = cfg.horizon;
    return run;
}

// ---------------------------------------------------------------- statistics

FlowReport tagged_flow_tests(const std::vector<TaggedFlow>& flows, double burn_in, int M, std::uint64_t seed,
                             int bootstrap_draws) {
    FlowReport rep;
    std::vector<double> pooled;
    std::vector<std::vector<double>> per_flow;
    double t_end = burn_in;
    for (const TaggedFlow& f : flows)
        if (!f.arrivals.empty()) t_end = std::max(t_end, f.arrivals.back());
    const double mid = 0.5 * (burn_in + t_end);
    double first = 0.0, second = 0.0;
    for (const TaggedFlow& f : flows) {
        std::vector<double> gaps;
        double prev = -1.0;
        for (double a : f.arrivals) {
            if (a < burn_in) continue;
            (a < mid ? first : second) += 1.0;
            if (prev >= 0.0) gaps.push_back(a - prev);
            prev = a;
        }
        pooled.insert(pooled.end(), gaps.begin(), gaps.end());
        per_flow.push_back(std::move(gaps));
    }
    if (first + second < 500.0)
        throw std::invalid_argument("tagged_flow_tests: need at least 500 post-burn-in arrivals, have " +
                                    std::to_string(static_cast<long>(first + second)));
    rep.interarrivals = pooled.size();
    rep.ks = ks_exponential(pooled, seed, bootstrap_draws);

    const int lags = 10;
    rep.acf.assign(lags, 0.0);
    double weight = 0.0;
    for (const auto& g : per_flow) {
        if (static_cast<int>(g.size()) <= lags + 1) continue;
        const std::vector<double> a = autocorrelations(g, lags);
        for (int k = 0; k < lags; ++k) rep.acf[static_cast<std::size_t>(k)] += a[static_cast<std::size_t>(k)] * static_cast<double>(g.size());
        weight += static_cast<double>(g.size());
    }
    if (weight > 0.0)
        for (double& v : rep.acf) v /= weight;
    rep.acf_band = 1.96 / std::sqrt(std::max(1.0, weight));
    // One lag in ten may leave a 95% band by chance.
    int outside = 0;
    for (double v : rep.acf)
        if (std::abs(v) > rep.acf_band) ++outside;
    rep.acf_within_band = outside <= 1;
    rep.small_M = M < 100;
    const double half = mid - burn_in;
    if (half > 0.0) {
        const double r1 = first / half, r2 = second / half;
        const double se = std::sqrt(first + second) / half;
        rep.rate_plateaued = std::abs(r1 - r2) <= 3.0 * se;
    }
    return rep;
}

namespace {

std::size_t first_after(const NetworkRun& run, double burn_in) {
    return static_cast<std::size_t>(std::lower_bound(run.checkpoint_times.begin(), run.checkpoint_times.end(), burn_in) -
                                    run.checkpoint_times.begin());
}

// Pearson correlation of the pooled (a, b) pairs drawn from the checkpoint
// indices listed in `rows`, with rows counted according to `mult`.
double pooled_pearson(const NetworkRun& run, const std::vector<std::pair<int, int>>& pairs,
                      const std::vector<std::size_t>& rows) {
    double n = 0, sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (std::size_t r : rows) {
        const auto& q = run.checkpoints[r];
        for (const auto& [i, j] : pairs) {
            const double a = q[static_cast<std::size_t>(i)], b = q[static_cast<std::size_t>(j)];
            n += 1;
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
    }
    if (n < 2) return 0.0;
    const double ca = saa - sa * sa / n, cb = sbb - sb * sb / n, cab = sab - sa * sb / n;
    if (ca <= 0.0 || cb <= 0.0) return 0.0;
    return cab / std::sqrt(ca * cb);
}

CorrelationEstimate correlate(const NetworkRun& run, const std::vector<std::pair<int, int>>& pairs, double burn_in,
                              std::uint64_t seed) {
    const std::size_t lo = first_after(run, burn_in), hi = run.checkpoints.size();
    if (hi <= lo + 1) throw std::invalid_argument("pair_correlation: burn-in leaves fewer than two checkpoints");
    std::vector<std::size_t> rows(hi - lo);
    std::iota(rows.begin(), rows.end(), lo);
    CorrelationEstimate est;
    est.pairs = pairs.size();
    est.points = rows.size() * pairs.size();
    est.rho = pooled_pearson(run, pairs, rows);

    // Moving-block bootstrap over time; blocks of ~√T checkpoints.
    const std::size_t T = rows.size();
    const std::size_t L = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(T))));
    const std::size_t nblocks = (T + L - 1) / L;
    Rng rng(seed, stream::bootstrap, 1);
    const int B = 199;
    double s = 0, ss = 0;
    std::vector<std::size_t> boot;
    for (int b = 0; b < B; ++b) {
        boot.clear();
        for (std::size_t k = 0; k < nblocks; ++k) {
            const std::size_t start = rng.below(T - std::min(L, T) + 1);
            for (std::size_t m = 0; m < L && boot.size() < T; ++m) boot.push_back(lo + start + m);
        }
        const double r = pooled_pearson(run, pairs, boot);
        s += r;
        ss += r * r;
    }
    const double m = s / B;
    est.se = std::sqrt(std::max(0.0, ss / B - m * m) * B / (B - 1));
    return est;
}

}  // namespace

CorrelationEstimate pair_correlation(const NetworkRun& run, int i, int j, double burn_in, std::uint64_t seed) {
    if (i == j) throw std::invalid_argument("pair_correlation: need distinct servers");
    if (i < 0 || j < 0 || i >= run.config.M || j >= run.config.M)
        throw std::invalid_argument("pair_correlation: server index out of range");
    return correlate(run, {{i, j}}, burn_in, seed);
}

CorrelationEstimate pooled_pair_correlation(const NetworkRun& run, double burn_in, std::uint64_t seed, int pairs) {
    const int avail = run.config.M / 2;
    if (avail < 1) throw std::invalid_argument("pooled_pair_correlation: need M >= 2");
    const int k = pairs <= 0 ? avail : std::min(pairs, avail);
    std::vector<std::pair<int, int>> ps;
    for (int p = 0; p < k; ++p) ps.emplace_back(2 * p, 2 * p + 1);
    return correlate(run, ps, burn_in, seed);
}

FixedPointComparison compare_to_fixed_point(const NetworkRun& run, const StateDistribution& nu, double c,
                                            double burn_in) {
    if (!(burn_in < run.config.horizon)) throw std::invalid_argument("compare_to_fixed_point: burn-in must precede the horizon");
    FixedPointComparison cmp;
    cmp.c = c;
    cmp.rho = static_cast<double>(run.config.N) / run.config.M;
    cmp.reference = nu.queue_marginal();
    const std::size_t lo = first_after(run, burn_in);
    std::vector<double> counts(cmp.reference.size(), 0.0);
    double total = 0.0, sum_n = 0.0;
    for (std::size_t r = lo; r < run.checkpoints.size(); ++r)
        for (int n : run.checkpoints[r]) {
            if (static_cast<std::size_t>(n) >= counts.size()) counts.resize(static_cast<std::size_t>(n) + 1, 0.0);
            counts[static_cast<std::size_t>(n)] += 1.0;
            total += 1.0;
            sum_n += n;
        }
    if (total == 0.0) throw std::invalid_argument("compare_to_fixed_point: no checkpoints after burn-in");
    for (double& v : counts) v /= total;
    cmp.empirical = counts;
    cmp.mean_queue = sum_n / total;
    const std::size_t L = std::max(counts.size(), cmp.reference.size());
    double tv = 0.0;
    for (std::size_t k = 0; k < L; ++k) {
        const double a = k < counts.size() ? counts[k] : 0.0;
        const double b = k < cmp.reference.size() ? cmp.reference[k] : 0.0;
        tv += std::abs(a - b);
    }
    cmp.tv = 0.5 * tv;
    cmp.limit_regime = run.config.M >= 100;
    return cmp;
}

// ---------------------------------------------------------------- empirical measure

std::vector<Atom> symmetrize(const NetworkState& s) {
    const double M = static_cast<double>(s.servers());
    std::map<std::pair<int, double>, double> merged;
    for (std::size_t i = 0; i < s.servers(); ++i) {
        const int n = static_cast<int>(s.queues[i].size());
        merged[{n, n ? s.tau(i) : 0.0}] += 1.0 / M;
    }
    std::vector<Atom> out;
    for (const auto& [key, w] : merged) out.push_back({key.first, key.second, w});
    return out;
}

double atom_mean(const std::vector<Atom>& atoms) {
    double m = 0.0;
    for (const Atom& a : atoms) m += a.weight * a.n;
    return m;
}

StateDistribution atoms_to_state(const std::vector<Atom>& atoms, const ServiceDistribution& d, const MasterOptions& opt) {
    StateDistribution s = StateDistribution::idle_state(d, opt);
    s.idle = 0.0;
    for (const Atom& a : atoms) {
        if (a.n == 0) {
            s.idle += a.weight;
            continue;
        }
        if (a.n > s.n_max) throw std::invalid_argument("atoms_to_state: queue longer than n_max");
        const std::size_t k = s.K == 1 ? 0 : std::min(s.K - 1, static_cast<std::size_t>(a.tau / s.h));
        s.at(a.n, k) += a.weight;
    }
    return s;
}

}  // namespace phlab
