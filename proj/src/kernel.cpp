#include "phlab/kernel.hpp"

#include "phlab/rng.hpp"
#include "phlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/poisson.hpp>

namespace phlab {

namespace {

// One replica of the M(t)/GI/1 queue, kept only as the pieces the kernel
// tallies need. Busy period 0 is the initial one when the server starts busy.
struct Replica {
    double w0 = 0.0;               // initial work
    bool initial_busy = false;
    std::vector<double> arr, svc;  // arrivals in [0, horizon) and their services
    std::vector<double> bstart, bend;
    std::vector<double> dep;
    std::vector<int> dep_bp;

    void clear() {
        w0 = 0.0;
        initial_busy = false;
        arr.clear();
        svc.clear();
        bstart.clear();
        bend.clear();
        dep.clear();
        dep_bp.clear();
    }
    // Offered work of the initial customers and of arrivals before x.
    double work_before(double x) const {
        double w = w0;
        for (std::size_t i = 0; i < arr.size() && arr[i] < x; ++i) w += svc[i];
        return w;
    }
};

class Simulator {
public:
    Simulator(const RateFunction& lam, const ServiceDistribution& d, double horizon)
        : lam_(lam), d_(d), draw_(d), horizon_(horizon) {
        lmax_ = lam.size() ? *std::max_element(lam.values().begin(), lam.values().end()) : 0.0;
    }

    void run(const ServerConfiguration& init, Rng& rng, Replica& r) {
        r.clear();
        double free_at = 0.0;
        bool busy = false;
        if (init.busy) {
            r.initial_busy = true;
            double t = d_.sample_residual(rng, init.tau);
            r.w0 = t;
            r.bstart.push_back(0.0);
            push_dep(r, t, 0);
            for (int i = 1; i < init.n; ++i) {
                const double s = draw_(rng);
                t += s;
                r.w0 += s;
                push_dep(r, t, 0);
            }
            free_at = t;
            busy = true;
        }
        if (lmax_ > 0.0) {
            double a = 0.0;
            for (;;) {
                a += rng.exponential(lmax_);
                if (a >= horizon_) break;
                if (rng.uniform() * lmax_ > lam_(a)) continue;
                const double s = draw_(rng);
                r.arr.push_back(a);
                r.svc.push_back(s);
                if (!busy || a > free_at) {
                    if (busy) r.bend.push_back(free_at);
                    r.bstart.push_back(a);
                    free_at = a;
                    busy = true;
                }
                free_at += s;
                push_dep(r, free_at, static_cast<int>(r.bstart.size()) - 1);
            }
        }
        if (busy) r.bend.push_back(free_at);
    }

private:
    void push_dep(Replica& r, double t, int bp) const {
        if (t < horizon_) {
            r.dep.push_back(t);
            r.dep_bp.push_back(bp);
        }
    }

    const RateFunction& lam_;
    const ServiceDistribution& d_;
    ServiceSampler draw_;
    double horizon_;
    double lmax_ = 0.0;
};

std::size_t window_count(const Replica& r, double x, double w) {
    std::size_t c = 0;
    for (double t : r.dep)
        if (t >= x && t < x + w) ++c;
    return c;
}

// Per-batch tallies for one evaluation point x.
struct Tally {
    std::vector<double> D;     // busy-period starts per u-bin (good replicas)
    std::vector<double> E;     // idle at bin midpoint (good replicas), difference array until finalized
    std::vector<double> K;     // window departures per start bin (good replicas)
    double good = 0.0;         // replicas on the event Σ η < x (all replicas when unconditioned)
    double dep_good = 0.0;
    double dep_bad = 0.0;
    double n = 0.0;

    explicit Tally(std::size_t nb = 0) : D(nb, 0.0), E(nb + 1, 0.0), K(nb, 0.0) {}
};

struct Geometry {
    double x, w, du;
    std::size_t nb;
    Geometry(double x_, const KernelOptions& o) : x(x_), w(o.w), du(o.du) {
        nb = static_cast<std::size_t>(std::floor((x + w) / du)) + 1;
    }
    std::size_t bin(double u) const { return std::min(nb - 1, static_cast<std::size_t>(u / du)); }
    // First midpoint index at or after t.
    std::size_t mid_from(double t) const {
        const double v = std::ceil(t / du - 0.5);
        return v <= 0.0 ? 0 : std::min(nb, static_cast<std::size_t>(v));
    }
};

// Idle profile and busy-period starts use every replica; window departures
// feeding the kernel only count on the event Σ η < x. The kernel is then
// e(u)·c_G(u, t)/(1 − ε), c_G being the departure density restricted to the
// event, so (1 − ε)[λ∗q](x) is the output rate carried by the event.
void tally_replica(const Replica& r, const Geometry& g, bool conditioned, Tally& t) {
    t.n += 1.0;
    const bool good = !conditioned || r.work_before(g.x) < g.x;
    const double end = g.x + g.w;
    const double last = static_cast<double>(g.nb) * g.du;
    // Idle gaps between busy periods mark the midpoints they cover.
    double prev = 0.0;
    for (std::size_t b = 0; b < r.bstart.size(); ++b) {
        const double s = r.bstart[b];
        if (s >= last) break;
        if (!(r.initial_busy && b == 0)) {
            t.D[g.bin(s)] += 1.0;
            const std::size_t i0 = g.mid_from(prev), i1 = g.mid_from(s);
            if (i1 > i0) {
                t.E[i0] += 1.0;
                t.E[i1] -= 1.0;
            }
        }
        prev = r.bend[b];
    }
    const std::size_t i0 = g.mid_from(prev);
    if (i0 < g.nb) {
        t.E[i0] += 1.0;
        t.E[g.nb] -= 1.0;
    }
    if (!good) {
        t.dep_bad += static_cast<double>(window_count(r, g.x, g.w));
        return;
    }
    t.good += 1.0;
    for (std::size_t i = 0; i < r.dep.size(); ++i) {
        const double dt = r.dep[i];
        if (dt < g.x || dt >= end) continue;
        const int bp = r.dep_bp[i];
        t.dep_good += 1.0;
        if (!(r.initial_busy && bp == 0)) t.K[g.bin(r.bstart[static_cast<std::size_t>(bp)])] += 1.0;
    }
}

void finalize_idle(Tally& t, std::size_t nb) {
    double run = 0.0;
    for (std::size_t j = 0; j < nb; ++j) {
        run += t.E[j];
        t.E[j] = run;
    }
    t.E.resize(nb);
}

struct LhsTally {
    double n = 0.0, sum = 0.0, sumsq = 0.0;
};

// Simulates `samples` replicas in batches and hands each one to `visit`.
template <class Visit>
void run_batches(const RateFunction& lam, const ServiceDistribution& d, double horizon, const InitialLaw* init,
                 std::uint64_t samples, std::uint64_t seed, std::uint64_t stream_id, const KernelOptions& opt,
                 Visit visit) {
    const std::size_t B = static_cast<std::size_t>(std::max(1, opt.batches));
    parallel_for(B, opt.threads, [&](std::size_t b) {
        Simulator sim(lam, d, horizon);
        Replica rep;
        const std::uint64_t lo = samples * b / B, hi = samples * (b + 1) / B;
        for (std::uint64_t i = lo; i < hi; ++i) {
            Rng rng(seed, stream_id, i);
            const ServerConfiguration c = init ? init->draw(rng) : ServerConfiguration::idle();
            sim.run(c, rng, rep);
            visit(b, rep);
        }
    });
}

struct RhsSummary {
    KernelResult kr;
    double first = 0.0;      // (1−ε)[λ∗q]
    double second = 0.0;     // ε·Q
    MeanSe rhs, eps, Q, conv;
};

// Builds the kernel and the right-hand side of the (possibly noisy)
// decomposition from per-batch tallies.
RhsSummary assemble(const std::vector<Tally>& batches, const Geometry& g, const RateFunction& lam,
                    const KernelOptions& opt) {
    const std::size_t B = batches.size(), nb = g.nb;
    std::vector<double> lam_bar(nb);
    for (std::size_t j = 0; j < nb; ++j)
        lam_bar[j] = lam.average(static_cast<double>(j) * g.du, static_cast<double>(j + 1) * g.du);

    struct Sums {
        std::vector<double> D, E, K;
        double good = 0, dep_good = 0, dep_bad = 0, n = 0;
    };
    auto sums = [&](const std::vector<double>& wts) {
        Sums s{std::vector<double>(nb, 0.0), std::vector<double>(nb, 0.0), std::vector<double>(nb, 0.0)};
        for (std::size_t b = 0; b < B; ++b) {
            if (wts[b] == 0.0) continue;
            const Tally& t = batches[b];
            for (std::size_t j = 0; j < nb; ++j) {
                s.D[j] += t.D[j];
                s.E[j] += t.E[j];
                s.K[j] += t.K[j];
            }
            s.good += t.good;
            s.dep_good += t.dep_good;
            s.dep_bad += t.dep_bad;
            s.n += t.n;
        }
        return s;
    };
    const Sums all = sums(std::vector<double>(B, 1.0));

    // Bins too sparse for their own ratio borrow the neighbours' counts.
    std::vector<int> pooled(nb, 0);
    std::uint64_t min_events = ~std::uint64_t{0};
    bool any_start = false;
    for (std::size_t j = 0; j < nb; ++j) {
        if (all.D[j] > 0.0) any_start = true;
        if (all.K[j] == 0.0) continue;
        double dd = all.D[j];
        if (dd < static_cast<double>(opt.min_events)) {
            pooled[j] = 1;
            dd += (j > 0 ? all.D[j - 1] : 0.0) + (j + 1 < nb ? all.D[j + 1] : 0.0);
            if (dd < static_cast<double>(opt.min_events))
                throw StatisticalPowerError("kernel: only " + std::to_string(static_cast<long long>(dd)) +
                                            " busy-period starts near u = " +
                                            std::to_string((static_cast<double>(j) + 0.5) * g.du));
        }
        min_events = std::min(min_events, static_cast<std::uint64_t>(dd));
    }

    RhsSummary out;
    KernelEstimate& k = out.kr.kernel;
    k.x = g.x;
    k.w = g.w;
    k.du = g.du;
    k.samples = static_cast<std::uint64_t>(all.n);
    k.conditioned = static_cast<std::uint64_t>(all.good);
    k.lam_bar = lam_bar;
    k.no_data = !any_start;
    k.min_events = any_start && min_events != ~std::uint64_t{0} ? min_events : 0;

    auto qbin = [&](const Sums& s, std::size_t j) {
        if (s.good <= 0.0 || s.K[j] == 0.0) return 0.0;
        // (E/n)·(K/(D·w)) is (1 − ε)·q; dividing by (1 − ε) = good/n leaves q.
        double num = s.K[j], den = s.D[j];
        if (pooled[j]) {
            if (j > 0) num += s.K[j - 1], den += s.D[j - 1];
            if (j + 1 < nb) num += s.K[j + 1], den += s.D[j + 1];
        }
        if (den <= 0.0) return 0.0;
        return (s.E[j] / s.good) * num / (den * g.w);
    };
    auto conv_of = [&](const Sums& s) {
        double c = 0.0;
        for (std::size_t j = 0; j < nb; ++j) c += lam_bar[j] * qbin(s, j) * g.du;
        return c;
    };
    auto mass_of = [&](const Sums& s) {
        double c = 0.0;
        for (std::size_t j = 0; j < nb; ++j) c += qbin(s, j) * g.du;
        return c;
    };
    auto rhs_of = [&](const Sums& s) {
        if (s.n <= 0.0) return 0.0;
        return (s.good / s.n) * conv_of(s) + s.dep_bad / (s.n * g.w);
    };

    // Each bin and each functional gets its own delete-one-batch jackknife.
    std::vector<std::vector<double>> loo_q(B, std::vector<double>(nb));
    std::vector<double> loo_conv(B), loo_mass(B), loo_rhs(B), loo_eps(B), loo_Q(B);
    std::vector<double> wts(B, 1.0);
    for (std::size_t b = 0; b < B; ++b) {
        wts[b] = 0.0;
        const Sums s = sums(wts);
        wts[b] = 1.0;
        for (std::size_t j = 0; j < nb; ++j) loo_q[b][j] = qbin(s, j);
        loo_conv[b] = conv_of(s);
        loo_mass[b] = mass_of(s);
        loo_rhs[b] = rhs_of(s);
        loo_eps[b] = s.n > 0 ? 1.0 - s.good / s.n : 0.0;
        loo_Q[b] = s.n > s.good ? s.dep_bad / ((s.n - s.good) * g.w) : 0.0;
    }
    auto jk = [&](double full, const std::vector<double>& loo) {
        MeanSe r{full, 0.0};
        if (B < 2) return r;
        const double m = std::accumulate(loo.begin(), loo.end(), 0.0) / static_cast<double>(B);
        double ss = 0.0;
        for (double v : loo) ss += (v - m) * (v - m);
        r.se = std::sqrt(ss * static_cast<double>(B - 1) / static_cast<double>(B));
        return r;
    };

    k.t.resize(nb);
    k.q.resize(nb);
    k.se.resize(nb);
    std::vector<double> col(B);
    for (std::size_t j = 0; j < nb; ++j) {
        k.t[j] = g.x + 0.5 * g.w - (static_cast<double>(j) + 0.5) * g.du;
        for (std::size_t b = 0; b < B; ++b) col[b] = loo_q[b][j];
        const MeanSe m = jk(qbin(all, j), col);
        k.q[j] = m.mean;
        // The jackknife sees no spread in bins with a handful of counts; the
        // value one departure would contribute is the resolution floor.
        const double one = all.D[j] > 0.0 && all.good > 0.0 ? all.E[j] / (all.good * all.D[j] * g.w) : 0.0;
        k.se[j] = std::max(m.se, one);
    }
    const MeanSe mass = jk(mass_of(all), loo_mass);
    k.mass = mass.mean;
    k.mass_se = mass.se;
    out.conv = jk(conv_of(all), loo_conv);
    k.conv = out.conv.mean;
    k.conv_se = out.conv.se;
    out.rhs = jk(rhs_of(all), loo_rhs);
    out.eps = jk(all.n > 0 ? 1.0 - all.good / all.n : 0.0, loo_eps);
    out.Q = jk(all.n > all.good ? all.dep_bad / ((all.n - all.good) * g.w) : 0.0, loo_Q);
    out.first = all.n > 0 ? (all.good / all.n) * out.conv.mean : 0.0;
    out.second = all.n > 0 ? all.dep_bad / (all.n * g.w) : 0.0;

    IdleProfile& ip = out.kr.idle;
    ip.du = g.du;
    ip.u.resize(nb);
    ip.e.resize(nb);
    ip.se.resize(nb);
    for (std::size_t j = 0; j < nb; ++j) {
        ip.u[j] = (static_cast<double>(j) + 0.5) * g.du;
        const double e = all.n > 0 ? all.E[j] / all.n : 0.0;
        ip.e[j] = e;
        ip.se[j] = all.n > 0 ? std::sqrt(std::max(0.0, e * (1.0 - e)) / all.n) : 0.0;
    }
    return out;
}

// Tallies for a list of x values, one vector of batches per x.
std::vector<std::vector<Tally>> rhs_tallies(const RateFunction& lam, const ServiceDistribution& d,
                                            const std::vector<Geometry>& geo, const InitialLaw* init,
                                            bool conditioned, std::uint64_t samples, std::uint64_t seed,
                                            const KernelOptions& opt) {
    const std::size_t B = static_cast<std::size_t>(std::max(1, opt.batches));
    double horizon = 0.0;
    for (const Geometry& g : geo) horizon = std::max(horizon, g.x + g.w);
    std::vector<std::vector<Tally>> tallies(geo.size());
    for (std::size_t i = 0; i < geo.size(); ++i) tallies[i].assign(B, Tally(geo[i].nb));
    run_batches(lam, d, horizon, init, samples, seed, stream::kernel_rhs, opt,
                [&](std::size_t b, const Replica& r) {
                    for (std::size_t i = 0; i < geo.size(); ++i) tally_replica(r, geo[i], conditioned, tallies[i][b]);
                });
    for (std::size_t i = 0; i < geo.size(); ++i)
        for (Tally& t : tallies[i]) finalize_idle(t, geo[i].nb);
    return tallies;
}

std::vector<MeanSe> lhs_rates(const RateFunction& lam, const ServiceDistribution& d, const std::vector<double>& xs,
                              const InitialLaw* init, std::uint64_t samples, std::uint64_t seed,
                              const KernelOptions& opt) {
    const std::size_t B = static_cast<std::size_t>(std::max(1, opt.batches));
    double horizon = 0.0;
    for (double x : xs) horizon = std::max(horizon, x + opt.w);
    std::vector<std::vector<LhsTally>> acc(B, std::vector<LhsTally>(xs.size()));
    run_batches(lam, d, horizon, init, samples, seed, stream::kernel_lhs, opt,
                [&](std::size_t b, const Replica& r) {
                    for (std::size_t i = 0; i < xs.size(); ++i) {
                        const double c = static_cast<double>(window_count(r, xs[i], opt.w));
                        LhsTally& t = acc[b][i];
                        t.n += 1.0;
                        t.sum += c;
                        t.sumsq += c * c;
                    }
                });
    std::vector<MeanSe> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double n = 0, s = 0, ss = 0;
        for (std::size_t b = 0; b < B; ++b) n += acc[b][i].n, s += acc[b][i].sum, ss += acc[b][i].sumsq;
        const double m = s / n;
        const double var = n > 1 ? (ss - n * m * m) / (n - 1) : 0.0;
        out[i] = {m / opt.w, std::sqrt(std::max(0.0, var) / n) / opt.w};
    }
    return out;
}

void check_inputs(const RateFunction& lam, const std::vector<double>& xs, std::uint64_t samples,
                  const KernelOptions& opt) {
    if (xs.empty()) throw std::invalid_argument("kernel: no evaluation points");
    for (double x : xs)
        if (!(x > 0.0)) throw std::invalid_argument("kernel: x must be positive");
    if (samples == 0) throw std::invalid_argument("kernel: samples must be positive");
    if (!(opt.w > 0.0) || !(opt.du > 0.0)) throw std::invalid_argument("kernel: bin widths must be positive");
    lam.checked_max();
}

}  // namespace

// ---------------------------------------------------------------- estimators

KernelResult estimate_kernel(const RateFunction& lam, const ServiceDistribution& d, double x, std::uint64_t samples,
                             std::uint64_t seed, const KernelOptions& opt) {
    check_inputs(lam, {x}, samples, opt);
    const std::vector<Geometry> geo{Geometry(x, opt)};
    const auto tallies = rhs_tallies(lam, d, geo, nullptr, false, samples, seed, opt);
    return assemble(tallies[0], geo[0], lam, opt).kr;
}

std::vector<SelfAveragingRow> verify_self_averaging(const RateFunction& lam, const ServiceDistribution& d,
                                                    const std::vector<double>& xs, std::uint64_t samples,
                                                    std::uint64_t seed, const KernelOptions& opt) {
    check_inputs(lam, xs, samples, opt);
    std::vector<Geometry> geo;
    for (double x : xs) geo.emplace_back(x, opt);
    const auto tallies = rhs_tallies(lam, d, geo, nullptr, false, samples, seed, opt);
    const auto lhs = lhs_rates(lam, d, xs, nullptr, samples, seed, opt);
    std::vector<SelfAveragingRow> rows;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        RhsSummary s = assemble(tallies[i], geo[i], lam, opt);
        SelfAveragingRow r;
        r.x = xs[i];
        r.lhs = lhs[i].mean;
        r.lhs_se = lhs[i].se;
        r.rhs = s.conv.mean;
        r.rhs_se = s.conv.se;
        r.se = std::hypot(r.lhs_se, r.rhs_se);
        r.z = r.se > 0.0 ? (r.lhs - r.rhs) / r.se : (r.lhs == r.rhs ? 0.0 : INFINITY);
        r.mass = s.kr.kernel.mass;
        r.mass_se = s.kr.kernel.mass_se;
        r.pass = std::abs(r.z) <= 3.0 && r.mass <= 1.0 + 3.0 * r.mass_se;
        r.kernel = std::move(s.kr);
        rows.push_back(std::move(r));
    }
    return rows;
}

FirstTermCheck first_term_check(const RateFunction& lam, const ServiceDistribution& d, double y,
                                std::uint64_t samples, std::uint64_t seed, const KernelOptions& opt) {
    check_inputs(lam, {y}, samples, opt);
    const double w = opt.w;
    const std::size_t B = static_cast<std::size_t>(std::max(1, opt.batches));
    std::vector<LhsTally> acc(B);
    run_batches(lam, d, y + w, nullptr, samples, seed, stream::kernel_lhs, opt,
                [&](std::size_t b, const Replica& r) {
                    acc[b].n += 1.0;
                    if (r.arr.empty()) return;
                    const double dep = r.arr[0] + r.svc[0];
                    const bool alone = r.arr.size() < 2 || r.arr[1] > dep;
                    if (alone && dep >= y && dep < y + w) {
                        acc[b].sum += 1.0;
                        acc[b].sumsq += 1.0;
                    }
                });
    double n = 0, s = 0;
    for (const LhsTally& t : acc) n += t.n, s += t.sum;
    FirstTermCheck r;
    r.y = y;
    const double p = s / n;
    r.mc = p / w;
    r.mc_se = std::sqrt(std::max(p * (1.0 - p), 1.0 / n) / n) / w;

    // b_1(s) = ∫_0^s λ(s−l) p(l) dl by composite Simpson on a fine grid.
    auto b1 = [&](double sv) {
        const int m = 2 * std::max(200, static_cast<int>(std::ceil(sv / 0.005)) / 2);
        const double hh = sv / m;
        double acc1 = 0.0;
        for (int i = 0; i <= m; ++i) {
            const double l = hh * i;
            const double c = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            acc1 += c * lam(sv - l) * d.pdf(l);
        }
        return acc1 * hh / 3.0;
    };
    // Window average with 5-point Gauss-Legendre on [y, y+w].
    static const double gx[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                 0.9061798459386640};
    static const double gw[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                                 0.2369268850561891};
    double o = 0.0;
    for (int i = 0; i < 5; ++i) {
        const double sv = y + 0.5 * w * (1.0 + gx[i]);
        o += 0.5 * gw[i] * std::exp(-lam.integral(0.0, sv)) * b1(sv);
    }
    r.oracle = o;
    r.b1 = b1(y);
    r.rescaled = r.mc * std::exp(lam.integral(0.0, y));
    r.z = r.mc_se > 0.0 ? (r.mc - r.oracle) / r.mc_se : 0.0;
    return r;
}

// ---------------------------------------------------------------- noisy decomposition

InitialLaw::InitialLaw(const StateDistribution& mu) {
    double c = 0.0;
    if (mu.idle > 0.0) {
        c += mu.idle;
        cum_.push_back(c);
        cells_.push_back(ServerConfiguration::idle());
    }
    for (int n = 1; n <= mu.n_max; ++n)
        for (std::size_t k = 0; k < mu.K; ++k) {
            const double v = mu.at(n, k);
            if (v <= 0.0) continue;
            c += v;
            cum_.push_back(c);
            cells_.push_back(ServerConfiguration::with(n, mu.K == 1 ? 0.0 : static_cast<double>(k) * mu.h));
        }
    if (cells_.empty()) throw std::invalid_argument("InitialLaw: state has no mass");
}

ServerConfiguration InitialLaw::draw(Rng& rng) const {
    if (cells_.size() == 1) return cells_[0];
    const double u = rng.uniform() * cum_.back();
    const std::size_t i = static_cast<std::size_t>(std::upper_bound(cum_.begin(), cum_.end(), u) - cum_.begin());
    return cells_[std::min(i, cells_.size() - 1)];
}

double InitialLaw::mean_work(const ServiceDistribution& d) const {
    double acc = 0.0, prev = 0.0;
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        const double wgt = cum_[i] - prev;
        prev = cum_[i];
        const ServerConfiguration& c = cells_[i];
        if (!c.busy) continue;
        acc += wgt * (residual_mean(d, c.tau) + (c.n - 1) * d.mean());
    }
    return acc / cum_.back();
}

std::vector<EpsilonRow> epsilon_noise(const StateDistribution& mu, const RateFunction& lam,
                                      const ServiceDistribution& d, const std::vector<double>& xs,
                                      std::uint64_t samples, std::uint64_t seed, int threads) {
    KernelOptions opt;
    opt.threads = threads;
    check_inputs(lam, xs, samples, opt);
    const InitialLaw init(mu);
    if (!std::isfinite(init.mean_work(d))) throw std::invalid_argument("epsilon_noise: initial work has infinite mean");
    const std::size_t B = static_cast<std::size_t>(opt.batches);
    const double horizon = *std::max_element(xs.begin(), xs.end());
    std::vector<std::vector<double>> hits(B, std::vector<double>(xs.size(), 0.0));
    std::vector<double> n(B, 0.0);
    run_batches(lam, d, horizon, &init, samples, seed, stream::noise, opt, [&](std::size_t b, const Replica& r) {
        n[b] += 1.0;
        for (std::size_t i = 0; i < xs.size(); ++i)
            if (r.work_before(xs[i]) >= xs[i]) hits[b][i] += 1.0;
    });
    const double N = std::accumulate(n.begin(), n.end(), 0.0);
    std::vector<EpsilonRow> out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double h = 0.0;
        for (std::size_t b = 0; b < B; ++b) h += hits[b][i];
        const double p = h / N;
        out.push_back({xs[i], p, std::sqrt(std::max(p * (1.0 - p), 1.0 / N) / N)});
    }
    return out;
}

std::vector<NoisyRow> verify_noisy(const StateDistribution& mu, const RateFunction& lam,
                                   const ServiceDistribution& d, const std::vector<double>& xs,
                                   std::uint64_t samples, std::uint64_t seed, const KernelOptions& opt) {
    check_inputs(lam, xs, samples, opt);
    const InitialLaw init(mu);
    if (!std::isfinite(init.mean_work(d))) throw std::invalid_argument("verify_noisy: initial work has infinite mean");
    std::vector<Geometry> geo;
    for (double x : xs) geo.emplace_back(x, opt);
    const auto tallies = rhs_tallies(lam, d, geo, &init, true, samples, seed, opt);
    const auto lhs = lhs_rates(lam, d, xs, &init, samples, seed, opt);
    const double cap = d.hazard_cap;
    const double ratio_cap = d.ratio_constant() > 0.0 ? 1.0 / d.ratio_constant() : INFINITY;
    std::vector<NoisyRow> rows;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        RhsSummary s = assemble(tallies[i], geo[i], lam, opt);
        NoisyRow r;
        r.x = xs[i];
        r.lhs = lhs[i].mean;
        r.lhs_se = lhs[i].se;
        r.rhs = s.rhs.mean;
        r.rhs_se = s.rhs.se;
        r.se = std::hypot(r.lhs_se, r.rhs_se);
        r.z = r.se > 0.0 ? (r.lhs - r.rhs) / r.se : (r.lhs == r.rhs ? 0.0 : INFINITY);
        r.eps = s.eps.mean;
        r.eps_se = s.eps.se;
        r.conv = s.conv.mean;
        r.Q = s.Q.mean;
        r.Q_se = s.Q.se;
        r.q_cap = cap;
        r.q_cap_ratio = ratio_cap;
        r.q_within_cap = r.Q <= cap + 3.0 * r.Q_se;
        r.q_within_ratio_cap = r.Q <= ratio_cap + 3.0 * r.Q_se;
        r.mass = s.kr.kernel.mass;
        r.mass_se = s.kr.kernel.mass_se;
        r.pass = std::abs(r.z) <= 3.0 && r.mass <= 1.0 + 3.0 * r.mass_se && r.q_within_cap;
        r.kernel = std::move(s.kr);
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---------------------------------------------------------------- bounds

double windowed_rate_margin(const RateFunction& lam, double t_min) {
    if (!(t_min > 0.0)) throw std::invalid_argument("windowed_rate_margin: t_min must be positive");
    const double H = lam.horizon();
    if (H <= t_min) return 1.0 - lam.average(0.0, t_min);
    double worst = 0.0;
    for (double T = t_min; T <= H; T *= 2.0) {
        const double step = std::min(lam.h(), T / 4.0);
        for (double s = 0.0; s + T <= H + 1e-12; s += step) worst = std::max(worst, lam.average(s, s + T));
    }
    return 1.0 - worst;
}

namespace {

// Average of f over the offsets a bin collects: departure in [x, x+w), start
// in [u_j, u_j + du).
template <class F>
double bin_average(const KernelEstimate& k, std::size_t j, F f) {
    constexpr int m = 8;
    const double u0 = static_cast<double>(j) * k.du;
    double acc = 0.0;
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
            const double dep = k.x + k.w * (a + 0.5) / m;
            const double u = u0 + k.du * (b + 0.5) / m;
            acc += f(dep - u, u);
        }
    return acc / (m * m);
}

}  // namespace

BoundsReport bounds_and_moments(const RateFunction& lam, const ServiceDistribution& d, const KernelResult& kr,
                                double b, double t_envelope) {
    BoundsReport rep;
    rep.eps_prime = windowed_rate_margin(lam, 10.0);
    if (!(rep.eps_prime > 0.0)) throw std::invalid_argument("bounds_and_moments: λ violates the windowed-rate condition");
    const KernelEstimate& k = kr.kernel;
    const IdleProfile& ip = kr.idle;
    const std::size_t nb = k.q.size();
    rep.t_envelope = t_envelope;
    rep.b = b < 0.0 ? d.moment_delta / 4.0 : b;

    // Lower bound: q(t) ≥ p(t)·e(x−t), with e read at the start-bin midpoint.
    rep.lower.tolerance = 3.0;
    rep.lower.value = INFINITY;
    for (std::size_t j = 0; j < nb; ++j) {
        const double pe = bin_average(k, j, [&](double t, double) { return t > 0.0 ? d.pdf(t) : 0.0; }) * ip.e[j];
        const double se = std::hypot(k.se[j], ip.se[j] * d.pdf(std::max(k.t[j], 0.0)));
        rep.lower.value = std::min(rep.lower.value, k.q[j] - pe + 3.0 * se);
    }
    rep.lower.pass = rep.lower.value >= 0.0;

    // Envelope 𝒬(t) = Σ p^{*n}(t)·Pr{N_t ≥ n−1} on t ≤ t_envelope.
    ConvolutionOptions co;
    co.x_max = t_envelope + k.w + k.du;
    const int n_max = 40;
    const ConvolutionTable ct = convolve_power(d, n_max, co);
    auto envelope = [&](double t, double) {
        if (t <= 0.0) return 0.0;
        const double L = lam.integral(std::max(0.0, k.x - t), k.x);
        double acc = 0.0;
        for (int n = 1; n <= n_max; ++n) {
            const double pn = ct.tables[static_cast<std::size_t>(n - 1)].at(t);
            if (pn == 0.0) continue;
            const double tail = n == 1 || L <= 0.0
                                    ? (n == 1 ? 1.0 : 0.0)
                                    : boost::math::cdf(boost::math::complement(boost::math::poisson_distribution<>(L),
                                                                               static_cast<double>(n - 2)));
            acc += pn * tail;
        }
        return acc;
    };
    rep.upper.tolerance = 3.0;
    rep.upper.value = INFINITY;
    for (std::size_t j = 0; j < nb; ++j) {
        if (k.t[j] - 0.5 * (k.w + k.du) > t_envelope || k.t[j] + 0.5 * (k.w + k.du) <= 0.0) continue;
        const double env = bin_average(k, j, envelope);
        rep.envelope.push_back(env);
        rep.upper.value = std::min(rep.upper.value, env + 3.0 * k.se[j] - k.q[j]);
    }
    rep.upper.pass = rep.upper.value >= 0.0;

    // Uniform cap from the renewal sum.
    const RenewalDensity rd = renewal_density(d, std::min(std::max(k.x, 5.0), 40.0), 80);
    rep.uniform_cap = *std::max_element(rd.s.v.begin(), rd.s.v.end());
    rep.cap.tolerance = 3.0;
    rep.cap.value = INFINITY;
    for (std::size_t j = 0; j < nb; ++j)
        rep.cap.value = std::min(rep.cap.value, rep.uniform_cap + 3.0 * k.se[j] - k.q[j]);
    rep.cap.pass = rep.cap.value >= 0.0;

    // Fractional moment and a bound from the envelope (or the cap beyond it).
    double m = 0.0, var = 0.0, bound = 0.0;
    for (std::size_t j = 0; j < nb; ++j) {
        const double t = std::max(k.t[j], 0.0);
        const double tb = rep.b == 0.0 ? 1.0 : std::pow(t, rep.b);
        m += tb * k.q[j] * k.du;
        var += (tb * k.se[j] * k.du) * (tb * k.se[j] * k.du);
        const double env = k.t[j] <= t_envelope ? bin_average(k, j, envelope) : rep.uniform_cap;
        bound += tb * std::max(env, 0.0) * k.du;
    }
    rep.moment = m;
    rep.moment_se = std::sqrt(var);
    rep.moment_bound = rep.b == 0.0 ? 1.0 : bound;
    rep.moment_check.tolerance = 3.0;
    rep.moment_check.value = rep.moment_bound + 3.0 * rep.moment_se - rep.moment;
    rep.moment_check.pass = std::isfinite(rep.moment) && rep.moment_check.value >= 0.0;
    return rep;
}

double kernel_l1(const KernelEstimate& a, const KernelEstimate& b) {
    if (std::abs(a.du - b.du) > 1e-12) throw std::invalid_argument("kernel_l1: bin widths differ");
    auto key = [&](double t) { return std::llround(t / a.du * 2.0); };
    double acc = 0.0;
    std::size_t i = 0, j = 0;
    // t decreases along both histograms.
    while (i < a.t.size() || j < b.t.size()) {
        if (j >= b.t.size() || (i < a.t.size() && key(a.t[i]) > key(b.t[j]))) {
            acc += std::abs(a.q[i++]) * a.du;
        } else if (i >= a.t.size() || key(b.t[j]) > key(a.t[i])) {
            acc += std::abs(b.q[j++]) * a.du;
        } else {
            acc += std::abs(a.q[i++] - b.q[j++]) * a.du;
        }
    }
    return acc;
}

}  // namespace phlab
