#include "phlab/acceptance.hpp"

#include "phlab/dist.hpp"
#include "phlab/io.hpp"
#include "phlab/kernel.hpp"
#include "phlab/master.hpp"
#include "phlab/meanfield.hpp"
#include "phlab/nmp.hpp"
#include "phlab/queue.hpp"
#include "phlab/relax.hpp"
#include "phlab/rods.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <numbers>
#include <cmath>
#include <functional>
#include <sstream>

namespace phlab {

namespace {

using Clock = std::chrono::steady_clock;

std::string num(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// ---------------------------------------------------------------- 1, 2: rods

Outcome rod_identity(const AcceptanceOptions& o) {
    std::size_t bad = 0, disagree = 0, total = 0;
    for (int n = 2; n <= 6; ++n) {
        for (const auto& r : rods::sweep(rods::SweepKind::plain, n, 1000, 11 + o.seed_offset, o.threads)) {
            ++total;
            bad += !r.equals_factorial;
            disagree += !r.agree;
        }
    }
    const auto ex = rods::total_counts<double>({-3.0}, {1.0, 10.0});
    const bool example = ex.per_permutation.size() == 2 && ex.per_permutation[0].bruteforce == 2 &&
                         ex.per_permutation[1].bruteforce == 0 && ex.total == 2;
    Outcome out;
    out.pass = bad == 0 && disagree == 0 && example;
    out.detail = std::to_string(total) + " instances, " + std::to_string(bad) + " with N != n!, " +
                 std::to_string(disagree) + " formula/bruteforce disagreements; 2-rod example N12=" +
                 std::to_string(ex.per_permutation[0].bruteforce) + " N21=" +
                 std::to_string(ex.per_permutation[1].bruteforce);
    return out;
}

Outcome anchored_identity(const AcceptanceOptions& o) {
    std::size_t bad = 0, total = 0, found = 0;
    std::filesystem::create_directories(o.archive_dir);
    io::CsvTable archive({"n", "index", "total", "factorial", "T", "L", "points", "lengths"});
    const std::uint64_t seed = 13 + o.seed_offset;
    for (int n = 2; n <= 6; ++n) {
        for (const auto& r : rods::sweep(rods::SweepKind::anchored, n, 200, seed, o.threads)) {
            ++total;
            bad += !r.equals_factorial || !r.constraint_ok;
        }
        long long fact = 1;
        for (int k = 2; k <= n; ++k) fact *= k;
        const rods::InstanceGenerator gen(seed);
        for (const auto& r : rods::sweep(rods::SweepKind::anchored_violating, n, 50, seed, o.threads)) {
            if (r.equals_factorial) continue;
            ++found;
            const auto in = gen.anchored_violating(n, r.index);
            std::string pts, ls;
            for (double p : in.points) pts += (pts.empty() ? "" : " ") + io::fmt(p);
            for (double l : in.lengths) ls += (ls.empty() ? "" : " ") + io::fmt(l);
            archive.add({std::to_string(n), std::to_string(r.index), std::to_string(r.total), std::to_string(fact),
                         io::fmt(in.T), io::fmt(in.L), pts, ls});
        }
    }
    archive.write(o.archive_dir / "anchored_counterexamples.csv");
    Outcome out;
    out.pass = bad == 0 && found > 0;
    out.detail = std::to_string(total) + " constrained instances, " + std::to_string(bad) + " with N~ != n!; " +
                 std::to_string(found) + " violating instances with N~ != n! archived";
    return out;
}

// ---------------------------------------------------------------- 3, 4: dist and master equation

Outcome renewal(const AcceptanceOptions&) {
    const auto e = ServiceDistribution::exponential(1.0);
    const auto se = renewal_density(e, 40.0, 120);
    double worst = 0.0;
    for (std::size_t k = 0; k < se.s.size(); ++k)
        if (se.s.x(k) >= 0.5 - 1e-12) worst = std::max(worst, std::abs(se.s.v[k] - 1.0));
    const auto g = ServiceDistribution::gamma(2.0, 2.0);
    const auto sg = renewal_density(g, 40.0, 140);
    const double g40 = sg.s.v.back();
    Outcome out;
    out.pass = worst < 1e-6 && std::abs(g40 - 1.0) < 1e-2 && se.tail_ok && sg.tail_ok;
    out.detail = "exp(1): max |s-1| on [0.5,40] = " + num(worst, 3) + "; gamma(2,2): s(40) = " + num(g40, 8);
    return out;
}

Outcome mm1(const AcceptanceOptions&) {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto nu = stationary_state(0.5, d);
    const auto ob = observables(nu, d);
    const auto tr = evolve_master(StateDistribution::idle_state(d), RateFunction::constant(0.5, 0.01, 200.0), d, 200.0);
    double b = 0.0;
    const std::size_t last = static_cast<std::size_t>(std::llround(1.0 / tr.h));
    for (std::size_t k = tr.b.size() - last; k < tr.b.size(); ++k) b += tr.b[k];
    b /= static_cast<double>(last);
    Outcome out;
    out.pass = std::abs(ob.idle - 0.5) <= 1e-3 && std::abs(ob.N - 1.0) <= 1e-2 && std::abs(b - 0.5) <= 1e-3;
    out.detail = "idle " + num(ob.idle, 6) + ", N " + num(ob.N, 6) + ", output rate on [199,200) " + num(b, 6);
    return out;
}

// ---------------------------------------------------------------- 5, 6: kernel

Outcome self_averaging(const AcceptanceOptions& o) {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto lam =
        RateFunction::from_function([](double t) { return 0.5 * (1.0 + 0.8 * std::sin(t)); }, 0.01, 100.0, 1.0);
    KernelOptions ko;
    ko.threads = o.threads;
    int pairs = 0, ok = 0, mass_ok = 0;
    double zmax = 0.0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        for (const auto& r : verify_self_averaging(lam, d, {20.0, 40.0, 80.0}, 1'000'000, s + o.seed_offset, ko)) {
            ++pairs;
            ok += std::abs(r.z) <= 3.0;
            mass_ok += r.mass <= 1.0 + 3.0 * r.mass_se;
            zmax = std::max(zmax, std::abs(r.z));
        }
    }
    Outcome out;
    out.pass = ok >= 0.95 * pairs && mass_ok == pairs;
    out.detail = std::to_string(ok) + "/" + std::to_string(pairs) + " (x, seed) pairs with |z| <= 3 (max |z| " +
                 num(zmax, 3) + "); mass bound holds on " + std::to_string(mass_ok) + "/" + std::to_string(pairs);
    return out;
}

Outcome noisy(const AcceptanceOptions& o) {
    const auto d = ServiceDistribution::exponential(1.0);
    const auto mu = StateDistribution::point_mass(d, 3, 0.0);
    const auto lam = RateFunction::constant(0.4, 0.01, 100.0);
    KernelOptions ko;
    ko.threads = o.threads;
    int pairs = 0, ok = 0;
    double zmax = 0.0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        for (const auto& r : verify_noisy(mu, lam, d, {10.0, 40.0}, 1'000'000, 100 + s + o.seed_offset, ko)) {
            ++pairs;
            ok += r.pass;
            zmax = std::max(zmax, std::abs(r.z));
        }
    }
    std::vector<double> xs;
    for (double x = 5.0; x <= 60.0 + 1e-9; x += 5.0) xs.push_back(x);
    const auto eps = epsilon_noise(mu, lam, d, xs, 400'000, 7 + o.seed_offset, o.threads);
    bool monotone = true;
    for (std::size_t i = 1; i < eps.size(); ++i)
        if (eps[i].eps > eps[i - 1].eps) monotone = false;
    const double e60 = eps.back().eps, e60_hi = e60 + 3.0 * eps.back().se;
    Outcome out;
    out.pass = ok >= 0.95 * pairs && monotone && e60_hi < 0.01;
    out.detail = std::to_string(ok) + "/" + std::to_string(pairs) + " (x, seed) pairs pass (max |z| " +
                 num(zmax, 3) + "); eps monotone " + (monotone ? "yes" : "no") + ", eps(60) = " + num(e60, 3) +
                 " (+3se " + num(e60_hi, 3) + ")";
    return out;
}

// ---------------------------------------------------------------- 7: fixed point

Outcome fixed_point(const AcceptanceOptions& o) {
    const auto d = ServiceDistribution::exponential(1.0);
    FixedPointConfig cfg;
    if (o.inject_coarse_grid) cfg.h = 0.2;
    const auto nuc = stationary_state(0.5, d);
    const auto s0 = solve_fixed_point(nuc, d, cfg);
    double dev = 0.0;
    for (double v : s0.lam.values()) dev = std::max(dev, std::abs(v - 0.5));
    const auto mu = StateDistribution::point_mass(d, 1, 0.0, MasterOptions{cfg.h, cfg.n_max, 0.0});
    const auto s1 = solve_fixed_point(mu, d, cfg);
    const auto rr = relaxation_diagnostic(s1, 10.0);
    const auto dr = conservation_check(s1, mu, d);
    const double osc = rr.osc_at(200.0);
    Outcome out;
    out.pass = dev <= 1e-4 && std::abs(rr.plateau - 0.5) <= 1e-2 && osc < 1e-3 && dr.pass;
    out.detail = "nu_c start max |lambda-c| " + num(dev, 3) + "; perturbed plateau " + num(rr.plateau, 6) +
                 ", osc(200) " + num(osc, 3) + ", N drift " + num(dr.drift, 3) + (o.inject_coarse_grid ? " [coarse grid h=0.2 injected]" : "");
    return out;
}

// ---------------------------------------------------------------- 8: mean field

Outcome mean_field(const AcceptanceOptions& o) {
    const auto d = ServiceDistribution::exponential(1.0);
    const double c = load_to_rate(1.0, d);
    const auto nu = stationary_state(c, d);
    int ks_ok = 0;
    double rho_max = 0.0, tv_max = 0.0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        NetworkConfig cfg;
        cfg.M = 2000;
        cfg.N = 2000;
        cfg.horizon = 300.0;
        const auto run = simulate_network(cfg, d, s + o.seed_offset);
        const auto fr = tagged_flow_tests(run.flows, 100.0, cfg.M, s + o.seed_offset);
        const auto pc = pooled_pair_correlation(run, 100.0, s + o.seed_offset);
        const auto cmp = compare_to_fixed_point(run, nu, c, 100.0);
        ks_ok += fr.ks.p_value > 0.01;
        rho_max = std::max(rho_max, std::abs(pc.rho));
        tv_max = std::max(tv_max, cmp.tv);
    }
    // Rejection counts must not increase with M beyond binomial noise.
    const int Ms[] = {10, 100, 1000, 2000};
    std::vector<Proportion> rej;
    std::string scaling;
    for (int M : Ms) {
        std::uint64_t r = 0;
        for (std::uint64_t s = 1; s <= 20; ++s) {
            NetworkConfig cfg;
            cfg.M = M;
            cfg.N = M;
            cfg.horizon = 300.0;
            const auto run = simulate_network(cfg, d, 1000 + s + o.seed_offset);
            r += tagged_flow_tests(run.flows, 100.0, M, s + o.seed_offset).ks.p_value <= 0.01;
        }
        rej.push_back(wilson(r, 20));
        scaling += (scaling.empty() ? "" : " ") + std::to_string(r);
    }
    bool nonincreasing = true;
    for (std::size_t i = 1; i < rej.size(); ++i)
        if (rej[i].lo > rej[i - 1].hi) nonincreasing = false;
    Outcome out;
    out.pass = ks_ok >= 18 && rho_max < 0.05 && tv_max < 0.05 && nonincreasing;
    out.detail = "KS p > 0.01 on " + std::to_string(ks_ok) + "/20 seeds; max |rho| " + num(rho_max, 3) +
                 "; max TV " + num(tv_max, 3) + "; rejections at M=10,100,1000,2000: " + scaling;
    return out;
}

// ---------------------------------------------------------------- 9: coupling

Outcome coupling(const AcceptanceOptions& o) {
    const auto d = ServiceDistribution::exponential(1.0);
    std::vector<double> v1(1000), v2(1000);
    for (std::size_t k = 0; k < 1000; ++k) {
        v1[k] = k < 500 ? 1.0 : 0.2;  // front-loaded
        v2[k] = k < 500 ? 0.2 : 1.0;  // late burst
    }
    const RateFunction chi1(0.01, v1, 1.0), chi2(0.01, v2, 1.0);
    const auto rep = order_and_couple(chi1, chi2, d, 10.0, 10'000, 21 + o.seed_offset, o.threads);
    Outcome out;
    out.pass = rep.order.holds && rep.replicas == 10'000 && rep.violations == 0;
    out.detail = std::to_string(rep.replicas) + " pairs, order holds " + (rep.order.holds ? "yes" : "no") + ", " +
                 std::to_string(rep.violations) + " violations of N1(B) <= N2(B); mean N1 " + num(rep.mean_n1) +
                 ", mean N2 " + num(rep.mean_n2);
    return out;
}

// ---------------------------------------------------------------- 10: relaxation lab

Outcome relaxation_lab(const AcceptanceOptions& o) {
    std::ostringstream det;
    bool pass = true;
    // Finite range: bump boundary, budget 100.
    const auto bump = [](double x) { return x > -1.0 ? 2.0 * std::sin(-std::numbers::pi * x) : 0.0; };
    const auto init = IterationState::make(bump, 2.0, 120.0);
    for (const auto& fam : {uniform_family(), uniform_triangular_family(0.1)}) {
        const auto rep = finite_range_check(init, fam, 1e-4, 100.0);
        const bool ok = rep.verdict == Verdict::relaxes && rep.final_osc < 1e-4;
        pass = pass && ok;
        det << fam.name << " " << verdict_name(rep.verdict) << " at x=" << num(rep.settle_x, 3) << "; ";
    }
    const auto gap = finite_range_check(init, gapped_family(), 1e-4, 100.0);
    pass = pass && gap.verdict == Verdict::withheld;
    det << "gapped " << verdict_name(gap.verdict) << "; ";

    // Counterexamples.
    const auto loc = localize_shifted(shifted_family(1), 0.37, 1'000'000, 31 + o.seed_offset);
    const auto two = localize_shifted(shifted_family(2), 0.37, 1'000'000, 32 + o.seed_offset);
    WalkerSpec trap{dyadic_trap_family(5.0), 50.0, 5.0};
    const auto tr = walker_and_absorption(trap, 2000, 33 + o.seed_offset, o.threads);
    pass = pass && loc.violations == 0 && two.violations == 0 && two.parity_preserved && tr.visits == 0 &&
           tr.gamma.hi < 0.01;
    det << "shift localization violations " << loc.violations << "/" << loc.steps << ", two-class parity "
        << (two.parity_preserved ? "kept" : "broken") << "; trap visits " << tr.visits << "/" << tr.replicas
        << " (95% hi " << num(tr.gamma.hi, 3) << "); ";

    WalkerSpec ex{exponential_family(1.0), 50.0, 20.0};
    const auto ge = walker_and_absorption(ex, 100'000, 34 + o.seed_offset, o.threads);
    pass = pass && ge.gamma.p >= 0.99;
    det << "exp T=20 gamma " << num(ge.gamma.p, 6) << "; ";

    // Absorption for β = 2 families.
    for (const auto& fam : {lomax_family(3.5, 2.5), exp_lomax_family(3.5, 2.5)}) {
        std::vector<Proportion> g;
        for (double T : {10.0, 50.0, 200.0}) {
            WalkerSpec w{fam, 50.0, T};
            g.push_back(walker_and_absorption(w, 200'000, 35 + o.seed_offset, o.threads).gamma);
        }
        const bool ok = g[0].hi < g[1].lo && g[1].hi < g[2].lo && g[2].p > 0.98;
        pass = pass && ok;
        det << fam.name << " gamma(10,50,200) = " << num(g[0].p, 6) << ", " << num(g[1].p, 6) << ", "
            << num(g[2].p, 7) << (ok ? "" : " [not separated]") << "; ";
    }
    Outcome out;
    out.pass = pass;
    out.detail = det.str();
    out.detail.resize(out.detail.size() - 2);
    return out;
}

// ---------------------------------------------------------------- 11: segment lemma

Outcome calcul(const AcceptanceOptions& o) {
    int ok = 0, made = 0;
    double worst = 1e300, slack = 1e300;
    for (std::uint64_t i = 0; made < 100; ++i) {
        Rng rng(71 + o.seed_offset, stream::instances, i);
        const double h = 0.05 * (1.0 + std::floor(rng.uniform() * 4.0));
        const double A = 5.0 * rng.uniform();
        const double B = A + 1.0 + 19.0 * rng.uniform();
        const double L = 1.0 + 2.0 * rng.uniform();
        std::vector<double> v(static_cast<std::size_t>(std::ceil(B / h)) + 1);
        for (auto& x : v) x = rng.uniform() < 0.3 ? 0.0 : L * rng.uniform();
        const RateFunction chi(h, v);
        const double mean = chi.integral(A, B) / (B - A);
        const double eps_lo = std::max(0.01, 1.0 - mean);
        if (eps_lo >= 0.49) continue;
        const double eps = eps_lo + (0.49 - eps_lo) * rng.uniform();
        ++made;
        const auto r = calcul_segment(chi, A, B, eps, L);
        ok += r.domination_ok && r.length_ok;
        worst = std::min(worst, r.worst_margin);
        slack = std::min(slack, (r.segment.b - r.segment.a) - r.length_bound);
    }
    Outcome out;
    out.pass = ok == 100;
    out.detail = std::to_string(ok) + "/100 instances satisfy suffix domination and C - A > (eps/L)(B - A); worst "
                 "domination margin " + num(worst, 3) + ", smallest length slack " + num(slack, 3);
    return out;
}

struct Entry {
    int id;
    const char* name;
    double budget;
    std::function<Outcome(const AcceptanceOptions&)> run;
};

}  // namespace

std::string format_result(const CriterionResult& r) {
    std::ostringstream os;
    os << (r.pass ? "PASS" : "FAIL") << "  criterion " << r.id << " (" << r.name << "): " << r.detail << " ["
       << num(r.seconds, 3) << " s";
    if (r.budget > 0.0) os << " of " << num(r.budget, 4) << " s budget";
    os << "]";
    return os.str();
}

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opt, std::ostream* live) {
    const std::vector<Entry> entries = {
        {1, "rod identity", 60.0, rod_identity},
        {2, "anchored rod identity", 0.0, anchored_identity},
        {3, "renewal density", 0.0, renewal},
        {4, "M/M/1 oracle", 0.0, mm1},
        {5, "self-averaging identity", 600.0, self_averaging},
        {6, "noisy decomposition", 0.0, noisy},
        {7, "fixed point and relaxation", 300.0, fixed_point},
        {8, "mean-field battery", 900.0, mean_field},
        {9, "coupling monotonicity", 0.0, coupling},
        {10, "relaxation lab", 0.0, relaxation_lab},
        {11, "segment lemma", 0.0, calcul},
    };
    std::vector<CriterionResult> out;
    for (const auto& e : entries) {
        if (!opt.only.empty() && std::find(opt.only.begin(), opt.only.end(), e.id) == opt.only.end()) continue;
        CriterionResult r;
        r.id = e.id;
        r.name = e.name;
        r.budget = e.budget;
        const auto t0 = Clock::now();
        try {
            const Outcome o = e.run(opt);
            r.pass = o.pass;
            r.detail = o.detail;
        } catch (const std::exception& ex) {
            r.pass = false;
            r.detail = std::string("error: ") + ex.what();
        }
        r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        if (r.budget > 0.0 && r.seconds > r.budget) {
            r.pass = false;
            r.detail += " (over runtime budget)";
        }
        if (live) *live << format_result(r) << std::endl;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace phlab
