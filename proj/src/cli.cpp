#include "phlab/cli.hpp"

#include "phlab/acceptance.hpp"
#include "phlab/dist.hpp"
#include "phlab/io.hpp"
#include "phlab/kernel.hpp"
#include "phlab/meanfield.hpp"
#include "phlab/nmp.hpp"
#include "phlab/relax.hpp"
#include "phlab/rods.hpp"
#include "phlab/stats.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>

namespace phlab::cli {

namespace fs = std::filesystem;

namespace {

std::vector<double> split_numbers(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != tok.size() || !std::isfinite(v))
            throw std::invalid_argument(what + ": bad number '" + tok + "'");
        out.push_back(v);
    }
    return out;
}

std::pair<std::string, std::vector<double>> split_spec(const std::string& spec, const std::string& what) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) return {spec, {}};
    return {spec.substr(0, colon), split_numbers(spec.substr(colon + 1), what)};
}

std::uint64_t as_count(double v, const std::string& what) {
    if (!(v >= 1.0) || v != std::floor(v) || v > 1e15) throw std::invalid_argument(what + " must be a positive integer");
    return static_cast<std::uint64_t>(v);
}

std::string str(double v) { return io::fmt(v); }
std::string str(int v) { return std::to_string(v); }
std::string str(std::uint64_t v) { return std::to_string(v); }
std::string str(const std::string& v) { return v; }
std::string str(bool v) { return v ? "true" : "false"; }
std::string str(const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : ",") + io::fmt(x);
    return s;
}

// An option whose value can also come from `[section] key` of the config file.
struct Binding {
    std::string section;
    std::string key;
    CLI::Option* opt;
    std::function<std::string()> show;
};

class Options {
public:
    template <class T>
    CLI::Option* add(CLI::App* app, const std::string& section, const std::string& key, T& var,
                     const std::string& desc) {
        CLI::Option* o = app->add_option("--" + key, var, desc);
        if constexpr (std::is_same_v<T, std::vector<double>>) o->delimiter(',');
        bindings_.push_back({section, key, o, [&var] { return str(var); }});
        return o;
    }
    CLI::Option* flag(CLI::App* app, const std::string& section, const std::string& key, bool& var,
                      const std::string& desc) {
        CLI::Option* o = app->add_flag("--" + key, var, desc);
        bindings_.push_back({section, key, o, [&var] { return str(var); }});
        return o;
    }

    // CLI values win; otherwise the config value is fed through the option's own
    // conversion and validators; otherwise the default stays.
    // Thread count and output directory are not echoed: results do not depend on them.
    io::Config resolve(const io::Config& cfg, const std::string& module) const {
        io::Config resolved;
        for (const auto& b : bindings_) {
            if (b.section != "global" && b.section != module) continue;
            if (b.opt->count() == 0 && cfg.has(b.section, b.key)) {
                b.opt->clear();
                b.opt->add_result(cfg.get(b.section, b.key, ""));
                b.opt->run_callback();
            }
            if (b.key == "threads" || b.key == "out") continue;
            resolved.set(b.section, b.key, b.show());
        }
        return resolved;
    }

private:
    std::vector<Binding> bindings_;
};

struct Params {
    // global
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out = "ph-lab-out";
    std::string config;

    // dist
    std::string dist = "exp:1";
    double x_max = 40.0;

    // rods
    int n = 4;
    double instances = 100;
    bool anchored = false;
    bool violating = false;

    // queue
    std::string lambda = "const:0.5";
    std::string init = "idle";
    double horizon = 100.0;
    double h = 0.01;
    double every = 0.1;
    double c = 0.5;
    std::string chi1 = "step:1,0.2,5";
    std::string chi2 = "step:0.2,1,5";
    double B = 10.0;
    double pairs = 10000;

    // kernel
    std::vector<double> xs = {20.0, 40.0, 80.0};
    double samples = 1e6;

    // nmp
    double damping = 0.5;
    double tolerance = 1e-8;

    // net
    int M = 2000;
    int N = 2000;
    int seeds = 20;
    std::string placement = "round-robin";
    double burn_in = 100.0;

    // relax
    std::string family = "uniform";
    std::string boundary = "bump";
    double boundary_length = 2.0;
    std::string mode = "jacobi";
    double threshold = 1e-4;
    double budget = 100.0;
    double start = 50.0;
    double T = 20.0;
    double replicas = 100000;
    double steps = 1e6;
    double A = 0.0;
    double L = 1.0;
    double eps = 0.2;
    std::string chi = "step:1,0.6,5";

    // suite
    std::string suite;
    bool inject_coarse_grid = false;
    std::vector<double> only;
};

// Output directory plus the list of files for the manifest.
struct Report {
    fs::path dir;
    std::ostream& out;
    std::vector<std::string> files;

    void write(const std::string& name, const io::CsvTable& t) {
        t.write(dir / name);
        files.push_back(name);
        out << "wrote " << (dir / name).string() << " (" << t.rows() << " rows)\n";
    }
};

using Runner = std::function<int(Report&)>;

std::string yes(bool b) { return b ? "1" : "0"; }

// ---------------------------------------------------------------- dist

Runner prepare_dist(const Params& p) {
    auto d = ServiceDistribution::parse(p.dist);
    if (!(p.x_max > 0.0)) throw std::invalid_argument("x-max must be positive");
    return [d, x_max = p.x_max](Report& rep) {
        const auto cls = verify_class(d);
        io::CsvTable t({"condition", "pass", "measured", "detail"});
        for (const auto& c : cls.checks) t.add({std::to_string(c.condition), yes(c.pass), io::fmt(c.measured), c.detail});
        rep.write("dist_conditions.csv", t);
        const int n_max = static_cast<int>(std::ceil(3.0 * x_max / d.mean())) + 40;
        const auto s = renewal_density(d, x_max, n_max);
        io::CsvTable r({"x", "s"});
        const std::size_t stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.1 / s.s.h)));
        for (std::size_t k = 0; k < s.s.size(); k += stride) r.add({io::fmt(s.s.x(k)), io::fmt(s.s.v[k])});
        rep.write("renewal_density.csv", r);
        for (const auto& c : cls.checks)
            rep.out << "condition " << c.condition << ": " << (c.pass ? "pass" : "FAIL") << " (" << c.detail << ")\n";
        rep.out << "renewal tail bound " << io::fmt(s.tail_bound) << (s.tail_ok ? "" : " [too large]") << '\n';
        return cls.all_pass() && s.tail_ok ? exit_ok : exit_assertion;
    };
}

// ---------------------------------------------------------------- rods

Runner prepare_rods(const Params& p) {
    if (p.n < 2 || p.n > 8) throw std::invalid_argument("n must lie in [2, 8]");
    const auto instances = as_count(p.instances, "instances");
    if (p.violating && !p.anchored) throw std::invalid_argument("--violating needs --anchored");
    const auto kind = !p.anchored ? rods::SweepKind::plain
                      : p.violating ? rods::SweepKind::anchored_violating
                                    : rods::SweepKind::anchored;
    return [=, n = p.n, seed = p.seed, threads = p.threads](Report& rep) {
        const auto rows = rods::sweep(kind, n, instances, seed, threads);
        io::CsvTable t({"n", "index", "total", "total_formula", "total_bruteforce", "agree", "constraint_ok",
                        "equals_factorial"});
        std::size_t bad = 0, differ = 0;
        for (const auto& r : rows) {
            t.add({std::to_string(r.n), std::to_string(r.index), std::to_string(r.total),
                   std::to_string(r.total_formula), std::to_string(r.total_bruteforce), yes(r.agree),
                   yes(r.constraint_ok), yes(r.equals_factorial)});
            bad += kind != rods::SweepKind::anchored_violating && !(r.agree && r.equals_factorial);
            differ += !r.equals_factorial;
        }
        rep.write("rods_verify.csv", t);
        if (kind == rods::SweepKind::anchored_violating) {
            rep.out << differ << "/" << rows.size() << " constraint-violating instances have a total other than n!\n";
            return exit_ok;
        }
        rep.out << (bad == 0 ? "pass" : "FAIL") << ": " << rows.size() - bad << "/" << rows.size()
                << " instances total n! with formula and enumeration agreeing\n";
        return bad == 0 ? exit_ok : exit_assertion;
    };
}

// ---------------------------------------------------------------- queue

Runner prepare_queue(const std::string& action, const Params& p) {
    if (!(p.h > 0.0) || !(p.horizon > 0.0)) throw std::invalid_argument("h and horizon must be positive");
    const auto d = ServiceDistribution::parse(p.dist);
    const MasterOptions mo{p.h, 200, 0.0};
    if (action == "master") {
        const auto lam = parse_rate(p.lambda, p.h, p.horizon);
        const auto mu0 = parse_state(p.init, d, mo);
        return [=, every = p.every, horizon = p.horizon](Report& rep) {
            const auto tr = evolve_master(mu0, lam, d, horizon, mo);
            io::CsvTable t({"t", "b", "N", "idle"});
            const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(every / tr.h)));
            double bmax = 0.0;
            for (std::size_t k = 0; k < tr.b.size(); ++k) {
                bmax = std::max(bmax, tr.b[k]);
                if ((k + 1) % stride == 0)
                    t.add({io::fmt(tr.h * static_cast<double>(k + 1)), io::fmt(tr.b[k]), io::fmt(tr.N[k]),
                           io::fmt(tr.idle[k])});
            }
            rep.write("master.csv", t);
            const double mass = tr.final_state.total();
            const bool ok = std::abs(mass - 1.0) <= 1e-6 && bmax <= d.hazard_cap * (1.0 + 1e-9) + 1e-12;
            rep.out << "final N " << io::fmt(tr.N.back()) << ", mass " << io::fmt(mass) << ", max output rate "
                    << io::fmt(bmax) << " (cap " << io::fmt(d.hazard_cap) << ")\n";
            return ok ? exit_ok : exit_assertion;
        };
    }
    if (action == "path") {
        const auto lam = parse_rate(p.lambda, p.h, p.horizon);
        const auto mu0 = parse_state(p.init, d, mo);
        return [=, seed = p.seed, horizon = p.horizon](Report& rep) {
            Rng rng(seed, stream::path, 0);
            const auto start = InitialLaw(mu0).draw(rng);
            const auto tr = simulate_path(start, lam, d, horizon, rng);
            std::vector<std::pair<double, int>> ev;
            for (double a : tr.arrivals) ev.emplace_back(a, 0);
            for (double x : tr.departures) ev.emplace_back(x, 1);
            for (const auto& idle : tr.idle_periods) ev.emplace_back(idle.first, 2);
            std::stable_sort(ev.begin(), ev.end());
            static const char* names[] = {"arrival", "departure", "idle_start"};
            io::CsvTable t({"event_time", "type"});
            for (const auto& [time, type] : ev) t.add({io::fmt(time), names[type]});
            rep.write("path_trace.csv", t);
            rep.out << tr.arrivals.size() << " arrivals, " << tr.departures.size() << " departures\n";
            return exit_ok;
        };
    }
    if (action == "stationary") {
        if (!(p.c > 0.0)) throw std::invalid_argument("c must be positive");
        return [=, c = p.c](Report& rep) {
            StationaryOptions so;
            so.master = mo;
            const auto nu = stationary_state(c, d, so);
            const auto ob = observables(nu, d);
            io::CsvTable t({"n", "probability"});
            const auto q = nu.queue_marginal();
            for (std::size_t n = 0; n < q.size(); ++n)
                if (q[n] > 0.0) t.add({std::to_string(n), io::fmt(q[n])});
            rep.write("stationary.csv", t);
            rep.out << "N " << io::fmt(ob.N) << ", S " << io::fmt(ob.S) << ", idle " << io::fmt(ob.idle) << '\n';
            return exit_ok;
        };
    }
    // couple
    if (!(p.B > 0.0)) throw std::invalid_argument("B must be positive");
    const auto chi1 = parse_rate(p.chi1, p.h, p.B);
    const auto chi2 = parse_rate(p.chi2, p.h, p.B);
    const auto order = check_order(chi1, chi2, p.B);
    if (!order.holds)
        throw std::invalid_argument("chi1 is not dominated by chi2 in suffix mass (worst margin " +
                                    io::fmt(order.worst_margin) + " at " + io::fmt(order.violating_suffix) + ")");
    const auto pairs = as_count(p.pairs, "pairs");
    return [=, B = p.B, seed = p.seed, threads = p.threads](Report& rep) {
        const auto r = order_and_couple(chi1, chi2, d, B, pairs, seed, threads);
        io::CsvTable t({"pairs", "violations", "equal", "mean_n1", "mean_n2", "worst_margin"});
        t.add({std::to_string(r.replicas), std::to_string(r.violations), std::to_string(r.equal_paths),
               io::fmt(r.mean_n1), io::fmt(r.mean_n2), io::fmt(r.order.worst_margin)});
        rep.write("coupling.csv", t);
        rep.out << r.violations << " of " << r.replicas << " coupled pairs have N1(B) > N2(B)\n";
        return r.violations == 0 ? exit_ok : exit_assertion;
    };
}

// ---------------------------------------------------------------- kernel

Runner prepare_kernel(const std::string& action, const Params& p) {
    const auto d = ServiceDistribution::parse(p.dist);
    if (p.xs.empty()) throw std::invalid_argument("x list must not be empty");
    for (double x : p.xs)
        if (!(x > 0.0)) throw std::invalid_argument("every x must be positive");
    const auto samples = as_count(p.samples, "samples");
    const double horizon = *std::max_element(p.xs.begin(), p.xs.end()) + 1.0;
    const auto lam = parse_rate(p.lambda, 0.01, horizon);
    KernelOptions ko;
    ko.threads = p.threads;
    if (action == "verify") {
        return [=, xs = p.xs, seed = p.seed](Report& rep) {
            const auto rows = verify_self_averaging(lam, d, xs, samples, seed, ko);
            io::CsvTable t({"x", "lhs", "rhs", "se", "z"});
            io::CsvTable q({"x", "t", "q", "se"});
            bool ok = true;
            for (const auto& r : rows) {
                t.add({io::fmt(r.x), io::fmt(r.lhs), io::fmt(r.rhs), io::fmt(r.se), io::fmt(r.z)});
                const auto& k = r.kernel.kernel;
                for (std::size_t j = 0; j < k.t.size(); ++j)
                    q.add({io::fmt(r.x), io::fmt(k.t[j]), io::fmt(k.q[j]), io::fmt(k.se[j])});
                ok = ok && r.pass;
                rep.out << "x=" << io::fmt(r.x) << " z=" << io::fmt(r.z) << " mass=" << io::fmt(r.mass)
                        << (r.pass ? "" : " FAIL") << '\n';
            }
            rep.write("kernel_residuals.csv", t);
            rep.write("kernel_q.csv", q);
            return ok ? exit_ok : exit_assertion;
        };
    }
    const auto mu = parse_state(p.init, d);
    if (action == "noisy") {
        return [=, xs = p.xs, seed = p.seed](Report& rep) {
            const auto rows = verify_noisy(mu, lam, d, xs, samples, seed, ko);
            io::CsvTable t({"x", "lhs", "rhs", "se", "z", "eps", "Q", "q_cap"});
            bool ok = true;
            for (const auto& r : rows) {
                t.add({io::fmt(r.x), io::fmt(r.lhs), io::fmt(r.rhs), io::fmt(r.se), io::fmt(r.z), io::fmt(r.eps),
                       io::fmt(r.Q), io::fmt(r.q_cap)});
                ok = ok && r.pass;
                rep.out << "x=" << io::fmt(r.x) << " z=" << io::fmt(r.z) << " eps=" << io::fmt(r.eps)
                        << (r.pass ? "" : " FAIL") << '\n';
            }
            rep.write("noisy_residuals.csv", t);
            return ok ? exit_ok : exit_assertion;
        };
    }
    return [=, xs = p.xs, seed = p.seed, threads = p.threads](Report& rep) {
        const auto rows = epsilon_noise(mu, lam, d, xs, samples, seed, threads);
        io::CsvTable t({"x", "eps", "se"});
        for (const auto& r : rows) t.add({io::fmt(r.x), io::fmt(r.eps), io::fmt(r.se)});
        rep.write("epsilon.csv", t);
        return exit_ok;
    };
}

// ---------------------------------------------------------------- nmp

Runner prepare_nmp(const Params& p) {
    const auto d = ServiceDistribution::parse(p.dist);
    if (!(p.h > 0.0) || !(p.horizon > 0.0)) throw std::invalid_argument("h and horizon must be positive");
    if (!(p.damping > 0.0 && p.damping <= 1.0)) throw std::invalid_argument("damping must lie in (0, 1]");
    FixedPointConfig cfg;
    cfg.h = p.h;
    cfg.horizon = p.horizon;
    cfg.damping = p.damping;
    cfg.tolerance = p.tolerance;
    const auto nu = parse_state(p.init, d, MasterOptions{p.h, cfg.n_max, 0.0});
    return [=, every = p.every](Report& rep) {
        const auto sol = solve_fixed_point(nu, d, cfg);
        io::CsvTable t({"t", "lambda", "N", "idle"});
        const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(every / sol.h)));
        const auto& lv = sol.lam.values();
        for (std::size_t k = 0; k < lv.size() && k < sol.N_trace.size(); ++k)
            if ((k + 1) % stride == 0)
                t.add({io::fmt(sol.h * static_cast<double>(k + 1)), io::fmt(lv[k]), io::fmt(sol.N_trace[k]),
                       io::fmt(sol.idle_trace[k])});
        rep.write("nmp.csv", t);
        io::CsvTable conv({"iteration", "residual"});
        for (std::size_t i = 0; i < sol.residual_history.size(); ++i)
            conv.add({std::to_string(i + 1), io::fmt(sol.residual_history[i])});
        rep.write("nmp_convergence.csv", conv);
        const auto rr = relaxation_diagnostic(sol, 10.0);
        const auto dr = conservation_check(sol, nu, d);
        rep.out << "iterations " << sol.iterations << ", residual " << io::fmt(sol.residual) << ", plateau "
                << io::fmt(rr.plateau) << ", N drift " << io::fmt(dr.drift) << '\n';
        return sol.converged && dr.pass ? exit_ok : exit_assertion;
    };
}

// ---------------------------------------------------------------- net

Runner prepare_net(const Params& p) {
    const auto d = ServiceDistribution::parse(p.dist);
    if (p.M < 1 || p.N < 0) throw std::invalid_argument("need M >= 1 and N >= 0");
    if (p.seeds < 1) throw std::invalid_argument("seeds must be positive");
    if (!(p.horizon > p.burn_in && p.burn_in >= 0.0)) throw std::invalid_argument("need 0 <= burn-in < horizon");
    NetworkConfig cfg;
    cfg.M = p.M;
    cfg.N = p.N;
    cfg.horizon = p.horizon;
    cfg.placement = parse_placement(p.placement);
    cfg.tagged = std::min(cfg.tagged, p.M);
    return [=, seed = p.seed, seeds = p.seeds, threads = p.threads, burn = p.burn_in](Report& rep) {
        const double c = load_to_rate(static_cast<double>(cfg.N) / cfg.M, d);
        const auto nu = stationary_state(c, d);
        struct Row {
            NetworkRun run;
            FlowReport flow;
            CorrelationEstimate corr;
            FixedPointComparison cmp;
        };
        std::vector<Row> rows(static_cast<std::size_t>(seeds));
        parallel_for(rows.size(), threads, [&](std::size_t k) {
            const std::uint64_t s = seed + k;
            rows[k].run = simulate_network(cfg, d, s, &nu);
            rows[k].flow = tagged_flow_tests(rows[k].run.flows, burn, cfg.M, s);
            rows[k].corr = pooled_pair_correlation(rows[k].run, burn, s);
            rows[k].cmp = compare_to_fixed_point(rows[k].run, nu, c, burn);
        });
        io::CsvTable agg({"seed", "interarrivals", "ks_statistic", "ks_p", "rho", "rho_se", "tv", "mean_queue"});
        int ks_ok = 0;
        double rho_max = 0.0, tv_max = 0.0;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto& r = rows[k];
            io::CsvTable log({"server", "event_time", "type"});
            for (const auto& f : r.run.flows) {
                for (double a : f.arrivals) log.add({std::to_string(f.server), io::fmt(a), "arrival"});
                for (double x : f.departures) log.add({std::to_string(f.server), io::fmt(x), "departure"});
            }
            rep.write("net_seed_" + std::to_string(seed + k) + ".csv", log);
            agg.add({std::to_string(seed + k), std::to_string(r.flow.interarrivals), io::fmt(r.flow.ks.statistic),
                     io::fmt(r.flow.ks.p_value), io::fmt(r.corr.rho), io::fmt(r.corr.se), io::fmt(r.cmp.tv),
                     io::fmt(r.cmp.mean_queue)});
            ks_ok += r.flow.ks.p_value > 0.01;
            rho_max = std::max(rho_max, std::abs(r.corr.rho));
            tv_max = std::max(tv_max, r.cmp.tv);
        }
        rep.write("chaos_report.csv", agg);
        rep.out << "KS p > 0.01 on " << ks_ok << "/" << seeds << " seeds, max |rho| " << io::fmt(rho_max)
                << ", max TV " << io::fmt(tv_max) << '\n';
        if (cfg.M < 100) {
            rep.out << "M < 100: outside the limit regime, no assertion made\n";
            return exit_ok;
        }
        return ks_ok >= 0.9 * seeds && rho_max < 0.05 && tv_max < 0.05 ? exit_ok : exit_assertion;
    };
}

// ---------------------------------------------------------------- relax

std::function<double(double)> parse_boundary(const std::string& spec) {
    if (spec == "bump") return [](double x) { return x > -1.0 ? 2.0 * std::sin(-std::numbers::pi * x) : 0.0; };
    const auto [name, v] = split_spec(spec, "boundary");
    if (name == "const" && v.size() == 1) return [c = v[0]](double) { return c; };
    throw std::invalid_argument("boundary must be 'bump' or 'const:v', got '" + spec + "'");
}

Runner prepare_relax(const std::string& action, const Params& p) {
    if (action == "iterate") {
        const auto fam = parse_family(p.family);
        const auto phi = parse_boundary(p.boundary);
        if (!(p.boundary_length > 0.0 && p.x_max > 0.0)) throw std::invalid_argument("lengths must be positive");
        if (p.mode != "jacobi" && p.mode != "gauss-seidel") throw std::invalid_argument("mode: jacobi or gauss-seidel");
        const auto init = IterationState::make(phi, p.boundary_length, p.x_max);
        return [=, threshold = p.threshold, budget = p.budget, mode = p.mode](Report& rep) {
            const auto fr = finite_range_check(init, fam, threshold, budget);
            IterationState st = fr.state;
            if (fr.verdict == Verdict::withheld || mode == "jacobi")
                st = iterate_self_averaging(init, fam, 100000,
                                            mode == "jacobi" ? IterationMode::jacobi : IterationMode::gauss_seidel);
            io::CsvTable t({"x", "f"});
            for (std::size_t i = 0; i < st.f.size(); i += 10) t.add({io::fmt(st.x(i)), io::fmt(st.f[i])});
            rep.write("relax_iterate.csv", t);
            io::CsvTable o({"x", "osc"});
            for (std::size_t i = 0; i < fr.window_x.size(); ++i) o.add({io::fmt(fr.window_x[i]), io::fmt(fr.osc[i])});
            rep.write("relax_osc.csv", o);
            rep.out << fam.name << ": " << verdict_name(fr.verdict);
            if (fr.verdict == Verdict::relaxes) rep.out << " (osc < " << io::fmt(threshold) << " from x = " << io::fmt(fr.settle_x) << ")";
            if (fr.verdict == Verdict::withheld)
                rep.out << " (support " << fr.check.support_ok << ", continuity " << fr.check.continuity_ok
                        << ", floor " << fr.check.floor_ok << ")";
            rep.out << "; " << st.iteration << " sweeps, residual " << io::fmt(fixed_point_residual(st, fam)) << '\n';
            return mode == "jacobi" && !st.monotone ? exit_assertion : exit_ok;
        };
    }
    if (action == "walker") {
        const auto replicas = as_count(p.replicas, "replicas");
        WalkerSpec spec{parse_family(p.family), p.start, p.T};
        // A one-step dry run applies the walker's own preconditions before any output exists.
        WalkerSpec dry = spec;
        dry.max_steps = 1;
        walker_and_absorption(dry, 1, 0);
        return [=, seed = p.seed, threads = p.threads](Report& rep) {
            const auto e = walker_and_absorption(spec, replicas, seed, threads);
            io::CsvTable t({"T", "replicas", "visits", "misses", "undecided", "gamma", "lo", "hi", "gamma_bound"});
            t.add({io::fmt(e.T), std::to_string(e.replicas), std::to_string(e.visits), std::to_string(e.misses),
                   std::to_string(e.undecided), io::fmt(e.gamma.p), io::fmt(e.gamma.lo), io::fmt(e.gamma.hi),
                   io::fmt(e.gamma_bound)});
            rep.write("walker.csv", t);
            rep.out << spec.family.name << ": gamma " << io::fmt(e.gamma.p) << " [" << io::fmt(e.gamma.lo) << ", "
                    << io::fmt(e.gamma.hi) << "], bound " << io::fmt(e.gamma_bound) << '\n';
            return exit_ok;
        };
    }
    if (action == "counterexample") {
        const auto fam = parse_family(p.family);
        if (fam.kind != FamilyKind::shifted) throw std::invalid_argument("counterexample needs a shift:<s> family");
        if (!(p.start >= 0.0)) throw std::invalid_argument("start must be >= 0");
        const auto steps = as_count(p.steps, "steps");
        return [=, start = p.start, seed = p.seed](Report& rep) {
            const auto r = localize_shifted(fam, start, steps, seed);
            io::CsvTable t({"steps", "violations", "parity_even", "parity_odd", "parity_preserved", "final"});
            t.add({std::to_string(r.steps), std::to_string(r.violations), std::to_string(r.parity_counts[0]),
                   std::to_string(r.parity_counts[1]), yes(r.parity_preserved),
                   std::to_string(r.final_position.n) + "+" + io::fmt(r.final_position.frac)});
            rep.write("counterexample.csv", t);
            rep.out << r.violations << " localization violations in " << r.steps << " steps\n";
            return r.violations == 0 ? exit_ok : exit_assertion;
        };
    }
    // segment
    if (!(p.B > p.A && p.A >= 0.0)) throw std::invalid_argument("need 0 <= A < B");
    if (!(p.eps > 0.0 && p.eps < 0.5)) throw std::invalid_argument("eps must lie in (0, 1/2)");
    const auto chi = parse_rate(p.chi, p.h, p.B + p.h);
    if (chi.checked_max() > p.L + 1e-12) throw std::invalid_argument("chi exceeds L");
    if (chi.integral(p.A, p.B) < (1.0 - p.eps) * (p.B - p.A))
        throw std::invalid_argument("chi([A,B]) < (1 - eps)(B - A): the segment lemma does not apply");
    return [=, A = p.A, B = p.B, eps = p.eps, L = p.L](Report& rep) {
        const auto r = calcul_segment(chi, A, B, eps, L);
        io::CsvTable t({"kind", "a", "b"});
        t.add({"result", io::fmt(r.segment.a), io::fmt(r.segment.b)});
        for (const auto& s : r.maximal) t.add({"maximal", io::fmt(s.a), io::fmt(s.b)});
        rep.write("segment.csv", t);
        rep.out << "[" << io::fmt(r.segment.a) << ", " << io::fmt(r.segment.b) << "], length bound "
                << io::fmt(r.length_bound) << ", domination " << (r.domination_ok ? "ok" : "FAIL") << ", length "
                << (r.length_ok ? "ok" : "FAIL") << '\n';
        return r.domination_ok && r.length_ok ? exit_ok : exit_assertion;
    };
}

// ---------------------------------------------------------------- suite

Runner prepare_suite(const Params& p) {
    AcceptanceOptions opt;
    // The nightly battery draws a disjoint block of seeds.
    opt.seed_offset = p.suite == "nightly" ? 1'000'000 + p.seed : p.seed;
    opt.threads = p.threads;
    opt.inject_coarse_grid = p.inject_coarse_grid;
    for (double v : p.only) {
        if (v != std::floor(v) || v < 1 || v > 11) throw std::invalid_argument("--only takes criterion ids 1..11");
        opt.only.push_back(static_cast<int>(v));
    }
    return [opt](Report& rep) mutable {
        opt.archive_dir = rep.dir;
        const auto results = run_acceptance(opt, &rep.out);
        io::CsvTable t({"criterion", "name", "pass", "detail", "budget_s"});
        int failed = 0;
        for (const auto& r : results) {
            t.add({std::to_string(r.id), r.name, yes(r.pass), r.detail, io::fmt(r.budget)});
            failed += !r.pass;
        }
        rep.write("acceptance.csv", t);
        if (fs::exists(rep.dir / "anchored_counterexamples.csv")) rep.files.push_back("anchored_counterexamples.csv");
        rep.out << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " criteria pass\n";
        return failed == 0 ? exit_ok : exit_assertion;
    };
}

}  // namespace

RateFunction parse_rate(const std::string& spec, double h, double horizon) {
    if (!(h > 0.0) || !(horizon > 0.0)) throw std::invalid_argument("rate: h and horizon must be positive");
    const auto colon = spec.find(':');
    const std::string name = spec.substr(0, colon);
    if (name == "csv") {
        const std::string path = colon == std::string::npos ? "" : spec.substr(colon + 1);
        std::ifstream is(path);
        if (!is) throw std::invalid_argument("rate: cannot read " + path);
        std::string line;
        std::getline(is, line);  // header
        std::vector<double> t, v;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            const auto row = split_numbers(line, "rate csv");
            if (row.size() != 2) throw std::invalid_argument("rate csv: expected t,lambda rows");
            t.push_back(row[0]);
            v.push_back(row[1]);
        }
        if (v.size() < 2) throw std::invalid_argument("rate csv: need at least two rows");
        const double step = t[1] - t[0];
        for (std::size_t k = 0; k < t.size(); ++k)
            if (std::abs(t[k] - t[0] - step * static_cast<double>(k)) > 1e-9 * std::max(1.0, t[k]))
                throw std::invalid_argument("rate csv: times must form a uniform grid from 0");
        if (std::abs(t[0]) > 1e-12 || v.size() * step < horizon - 1e-9)
            throw std::invalid_argument("rate csv: grid must start at 0 and cover the horizon");
        for (double x : v)
            if (!(x >= 0.0)) throw std::invalid_argument("rate csv: rates must be nonnegative");
        return RateFunction(step, v, *std::max_element(v.begin(), v.end()));
    }
    const auto [kind, a] = split_spec(spec, "rate");
    if (kind == "const" && a.size() == 1 && a[0] >= 0.0) return RateFunction::constant(a[0], h, horizon);
    if (kind == "sine" && a.size() == 2 && a[0] >= 0.0 && std::abs(a[1]) <= 1.0)
        return RateFunction::from_function([c = a[0], b = a[1]](double t) { return c * (1.0 + b * std::sin(t)); }, h,
                                           horizon, a[0] * (1.0 + std::abs(a[1])));
    if (kind == "step" && a.size() == 3 && a[0] >= 0.0 && a[1] >= 0.0 && a[2] >= 0.0)
        return RateFunction::from_function([lo = a[0], hi = a[1], s = a[2]](double t) { return t < s ? lo : hi; }, h,
                                           horizon, std::max(a[0], a[1]));
    throw std::invalid_argument("malformed rate spec '" + spec + "' (const:c, sine:a,b, step:a,b,s, csv:<path>)");
}

StateDistribution parse_state(const std::string& spec, const ServiceDistribution& d, const MasterOptions& opt) {
    if (spec == "idle") return StateDistribution::idle_state(d, opt);
    const auto [kind, a] = split_spec(spec, "state");
    if (kind == "point" && a.size() == 2 && a[0] >= 1.0 && a[0] == std::floor(a[0]) && a[0] <= opt.n_max && a[1] >= 0.0)
        return StateDistribution::point_mass(d, static_cast<int>(a[0]), a[1], opt);
    if (kind == "nu" && a.size() == 1 && a[0] > 0.0) {
        StationaryOptions so;
        so.master = opt;
        return stationary_state(a[0], d, so);
    }
    throw std::invalid_argument("malformed state spec '" + spec + "' (idle, point:n,tau, nu:c)");
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Params p;
    Options reg;
    CLI::App app{"Laboratory for queueing networks with Poisson-hypothesis diagnostics", "ph-lab"};
    app.require_subcommand(1);
    app.fallthrough();  // inherited: global flags may follow any subcommand
    reg.add(&app, "global", "seed", p.seed, "root seed");
    reg.add(&app, "global", "threads", p.threads, "worker threads (0: PH_LAB_THREADS or 1)")->check(CLI::NonNegativeNumber);
    reg.add(&app, "global", "out", p.out, "output directory");
    app.add_option("--config", p.config, "INI file with one section per module")->check(CLI::ExistingFile);

    auto* dist = app.add_subcommand("dist", "check a service law against the class conditions");
    reg.add(dist, "dist", "dist", p.dist, "exp:r, gamma:k,r, lognormal:mu,sigma,cut, mixture:..., table:<csv>");
    reg.add(dist, "dist", "x-max", p.x_max, "renewal density range");

    auto* rods = app.add_subcommand("rods", "rod-placement identities");
    rods->require_subcommand(1)->fallthrough();
    rods->add_subcommand("verify", "random instance sweep");
    reg.add(rods, "rods", "n", p.n, "number of rods");
    reg.add(rods, "rods", "instances", p.instances, "instances to draw");
    reg.flag(rods, "rods", "anchored", p.anchored, "add the anchored rod");
    reg.flag(rods, "rods", "violating", p.violating, "anchored instances violating the length constraint");

    auto* queue = app.add_subcommand("queue", "single-server queue with time-varying input");
    queue->require_subcommand(1)->fallthrough();
    for (const char* a : {"master", "path", "stationary", "couple"}) queue->add_subcommand(a);
    reg.add(queue, "queue", "dist", p.dist, "service law");
    reg.add(queue, "queue", "lambda", p.lambda, "input rate spec");
    reg.add(queue, "queue", "init", p.init, "initial state spec");
    reg.add(queue, "queue", "horizon", p.horizon, "time horizon");
    reg.add(queue, "queue", "step", p.h, "grid step");
    reg.add(queue, "queue", "every", p.every, "output spacing in time");
    reg.add(queue, "queue", "c", p.c, "input rate for the stationary state");
    reg.add(queue, "queue", "chi1", p.chi1, "smaller input rate for the coupling");
    reg.add(queue, "queue", "chi2", p.chi2, "larger input rate for the coupling");
    reg.add(queue, "queue", "B", p.B, "coupling horizon");
    reg.add(queue, "queue", "pairs", p.pairs, "coupled pairs");

    auto* kernel = app.add_subcommand("kernel", "self-averaging kernel");
    kernel->require_subcommand(1)->fallthrough();
    for (const char* a : {"verify", "noisy", "epsilon"}) kernel->add_subcommand(a);
    reg.add(kernel, "kernel", "dist", p.dist, "service law");
    reg.add(kernel, "kernel", "lambda", p.lambda, "input rate spec")->default_str("sine:0.5,0.8");
    reg.add(kernel, "kernel", "init", p.init, "initial state for noisy and epsilon");
    reg.add(kernel, "kernel", "x", p.xs, "evaluation points");
    reg.add(kernel, "kernel", "samples", p.samples, "replicas");

    auto* nmp = app.add_subcommand("nmp", "nonlinear fixed point");
    nmp->require_subcommand(1)->fallthrough();
    nmp->add_subcommand("solve");
    reg.add(nmp, "nmp", "dist", p.dist, "service law");
    reg.add(nmp, "nmp", "init", p.init, "initial state spec")->default_str("nu:0.5");
    reg.add(nmp, "nmp", "horizon", p.horizon, "time horizon")->default_str("500");
    reg.add(nmp, "nmp", "step", p.h, "grid step");
    reg.add(nmp, "nmp", "every", p.every, "output spacing in time");
    reg.add(nmp, "nmp", "damping", p.damping, "Picard damping");
    reg.add(nmp, "nmp", "tolerance", p.tolerance, "sup-norm tolerance");

    auto* net = app.add_subcommand("net", "closed network simulation");
    net->require_subcommand(1)->fallthrough();
    net->add_subcommand("run");
    reg.add(net, "net", "dist", p.dist, "service law");
    reg.add(net, "net", "M", p.M, "servers");
    reg.add(net, "net", "N", p.N, "customers");
    reg.add(net, "net", "horizon", p.horizon, "time horizon")->default_str("300");
    reg.add(net, "net", "seeds", p.seeds, "independent runs");
    reg.add(net, "net", "placement", p.placement, "round-robin, all-at-one or stationary");
    reg.add(net, "net", "burn-in", p.burn_in, "discarded initial time");

    auto* relax = app.add_subcommand("relax", "relaxation laboratory");
    relax->require_subcommand(1)->fallthrough();
    for (const char* a : {"iterate", "walker", "counterexample", "segment"}) relax->add_subcommand(a);
    reg.add(relax, "relax", "family", p.family, "kernel family spec");
    reg.add(relax, "relax", "boundary", p.boundary, "bump or const:v");
    reg.add(relax, "relax", "boundary-length", p.boundary_length, "length of the boundary segment");
    reg.add(relax, "relax", "x-max", p.x_max, "iteration range")->default_str("120");
    reg.add(relax, "relax", "mode", p.mode, "jacobi or gauss-seidel");
    reg.add(relax, "relax", "threshold", p.threshold, "oscillation threshold");
    reg.add(relax, "relax", "budget", p.budget, "x budget for settling");
    reg.add(relax, "relax", "start", p.start, "walker start or counterexample start");
    reg.add(relax, "relax", "T", p.T, "absorption window");
    reg.add(relax, "relax", "replicas", p.replicas, "walker replicas");
    reg.add(relax, "relax", "steps", p.steps, "counterexample steps");
    reg.add(relax, "relax", "chi", p.chi, "rate spec for the segment lemma");
    reg.add(relax, "relax", "A", p.A, "segment start");
    reg.add(relax, "relax", "B", p.B, "segment end");
    reg.add(relax, "relax", "eps", p.eps, "defect");
    reg.add(relax, "relax", "L", p.L, "upper bound of chi");
    reg.add(relax, "relax", "step", p.h, "grid step of chi");

    auto* suite = app.add_subcommand("suite", "acceptance battery");
    suite->add_option("name", p.suite, "acceptance or nightly")->required()->check(CLI::IsMember({"acceptance", "nightly"}));
    reg.flag(suite, "suite", "inject-coarse-grid", p.inject_coarse_grid, "force the fixed-point criterion onto a coarse grid");
    reg.add(suite, "suite", "only", p.only, "criterion ids to run");

    std::string module, action;
    Runner runner;
    io::Config resolved;
    try {
        app.parse(argc, argv);
        const auto* sub = app.get_subcommands().front();
        module = sub->get_name();
        if (!sub->get_subcommands().empty()) action = sub->get_subcommands().front()->get_name();
        // Module-specific defaults that differ from the shared fields.
        if (module == "kernel" && kernel->get_option("--lambda")->count() == 0) p.lambda = "sine:0.5,0.8";
        if (module == "nmp") {
            if (nmp->get_option("--init")->count() == 0) p.init = "nu:0.5";
            if (nmp->get_option("--horizon")->count() == 0) p.horizon = 500.0;
        }
        if (module == "net" && net->get_option("--horizon")->count() == 0) p.horizon = 300.0;
        if (module == "relax") {
            if (relax->get_option("--x-max")->count() == 0) p.x_max = 120.0;
            if (relax->get_option("--B")->count() == 0) p.B = 10.0;
        }
        const io::Config cfg = p.config.empty() ? io::Config{} : io::Config::load(p.config);
        resolved = reg.resolve(cfg, module);
        if (p.threads == 0) p.threads = default_threads();
        if (module == "dist") runner = prepare_dist(p);
        else if (module == "rods") runner = prepare_rods(p);
        else if (module == "queue") runner = prepare_queue(action, p);
        else if (module == "kernel") runner = prepare_kernel(action, p);
        else if (module == "nmp") runner = prepare_nmp(p);
        else if (module == "net") runner = prepare_net(p);
        else if (module == "relax") runner = prepare_relax(action, p);
        else runner = prepare_suite(p);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "ph-lab: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::invalid_argument& e) {
        err << "ph-lab: " << e.what() << '\n';
        return exit_usage;
    } catch (const ContractError& e) {
        err << "ph-lab: " << e.what() << '\n';
        return exit_usage;
    }

    Report rep{fs::path(p.out), out, {}};
    try {
        fs::create_directories(rep.dir);
        const int code = runner(rep);
        {
            std::ofstream os(rep.dir / "config.ini", std::ios::binary);
            os << "# ph-lab " << module << (action.empty() ? "" : " " + action) << "\n" << resolved.dump();
        }
        rep.files.push_back("config.ini");
        io::write_manifest(rep.dir, rep.files);
        return code;
    } catch (const std::exception& e) {
        err << "ph-lab: " << e.what() << '\n';
        return exit_runtime;
    }
}

}  // namespace phlab::cli
