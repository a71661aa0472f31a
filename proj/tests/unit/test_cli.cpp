#include <doctest.h>

#include "phlab/cli.hpp"
#include "phlab/dist.hpp"

#include <filesystem>
#include <numbers>
#include <fstream>
#include <sstream>

using namespace phlab;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "ph-lab");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("phlab_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("rods verify passes and writes a manifest") {
    const auto dir = scratch("rods");
    const auto r = run({"rods", "verify", "--n", "4", "--instances", "100", "--seed", "7", "--out", dir.string()});
    CHECK(r.code == cli::exit_ok);
    CHECK(fs::exists(dir / "rods_verify.csv"));
    CHECK(fs::exists(dir / "config.ini"));
    const auto manifest = slurp(dir / "manifest.sha256");
    CHECK(manifest.find("rods_verify.csv") != std::string::npos);
    CHECK(manifest.find("config.ini") != std::string::npos);
}

TEST_CASE("validation errors exit 2 and write nothing") {
    const auto dir = scratch("bad");
    CHECK(run({"dist", "--dist", "bogus:1", "--out", dir.string()}).code == cli::exit_usage);
    CHECK(run({"kernel", "verify", "--lambda", "sine:1", "--out", dir.string()}).code == cli::exit_usage);
    CHECK(run({"rods", "verify", "--n", "12", "--out", dir.string()}).code == cli::exit_usage);
    CHECK(run({"relax", "walker", "--family", "lomax:3.5,2.5", "--start", "0", "--out", dir.string()}).code == cli::exit_usage);
    CHECK(run({"queue", "couple", "--chi1", "step:0.2,1,5", "--chi2", "step:1,0.2,5", "--out", dir.string()}).code ==
          cli::exit_usage);
    CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("unknown suite and unknown subcommand are usage errors") {
    CHECK(run({"suite", "weekly"}).code == cli::exit_usage);
    CHECK(run({"frobnicate"}).code == cli::exit_usage);
    CHECK(run({}).code == cli::exit_usage);
}

TEST_CASE("same config gives identical manifests regardless of threads and output directory") {
    const auto a = scratch("det_a"), b = scratch("det_b");
    CHECK(run({"rods", "verify", "--n", "5", "--instances", "40", "--seed", "3", "--threads", "1", "--out",
               a.string()}).code == 0);
    CHECK(run({"rods", "verify", "--n", "5", "--instances", "40", "--seed", "3", "--threads", "3", "--out",
               b.string()}).code == 0);
    CHECK(slurp(a / "manifest.sha256") == slurp(b / "manifest.sha256"));
}

TEST_CASE("precedence: command line over config over default") {
    const auto dir = scratch("cfg");
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "run.ini");
        os << "[global]\nseed = 11\n[rods]\nn = 3\ninstances = 20\n";
    }
    const auto out = dir / "out";
    const auto r = run({"rods", "verify", "--config", (dir / "run.ini").string(), "--instances", "25", "--out",
                        out.string()});
    CHECK(r.code == 0);
    const auto resolved = slurp(out / "config.ini");
    CHECK(resolved.find("seed = 11") != std::string::npos);
    CHECK(resolved.find("n = 3") != std::string::npos);
    CHECK(resolved.find("instances = 25") != std::string::npos);
    CHECK(resolved.find("anchored = false") != std::string::npos);
    // The echoed config reproduces the run.
    const auto again = dir / "again";
    CHECK(run({"rods", "verify", "--config", (out / "config.ini").string(), "--out", again.string()}).code == 0);
    CHECK(slurp(out / "manifest.sha256") == slurp(again / "manifest.sha256"));
}

TEST_CASE("kernel verify writes the residual table") {
    const auto dir = scratch("kernel");
    const auto r = run({"kernel", "verify", "--x", "10", "--samples", "1e5", "--seed", "1", "--out", dir.string()});
    CHECK(r.code != cli::exit_usage);
    const auto csv = slurp(dir / "kernel_residuals.csv");
    CHECK(csv.rfind("x,lhs,rhs,se,z\n", 0) == 0);
}

TEST_CASE("rate and state specs") {
    const auto s = cli::parse_rate("sine:0.5,0.8", 0.01, 10.0);
    CHECK(s(std::numbers::pi / 2) == doctest::Approx(0.9).epsilon(1e-3));
    CHECK(s.cap() == doctest::Approx(0.9));
    CHECK(cli::parse_rate("const:0.4", 0.01, 5.0).integral(0.0, 5.0) == doctest::Approx(2.0));
    CHECK(cli::parse_rate("step:1,0.2,5", 0.01, 10.0).integral(0.0, 10.0) == doctest::Approx(6.0));
    for (const char* bad : {"sine:1", "const:-1", "wave:1", "const:x", "csv:/nonexistent"})
        CHECK_THROWS_AS(cli::parse_rate(bad, 0.01, 5.0), std::invalid_argument);
    const auto d = ServiceDistribution::exponential(1.0);
    CHECK(cli::parse_state("point:3,0", d).mean_queue() == doctest::Approx(3.0));
    CHECK(cli::parse_state("idle", d).idle == 1.0);
    CHECK_THROWS_AS(cli::parse_state("point:0,0", d), std::invalid_argument);
}

TEST_CASE("suite: an injected coarse grid fails the fixed-point criterion by name") {
    const auto dir = scratch("suite");
    const auto r = run({"suite", "acceptance", "--only", "7", "--inject-coarse-grid", "--out", dir.string()});
    CHECK(r.code == cli::exit_assertion);
    CHECK(r.out.find("FAIL  criterion 7") != std::string::npos);
    const auto ok = run({"suite", "acceptance", "--only", "9,11", "--out", dir.string()});
    CHECK(ok.code == cli::exit_ok);
    CHECK(slurp(dir / "acceptance.csv").rfind("criterion,name,pass,detail,budget_s\n", 0) == 0);
}
