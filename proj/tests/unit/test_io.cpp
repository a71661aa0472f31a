#include <doctest.h>

#include "phlab/io.hpp"
#include "phlab/rng.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

using namespace phlab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("phlab_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("fmt round-trips doubles exactly") {
    Rng r(3);
    for (int i = 0; i < 10000; ++i) {
        const double v = std::ldexp(r.uniform() - 0.5, static_cast<int>(r.below(200)) - 100);
        REQUIRE(std::stod(io::fmt(v)) == v);
    }
    CHECK(io::fmt(0.5) == "0.5");
    CHECK(io::fmt(std::nan("")) == "nan");
    CHECK(io::fmt(-INFINITY) == "-inf");
}

TEST_CASE("csv tables: header always written, quoting, width check") {
    const auto dir = scratch("csv");
    io::CsvTable t({"a", "b"});
    t.write(dir / "empty.csv");
    CHECK(slurp(dir / "empty.csv") == "a,b\n");
    t.add({"1", "x,y"});
    t.add({"2", "say \"hi\""});
    t.write(dir / "t.csv");
    CHECK(slurp(dir / "t.csv") == "a,b\n1,\"x,y\"\n2,\"say \"\"hi\"\"\"\n");
    CHECK_THROWS_AS(t.add({"only one"}), std::invalid_argument);
}

TEST_CASE("config parse, dump and reparse agree") {
    const auto c = io::Config::parse("[kernel]\nx = 20,40\nsamples = 1e6\n; comment\n[global]\nseed = 3\n");
    CHECK(c.get("kernel", "x", "") == "20,40");
    CHECK(c.get("global", "seed", "") == "3");
    CHECK(c.get("net", "M", "fallback") == "fallback");
    CHECK_FALSE(c.has("kernel", "seed"));
    const auto again = io::Config::parse(c.dump());
    CHECK(again.sections() == c.sections());
    CHECK_THROWS_AS(io::Config::parse("[unterminated\n"), std::invalid_argument);
}

TEST_CASE("sha256 matches the standard test vector and the manifest lists files") {
    const auto dir = scratch("sha");
    {
        std::ofstream os(dir / "abc.txt", std::ios::binary);
        os << "abc";
    }
    CHECK(io::sha256_file(dir / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    {
        std::ofstream os(dir / "empty.txt", std::ios::binary);
    }
    io::write_manifest(dir, {"empty.txt", "abc.txt"});
    CHECK(slurp(dir / "manifest.sha256") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad  abc.txt\n"
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855  empty.txt\n");
}
