#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace phlab {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
    double budget = 0.0;  ///< runtime limit in seconds, 0 when none
};

struct AcceptanceOptions {
    std::uint64_t seed_offset = 0;    ///< added to every root seed; the nightly suite uses a fresh block
    int threads = 1;
    bool inject_coarse_grid = false;  ///< runs the fixed-point criterion on a grid too coarse to conserve N
    std::filesystem::path archive_dir = "acceptance_out";
    std::vector<int> only;            ///< criterion ids to run; empty runs all
};

/// Runs the battery in order, streaming one line per criterion to `live`.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opt, std::ostream* live = nullptr);

std::string format_result(const CriterionResult& r);

}  // namespace phlab
