#include "phlab/acceptance.hpp"
#include "phlab/stats.hpp"

#include <cstdlib>
#include <iostream>

// Runs the full battery; PH_LAB_ACCEPTANCE_OUT overrides the archive directory.
int main() {
    phlab::AcceptanceOptions opt;
    opt.threads = phlab::default_threads();
    if (const char* dir = std::getenv("PH_LAB_ACCEPTANCE_OUT")) opt.archive_dir = dir;
    const auto results = phlab::run_acceptance(opt, &std::cout);
    int failed = 0;
    for (const auto& r : results) failed += !r.pass;
    std::cout << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " criteria pass\n";
    return failed == 0 ? 0 : 1;
}
