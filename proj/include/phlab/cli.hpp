#pragma once

#include "phlab/master.hpp"
#include "phlab/queue.hpp"

#include <iosfwd>
#include <string>

namespace phlab::cli {

/// Exit codes: 0 all in-run assertions pass, 1 an assertion failed,
/// 2 usage or validation error (nothing written), 3 runtime error.
inline constexpr int exit_ok = 0;
inline constexpr int exit_assertion = 1;
inline constexpr int exit_usage = 2;
inline constexpr int exit_runtime = 3;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// "const:c", "sine:a,b" for a(1 + b sin t), "step:a,b,s" for a on [0, s) then b,
/// "csv:<path>" with columns t,lambda on a uniform grid.
RateFunction parse_rate(const std::string& spec, double h, double horizon);

/// "idle", "point:n,tau" or "nu:c" (the stationary state at input rate c).
StateDistribution parse_state(const std::string& spec, const ServiceDistribution& d, const MasterOptions& opt = {});

}  // namespace phlab::cli
