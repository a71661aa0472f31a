#pragma once

#include <cstdint>
#include <limits>

namespace phlab {

/// splitmix64 finalizer; also used to derive stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// xoshiro256++ generator. Streams are derived from (root seed, stream
/// coordinates) by hashing, so replica k always sees the same draws no matter
/// how work is scheduled.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0);
    Rng(std::uint64_t root, std::uint64_t stream_a, std::uint64_t stream_b = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    /// Uniform on the open interval (0, 1).
    double uniform();
    /// Exponential with the given rate (> 0).
    double exponential(double rate = 1.0);
    /// Standard normal (Box-Muller, no cached state).
    double normal();
    /// Poisson count with the given mean (inversion for small means, normal
    /// approximation never used).
    std::uint64_t poisson(double mean);
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::uint64_t s_[4];
};

/// Stream identifiers used by the modules, so distinct purposes never collide.
namespace stream {
inline constexpr std::uint64_t sample = 1;
inline constexpr std::uint64_t path = 2;
inline constexpr std::uint64_t kernel_lhs = 3;
inline constexpr std::uint64_t kernel_rhs = 4;
inline constexpr std::uint64_t noise = 5;
inline constexpr std::uint64_t coupling = 6;
inline constexpr std::uint64_t network = 7;
inline constexpr std::uint64_t walker = 8;
inline constexpr std::uint64_t instances = 9;
inline constexpr std::uint64_t bootstrap = 10;
}  // namespace stream

}  // namespace phlab
