#include "phlab/rng.hpp"

#include <cmath>

namespace phlab {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t z = seed;
    for (auto& s : s_) {
        z = mix64(z);
        s = z;
    }
}

Rng::Rng(std::uint64_t root, std::uint64_t stream_a, std::uint64_t stream_b)
    : Rng(mix64(mix64(root ^ 0x5851f42d4c957f2dULL) + stream_a) ^ mix64(stream_b + 0x2545f4914f6cdd1dULL)) {}

static inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

Rng::result_type Rng::operator()() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    // 53 random bits, shifted by half an ulp so 0 is never returned.
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::exponential(double rate) { return -std::log(uniform()) / rate; }

double Rng::normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

std::uint64_t Rng::poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 30.0) {
        const double limit = std::exp(-mean);
        double prod = uniform();
        std::uint64_t k = 0;
        while (prod > limit) {
            prod *= uniform();
            ++k;
        }
        return k;
    }
    // Split large means into chunks; sum of independent Poissons is Poisson.
    std::uint64_t total = 0;
    double rest = mean;
    while (rest > 0.0) {
        const double chunk = rest > 25.0 ? 25.0 : rest;
        total += poisson(chunk);
        rest -= chunk;
    }
    return total;
}

std::uint64_t Rng::below(std::uint64_t n) {
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = (*this)();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    std::uint64_t l = static_cast<std::uint64_t>(m);
    if (l < n) {
        const std::uint64_t t = (0 - n) % n;
        while (l < t) {
            x = (*this)();
            m = static_cast<__uint128_t>(x) * n;
            l = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

}  // namespace phlab
