#include "figmm/rng.hpp"

#include <cmath>

namespace figmm {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed) : base_(seed), engine_(mix64(seed)) {}

RngStream RngStream::substream(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                               std::uint64_t d) const {
    std::uint64_t s = base_;
    s = mix64(s ^ a);
    s = mix64(s ^ b);
    s = mix64(s ^ c);
    s = mix64(s ^ d);
    return RngStream(s);
}

double RngStream::uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_below(std::uint64_t bound) {
    // rejection sampling on the top of the range to avoid modulo bias
    const std::uint64_t limit = bound * (UINT64_MAX / bound);
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % bound;
}

double RngStream::normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

void RngStream::fill_normals(double* dst, std::size_t count) {
    std::size_t i = 0;
    while (i + 1 < count) {
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        dst[i] = r * std::cos(kTwoPi * u2);
        dst[i + 1] = r * std::sin(kTwoPi * u2);
        i += 2;
    }
    if (i < count) {
        dst[i] = normal();
    }
}

}  // namespace figmm
