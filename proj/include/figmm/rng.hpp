#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace figmm {

// Pseudo-random stream with deterministic derivation. A stream remembers the
// seed it was created from; substream(a, b, ...) hashes that seed with the
// path values, so any consumer (a record, a replicate, a restart) can own an
// independent stream whose output does not depend on scheduling or on how
// many draws its siblings consumed. Normal variates use an explicit
// Box-Muller transform so results do not depend on the standard library's
// distribution implementation.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    RngStream substream(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                        std::uint64_t d = 0) const;

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on the open interval (0, 1); never 0, so log(u) is safe.
    double uniform();

    // Uniform integer in [0, bound), bound >= 1.
    std::uint64_t uniform_below(std::uint64_t bound);

    // One standard normal draw (consumes two engine outputs).
    double normal();

    // count i.i.d. standard normals, generated in Box-Muller pairs.
    void fill_normals(double* dst, std::size_t count);

    std::uint64_t seed() const noexcept { return base_; }

private:
    std::uint64_t base_;
    std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used for seed derivation throughout.
std::uint64_t mix64(std::uint64_t x);

}  // namespace figmm
