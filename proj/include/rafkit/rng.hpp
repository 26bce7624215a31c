#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace raf {

// Counter-based generator (Philox4x32-10). A draw is a pure function of
// (seed, stream, counter), so independent streams can be sampled in any
// order and still reproduce bit-identically. Streams are derived from a
// purpose tag plus caller-chosen indices (epoch, frame position, draw
// index), which keeps e.g. Bernoulli substitution flags decorrelated from
// top-k selection draws that share the same seed.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream);

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double next_double();

    // Uniform integer in [0, n); n must be > 0. Rejection sampling, unbiased.
    std::uint64_t next_below(std::uint64_t n);

    // Standard normal via Box-Muller; the paired value is cached.
    double next_normal();

    bool next_bernoulli(double p) { return next_double() < p; }

private:
    void refill();

    std::uint32_t key_[2];
    std::uint32_t stream_[2];
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> block_{};
    int block_pos_ = 4;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

// Stream-id purposes. Kept stable; changing them changes every seeded draw.
enum class RngPurpose : std::uint64_t {
    Subsample = 1,
    TopKDraw = 2,
    Bernoulli = 3,
    Noise = 4,
    MixSelect = 5,
    World = 6,
    ModelInit = 7,
    Generic = 8,
};

// 64-bit mix (splitmix64 finalizer) used to fold purpose/indices into one
// stream id.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t stream_id(RngPurpose purpose, std::uint64_t a = 0, std::uint64_t b = 0);

// FNV-1a, for keying streams by string tokens (stable across platforms,
// unlike std::hash).
std::uint64_t fnv1a(std::string_view s);

}  // namespace raf
