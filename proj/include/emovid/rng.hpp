#pragma once

#include <cstdint>

namespace emovid {

// xoshiro256** generator seeded through splitmix64. Self-contained so that
// streams are bit-reproducible across platforms and standard-library
// versions; identical seed + identical call sequence gives identical output.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform double in [0, 1), 53 random mantissa bits.
    double uniform();

    // Standard normal via Box-Muller; the spare value is cached, so the
    // cache is part of the stream state.
    double normal();

    // Uniform integer in [lo, hi], both inclusive. Rejection sampling, no
    // modulo bias.
    int uniform_int(int lo, int hi);

    // Independent child stream derived from (seed, stream id). Used to give
    // each video its own augmentation stream.
    Rng fork(std::uint64_t stream) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t state_[4];
    std::uint64_t seed_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

} // namespace emovid
