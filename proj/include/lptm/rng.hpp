#pragma once

#include <cstdint>
#include <random>

namespace lptm {

// Deterministic generator with explicit draw primitives. std::distributions are
// implementation-defined, so all conversions from raw bits happen here; two runs
// with the same seed produce the same stream on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0,1) with 53 random bits
    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0,n); n = 0 returns 0
    std::uint64_t below(std::uint64_t n) { return n ? gen_() % n : 0; }

    bool coin() { return (gen_() >> 63) != 0; }

private:
    std::mt19937_64 gen_;
};

} // namespace lptm
