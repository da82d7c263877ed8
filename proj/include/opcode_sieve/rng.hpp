#pragma once

// Seeded randomness used across synth, forest training and fold shuffling.
// The mt19937_64 output sequence is pinned by the standard; the bounded and
// real draws are hand-rolled because std::uniform_*_distribution is free to
// differ between standard libraries, which would break run-to-run golden
// files the moment the toolchain changes.

#include <cstdint>
#include <random>

namespace opcode_sieve {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Stable per-index seed derivation, e.g. one seed per forest tree or CV fold.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t state = master ^ (0x6a09e667f3bcc909ull + index);
    splitmix64(state);
    return splitmix64(state);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Unbiased draw from [0, n). n must be > 0.
    std::uint64_t bounded(std::uint64_t n) {
        const std::uint64_t min = (0 - n) % n;  // 2^64 mod n
        std::uint64_t x;
        do {
            x = eng_();
        } while (x < min);
        return x % n;
    }

    /// Inclusive range [lo, hi].
    std::uint64_t range(std::uint64_t lo, std::uint64_t hi) {
        return lo + bounded(hi - lo + 1);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double real01() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

private:
    std::mt19937_64 eng_;
};

} // namespace opcode_sieve
