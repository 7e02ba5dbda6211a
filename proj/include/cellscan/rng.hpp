#pragma once

#include <cstdint>

namespace cellscan {

// Deterministic 64-bit generator, pinned bit-exactly so "same seed => same
// model" holds on every platform. The recurrence is splitmix64
// (Steele, Lea & Flood, "Fast splittable pseudorandom number generators"):
//
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
//
// All randomized behavior in the library (weight init, shuffles, dropout)
// draws from this stream, never from std::random_device or std::mt19937.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) from the top 53 bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). Plain modulo: the bias at our n (dataset
    // sizes, pixel counts) is below 2^-40 and the mapping is identical on
    // every platform.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

// Derives an independent stream seed from (seed, salt), used to give each
// consumer (per-epoch shuffle, dropout, split) its own sequence. The scramble
// is the splitmix64 output function applied once.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace cellscan
