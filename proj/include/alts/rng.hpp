// Deterministic random number generation. Everything that consumes
// randomness in this library goes through SplitMix64 so that results are
// reproducible bit-for-bit across platforms and runs.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace alts {

// SplitMix64 (Steele, Lea & Flood; the java.util.SplittableRandom finalizer).
// Full 64-bit state, fixed increment, statistically solid for simulation use.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, n) via rejection sampling; exactly unbiased.
    std::uint64_t bounded(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t x = next();
            if (x >= threshold) {
                return x % n;
            }
        }
    }

    // Uniform double in [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller (two uniforms per call).
    double gaussian() {
        double u1 = unit();
        if (u1 <= 0.0) {
            u1 = 0x1.0p-53;
        }
        const double u2 = unit();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

private:
    std::uint64_t state_;
};

// Deterministic derivation of sub-stream seeds (per tile, per round, ...).
inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    SplitMix64 g(a ^ (b * 0x9E3779B97F4A7C15ULL) ^ 0xD1B54A32D192ED03ULL);
    return g.next();
}

// Partial Fisher-Yates: permutes the first k slots of `items` uniformly
// without replacement; only those k slots are meaningful afterwards.
template <typename T>
void partial_shuffle(std::vector<T>& items, std::size_t k, SplitMix64& rng) {
    const std::size_t n = items.size();
    if (k > n) {
        k = n;
    }
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.bounded(n - i));
        if (j != i) {
            std::swap(items[i], items[j]);
        }
    }
}

}  // namespace alts
