#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>
#include <utility>

namespace prunefair {

namespace detail {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char ch : text) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace detail

/// Counter-based generator: draw i is mix64(key + i * gamma), i.e. SplitMix64
/// addressed by counter. The sequence depends only on the seed, so results
/// are identical across runs and platforms. All distributions below are
/// implemented here rather than through <random>, whose distributions are
/// implementation-defined.
class Rng {
public:
    explicit constexpr Rng(std::uint64_t seed = 0) noexcept
        : key_(detail::mix64(seed ^ 0x6A09E667F3BCC909ULL)), seed_(seed) {}

    constexpr std::uint64_t seed() const noexcept { return seed_; }
    constexpr std::uint64_t counter() const noexcept { return counter_; }

    constexpr std::uint64_t next_u64() noexcept {
        return detail::mix64(key_ + (++counter_) * detail::kGoldenGamma);
    }

    /// Independent child stream. Does not advance this generator.
    constexpr Rng split(std::uint64_t stream) const noexcept {
        Rng child(0);
        child.key_ = detail::mix64(key_ ^ detail::mix64(stream + detail::kGoldenGamma));
        child.seed_ = seed_;
        return child;
    }

    constexpr Rng split(std::string_view label) const noexcept {
        return split(detail::fnv1a(label));
    }

    /// Uniform in [0, 1) with 53 random bits.
    constexpr double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    constexpr std::uint64_t below(std::uint64_t n) noexcept {
        // Rejection sampling on the top of the range keeps the draw unbiased.
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
        std::uint64_t x = next_u64();
        while (x >= limit)
            x = next_u64();
        return x % n;
    }

    /// Standard normal via Box-Muller (one value per call).
    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

    template <typename T>
    constexpr void shuffle(std::span<T> items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace prunefair
