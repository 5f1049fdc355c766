#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace tailhawk {

/// SplitMix64: a Weyl-sequence counter passed through a 64-bit finalizer.
///
/// The state is a single integer and every draw is a pure function of
/// (seed, draw index), so sequences are bit-identical across platforms.
/// Substreams are derived by hashing a key into a fresh seed, which keeps
/// per-cell randomness independent of scheduling order. Passes BigCrush.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    double uniform() noexcept {
        const std::uint64_t bits = (*this)() >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal by Box-Muller (one draw per call, second variate discarded).
    /// Written out rather than std::normal_distribution, whose algorithm varies by library.
    double normal() noexcept {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, n), n > 0 (Lemire's multiply-shift; bias < 2^-64 * n).
    std::uint64_t below(std::uint64_t n) noexcept {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * n) >> 64);
    }

    /// Independent generator for a named substream.
    [[nodiscard]] SplitMix64 split(std::string_view key) const noexcept {
        return SplitMix64(mix(state_ ^ fnv1a(key)));
    }
    [[nodiscard]] SplitMix64 split(std::uint64_t index) const noexcept {
        return SplitMix64(mix(state_ ^ mix(index + 0x632BE59BD9B4E019ULL)));
    }

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001B3ULL;
        }
        return h;
    }

private:
    std::uint64_t state_;
};

/// Seed for a named cell under a master seed.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view key) noexcept {
    return SplitMix64::mix(master ^ SplitMix64::mix(SplitMix64::fnv1a(key)));
}

}  // namespace tailhawk
