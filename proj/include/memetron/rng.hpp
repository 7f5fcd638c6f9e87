#pragma once

// Counter-free SplitMix64 streams with hierarchical key derivation.
//
// Stream layout (stable; the simulated backend and every search decision
// depend on it):
//
//   mix64(z):   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//               z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//               return z ^ (z >> 31)
//   next():     state += 0x9E3779B97F4A7C15; return mix64(state)
//   derive(seed, k1, ..., km):
//               h = mix64(seed)
//               for each key k: h = mix64(h ^ mix64(k + 0x9E3779B97F4A7C15))
//   string keys are first reduced with 64-bit FNV-1a.
//
//   uniform_below(b) = high 64 bits of next() * b  (128-bit product)
//   uniform01()      = (next() >> 11) * 2^-53
//
// A search run derives one stream per (seed, prompt id, generation, operation
// tag, slot, ...) so results never depend on scheduling or worker count.

#include <cstdint>
#include <string_view>

namespace memetron {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {
constexpr std::uint64_t key_value(std::uint64_t k) noexcept { return k; }
constexpr std::uint64_t key_value(std::string_view k) noexcept { return fnv1a64(k); }
} // namespace detail

/// Derive a child seed from a parent seed and an ordered key path.
template <typename... Keys>
constexpr std::uint64_t derive_seed(std::uint64_t seed, const Keys&... keys) noexcept {
    std::uint64_t h = mix64(seed);
    ((h = mix64(h ^ mix64(detail::key_value(keys) + kGolden))), ...);
    return h;
}

class SplitMix64 {
public:
    using result_type = std::uint64_t;

    constexpr explicit SplitMix64(std::uint64_t state) noexcept : state_(state) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    constexpr result_type operator()() noexcept { return next(); }

    constexpr std::uint64_t next() noexcept {
        state_ += kGolden;
        return mix64(state_);
    }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t uniform_below(std::uint64_t bound) noexcept {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * bound) >> 64);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

template <typename... Keys>
SplitMix64 make_stream(std::uint64_t seed, const Keys&... keys) noexcept {
    return SplitMix64(derive_seed(seed, keys...));
}

} // namespace memetron
