#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace lofi {

/// SplitMix64: small, fast generator used for per-sample streams (dropout)
/// where a full Mersenne Twister state would be wasteful to reseed.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

/// Derives an independent seed for a named sub-stream ("init", "shuffle",
/// "dropout", "folds") of the run seed, optionally further keyed by an index.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                                 std::uint64_t index = 0) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
    for (char c : stream) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    SplitMix64 mix(seed ^ h);
    mix();
    SplitMix64 mix2(mix() ^ (index * 0xD1B54A32D192ED03ULL));
    return mix2();
}

}  // namespace lofi
