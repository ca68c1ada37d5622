#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace tempagg {

// splitmix64 step; also used as the finalizer when combining seed words.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Order-sensitive combiner for hierarchical seeds, e.g.
// mix_seed(global_seed, clip_id, segment_index, epoch). Stable across
// platforms, so parallel and serial schedules draw identical streams.
inline std::uint64_t mix_seed(std::uint64_t seed) {
    std::uint64_t s = seed;
    return splitmix64_next(s);
}

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t first, std::uint64_t second, Rest... rest) {
    std::uint64_t s = first;
    std::uint64_t h = splitmix64_next(s) ^ second;
    if constexpr (sizeof...(rest) == 0) {
        return mix_seed(h);
    } else {
        return mix_seed(h, rest...);
    }
}

// Deterministic generator with hand-rolled distributions. std:: distributions
// are implementation-defined, which would tie reproducibility to a particular
// standard library; these are pinned.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64_next(state_); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integers in [lo, hi], inclusive
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        if (span == 0) return lo + static_cast<std::int64_t>(next_u64()); // full u64 range
        const auto wide = static_cast<unsigned __int128>(next_u64()) * span;
        return lo + static_cast<std::int64_t>(static_cast<std::uint64_t>(wide >> 64));
    }

    // standard normal via Box-Muller (cosine branch only, branch-free)
    double normal() {
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::uint64_t state_;
};

} // namespace tempagg
