// rng.hpp
#pragma once
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <stdexcept>
#include <string_view>

namespace fedbai {

// SplitMix64 finalizer. Used as a stateless counter-based generator: every
// random quantity in the simulator is a pure function of a 64-bit key.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) noexcept {
    return mix64(seed ^ (mix64(v) + 0x632be59bd9b4e019ULL + (seed << 6) + (seed >> 2)));
}

constexpr std::uint64_t hash_keys(std::initializer_list<std::uint64_t> keys) noexcept {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (auto k : keys) h = hash_combine(h, k);
    return h;
}

// FNV-1a, for folding names (algorithm labels) into seeds.
constexpr std::uint64_t hash_string(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

// Uniform in [0, 1) with 53 random bits.
inline double unit_uniform(std::uint64_t key) noexcept {
    return static_cast<double>(mix64(key) >> 11) * 0x1.0p-53;
}

// Standard normal as a pure function of the key (Box-Muller, cosine branch).
inline double std_normal(std::uint64_t key) noexcept {
    const std::uint64_t a = mix64(key);
    const std::uint64_t b = mix64(a ^ 0xd1b54a32d192ed03ULL);
    const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Gaussian random walk W(n) = sum of the first n i.i.d. N(0,1) increments,
// realized lazily by dyadic Brownian-bridge refinement. W(n) for any n is a
// pure function of (stream, n) and costs O(depth) normal draws, so block sums
// W(b) - W(a) are exact N(0, b - a) while every single increment W(i+1) - W(i)
// remains a well-defined N(0,1) reward noise.
class GaussianWalk {
public:
    static constexpr unsigned depth = 40;
    static constexpr std::uint64_t capacity = std::uint64_t{1} << depth;

    static double at(std::uint64_t stream, std::uint64_t n) {
        if (n == 0) return 0.0;
        if (n > capacity) throw std::out_of_range("GaussianWalk: pull index exceeds stream capacity");
        std::uint64_t lo = 0, hi = capacity, node = 1;
        double w_lo = 0.0;
        double w_hi = std::sqrt(static_cast<double>(capacity)) * std_normal(hash_combine(stream, 0));
        while (true) {
            if (n == hi) return w_hi;
            if (n == lo) return w_lo;
            const std::uint64_t mid = lo + (hi - lo) / 2;
            // W(mid) | W(lo), W(hi) ~ N(midpoint, (hi - lo) / 4)
            const double sd = 0.5 * std::sqrt(static_cast<double>(hi - lo));
            const double w_mid = 0.5 * (w_lo + w_hi) + sd * std_normal(hash_combine(stream, node));
            if (n < mid) {
                hi = mid;
                w_hi = w_mid;
                node = 2 * node;
            } else {
                lo = mid;
                w_lo = w_mid;
                node = 2 * node + 1;
            }
        }
    }
};

}  // namespace fedbai
