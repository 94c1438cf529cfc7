#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace m1lab {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
// Output is a pure function of (counter, key); no state to share between threads.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

namespace detail {

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
    const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
    lo = static_cast<std::uint32_t>(product);
    hi = static_cast<std::uint32_t>(product >> 32);
}

}  // namespace detail

inline PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint32_t lo0, hi0, lo1, hi1;
        detail::mulhilo32(kMul0, ctr[0], lo0, hi0);
        detail::mulhilo32(kMul1, ctr[2], lo1, hi1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

/// Kinds of draws taken from a stream at a given step. Each kind occupies its
/// own counter word so that adding a draw never shifts another.
enum class DrawKind : std::uint32_t {
    increment = 0,   // Gaussian increment at a step
    bridge = 1,      // uniform for Brownian-bridge absorption at a step
    initial = 2,     // initial position
};

/// A stream keyed by (seed, replicate, particle). Particle 0 is the common noise W.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint32_t replicate, std::uint32_t particle) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          replicate_(replicate),
          particle_(particle) {}

    [[nodiscard]] PhiloxCounter block(std::uint32_t step, DrawKind kind) const noexcept {
        return philox4x32_10({step, particle_, replicate_, static_cast<std::uint32_t>(kind)}, key_);
    }

    /// Uniform on the open interval (0, 1), 52 bits.
    [[nodiscard]] double uniform(std::uint32_t step, DrawKind kind) const noexcept {
        const auto b = block(step, kind);
        return to_open_unit(b[0], b[1]);
    }

    /// Standard normal via Box-Muller (cosine branch).
    [[nodiscard]] double normal(std::uint32_t step, DrawKind kind = DrawKind::increment) const noexcept {
        const auto b = block(step, kind);
        const double u1 = to_open_unit(b[0], b[1]);
        const double u2 = to_open_unit(b[2], b[3]);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Two independent uniforms from one block.
    [[nodiscard]] std::array<double, 2> uniform_pair(std::uint32_t step, DrawKind kind) const noexcept {
        const auto b = block(step, kind);
        return {to_open_unit(b[0], b[1]), to_open_unit(b[2], b[3])};
    }

    static double to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
        // (k + 1/2) 2^-52 is exact for every 52-bit k, so 0 and 1 are never returned.
        const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
    }

private:
    PhiloxKey key_;
    std::uint32_t replicate_;
    std::uint32_t particle_;
};

}  // namespace m1lab
