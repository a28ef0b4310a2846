#ifndef MCPARAREAL_RNG_HPP
#define MCPARAREAL_RNG_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>

namespace mcparareal {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// Stateless: every output block is a pure function of (counter, key).
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter block(Counter ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kW0;
                key[1] += kW1;
            }
            const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

/// SplitMix64 finalizer, used to derive independent seeds (e.g. per replicate).
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Independent random streams addressed through the fourth counter word.
enum class Stream : std::uint32_t {
    fine_noise = 0,
    initial_sample = 1,
    lifting_template = 2,
};

/// Two standard normals per Philox block via Box-Muller. Particles 2q and 2q+1
/// share block q, so a normal is addressed by (stream, a, b, p, k).
class NormalSource {
public:
    explicit NormalSource(std::uint64_t seed)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    std::array<double, 2> pair(Stream stream, std::uint32_t a, std::uint32_t b, std::uint32_t block_index,
                               std::uint32_t k) const {
        const std::uint32_t tag = (static_cast<std::uint32_t>(stream) << 24) | (k & 0x00FFFFFFu);
        const auto out = Philox4x32::block({a, b, block_index, tag}, key_);
        const double u1 = 1.0 - to_unit(out[0], out[1]); // (0, 1]
        const double u2 = to_unit(out[2], out[3]);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(theta), r * std::sin(theta)};
    }

    double normal(Stream stream, std::uint32_t a, std::uint32_t b, std::uint32_t p, std::uint32_t k) const {
        return pair(stream, a, b, p / 2, k)[p % 2];
    }

    /// Fills out[p] = normal(stream, a, b, p, k) for p = 0..size-1.
    void fill(std::span<double> out, Stream stream, std::uint32_t a, std::uint32_t b, std::uint32_t k) const {
        const std::size_t n = out.size();
        std::size_t p = 0;
        for (; p + 1 < n; p += 2) {
            const auto z = pair(stream, a, b, static_cast<std::uint32_t>(p / 2), k);
            out[p] = z[0];
            out[p + 1] = z[1];
        }
        if (p < n) {
            out[p] = pair(stream, a, b, static_cast<std::uint32_t>(p / 2), k)[0];
        }
    }

private:
    static double to_unit(std::uint32_t hi, std::uint32_t lo) {
        const std::uint64_t bits = (std::uint64_t{hi} << 32) | lo;
        return static_cast<double>(bits >> 11) * 0x1.0p-53;
    }

    std::array<std::uint32_t, 2> key_;
};

} // namespace mcparareal

#endif
