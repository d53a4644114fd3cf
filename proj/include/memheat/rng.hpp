#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace memheat::rng {

// Philox4x32-10 counter-based generator. Every draw is a pure function of
// (seed, counter), so parallel fills are schedule independent and any path's
// stream is unchanged when the ensemble grows.
struct Philox4x32 {
    static constexpr std::uint32_t M0 = 0xD2511F53u;
    static constexpr std::uint32_t M1 = 0xCD9E8D57u;
    static constexpr std::uint32_t W0 = 0x9E3779B9u;
    static constexpr std::uint32_t W1 = 0xBB67AE85u;

    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t(M0) * ctr[0];
            const std::uint64_t p1 = std::uint64_t(M1) * ctr[2];
            const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
            const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += W0;
            key[1] += W1;
        }
        return ctr;
    }
};

// Stream salts keep unrelated usages of the same (seed, path, mode, step)
// coordinates from colliding.
enum class Salt : std::uint32_t {
    NoiseIncrement = 0x10,
    StateSample = 0x20,
    ControlSample = 0x30,
    Generic = 0x40,
};

class CounterRng {
  public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::array<std::uint32_t, 4> raw(std::uint32_t a, std::uint32_t b, std::uint32_t c,
                                     Salt salt) const {
        return Philox4x32::block({a, b, c, static_cast<std::uint32_t>(salt)},
                                 {std::uint32_t(seed_), std::uint32_t(seed_ >> 32)});
    }

    // Uniform on (0,1), strictly inside the interval.
    double uniform(std::uint32_t a, std::uint32_t b, std::uint32_t c, Salt salt) const {
        const auto r = raw(a, b, c, salt);
        return (double(r[0]) + 0.5) * 0x1p-32;
    }

    // One standard normal via Box-Muller (cosine branch).
    double normal(std::uint32_t a, std::uint32_t b, std::uint32_t c, Salt salt) const {
        const auto r = raw(a, b, c, salt);
        const double u1 = (double(r[0]) + 0.5) * 0x1p-32;
        const double u2 = (double(r[1]) + 0.5) * 0x1p-32;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    std::array<double, 2> normal_pair(std::uint32_t a, std::uint32_t b, std::uint32_t c,
                                      Salt salt) const {
        const auto r = raw(a, b, c, salt);
        const double u1 = (double(r[0]) + 0.5) * 0x1p-32;
        const double u2 = (double(r[1]) + 0.5) * 0x1p-32;
        const double rad = std::sqrt(-2.0 * std::log(u1));
        return {rad * std::cos(2.0 * M_PI * u2), rad * std::sin(2.0 * M_PI * u2)};
    }

  private:
    std::uint64_t seed_;
};

} // namespace memheat::rng
