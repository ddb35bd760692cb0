#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace mvc {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
/// Output is a pure function of (counter, key), so any traversal order of the
/// counters yields the same values.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        key[0] += kW0;
        key[1] += kW1;
    }
    return ctr;
}

/// Independent sub-streams of the noise generator; part of the counter.
enum class NoiseStream : std::uint32_t { Texture = 0x7E47u, White = 0x3417u };

/// Two independent standard normals from one Philox block via Box-Muller, in
/// single precision since textures store float32. The 24-bit radius uniform bounds
/// |z| by sqrt(2 ln 2^24), about 5.77.
inline std::pair<float, float> normal_pair(std::uint64_t seed, std::uint32_t c0, std::uint32_t c1,
                                           std::uint32_t c2, NoiseStream stream) {
    const auto r = philox4x32({c0, c1, c2, static_cast<std::uint32_t>(stream)},
                              {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    const float u1 = (static_cast<float>(r[0] >> 8) + 1.0f) * 0x1p-24f; // (0, 1]
    const float u2 = static_cast<float>(r[1] >> 8) * 0x1p-24f;          // [0, 1)
    const float radius = std::sqrt(-2.0f * std::log(u1));
    const float angle = 2.0f * std::numbers::pi_v<float> * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

/// Reference noise value of texel `texel` for a given seed. Texels 2m and 2m+1
/// share one Philox block.
inline float texel_noise(std::uint64_t seed, std::uint32_t texel) {
    const auto [z0, z1] = normal_pair(seed, texel >> 1, 0u, 0u, NoiseStream::Texture);
    return (texel & 1u) ? z1 : z0;
}

/// Per-pixel white noise keyed on (seed, view, pixel, channel), independent of
/// every texture stream.
inline double white_noise(std::uint64_t seed, std::uint32_t view, std::uint32_t pixel,
                          std::uint32_t channel) {
    return normal_pair(seed, pixel, view, channel, NoiseStream::White).first;
}

} // namespace mvc
