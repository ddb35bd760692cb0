#pragma once

#include "mvc/geometry/camera.hpp"
#include "mvc/geometry/gbuffer.hpp"
#include "mvc/geometry/scene.hpp"
#include "mvc/noise/philox.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <filesystem>
#include <optional>
#include <vector>

namespace mvc {

/// Materialized UV-space reference field of i.i.d. standard normals.
struct NoiseTexture {
    int resolution = 0;
    std::uint64_t seed = 0;
    std::vector<float> values; // row-major, texel k = y * R + x

    float operator()(std::uint32_t texel) const { return values[texel]; }
    double texel_area() const { return 1.0 / (static_cast<double>(resolution) * resolution); }
};

/// Same values as NoiseTexture, evaluated on demand without storage.
struct ProceduralNoise {
    int resolution = 0;
    std::uint64_t seed = 0;

    float operator()(std::uint32_t texel) const { return texel_noise(seed, texel); }
    double texel_area() const { return 1.0 / (static_cast<double>(resolution) * resolution); }
};

/// Throws InputError unless R is in [64, 8192].
NoiseTexture sample_noise_texture(std::uint64_t seed, int resolution);

/// Sub-seed of the texture used for latent channel `channel`.
inline std::uint64_t channel_seed(std::uint64_t seed, int channel) {
    return seed ^ static_cast<std::uint64_t>(channel);
}

/// Nearest texel to a UV coordinate, clamped to the texture.
std::uint32_t nearest_texel(const Eigen::Vector2d& uv, int resolution);

/// Per-pixel bookkeeping of projected subpixels: areas A_i, sampled values f_i and
/// the texel area of the reference field.
struct PixelFootprint {
    std::vector<double> areas;
    std::vector<std::uint32_t> texels;
    std::vector<double> samples;
    double texel_area = 0.0;

    double total_area() const;
    /// max(A_texel / A_i - 1, 0); zero for degenerate subpixels.
    double covariance(std::size_t i) const;
    bool degenerate() const;
};

struct FootprintSum {
    double raw = 0.0; // sum_i f_i * A_i, unnormalized
    PixelFootprint footprint;
};

/// Samples the field at each projected subpixel center (nearest texel) and
/// returns the area-weighted sum. The pixel must be covered.
template <typename Field>
FootprintSum accumulate_footprint(const Field& field, const GBuffer& gbuffer, int x, int y);

/// sqrt(sum_i A_i^2 (1 + Cov_i)) over subpixels with A_i > 0. Nothing when every
/// A_i is zero; the caller must then fall back to white noise.
std::optional<double> normalization_factor(const PixelFootprint& footprint);

/// Blend weight alpha: smoothstep of sum A_i over [A_texel, 4 A_texel].
double safeguard_alpha(double total_area, double texel_area);

/// sqrt(alpha) * projected + sqrt(1 - alpha) * white. Variance preserving.
double blend_safeguard(double projected, double total_area, double white, double texel_area);

/// Footprints of one view prepared once and reused across seeds and channels.
struct ViewFootprints {
    int width = 0;
    int height = 0;
    int texture_resolution = 0;
    std::vector<std::uint8_t> covered;     // per pixel
    std::vector<std::uint32_t> offsets;    // per pixel + 1, into texels/weights
    std::vector<std::uint32_t> texels;     // per valid subpixel
    std::vector<double> areas;             // per valid subpixel
    std::vector<double> factors;           // per pixel; 0 when degenerate
    std::vector<double> alphas;            // per pixel safeguard weight
};

ViewFootprints prepare_view_footprints(const GBuffer& gbuffer, int texture_resolution);

/// Final value of pixel p of a prepared view for one channel field.
template <typename Field>
double view_noise_value(const Field& field, const ViewFootprints& fp, std::size_t p, double white) {
    if (!fp.covered[p] || fp.factors[p] == 0.0) return white;
    double raw = 0.0;
    for (std::uint32_t i = fp.offsets[p]; i < fp.offsets[p + 1]; ++i)
        raw += static_cast<double>(field(fp.texels[i])) * fp.areas[i];
    const double a = fp.alphas[p];
    return std::sqrt(a) * (raw / fp.factors[p]) + std::sqrt(1.0 - a) * white;
}

/// Planar float noise at latent resolution, one plane per channel.
struct NoiseImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data; // channel-major planes

    float& at(int c, int x, int y) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int x, int y) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    bool operator==(const NoiseImage&) const = default;
};

struct NoiseSettings {
    std::uint64_t seed = 0;
    int texture_resolution = 1024;
    int subpixels = 4;
    int channels = 4;
};

/// Seed noise for one view, rasterized directly at `latent_camera`'s resolution.
/// Covered pixels carry the safeguarded normalized projection of the channel's
/// texture; uncovered pixels carry white noise keyed on (seed, view, pixel).
NoiseImage generate_view_noise(const Scene& scene, const Camera& latent_camera,
                               const NoiseSettings& settings, int view_index);

/// Same, reusing materialized channel textures (one per channel, from channel_seed).
NoiseImage generate_view_noise(const ViewFootprints& footprints,
                               const std::vector<NoiseTexture>& channel_textures,
                               std::uint64_t seed, int view_index);

/// Binary layout: "MVCN", u32 width, u32 height, u32 channels, then
/// width*height*channels little-endian float32 values, channel-major.
void write_mvcn(const NoiseImage& image, const std::filesystem::path& path);
NoiseImage read_mvcn(const std::filesystem::path& path);
std::vector<char> encode_mvcn(const NoiseImage& image);
NoiseImage decode_mvcn(const std::vector<char>& bytes);

// ---------------------------------------------------------------------------

template <typename Field>
FootprintSum accumulate_footprint(const Field& field, const GBuffer& gbuffer, int x, int y) {
    if (!gbuffer.pixel(x, y).covered)
        throw std::logic_error("accumulate_footprint: pixel is not covered");
    FootprintSum out;
    const int n = gbuffer.subpixels * gbuffer.subpixels;
    const SubpixelFootprint* sub = gbuffer.pixel_footprints(x, y);
    out.footprint.texel_area = field.texel_area();
    out.footprint.areas.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double area = sub[i].valid ? sub[i].area : 0.0;
        const std::uint32_t texel = nearest_texel(sub[i].uv_center, field.resolution);
        const double f = static_cast<double>(field(texel));
        out.footprint.areas.push_back(area);
        out.footprint.texels.push_back(texel);
        out.footprint.samples.push_back(f);
        out.raw += f * area;
    }
    return out;
}

} // namespace mvc
