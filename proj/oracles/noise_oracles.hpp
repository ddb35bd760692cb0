#pragma once

// Independent reference computations for the noise generator: exact moments from
// footprint coefficients, a Monte-Carlo sweep over seeds, and UV-space
// footprint overlap by supersampled rasterization.

#include "mvc/geometry/gbuffer.hpp"
#include "mvc/noise/noisegen.hpp"

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace mvc::oracle {

/// A pixel's noise as a linear form over texels plus a white-noise weight.
struct LinearForm {
    std::map<std::uint32_t, double> texel_weights;
    double white_weight = 0.0;
};

/// Re-derives the linear form of pixel (x, y) straight from the G-buffer,
/// without the prepared-footprint path.
LinearForm pixel_linear_form(const GBuffer& g, int x, int y, int texture_resolution);

double exact_variance(const LinearForm& a);
/// Covariance of two pixels of different views (white terms independent).
double exact_cross_covariance(const LinearForm& a, const LinearForm& b);
/// Covariance of two pixels of the same view sharing a white-noise key only if identical.
double exact_same_view_covariance(const LinearForm& a, const LinearForm& b);

struct PixelRef {
    int view;
    std::uint32_t pixel;
};

/// Streams seeds seed0, seed0+1, ... through prepared views and accumulates
/// per-pixel first/second moments and products for pixel pairs.
struct SweepResult {
    std::vector<double> mean;
    std::vector<double> variance;
    std::vector<double> correlation; // per pair
    int seeds = 0;
};

SweepResult sweep_seeds(const std::vector<ViewFootprints>& views, const std::vector<PixelRef>& pixels,
                        const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                        std::uint64_t seed0, int seeds);

/// Overlap of two pixel footprints in UV space: |A n B| / max(|A|, |B|), with the
/// subpixel quads rasterized on a uniform grid of `samples_per_unit` cells per UV unit.
double footprint_overlap(const GBuffer& ga, int xa, int ya, const GBuffer& gb, int xb, int yb,
                         int samples_per_unit);

} // namespace mvc::oracle
