#pragma once

#include "mvc/invrender/invrender.hpp"

#include <cstdint>
#include <vector>

namespace mvc::oracle {

enum class ParameterGroup { Albedo, Roughness, Normal };

struct GradientSample {
    std::size_t index = 0; // into MaterialParameters::values
    double analytic = 0.0;
    double numeric = 0.0;
    double relative_error = 0.0;
};

/// Central differences of the batch loss (denominators frozen at the base point)
/// against the analytic latent gradient. Samples up to `count` distinct entries of
/// `group` at random among those whose analytic magnitude is at least
/// `min_fraction` of the group maximum.
std::vector<GradientSample> check_gradients(const std::vector<const PreparedView*>& views,
                                            const MaterialParameters& params, const LightSet& lights,
                                            const LossConfig& config, ParameterGroup group, int count,
                                            std::uint64_t seed, double h = 1e-3, double min_fraction = 1e-3);

/// Smooth procedural material: sinusoidal albedo and roughness, perturbed normals.
Material patterned_material(int resolution, double normal_amplitude = 0.2);

} // namespace mvc::oracle
