#pragma once

#include "mvc/image.hpp"
#include "mvc/render/render.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mvc {

struct LossConfig {
    double epsilon = 0.01;     // relative-L2 denominator offset
    int margin = 2;            // boundary band in image pixels
    double cosine_power = 1.0; // grazing down-weighting exponent
    double exposure = 1.0;     // pre-scale inside the tonemap
};

/// 0 within `margin` pixels (Chebyshev) of an uncovered pixel, (n.v)^power
/// elsewhere on covered pixels, 0 on uncovered pixels. Single channel.
Image build_weight_mask(const std::vector<ShadingPoint>& points, int width, int height, int margin,
                        double cosine_power);

struct LossValue {
    double loss = 0.0;
    double weight_sum = 0.0;
    bool empty = false; // all weights zero; loss defined as 0
};

/// sum_p sum_c w_p (T(r) - t)^2 / (sg(T(r))^2 + eps) / sum_p w_p, T(x) = tonemap(exposure x).
LossValue masked_relative_l2(const Image& rendered_hdr, const Image& target_ldr, const Image& weights,
                             const LossConfig& config);

/// Unconstrained texture parameters. Layout of `values`: albedo logits (3 per
/// texel), roughness logits (1 per texel), raw normal vectors (3 per texel).
/// Decoded: albedo = sigmoid(u), roughness = 0.01 + 0.99 sigmoid(u), normal = raw / |raw|.
struct MaterialParameters {
    int albedo_width = 0, albedo_height = 0;
    int roughness_width = 0, roughness_height = 0;
    int normal_width = 0, normal_height = 0;
    Eigen::VectorXd values;

    std::size_t albedo_offset() const { return 0; }
    std::size_t roughness_offset() const {
        return 3 * static_cast<std::size_t>(albedo_width) * albedo_height;
    }
    std::size_t normal_offset() const {
        return roughness_offset() + static_cast<std::size_t>(roughness_width) * roughness_height;
    }
    std::size_t size() const { return normal_offset() + 3 * static_cast<std::size_t>(normal_width) * normal_height; }

    static MaterialParameters encode(const Material& m);
    /// Decoded values in the same layout, in double.
    Eigen::VectorXd decode_values() const;
    Material decode() const;
    /// Chain rule from decoded-layout gradients to gradients on `values`.
    Eigen::VectorXd latent_gradient(const Eigen::VectorXd& decoded_gradient) const;
};

/// One view prepared for optimization: fixed primary visibility, target and weights.
struct ViewTarget {
    int width = 0;
    int height = 0;
    std::vector<ShadingPoint> points;
    Image target;  // LDR, 3 channels
    Image weights; // 1 channel
    double view_weight = 1.0;
};

ViewTarget make_view_target(const Scene& scene, const Camera& camera, const LightSet& lights, const Image& target,
                            const LossConfig& config, const RenderOptions& options = {});

/// Per-pixel bilinear taps into the three textures, shared by forward and backward passes.
struct PreparedView {
    const ViewTarget* view = nullptr;
    std::vector<std::uint32_t> pixels; // pixels with positive weight
    std::vector<BilinearTaps> albedo_taps, roughness_taps, normal_taps;
};

PreparedView prepare_view(const ViewTarget& view, const MaterialParameters& layout);

/// Linear radiance of one pixel from decoded values.
Eigen::Vector3d shade_pixel(const PreparedView& pv, std::size_t k, const Eigen::VectorXd& decoded,
                            const MaterialParameters& layout, const LightSet& lights);

/// Frozen relative-L2 denominators, per prepared pixel and channel.
using FrozenDenominators = std::vector<std::vector<double>>;

struct BatchEvaluation {
    double loss = 0.0;
    std::vector<double> view_losses;
    Eigen::VectorXd decoded_gradient; // empty unless requested
    FrozenDenominators denominators;
};

/// Loss over a batch of views, normalized by the total weight of the batch. With
/// `gradient`, also returns exact derivatives with respect to the decoded values
/// (denominators treated as constants). With `frozen`, uses the given
/// denominators instead of the current render; used by finite-difference checks.
BatchEvaluation evaluate_batch(const std::vector<const PreparedView*>& views, const MaterialParameters& params,
                               const LightSet& lights, const LossConfig& config, bool gradient,
                               const FrozenDenominators* frozen = nullptr);

struct OptimizerConfig {
    int steps = 1000;
    double lr = 0.05;
    double lr_final = 0.005; // exponential decay from lr to lr_final over the run
    int batch = 1;
    std::uint64_t seed = 0;
    // Per-texture multipliers on the learning rate; 0 freezes a texture.
    double albedo_lr_scale = 1.0;
    double roughness_lr_scale = 1.0;
    double normal_lr_scale = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double divergence_factor = 10.0;
    int divergence_patience = 100;
    std::filesystem::path divergence_dump; // checkpoint written before aborting
};

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    int step = 0;
};

struct StepRecord {
    int step = 0;
    double loss = 0.0;
    std::vector<int> views;
    std::vector<double> view_losses;
};

struct OptimizeResult {
    Material material;
    MaterialParameters params;
    AdamState adam;
    std::vector<StepRecord> history;
};

/// Adam on the latent parameters with per-epoch view shuffling. Throws
/// NumericalError on non-finite gradients or sustained divergence.
OptimizeResult optimize(const Material& initial, const std::vector<ViewTarget>& views, const LightSet& lights,
                        const LossConfig& loss, const OptimizerConfig& config,
                        const std::function<void(const StepRecord&)>& on_step = {});

/// CSV with header "step,loss,view_0,...". Views outside a step's batch are empty.
void write_loss_csv(const std::vector<StepRecord>& history, int view_count, const std::filesystem::path& path);

/// Binary checkpoint: "MVCK", u32 version, six u32 texture dimensions, i32 step,
/// u64 parameter count, then values, Adam first and second moments as float64.
void write_checkpoint(const MaterialParameters& params, const AdamState& adam, const std::filesystem::path& path);
std::pair<MaterialParameters, AdamState> read_checkpoint(const std::filesystem::path& path);

double psnr(double mse, double peak = 1.0);

} // namespace mvc
