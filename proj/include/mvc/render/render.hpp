#pragma once

#include "mvc/geometry/camera.hpp"
#include "mvc/geometry/scene.hpp"
#include "mvc/image.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <vector>

namespace mvc {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

/// Linear float texture, row-major, channels interleaved. Texel (x, y) covers
/// uv [x/W, (x+1)/W) x [y/H, (y+1)/H); v grows with rows.
struct Texture2D {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> values;

    Texture2D() = default;
    Texture2D(int w, int h, int c, float fill = 0.0f);

    float& at(int x, int y, int c) { return values[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float at(int x, int y, int c) const {
        return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t texels() const { return static_cast<std::size_t>(width) * height; }
    bool operator==(const Texture2D&) const = default;
};

/// Four texels and weights of a clamped bilinear lookup.
struct BilinearTaps {
    std::array<std::uint32_t, 4> texel;
    std::array<double, 4> weight;
};

BilinearTaps bilinear_taps(int width, int height, const Eigen::Vector2d& uv);

template <typename Scalar = double>
Scalar sample_channel(const Texture2D& t, const BilinearTaps& taps, int c) {
    Scalar s(0.0);
    for (int k = 0; k < 4; ++k)
        s += Scalar(taps.weight[k]) * Scalar(t.values[static_cast<std::size_t>(taps.texel[k]) * t.channels + c]);
    return s;
}

/// Albedo in [0,1]^3, roughness in [0.01, 1], tangent-space unit normals.
struct Material {
    Texture2D albedo;
    Texture2D roughness;
    Texture2D normal;
};

/// Throws InputError on any per-texel invariant violation.
void validate(const Material& m);
Material uniform_material(int resolution, const Eigen::Vector3d& albedo, double roughness);

struct DirectionalLight {
    Eigen::Vector3d direction; // unit, from the surface towards the light
    Eigen::Vector3d radiance;
};

struct LightSet {
    std::vector<DirectionalLight> directional;
    Eigen::Vector3d environment = Eigen::Vector3d::Zero(); // constant radiance, diffuse only
};

void validate(const LightSet& lights);

constexpr double kDielectricF0 = 0.04;
constexpr double kShadeFloor = 1e-6;

/// Orthonormal shading frame: tangent follows +u, bitangent +v (up to handedness).
struct SurfaceFrame {
    Eigen::Vector3d normal;
    Eigen::Vector3d tangent;
    Eigen::Vector3d bitangent;
};

template <typename Scalar>
struct ShadingInputs {
    Vec3<Scalar> albedo;
    Scalar roughness;
    Vec3<Scalar> normal_ts; // need not be unit
};

/// Lambert + GGX (alpha = roughness^2) with height-correlated Smith masking and
/// Schlick Fresnel (F0 = 0.04), summed over directional lights, plus the diffuse
/// response albedo * L_env to the constant environment. `visible` selects lights
/// by bit; lights below the normal-mapped hemisphere contribute nothing.
/// max without argument deduction, so expression-template scalars convert.
template <typename Scalar>
Scalar max_of(const Scalar& a, const Scalar& b) {
    return a < b ? b : a;
}

template <typename Scalar>
Vec3<Scalar> shade(const ShadingInputs<Scalar>& in, const SurfaceFrame& frame, const LightSet& lights,
                   const Eigen::Vector3d& view_dir, std::uint64_t visible = ~0ull) {
    using std::sqrt;
    using std::pow;
    const Vec3<Scalar> nt = in.normal_ts / sqrt(max_of<Scalar>(in.normal_ts.squaredNorm(), Scalar(kShadeFloor * kShadeFloor)));
    Vec3<Scalar> n = frame.tangent.cast<Scalar>() * nt.x() + frame.bitangent.cast<Scalar>() * nt.y() +
                     frame.normal.cast<Scalar>() * nt.z();
    n /= sqrt(max_of<Scalar>(n.squaredNorm(), Scalar(kShadeFloor * kShadeFloor)));

    Vec3<Scalar> out = in.albedo.cwiseProduct(lights.environment.cast<Scalar>());
    const Vec3<Scalar> v = view_dir.cast<Scalar>();
    const Scalar n_dot_v = max_of<Scalar>(n.dot(v), Scalar(kShadeFloor));
    const Scalar alpha = in.roughness * in.roughness;
    const Scalar a2 = alpha * alpha;
    for (std::size_t k = 0; k < lights.directional.size(); ++k) {
        if (!((visible >> k) & 1ull)) continue;
        const DirectionalLight& light = lights.directional[k];
        const Vec3<Scalar> l = light.direction.cast<Scalar>();
        const Scalar n_dot_l = n.dot(l);
        if (!(n_dot_l > Scalar(0.0))) continue;
        Vec3<Scalar> h = l + v;
        h /= sqrt(max_of<Scalar>(h.squaredNorm(), Scalar(kShadeFloor * kShadeFloor)));
        const Scalar n_dot_h = max_of<Scalar>(n.dot(h), Scalar(0.0));
        const Scalar v_dot_h = max_of<Scalar>(v.dot(h), Scalar(0.0));
        // n.h <= 1 implies d_den >= alpha^2; the max only absorbs rounding.
        const Scalar d_den = max_of<Scalar>(n_dot_h * n_dot_h * (a2 - Scalar(1.0)) + Scalar(1.0), a2);
        const Scalar d = a2 / (Scalar(std::numbers::pi) * d_den * d_den);
        const Scalar vis_den = n_dot_l * sqrt(n_dot_v * n_dot_v * (Scalar(1.0) - a2) + a2) +
                               n_dot_v * sqrt(n_dot_l * n_dot_l * (Scalar(1.0) - a2) + a2);
        const Scalar vis = Scalar(0.5) / max_of<Scalar>(vis_den, Scalar(kShadeFloor));
        const Scalar one_minus = Scalar(1.0) - v_dot_h;
        const Scalar m2 = one_minus * one_minus;
        const Scalar fresnel = Scalar(kDielectricF0) + Scalar(1.0 - kDielectricF0) * m2 * m2 * one_minus;
        const Scalar specular = d * vis * fresnel;
        const Vec3<Scalar> f = in.albedo / Scalar(std::numbers::pi) + Vec3<Scalar>::Constant(specular);
        out += (f * n_dot_l).cwiseProduct(light.radiance.cast<Scalar>());
    }
    return out;
}

/// Material parameters at a uv, bilinearly interpolated.
template <typename Scalar = double>
ShadingInputs<Scalar> fetch_inputs(const Material& m, const Eigen::Vector2d& uv) {
    const BilinearTaps taps = bilinear_taps(m.albedo.width, m.albedo.height, uv);
    ShadingInputs<Scalar> in;
    for (int c = 0; c < 3; ++c) in.albedo[c] = sample_channel<Scalar>(m.albedo, taps, c);
    const BilinearTaps rt = bilinear_taps(m.roughness.width, m.roughness.height, uv);
    in.roughness = sample_channel<Scalar>(m.roughness, rt, 0);
    const BilinearTaps nt = bilinear_taps(m.normal.width, m.normal.height, uv);
    for (int c = 0; c < 3; ++c) in.normal_ts[c] = sample_channel<Scalar>(m.normal, nt, c);
    return in;
}

/// Primary-visibility data of one pixel, reused across renders of a fixed view.
struct ShadingPoint {
    bool covered = false;
    Eigen::Vector2d uv{0.0, 0.0};
    SurfaceFrame frame;
    Eigen::Vector3d view_dir{0.0, 0.0, 0.0};
    Eigen::Vector3d position{0.0, 0.0, 0.0};
    std::uint64_t visible_lights = ~0ull;
};

struct RenderOptions {
    bool shadows = false;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
};

/// One primary ray per pixel center. With shadows, each light's visibility is
/// traced once and stored in the point.
std::vector<ShadingPoint> shading_points(const Scene& scene, const Camera& camera, const LightSet& lights,
                                         const RenderOptions& options = {});

/// Orthonormalized tangent frame at a hit.
SurfaceFrame surface_frame(const Scene& scene, const HitRecord& hit);

struct HdrImage {
    Image rgb;                     // linear radiance, never clipped
    std::vector<std::uint8_t> mask; // coverage
};

HdrImage render(const std::vector<ShadingPoint>& points, int width, int height, const Material& material,
                const LightSet& lights, const RenderOptions& options = {});
HdrImage render(const Scene& scene, const Camera& camera, const Material& material, const LightSet& lights,
                const RenderOptions& options = {});

/// x -> x / (1 + x) per channel after an exposure scale. Rejects negative input.
double tonemap(double x);
double tonemap_derivative(double x);
Image tonemap(const Image& hdr, double exposure = 1.0);

/// Views tiled row-major; empty slots filled with `background`.
Image assemble_grid(const std::vector<Image>& images, int rows, int cols, float background = 0.0f);
std::vector<Image> split_grid(const Image& grid, int rows, int cols, int count);

struct GridLayout {
    int rows = 1;
    int cols = 1;
    int views = 1;
    int view_width = 0;
    int view_height = 0;
    bool operator==(const GridLayout&) const = default;
};

/// Plain-text key=value sidecar describing a grid image.
void write_grid_sidecar(const GridLayout& layout, const std::filesystem::path& path);
GridLayout read_grid_sidecar(const std::filesystem::path& path);

/// Smallest square-ish layout holding `views` (3x3 for 9, 4x4 for 16).
GridLayout default_grid_layout(int views, int width, int height);

/// Lossless texture I/O as PFM; texture_image / image_texture copy values unchanged.
void write_texture_pfm(const Texture2D& t, const std::filesystem::path& path);
Texture2D read_texture_pfm(const std::filesystem::path& path);
Image texture_image(const Texture2D& t);
Texture2D image_texture(const Image& img);

} // namespace mvc
