#pragma once

#include "mvc/geometry/camera.hpp"
#include "mvc/geometry/gbuffer.hpp"
#include "mvc/geometry/scene.hpp"
#include "mvc/invrender/invrender.hpp"
#include "mvc/render/render.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mvc {

/// Every key of the plain-text config file maps to one field here. Recorded-only
/// fields (cfg_scale, tile_control_scale, noise_strength) are passed through to
/// the manifest for the external diffusion stage.
struct PipelineConfig {
    int views = 9;
    int grid_rows = 0; // 0 selects the default layout
    int grid_cols = 0;
    int image_width = 512;
    int image_height = 512;
    double camera_distance = 3.0;   // in scene bounding radii
    double camera_elevation = 20.0; // degrees
    double camera_fov = 45.0;       // vertical, degrees

    std::uint64_t noise_seed = 0;
    int noise_subpixels = 4;
    int noise_texture_resolution = 1024;
    int noise_channels = 4;

    double bias_weight = 1.5;
    std::array<int, 4> neighborhood{9, 5, 3, 1};
    bool same_view_pairs = false;

    double cfg_scale = 7.5;
    std::array<double, 2> tile_control_scale{1.0, 0.8};
    double noise_strength = 1.0;

    int texture_resolution = 256;
    Eigen::Vector3d albedo{0.5, 0.5, 0.5};
    double roughness = 0.5;
    std::filesystem::path albedo_texture; // optional PFM overrides
    std::filesystem::path roughness_texture;
    std::filesystem::path normal_texture;
    LightSet lights; // filled with defaults when the file declares none
    bool shadows = true;
    NormalSpace normal_space = NormalSpace::Camera;

    LossConfig loss;
    OptimizerConfig optimizer;
};

/// Default key light, fill light and rim light plus a dim environment.
LightSet default_lights();

/// Parses key=value lines; '#' starts a comment. Relative texture paths resolve
/// against `base_dir`. Throws InputError naming the line on any bad key or value.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
/// Canonical key=value form, one entry per key, used as the manifest snapshot.
std::map<std::string, std::string> config_snapshot(const PipelineConfig& config);
void validate(const PipelineConfig& config);

GridLayout grid_layout(const PipelineConfig& config);
std::vector<Camera> pipeline_cameras(const PipelineConfig& config, const Scene& scene, int width, int height);
Material initial_material(const PipelineConfig& config);

std::string sha256_hex(const std::vector<char>& bytes);
std::string sha256_file(const std::filesystem::path& path);

struct ArtifactRecord {
    std::string path; // relative to the output directory
    std::string sha256;
    std::string stage;
};

struct RunManifest {
    std::map<std::string, std::string> config;
    std::string scene;
    std::string scene_sha256;
    std::vector<ArtifactRecord> artifacts;
    std::map<std::string, std::string> stages; // stage -> UTC timestamp

    const ArtifactRecord* find(const std::string& path) const;
    /// Adds or replaces the record for `path`, hashing the file under `out_dir`.
    void record(const std::filesystem::path& out_dir, const std::string& path, const std::string& stage);
    /// Throws InputError when the file is missing, unpinned or its hash differs.
    void verify(const std::filesystem::path& out_dir, const std::string& path) const;
};

constexpr const char* kManifestName = "manifest.json";
RunManifest load_manifest(const std::filesystem::path& out_dir);
void save_manifest(const RunManifest& m, const std::filesystem::path& out_dir);

/// Scene hash: the file's SHA-256, or the hash of the spec string for built-ins.
std::string scene_hash(const std::string& scene_spec);

RunManifest cmd_render(const PipelineConfig& config, const std::string& scene_spec, const std::filesystem::path& out);
RunManifest cmd_noise(const PipelineConfig& config, const std::string& scene_spec, const std::filesystem::path& out);
RunManifest cmd_bias(const PipelineConfig& config, const std::string& scene_spec, const std::filesystem::path& out);
/// Reads the enhanced grid (PNG, gamma decoded, or PFM) and the pinned render
/// artifacts, optimizes, and writes textures, the loss log and a checkpoint.
RunManifest cmd_reconstruct(const PipelineConfig& config, const std::string& scene_spec,
                            const std::filesystem::path& enhanced_grid, const std::filesystem::path& out);

/// Tangent-space normals encoded (n + 1) / 2 for PNG export.
Image encode_normal_texture(const Texture2D& normals);

} // namespace mvc
