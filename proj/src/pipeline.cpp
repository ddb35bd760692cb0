#include "mvc/pipeline/pipeline.hpp"

#include "mvc/correspondence/correspondence.hpp"
#include "mvc/errors.hpp"
#include "mvc/geometry/mesh.hpp"
#include "mvc/noise/noisegen.hpp"
#include "mvc/noise/philox.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numbers>
#include <sstream>

namespace mvc {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_values(std::string s) {
    for (char& c : s)
        if (c == ',') c = ' ';
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

double to_double(const std::string& s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) throw InputError("not a number: '" + s + "'");
    return v;
}

long long to_int(const std::string& s) {
    long long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw InputError("not an integer: '" + s + "'");
    return v;
}

int to_int32(const std::string& s) {
    const long long v = to_int(s);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        throw InputError("integer out of range: '" + s + "'");
    return static_cast<int>(v);
}

std::uint64_t to_u64(const std::string& s) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw InputError("not an unsigned integer: '" + s + "'");
    return v;
}

bool to_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw InputError("not a boolean: '" + s + "'");
}

std::vector<double> to_doubles(const std::string& s, std::size_t count) {
    const auto parts = split_values(s);
    if (parts.size() != count)
        throw InputError("expected " + std::to_string(count) + " values, got '" + s + "'");
    std::vector<double> out;
    for (const auto& p : parts) out.push_back(to_double(p));
    return out;
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

std::string fmt3(const Eigen::Vector3d& v) { return fmt(v.x()) + "," + fmt(v.y()) + "," + fmt(v.z()); }

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
    const std::filesystem::path p(value);
    return p.is_absolute() || base.empty() ? p : base / p;
}

} // namespace

LightSet default_lights() {
    LightSet l;
    l.directional.push_back({Eigen::Vector3d(0.5, 0.8, 0.6).normalized(), Eigen::Vector3d(2.5, 2.4, 2.2)});
    l.directional.push_back({Eigen::Vector3d(-0.7, 0.3, 0.4).normalized(), Eigen::Vector3d(0.7, 0.75, 0.85)});
    l.directional.push_back({Eigen::Vector3d(0.0, 0.4, -1.0).normalized(), Eigen::Vector3d(1.0, 1.0, 1.0)});
    l.environment = Eigen::Vector3d::Constant(0.1);
    return l;
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    PipelineConfig c;
    bool lights_declared = false;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("config line " + std::to_string(line_no) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "views") c.views = to_int32(value);
            else if (key == "grid_rows") c.grid_rows = to_int32(value);
            else if (key == "grid_cols") c.grid_cols = to_int32(value);
            else if (key == "image_width") c.image_width = to_int32(value);
            else if (key == "image_height") c.image_height = to_int32(value);
            else if (key == "camera_distance") c.camera_distance = to_double(value);
            else if (key == "camera_elevation") c.camera_elevation = to_double(value);
            else if (key == "camera_fov") c.camera_fov = to_double(value);
            else if (key == "noise_seed") c.noise_seed = to_u64(value);
            else if (key == "noise_subpixels") c.noise_subpixels = to_int32(value);
            else if (key == "noise_texture_resolution") c.noise_texture_resolution = to_int32(value);
            else if (key == "noise_channels") c.noise_channels = to_int32(value);
            else if (key == "bias_weight") c.bias_weight = to_double(value);
            else if (key == "neighborhood") {
                const auto v = to_doubles(value, 4);
                for (int s = 0; s < 4; ++s) {
                    if (v[s] != std::floor(v[s])) throw InputError("neighborhood sides must be integers");
                    c.neighborhood[static_cast<std::size_t>(s)] = static_cast<int>(v[s]);
                }
            } else if (key == "same_view_pairs") c.same_view_pairs = to_bool(value);
            else if (key == "cfg_scale") c.cfg_scale = to_double(value);
            else if (key == "tile_control_scale") {
                const auto v = to_doubles(value, 2);
                c.tile_control_scale = {v[0], v[1]};
            } else if (key == "noise_strength") c.noise_strength = to_double(value);
            else if (key == "texture_resolution") c.texture_resolution = to_int32(value);
            else if (key == "albedo") {
                const auto v = to_doubles(value, 3);
                c.albedo = {v[0], v[1], v[2]};
            } else if (key == "roughness") c.roughness = to_double(value);
            else if (key == "albedo_texture") c.albedo_texture = resolve(base_dir, value);
            else if (key == "roughness_texture") c.roughness_texture = resolve(base_dir, value);
            else if (key == "normal_texture") c.normal_texture = resolve(base_dir, value);
            else if (key == "light") {
                const auto v = to_doubles(value, 6);
                const Eigen::Vector3d d(v[0], v[1], v[2]);
                if (!(d.norm() > 0.0)) throw InputError("light direction must be non-zero");
                c.lights.directional.push_back({d.normalized(), Eigen::Vector3d(v[3], v[4], v[5])});
                lights_declared = true;
            } else if (key == "environment") {
                const auto v = to_doubles(value, 3);
                c.lights.environment = {v[0], v[1], v[2]};
                lights_declared = true;
            } else if (key == "shadows") c.shadows = to_bool(value);
            else if (key == "normal_space") {
                if (value == "camera") c.normal_space = NormalSpace::Camera;
                else if (value == "world") c.normal_space = NormalSpace::World;
                else throw InputError("normal_space must be camera or world");
            } else if (key == "exposure") c.loss.exposure = to_double(value);
            else if (key == "loss_epsilon") c.loss.epsilon = to_double(value);
            else if (key == "loss_margin") c.loss.margin = to_int32(value);
            else if (key == "loss_cosine_power") c.loss.cosine_power = to_double(value);
            else if (key == "steps") c.optimizer.steps = to_int32(value);
            else if (key == "lr") c.optimizer.lr = to_double(value);
            else if (key == "lr_final") c.optimizer.lr_final = to_double(value);
            else if (key == "batch") c.optimizer.batch = to_int32(value);
            else if (key == "optimizer_seed") c.optimizer.seed = to_u64(value);
            else if (key == "albedo_lr_scale") c.optimizer.albedo_lr_scale = to_double(value);
            else if (key == "roughness_lr_scale") c.optimizer.roughness_lr_scale = to_double(value);
            else if (key == "normal_lr_scale") c.optimizer.normal_lr_scale = to_double(value);
            else throw InputError("unknown key '" + key + "'");
        } catch (const InputError& e) {
            throw InputError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!lights_declared) c.lights = default_lights();
    validate(c);
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open config " + path.string());
    const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config(text, path.parent_path());
}

std::map<std::string, std::string> config_snapshot(const PipelineConfig& c) {
    std::map<std::string, std::string> m;
    m["views"] = std::to_string(c.views);
    m["grid_rows"] = std::to_string(c.grid_rows);
    m["grid_cols"] = std::to_string(c.grid_cols);
    m["image_width"] = std::to_string(c.image_width);
    m["image_height"] = std::to_string(c.image_height);
    m["camera_distance"] = fmt(c.camera_distance);
    m["camera_elevation"] = fmt(c.camera_elevation);
    m["camera_fov"] = fmt(c.camera_fov);
    m["noise_seed"] = std::to_string(c.noise_seed);
    m["noise_subpixels"] = std::to_string(c.noise_subpixels);
    m["noise_texture_resolution"] = std::to_string(c.noise_texture_resolution);
    m["noise_channels"] = std::to_string(c.noise_channels);
    m["bias_weight"] = fmt(c.bias_weight);
    m["neighborhood"] = std::to_string(c.neighborhood[0]) + "," + std::to_string(c.neighborhood[1]) + "," +
                        std::to_string(c.neighborhood[2]) + "," + std::to_string(c.neighborhood[3]);
    m["same_view_pairs"] = c.same_view_pairs ? "true" : "false";
    m["cfg_scale"] = fmt(c.cfg_scale);
    m["tile_control_scale"] = fmt(c.tile_control_scale[0]) + "," + fmt(c.tile_control_scale[1]);
    m["noise_strength"] = fmt(c.noise_strength);
    m["texture_resolution"] = std::to_string(c.texture_resolution);
    m["albedo"] = fmt3(c.albedo);
    m["roughness"] = fmt(c.roughness);
    m["albedo_texture"] = c.albedo_texture.string();
    m["roughness_texture"] = c.roughness_texture.string();
    m["normal_texture"] = c.normal_texture.string();
    for (std::size_t k = 0; k < c.lights.directional.size(); ++k)
        m["light_" + std::to_string(k)] =
            fmt3(c.lights.directional[k].direction) + "," + fmt3(c.lights.directional[k].radiance);
    m["environment"] = fmt3(c.lights.environment);
    m["shadows"] = c.shadows ? "true" : "false";
    m["normal_space"] = c.normal_space == NormalSpace::Camera ? "camera" : "world";
    m["exposure"] = fmt(c.loss.exposure);
    m["loss_epsilon"] = fmt(c.loss.epsilon);
    m["loss_margin"] = std::to_string(c.loss.margin);
    m["loss_cosine_power"] = fmt(c.loss.cosine_power);
    m["steps"] = std::to_string(c.optimizer.steps);
    m["lr"] = fmt(c.optimizer.lr);
    m["lr_final"] = fmt(c.optimizer.lr_final);
    m["batch"] = std::to_string(c.optimizer.batch);
    m["optimizer_seed"] = std::to_string(c.optimizer.seed);
    m["albedo_lr_scale"] = fmt(c.optimizer.albedo_lr_scale);
    m["roughness_lr_scale"] = fmt(c.optimizer.roughness_lr_scale);
    m["normal_lr_scale"] = fmt(c.optimizer.normal_lr_scale);
    return m;
}

void validate(const PipelineConfig& c) {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw InputError("config: " + what);
    };
    require(c.views >= 1 && c.views <= 16, "views must be in [1, 16]");
    require((c.grid_rows == 0) == (c.grid_cols == 0), "grid_rows and grid_cols must be set together");
    require(c.grid_rows >= 0 && c.grid_cols >= 0, "grid dimensions must be >= 0");
    if (c.grid_rows > 0) require(c.grid_rows * c.grid_cols >= c.views, "grid layout cannot hold every view");
    require(c.image_width >= 64 && c.image_height >= 64 && c.image_width % 64 == 0 && c.image_height % 64 == 0,
            "image dimensions must be positive multiples of 64");
    require(c.image_width <= 4096 && c.image_height <= 4096, "image dimensions must be <= 4096");
    require(c.camera_distance > 1.0, "camera_distance must exceed 1 (scene bounding radii)");
    require(std::abs(c.camera_elevation) < 90.0, "camera_elevation must be in (-90, 90)");
    require(c.camera_fov > 0.0 && c.camera_fov < 180.0, "camera_fov must be in (0, 180)");
    require(c.noise_subpixels >= 1 && c.noise_subpixels <= 16, "noise_subpixels must be in [1, 16]");
    require(c.noise_texture_resolution >= 64 && c.noise_texture_resolution <= 8192,
            "noise_texture_resolution must be in [64, 8192]");
    require(c.noise_channels >= 1 && c.noise_channels <= 16, "noise_channels must be in [1, 16]");
    require(c.bias_weight >= 0.0 && c.bias_weight <= 3.5, "bias_weight must be in [0, 3.5]");
    for (int s : c.neighborhood) require(s >= 1 && s % 2 == 1, "neighborhood sides must be odd and positive");
    require(c.texture_resolution >= 1 && c.texture_resolution <= 8192, "texture_resolution must be in [1, 8192]");
    require(c.albedo.minCoeff() >= 0.0 && c.albedo.maxCoeff() <= 1.0, "albedo must be in [0, 1]");
    require(c.roughness >= 0.01 && c.roughness <= 1.0, "roughness must be in [0.01, 1]");
    require(c.loss.epsilon > 0.0, "loss_epsilon must be positive");
    require(c.loss.margin >= 0, "loss_margin must be >= 0");
    require(c.loss.cosine_power >= 0.0, "loss_cosine_power must be >= 0");
    require(c.loss.exposure > 0.0, "exposure must be positive");
    require(c.optimizer.steps >= 0, "steps must be >= 0");
    require(c.optimizer.lr > 0.0 && c.optimizer.lr_final > 0.0, "learning rates must be positive");
    require(c.optimizer.batch >= 1, "batch must be >= 1");
    require(c.optimizer.albedo_lr_scale >= 0.0 && c.optimizer.roughness_lr_scale >= 0.0 &&
                c.optimizer.normal_lr_scale >= 0.0,
            "learning-rate scales must be >= 0");
    validate(c.lights);
}

GridLayout grid_layout(const PipelineConfig& c) {
    if (c.grid_rows > 0) return {c.grid_rows, c.grid_cols, c.views, c.image_width, c.image_height};
    return default_grid_layout(c.views, c.image_width, c.image_height);
}

std::vector<Camera> pipeline_cameras(const PipelineConfig& c, const Scene& scene, int width, int height) {
    const BoundingSphere& b = scene.bounds();
    return generate_orbit_cameras(c.views, c.camera_elevation * kDeg, c.camera_distance * b.radius,
                                  c.camera_fov * kDeg, width, height, b.center);
}

Material initial_material(const PipelineConfig& c) {
    Material m = uniform_material(c.texture_resolution, c.albedo, c.roughness);
    if (!c.albedo_texture.empty()) m.albedo = read_texture_pfm(c.albedo_texture);
    if (!c.roughness_texture.empty()) m.roughness = read_texture_pfm(c.roughness_texture);
    if (!c.normal_texture.empty()) m.normal = read_texture_pfm(c.normal_texture);
    validate(m);
    return m;
}

std::string sha256_hex(const std::vector<char>& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream s;
    for (unsigned int i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
    return s.str();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string());
    const std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

const ArtifactRecord* RunManifest::find(const std::string& path) const {
    for (const auto& a : artifacts)
        if (a.path == path) return &a;
    return nullptr;
}

void RunManifest::record(const std::filesystem::path& out_dir, const std::string& path, const std::string& stage) {
    const std::string hash = sha256_file(out_dir / path);
    for (auto& a : artifacts)
        if (a.path == path) {
            a.sha256 = hash;
            a.stage = stage;
            return;
        }
    artifacts.push_back({path, hash, stage});
}

void RunManifest::verify(const std::filesystem::path& out_dir, const std::string& path) const {
    const ArtifactRecord* a = find(path);
    if (!a) throw InputError("manifest does not pin " + path);
    if (!std::filesystem::exists(out_dir / path)) throw InputError("missing artifact " + (out_dir / path).string());
    if (sha256_file(out_dir / path) != a->sha256)
        throw InputError("hash mismatch for " + (out_dir / path).string() + " against the manifest");
}

RunManifest load_manifest(const std::filesystem::path& out_dir) {
    RunManifest m;
    const auto path = out_dir / kManifestName;
    if (!std::filesystem::exists(path)) return m;
    std::ifstream f(path);
    nlohmann::json j;
    try {
        f >> j;
        m.config = j.at("config").get<std::map<std::string, std::string>>();
        m.scene = j.at("scene").at("spec").get<std::string>();
        m.scene_sha256 = j.at("scene").at("sha256").get<std::string>();
        for (const auto& a : j.at("artifacts"))
            m.artifacts.push_back(
                {a.at("path").get<std::string>(), a.at("sha256").get<std::string>(), a.at("stage").get<std::string>()});
        m.stages = j.at("stages").get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed manifest " + path.string() + ": " + e.what());
    }
    return m;
}

void save_manifest(const RunManifest& m, const std::filesystem::path& out_dir) {
    nlohmann::json j;
    j["version"] = 1;
    j["config"] = m.config;
    j["scene"] = {{"spec", m.scene}, {"sha256", m.scene_sha256}};
    j["artifacts"] = nlohmann::json::array();
    for (const auto& a : m.artifacts) j["artifacts"].push_back({{"path", a.path}, {"sha256", a.sha256}, {"stage", a.stage}});
    j["stages"] = m.stages;
    std::ofstream f(out_dir / kManifestName);
    if (!f) throw InputError("cannot write manifest in " + out_dir.string());
    f << j.dump(2) << '\n';
}

std::string scene_hash(const std::string& spec) {
    if (spec.rfind("builtin:", 0) == 0) return sha256_hex(std::vector<char>(spec.begin(), spec.end()));
    return sha256_file(spec);
}

Image encode_normal_texture(const Texture2D& normals) {
    if (normals.channels != 3) throw InputError("normal texture must have 3 channels");
    Image img(normals.width, normals.height, 3);
    for (std::size_t i = 0; i < normals.values.size(); ++i) img.data[i] = 0.5f * (normals.values[i] + 1.0f);
    return img;
}

namespace {

// Opens the stage: loads the scene, prepares the output directory and the manifest.
struct Stage {
    Scene scene;
    RunManifest manifest;
    std::filesystem::path out;
};

Stage open_stage(const PipelineConfig& config, const std::string& scene_spec, const std::filesystem::path& out,
                 bool require_render) {
    validate(config);
    if (scene_spec.rfind("builtin:", 0) != 0 && !std::filesystem::exists(scene_spec))
        throw InputError("scene not found: " + scene_spec);
    Stage s{Scene(load_scene_mesh(scene_spec)), {}, out};
    std::filesystem::create_directories(out);
    s.manifest = load_manifest(out);
    const std::string hash = scene_hash(scene_spec);
    if (require_render) {
        if (!s.manifest.stages.count("render")) throw InputError("no render stage recorded in " + out.string());
        if (s.manifest.scene_sha256 != hash) throw InputError("hash mismatch: scene differs from the rendered one");
    }
    if (!s.manifest.scene_sha256.empty() && s.manifest.scene_sha256 != hash)
        throw InputError("hash mismatch: scene differs from the one recorded in the manifest");
    s.manifest.scene = scene_spec;
    s.manifest.scene_sha256 = hash;
    s.manifest.config = config_snapshot(config);
    return s;
}

std::string view_name(int v) {
    std::ostringstream s;
    s << "view_" << std::setw(2) << std::setfill('0') << v;
    return s.str();
}

} // namespace

RunManifest cmd_render(const PipelineConfig& config, const std::string& scene_spec, const std::filesystem::path& out) {
    Stage st = open_stage(config, scene_spec, out, false);
    const GridLayout layout = grid_layout(config);
    const auto cams = pipeline_cameras(config, st.scene, config.image_width, config.image_height);
    const Material material = initial_material(config);
    RenderOptions opts;
    opts.shadows = config.shadows;

    std::filesystem::create_directories(out / "views");
    std::filesystem::create_directories(out / "material");
    std::vector<Image> color, normals;
    for (int v = 0; v < config.views; ++v) {
        const HdrImage hdr = render(st.scene, cams[static_cast<std::size_t>(v)], material, config.lights, opts);
        const std::string name = "views/" + view_name(v) + ".pfm";
        write_pfm(hdr.rgb, out / name);
        st.manifest.record(out, name, "render");
        color.push_back(tonemap(hdr.rgb, config.loss.exposure));
        const GBuffer g = rasterize_gbuffer(st.scene, cams[static_cast<std::size_t>(v)], 1);
        normals.push_back(encode_normals(g, cams[static_cast<std::size_t>(v)], config.normal_space));
    }
    const Image color_grid = assemble_grid(color, layout.rows, layout.cols);
    write_png(color_grid, out / "color_grid.png", true);
    write_pfm(color_grid, out / "color_grid.pfm");
    write_png(assemble_grid(normals, layout.rows, layout.cols), out / "normal_grid.png", false);
    write_grid_sidecar(layout, out / "grid.txt");
    write_texture_pfm(material.albedo, out / "material/albedo.pfm");
    write_texture_pfm(material.roughness, out / "material/roughness.pfm");
    write_texture_pfm(material.normal, out / "material/normal.pfm");
    for (const char* name : {"color_grid.png", "color_grid.pfm", "normal_grid.png", "grid.txt", "material/albedo.pfm",
                             "material/roughness.pfm", "material/normal.pfm"})
        st.manifest.record(out, name, "render");
    st.manifest.stages["render"] = utc_now();
    save_manifest(st.manifest, out);
    return st.manifest;
}

RunManifest cmd_noise(const PipelineConfig& config, const std::string& scene_spec, const std::filesystem::path& out) {
    Stage st = open_stage(config, scene_spec, out, false);
    const GridLayout layout = grid_layout(config);
    const int lw = config.image_width / 8, lh = config.image_height / 8;
    const auto cams = pipeline_cameras(config, st.scene, lw, lh);
    NoiseSettings settings;
    settings.seed = config.noise_seed;
    settings.texture_resolution = config.noise_texture_resolution;
    settings.subpixels = config.noise_subpixels;
    settings.channels = config.noise_channels;
    std::vector<NoiseTexture> textures;
    for (int c = 0; c < settings.channels; ++c)
        textures.push_back(sample_noise_texture(channel_seed(settings.seed, c), settings.texture_resolution));

    std::filesystem::create_directories(out / "noise");
    NoiseImage grid;
    grid.width = layout.cols * lw;
    grid.height = layout.rows * lh;
    grid.channels = settings.channels;
    grid.data.assign(static_cast<std::size_t>(grid.width) * grid.height * static_cast<std::size_t>(grid.channels), 0.0f);
    for (int slot = 0; slot < layout.rows * layout.cols; ++slot) {
        const int ox = (slot % layout.cols) * lw, oy = (slot / layout.cols) * lh;
        if (slot < config.views) {
            const GBuffer g = rasterize_gbuffer(st.scene, cams[static_cast<std::size_t>(slot)], settings.subpixels);
            const ViewFootprints fp = prepare_view_footprints(g, settings.texture_resolution);
            const NoiseImage img = generate_view_noise(fp, textures, settings.seed, slot);
            const std::string name = "noise/" + view_name(slot) + ".mvcn";
            write_mvcn(img, out / name);
            st.manifest.record(out, name, "noise");
            for (int c = 0; c < grid.channels; ++c)
                for (int y = 0; y < lh; ++y)
                    for (int x = 0; x < lw; ++x) grid.at(c, ox + x, oy + y) = img.at(c, x, y);
        } else {
            // Padding slots carry plain white noise keyed on the slot index.
            for (int c = 0; c < grid.channels; ++c)
                for (int y = 0; y < lh; ++y)
                    for (int x = 0; x < lw; ++x)
                        grid.at(c, ox + x, oy + y) = static_cast<float>(
                            white_noise(settings.seed, static_cast<std::uint32_t>(slot),
                                        static_cast<std::uint32_t>(y * lw + x), static_cast<std::uint32_t>(c)));
        }
    }
    write_mvcn(grid, out / "noise/grid.mvcn");
    st.manifest.record(out, "noise/grid.mvcn", "noise");
    st.manifest.stages["noise"] = utc_now();
    save_manifest(st.manifest, out);
    return st.manifest;
}

RunManifest cmd_bias(const PipelineConfig& config, const std::string& scene_spec, const std::filesystem::path& out) {
    Stage st = open_stage(config, scene_spec, out, false);
    const GridLayout layout = grid_layout(config);
    if (config.views < 2) throw InputError("bias: correspondences need at least two views");
    const auto cams = pipeline_cameras(config, st.scene, config.image_width, config.image_height);
    const LatentGrid grid(config.views, layout.rows, layout.cols, config.image_width, config.image_height);
    CorrespondenceOptions opts;
    opts.neighborhoods.side = config.neighborhood;
    opts.same_view_pairs = config.same_view_pairs;
    const CorrespondenceSet set = compute_correspondences(st.scene, cams, grid, opts);
    std::filesystem::create_directories(out / "bias");
    for (const auto& s : set.scales) {
        const std::string name = "bias/scale_" + std::to_string(s.scale) + ".mvcb";
        write_mvcb(s, out / name);
        st.manifest.record(out, name, "bias");
    }
    st.manifest.stages["bias"] = utc_now();
    save_manifest(st.manifest, out);
    return st.manifest;
}

RunManifest cmd_reconstruct(const PipelineConfig& config, const std::string& scene_spec,
                            const std::filesystem::path& enhanced_grid, const std::filesystem::path& out) {
    Stage st = open_stage(config, scene_spec, out, true);
    for (const char* name : {"grid.txt", "material/albedo.pfm", "material/roughness.pfm", "material/normal.pfm"})
        st.manifest.verify(out, name);
    const GridLayout layout = read_grid_sidecar(out / "grid.txt");
    if (!(layout == grid_layout(config)))
        throw InputError("reconstruct: config grid layout differs from the rendered one");

    if (!std::filesystem::exists(enhanced_grid)) throw InputError("enhanced grid not found: " + enhanced_grid.string());
    const std::string ext = enhanced_grid.extension().string();
    Image grid;
    if (ext == ".png") grid = read_png(enhanced_grid, true);
    else if (ext == ".pfm") grid = read_pfm(enhanced_grid);
    else throw InputError("enhanced grid must be .png or .pfm: " + enhanced_grid.string());
    if (grid.channels != 3) throw InputError("enhanced grid must have 3 channels");
    if (grid.width != layout.cols * layout.view_width || grid.height != layout.rows * layout.view_height)
        throw InputError("enhanced grid is " + std::to_string(grid.width) + "x" + std::to_string(grid.height) +
                         ", expected " + std::to_string(layout.cols * layout.view_width) + "x" +
                         std::to_string(layout.rows * layout.view_height));
    const std::vector<Image> targets = split_grid(grid, layout.rows, layout.cols, layout.views);

    Material init;
    init.albedo = read_texture_pfm(out / "material/albedo.pfm");
    init.roughness = read_texture_pfm(out / "material/roughness.pfm");
    init.normal = read_texture_pfm(out / "material/normal.pfm");
    validate(init);

    const auto cams = pipeline_cameras(config, st.scene, config.image_width, config.image_height);
    RenderOptions opts;
    opts.shadows = config.shadows;
    std::vector<ViewTarget> views;
    for (int v = 0; v < config.views; ++v)
        views.push_back(make_view_target(st.scene, cams[static_cast<std::size_t>(v)], config.lights,
                                         targets[static_cast<std::size_t>(v)], config.loss, opts));

    std::filesystem::create_directories(out / "reconstruct");
    OptimizerConfig oc = config.optimizer;
    oc.divergence_dump = out / "reconstruct/diverged.ckpt";
    const OptimizeResult r = optimize(init, views, config.lights, config.loss, oc);

    const auto dir = out / "reconstruct";
    write_png(texture_image(r.material.albedo), dir / "albedo.png", true);
    write_png(encode_normal_texture(r.material.normal), dir / "normal.png", false);
    write_texture_pfm(r.material.roughness, dir / "roughness.pfm");
    write_texture_pfm(r.material.albedo, dir / "albedo.pfm");
    write_texture_pfm(r.material.normal, dir / "normal.pfm");
    write_loss_csv(r.history, config.views, dir / "loss.csv");
    write_checkpoint(r.params, r.adam, dir / "checkpoint.bin");
    for (const char* name : {"albedo.png", "normal.png", "roughness.pfm", "albedo.pfm", "normal.pfm", "loss.csv",
                             "checkpoint.bin"})
        st.manifest.record(out, std::string("reconstruct/") + name, "reconstruct");
    st.manifest.stages["reconstruct"] = utc_now();
    save_manifest(st.manifest, out);
    return st.manifest;
}

} // namespace mvc
