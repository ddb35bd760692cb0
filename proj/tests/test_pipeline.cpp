#include "correspondence_oracle.hpp"
#include "selftest.hpp"

#include "mvc/correspondence/correspondence.hpp"
#include "mvc/errors.hpp"
#include "mvc/noise/noisegen.hpp"
#include "mvc/pipeline/pipeline.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mvc;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mvc_pipeline_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const char* kSmallConfig = R"(# small rig
views = 9
image_width = 128
image_height = 128
texture_resolution = 64
noise_texture_resolution = 512
steps = 60
)";

std::string read_text(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MVC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("config: defaults, every key and canonical snapshot") {
    const PipelineConfig d = parse_config("");
    CHECK(d.views == 9);
    CHECK(d.bias_weight == 1.5);
    CHECK(d.cfg_scale == 7.5);
    CHECK(d.tile_control_scale[0] == 1.0);
    CHECK(d.tile_control_scale[1] == 0.8);
    CHECK(d.noise_strength == 1.0);
    CHECK(d.noise_subpixels == 4);
    CHECK(d.noise_texture_resolution == 1024);
    CHECK(d.lights.directional.size() == default_lights().directional.size());

    const std::string text = R"(views = 12
grid_rows = 3
grid_cols = 4
image_width = 256
image_height = 192
camera_distance = 2.5
camera_elevation = 10
camera_fov = 40
noise_seed = 77
noise_subpixels = 3
noise_texture_resolution = 512
noise_channels = 4
bias_weight = 3.5
neighborhood = 7, 5, 3, 1
same_view_pairs = true
cfg_scale = 5
tile_control_scale = 0.9, 0.7
noise_strength = 0.8
texture_resolution = 128
albedo = 0.2, 0.3, 0.4
roughness = 0.6
light = 0, 1, 0, 2, 2, 2
environment = 0.05, 0.05, 0.05
shadows = false
normal_space = world
exposure = 1.5
loss_epsilon = 0.02
loss_margin = 3
loss_cosine_power = 2
steps = 10
lr = 0.1
lr_final = 0.01
batch = 2
optimizer_seed = 9
albedo_lr_scale = 1
roughness_lr_scale = 0.5
normal_lr_scale = 0.2
)";
    const PipelineConfig c = parse_config(text);
    CHECK(c.views == 12);
    CHECK(grid_layout(c).rows == 3);
    CHECK(c.neighborhood == std::array<int, 4>{7, 5, 3, 1});
    CHECK(c.same_view_pairs);
    CHECK(c.lights.directional.size() == 1);
    CHECK(c.normal_space == NormalSpace::World);
    CHECK(c.loss.margin == 3);
    CHECK(c.optimizer.batch == 2);
    CHECK(c.optimizer.normal_lr_scale == 0.2);

    // The snapshot re-parses to the same configuration.
    std::string again;
    for (const auto& [k, v] : config_snapshot(c)) {
        if (v.empty()) continue;
        again += (k.rfind("light_", 0) == 0 ? std::string("light") : k) + " = " + v + "\n";
    }
    CHECK(config_snapshot(parse_config(again)) == config_snapshot(c));
}

TEST_CASE("config: errors name the line") {
    auto message = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const InputError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("views = 9\nbogus = 1\n").find("line 2") != std::string::npos);
    CHECK(message("views = nine\n").find("line 1") != std::string::npos);
    CHECK(message("bias_weight = 3.6\n").find("bias_weight") != std::string::npos);
    CHECK_FALSE(message("views = 17\n").empty());
    CHECK_FALSE(message("views = 10\ngrid_rows = 3\ngrid_cols = 3\n").empty());
    CHECK_FALSE(message("image_width = 100\n").empty());
    CHECK_FALSE(message("neighborhood = 9, 4, 3, 1\n").empty());
    CHECK_FALSE(message("just text\n").empty());
    CHECK(message("bias_weight = 0\n").empty());
    CHECK(message("views = 1\n").empty());
}

TEST_CASE("render: grids, artifacts and determinism") {
    const PipelineConfig c = parse_config(kSmallConfig);
    const fs::path a = fresh_dir("render_a"), b = fresh_dir("render_b");
    const RunManifest ma = cmd_render(c, "builtin:sphere", a);
    const RunManifest mb = cmd_render(c, "builtin:sphere", b);
    const Image grid = read_png(a / "color_grid.png", true);
    CHECK(grid.width == 3 * 128);
    CHECK(grid.height == 3 * 128);
    const Image normals = read_png(a / "normal_grid.png", false);
    CHECK(normals.width == 3 * 128);
    REQUIRE(ma.artifacts.size() == mb.artifacts.size());
    for (std::size_t i = 0; i < ma.artifacts.size(); ++i) {
        CHECK(ma.artifacts[i].path == mb.artifacts[i].path);
        CHECK(ma.artifacts[i].sha256 == mb.artifacts[i].sha256);
        ma.verify(a, ma.artifacts[i].path);
    }
    CHECK(ma.find("views/view_08.pfm") != nullptr);
    const RunManifest loaded = load_manifest(a);
    CHECK(loaded.artifacts.size() == ma.artifacts.size());
    CHECK(loaded.config == config_snapshot(c));

    PipelineConfig one = c;
    one.views = 1;
    const fs::path o = fresh_dir("render_one");
    cmd_render(one, "builtin:cube", o);
    CHECK(read_png(o / "color_grid.png", true).width == 128);
    CHECK(read_grid_sidecar(o / "grid.txt").rows == 1);

    CHECK_THROWS_AS(cmd_render(c, "/no/such/scene.obj", fresh_dir("render_missing")), InputError);
}

TEST_CASE("noise: planes per view, grid is a rearrangement, statistics on emitted files") {
    PipelineConfig c = parse_config(kSmallConfig);
    c.image_width = c.image_height = 512;
    c.noise_texture_resolution = 1024;
    const fs::path d = fresh_dir("noise");
    cmd_noise(c, "builtin:sphere", d);
    const NoiseImage grid = read_mvcn(d / "noise/grid.mvcn");
    CHECK(grid.channels == 4);
    CHECK(grid.width == 3 * 64);
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (int v = 0; v < 9; ++v) {
        std::ostringstream name;
        name << "noise/view_0" << v << ".mvcn";
        const NoiseImage img = read_mvcn(d / name.str());
        REQUIRE(img.channels == 4);
        REQUIRE(img.width == 64);
        const int ox = (v % 3) * 64, oy = (v / 3) * 64;
        for (int ch = 0; ch < 4; ++ch)
            for (int y = 0; y < 64; ++y)
                for (int x = 0; x < 64; ++x) {
                    REQUIRE(grid.at(ch, ox + x, oy + y) == img.at(ch, x, y));
                    sum += img.at(ch, x, y);
                    sq += double(img.at(ch, x, y)) * img.at(ch, x, y);
                    ++n;
                }
    }
    const double mean = sum / n, var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("noise: padding slots hold white noise") {
    PipelineConfig c = parse_config(kSmallConfig);
    c.views = 3;
    c.grid_rows = 2;
    c.grid_cols = 2;
    const fs::path d = fresh_dir("noise_pad");
    cmd_noise(c, "builtin:sphere", d);
    const NoiseImage grid = read_mvcn(d / "noise/grid.mvcn");
    CHECK(grid.width == 32);
    double sq = 0.0;
    for (int y = 16; y < 32; ++y)
        for (int x = 16; x < 32; ++x) sq += double(grid.at(0, x, y)) * grid.at(0, x, y);
    CHECK(sq / 256.0 > 0.6);
    CHECK(sq / 256.0 < 1.4);
}

TEST_CASE("bias: emitted files equal the dense oracle on a two-view rig") {
    PipelineConfig c = parse_config(kSmallConfig);
    c.views = 2;
    c.image_width = c.image_height = 256;
    const fs::path d = fresh_dir("bias");
    const RunManifest m = cmd_bias(c, "builtin:sphere", d);
    const Scene scene(load_scene_mesh("builtin:sphere"));
    const auto cams = pipeline_cameras(c, scene, 256, 256);
    const LatentGrid grid(2, 1, 2, 256, 256);
    for (int s = 1; s <= 4; ++s) {
        const ScaleCorrespondences got = read_mvcb(d / ("bias/scale_" + std::to_string(s) + ".mvcb"));
        CHECK(got.n == grid.size(s));
        CHECK(got.pairs == oracle::dense_correspondences(scene, cams, grid, s, NeighborhoodSpec{}.at(s)).pairs);
    }
    CHECK(m.find("bias/scale_4.mvcb") != nullptr);
    PipelineConfig single = c;
    single.views = 1;
    CHECK_THROWS_AS(cmd_bias(single, "builtin:sphere", fresh_dir("bias_one")), InputError);
}

TEST_CASE("reconstruct: untouched conditioning grid is a fixed point") {
    const PipelineConfig c = parse_config(kSmallConfig);
    const fs::path d = fresh_dir("reconstruct");
    cmd_render(c, "builtin:sphere", d);
    cmd_reconstruct(c, "builtin:sphere", d / "color_grid.pfm", d);
    const Texture2D a0 = read_texture_pfm(d / "material/albedo.pfm");
    const Texture2D a1 = read_texture_pfm(d / "reconstruct/albedo.pfm");
    double sq = 0.0;
    for (std::size_t i = 0; i < a0.values.size(); ++i) sq += std::pow(a0.values[i] - a1.values[i], 2);
    CHECK(std::sqrt(sq / a0.values.size()) < 1e-3);
    CHECK(fs::exists(d / "reconstruct/albedo.png"));
    CHECK(fs::exists(d / "reconstruct/normal.png"));
    CHECK(fs::exists(d / "reconstruct/roughness.pfm"));
    CHECK(fs::exists(d / "reconstruct/checkpoint.bin"));
    CHECK(read_text(d / "reconstruct/loss.csv").rfind("step,loss,view_0", 0) == 0);
    CHECK(load_manifest(d).stages.count("reconstruct") == 1);
}

TEST_CASE("reconstruct: input errors") {
    const PipelineConfig c = parse_config(kSmallConfig);
    const fs::path d = fresh_dir("reconstruct_err");
    CHECK_THROWS_AS(cmd_reconstruct(c, "builtin:sphere", d / "color_grid.pfm", d), InputError); // no render yet
    cmd_render(c, "builtin:sphere", d);

    Image small(100, 100, 3, 0.5f);
    write_pfm(small, d / "small.pfm");
    CHECK_THROWS_AS(cmd_reconstruct(c, "builtin:sphere", d / "small.pfm", d), InputError);
    CHECK_THROWS_AS(cmd_reconstruct(c, "builtin:cube", d / "color_grid.pfm", d), InputError);

    Texture2D a = read_texture_pfm(d / "material/albedo.pfm");
    a.values[0] = 0.25f;
    write_texture_pfm(a, d / "material/albedo.pfm");
    try {
        cmd_reconstruct(c, "builtin:sphere", d / "color_grid.pfm", d);
        FAIL("expected a hash mismatch");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("hash mismatch") != std::string::npos);
    }
}

TEST_CASE("cli: exit codes") {
    const fs::path d = fresh_dir("cli");
    {
        std::ofstream f(d / "run.cfg");
        f << kSmallConfig;
    }
    const std::string cfg = "--config " + (d / "run.cfg").string();
    const std::string out = " --out " + (d / "out").string();
    CHECK(run_cli("render " + cfg + " --scene builtin:sphere" + out) == 0);
    CHECK(run_cli("render --config " + (d / "missing.cfg").string() + " --scene builtin:sphere" + out) == 2);
    CHECK(run_cli("render " + cfg + out) == 2); // --scene missing
    CHECK(run_cli("render " + cfg + " --scene builtin:torus" + out) == 2);

    Image grid = read_pfm(d / "out/color_grid.pfm");
    grid.data[3 * (64 * grid.width + 64)] = std::nanf("");
    write_pfm(grid, d / "nan_grid.pfm");
    CHECK(run_cli("reconstruct " + cfg + " --scene builtin:sphere" + out + " --enhanced " + (d / "nan_grid.pfm").string()) ==
          3);
    CHECK(run_cli("reconstruct " + cfg + " --scene builtin:sphere" + out + " --enhanced " +
                  (d / "out/color_grid.pfm").string()) == 0);
}

TEST_CASE("selftest passes") {
    std::ostringstream log;
    CHECK(run_selftest(parse_config(kSmallConfig), log));
    CHECK(log.str().find("FAIL") == std::string::npos);
}
