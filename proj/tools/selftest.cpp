#include "selftest.hpp"

#include "correspondence_oracle.hpp"
#include "gradient_oracle.hpp"
#include "noise_oracles.hpp"

#include "mvc/correspondence/correspondence.hpp"
#include "mvc/geometry/mesh.hpp"
#include "mvc/noise/noisegen.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

namespace mvc {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Camera orbit(double azimuth_deg, int size) {
    Camera c;
    const double az = azimuth_deg * kDeg, el = 15.0 * kDeg;
    c.origin = 3.0 * Eigen::Vector3d(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
    c.target = Eigen::Vector3d::Zero();
    c.fov_y = 45.0 * kDeg;
    c.width = c.height = size;
    return c;
}

struct Check {
    bool pass = false;
    std::string detail;
};

// Fixed reference rig (64^2 latents, R = 1024) so the check does not depend on
// the config's noise resolution.
Check noise_check() {
    constexpr int kLatent = 64, kRes = 1024;
    const Scene scene(load_scene_mesh("builtin:sphere"));
    const Camera cam = orbit(0.0, kLatent);
    const GBuffer g = rasterize_gbuffer(scene, cam, 4);
    const ViewFootprints v = prepare_view_footprints(g, kRes);
    double worst_exact = 0.0;
    std::vector<oracle::PixelRef> pixels;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (int y = 0; y < kLatent; ++y)
        for (int x = 0; x < kLatent; ++x) {
            const auto p = static_cast<std::uint32_t>(y * kLatent + x);
            if (!v.covered[p] || v.alphas[p] < 1.0) continue;
            const auto form = oracle::pixel_linear_form(g, x, y, kRes);
            worst_exact = std::max(worst_exact, std::abs(oracle::exact_variance(form) - 1.0));
            if (y == kLatent / 2 && x >= 24 && x < 40) {
                if (!pixels.empty()) pairs.emplace_back(pixels.size() - 1, pixels.size());
                pixels.push_back({0, p});
            }
        }
    const auto r = oracle::sweep_seeds({v}, pixels, pairs, 1, 4000);
    double worst_var = 0.0, worst_mean = 0.0, worst_rho = 0.0;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        worst_var = std::max(worst_var, std::abs(r.variance[i] - 1.0));
        worst_mean = std::max(worst_mean, std::abs(r.mean[i]));
    }
    for (double rho : r.correlation) worst_rho = std::max(worst_rho, std::abs(rho));
    std::ostringstream s;
    s << "exact |var-1| " << worst_exact << ", 4000 seeds: |var-1| " << worst_var << " |mean| " << worst_mean
      << " |rho| " << worst_rho;
    return {!pixels.empty() && worst_exact < 1e-9 && worst_var < 0.1 && worst_mean < 0.06 && worst_rho < 0.08,
            s.str()};
}

Check correspondence_check(const PipelineConfig& config) {
    const Scene scene(load_scene_mesh("builtin:sphere"));
    const std::vector<Camera> cams{orbit(0.0, 256), orbit(30.0, 256)};
    const LatentGrid grid(2, 1, 2, 256, 256);
    NeighborhoodSpec nb;
    nb.side = config.neighborhood;
    std::size_t pairs = 0;
    for (int s = 1; s <= LatentGrid::kScales; ++s) {
        CorrespondenceOptions o;
        o.neighborhoods = nb;
        const auto got = compute_scale_correspondences(scene, cams, grid, s, o);
        const auto want = oracle::dense_correspondences(scene, cams, grid, s, nb.at(s));
        if (got.pairs != want.pairs) return {false, "scale " + std::to_string(s) + " differs from the dense oracle"};
        pairs += got.pairs.size();
    }
    return {pairs > 0, std::to_string(pairs) + " pairs over 4 scales equal the dense oracle"};
}

Check gradient_check() {
    const Scene scene(load_scene_mesh("builtin:sphere"));
    const LightSet lights = default_lights();
    const Material truth = oracle::patterned_material(24);
    Material guess = oracle::patterned_material(24, 0.3);
    for (float& a : guess.albedo.values) a = std::clamp(a - 0.1f, 0.02f, 0.98f);
    std::vector<ViewTarget> views;
    for (double az : {0.0, 70.0}) {
        const Camera c = orbit(az, 40);
        views.push_back(make_view_target(scene, c, lights, tonemap(render(scene, c, truth, lights).rgb), LossConfig{}));
    }
    const MaterialParameters p = MaterialParameters::encode(guess);
    std::vector<PreparedView> prepared;
    for (const auto& v : views) prepared.push_back(prepare_view(v, p));
    const std::vector<const PreparedView*> batch{&prepared[0], &prepared[1]};
    double worst = 0.0;
    std::size_t n = 0;
    for (auto group : {oracle::ParameterGroup::Albedo, oracle::ParameterGroup::Roughness, oracle::ParameterGroup::Normal}) {
        for (const auto& g : oracle::check_gradients(batch, p, lights, LossConfig{}, group, 20, 7, 1e-5)) {
            worst = std::max(worst, g.relative_error);
            ++n;
        }
    }
    std::ostringstream s;
    s << n << " texels, worst relative error " << worst;
    return {n == 60 && worst < 1e-3, s.str()};
}

} // namespace

bool run_selftest(const PipelineConfig& config, std::ostream& out) {
    const std::vector<std::pair<std::string, std::function<Check()>>> checks{
        {"noise statistics", [] { return noise_check(); }},
        {"correspondence oracle", [&] { return correspondence_check(config); }},
        {"gradient check", [] { return gradient_check(); }},
    };
    bool all = true;
    for (const auto& [name, fn] : checks) {
        const auto t0 = std::chrono::steady_clock::now();
        Check c;
        try {
            c = fn();
        } catch (const std::exception& e) {
            c = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out << (c.pass ? "PASS " : "FAIL ") << name << ": " << c.detail << " (" << secs << " s)\n";
        all = all && c.pass;
    }
    return all;
}

} // namespace mvc
