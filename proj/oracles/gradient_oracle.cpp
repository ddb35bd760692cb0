#include "gradient_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace mvc::oracle {

std::vector<GradientSample> check_gradients(const std::vector<const PreparedView*>& views,
                                            const MaterialParameters& params, const LightSet& lights,
                                            const LossConfig& config, ParameterGroup group, int count,
                                            std::uint64_t seed, double h, double min_fraction) {
    const BatchEvaluation base = evaluate_batch(views, params, lights, config, true);
    const Eigen::VectorXd g = params.latent_gradient(base.decoded_gradient);

    std::size_t lo = 0, hi = params.roughness_offset();
    if (group == ParameterGroup::Roughness) lo = params.roughness_offset(), hi = params.normal_offset();
    if (group == ParameterGroup::Normal) lo = params.normal_offset(), hi = params.size();
    double peak = 0.0;
    for (std::size_t i = lo; i < hi; ++i) peak = std::max(peak, std::abs(g[static_cast<Eigen::Index>(i)]));
    std::vector<std::size_t> eligible;
    for (std::size_t i = lo; i < hi; ++i)
        if (peak > 0.0 && std::abs(g[static_cast<Eigen::Index>(i)]) >= min_fraction * peak) eligible.push_back(i);
    std::mt19937_64 rng(seed);
    std::shuffle(eligible.begin(), eligible.end(), rng);
    eligible.resize(std::min<std::size_t>(eligible.size(), static_cast<std::size_t>(count)));

    std::vector<GradientSample> out;
    MaterialParameters p = params;
    for (std::size_t i : eligible) {
        const auto k = static_cast<Eigen::Index>(i);
        const double x0 = p.values[k];
        p.values[k] = x0 + h;
        const double fp = evaluate_batch(views, p, lights, config, false, &base.denominators).loss;
        p.values[k] = x0 - h;
        const double fm = evaluate_batch(views, p, lights, config, false, &base.denominators).loss;
        p.values[k] = x0;
        GradientSample s;
        s.index = i;
        s.analytic = g[k];
        s.numeric = (fp - fm) / (2.0 * h);
        s.relative_error = std::abs(s.analytic - s.numeric) / std::max(std::abs(s.analytic), std::abs(s.numeric));
        out.push_back(s);
    }
    return out;
}

Material patterned_material(int res, double normal_amplitude) {
    constexpr double kPi = std::numbers::pi;
    Material m = uniform_material(res, Eigen::Vector3d::Constant(0.5), 0.5);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            const double u = (x + 0.5) / res, v = (y + 0.5) / res;
            m.albedo.at(x, y, 0) = static_cast<float>(0.5 + 0.4 * std::sin(6 * kPi * u));
            m.albedo.at(x, y, 1) = static_cast<float>(0.5 + 0.4 * std::cos(4 * kPi * v));
            m.albedo.at(x, y, 2) = static_cast<float>(0.3 + 0.2 * std::sin(2 * kPi * (u + v)));
            m.roughness.at(x, y, 0) = static_cast<float>(0.35 + 0.25 * std::sin(8 * kPi * u * v));
            const Eigen::Vector3d n = Eigen::Vector3d(normal_amplitude * std::sin(10 * kPi * u),
                                                      normal_amplitude * std::cos(6 * kPi * v), 1.0)
                                          .normalized();
            for (int c = 0; c < 3; ++c) m.normal.at(x, y, c) = static_cast<float>(n[c]);
        }
    return m;
}

} // namespace mvc::oracle
