#include "mvc/invrender/invrender.hpp"

#include "mvc/errors.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace mvc {

namespace {

constexpr double kLogitClamp = 1e-7;
constexpr double kRoughMin = 0.01;
constexpr double kRoughSpan = 0.99;
constexpr double kDivergenceFloor = 1e-8;

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

double logit(double s) {
    s = std::clamp(s, kLogitClamp, 1.0 - kLogitClamp);
    return std::log(s / (1.0 - s));
}

double tonemap_value(double x) { return x / (1.0 + x); }

// Targets are stored as float32; residuals within a few ulps of the target are
// rounding noise and are treated as exact matches.
double residual(double rendered, float target) {
    const double r = rendered - static_cast<double>(target);
    const double ulp = static_cast<double>(std::nextafter(target, 2.0f) - target);
    return std::abs(r) <= 4.0 * ulp ? 0.0 : r;
}

void check_texture(const Texture2D& t, int channels, const char* name) {
    if (t.width < 1 || t.height < 1 || t.channels != channels ||
        t.values.size() != t.texels() * static_cast<std::size_t>(channels))
        throw InputError(std::string("invrender: malformed ") + name + " texture");
}

} // namespace

Image build_weight_mask(const std::vector<ShadingPoint>& points, int width, int height, int margin,
                        double cosine_power) {
    if (width < 1 || height < 1 || points.size() != static_cast<std::size_t>(width) * height)
        throw InputError("weight mask: shading points do not match the image size");
    if (margin < 0) throw InputError("weight mask: margin must be >= 0");
    if (!(cosine_power >= 0.0) || !std::isfinite(cosine_power))
        throw InputError("weight mask: cosine power must be finite and >= 0");

    // Chebyshev erosion of the coverage mask as two separable min passes.
    // Pixels outside the image count as covered.
    std::vector<std::uint8_t> cov(points.size()), tmp(points.size());
    for (std::size_t p = 0; p < points.size(); ++p) cov[p] = points[p].covered ? 1 : 0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            std::uint8_t v = 1;
            for (int dx = std::max(0, x - margin); dx <= std::min(width - 1, x + margin) && v; ++dx)
                v = cov[static_cast<std::size_t>(y) * width + dx];
            tmp[static_cast<std::size_t>(y) * width + x] = v;
        }
    Image out(width, height, 1, 0.0f);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            std::uint8_t v = 1;
            for (int dy = std::max(0, y - margin); dy <= std::min(height - 1, y + margin) && v; ++dy)
                v = tmp[static_cast<std::size_t>(dy) * width + x];
            const std::size_t p = static_cast<std::size_t>(y) * width + x;
            if (!v || !points[p].covered) continue;
            const double c = std::max(points[p].frame.normal.dot(points[p].view_dir), 0.0);
            out.data[p] = static_cast<float>(cosine_power == 0.0 ? 1.0 : std::pow(c, cosine_power));
        }
    return out;
}

LossValue masked_relative_l2(const Image& rendered_hdr, const Image& target_ldr, const Image& weights,
                             const LossConfig& config) {
    if (!rendered_hdr.same_shape(target_ldr)) throw InputError("loss: render and target shapes differ");
    if (weights.width != rendered_hdr.width || weights.height != rendered_hdr.height || weights.channels != 1)
        throw InputError("loss: weight image must be single-channel and match the render");
    if (!(config.epsilon > 0.0)) throw InputError("loss: epsilon must be positive");
    LossValue out;
    const int ch = rendered_hdr.channels;
    double num = 0.0;
    for (std::size_t p = 0; p < weights.pixel_count(); ++p) {
        const double w = weights.data[p];
        if (!(w > 0.0)) continue;
        out.weight_sum += w;
        for (int c = 0; c < ch; ++c) {
            const double r = rendered_hdr.data[p * ch + c];
            const double t = tonemap_value(config.exposure * r);
            const double res = residual(t, target_ldr.data[p * ch + c]);
            num += w * res * res / (t * t + config.epsilon);
        }
    }
    if (out.weight_sum == 0.0) {
        out.empty = true;
        return out;
    }
    out.loss = num / out.weight_sum;
    return out;
}

MaterialParameters MaterialParameters::encode(const Material& m) {
    check_texture(m.albedo, 3, "albedo");
    check_texture(m.roughness, 1, "roughness");
    check_texture(m.normal, 3, "normal");
    MaterialParameters p;
    p.albedo_width = m.albedo.width;
    p.albedo_height = m.albedo.height;
    p.roughness_width = m.roughness.width;
    p.roughness_height = m.roughness.height;
    p.normal_width = m.normal.width;
    p.normal_height = m.normal.height;
    p.values.resize(static_cast<Eigen::Index>(p.size()));
    const std::size_t ro = p.roughness_offset(), no = p.normal_offset();
    for (std::size_t i = 0; i < m.albedo.values.size(); ++i) p.values[i] = logit(m.albedo.values[i]);
    for (std::size_t i = 0; i < m.roughness.values.size(); ++i)
        p.values[ro + i] = logit((m.roughness.values[i] - kRoughMin) / kRoughSpan);
    for (std::size_t i = 0; i < m.normal.values.size(); ++i) p.values[no + i] = m.normal.values[i];
    return p;
}

Eigen::VectorXd MaterialParameters::decode_values() const {
    if (static_cast<std::size_t>(values.size()) != size()) throw InputError("material parameters: size mismatch");
    Eigen::VectorXd d(values.size());
    const std::size_t ro = roughness_offset(), no = normal_offset(), end = size();
    for (std::size_t i = 0; i < ro; ++i) d[i] = sigmoid(values[i]);
    for (std::size_t i = ro; i < no; ++i) d[i] = kRoughMin + kRoughSpan * sigmoid(values[i]);
    for (std::size_t i = no; i < end; i += 3) {
        const Eigen::Vector3d raw = values.segment<3>(static_cast<Eigen::Index>(i));
        const double len = raw.norm();
        if (!(len > 1e-12) || !std::isfinite(len))
            throw NumericalError("material parameters: degenerate normal at texel " + std::to_string((i - no) / 3));
        d.segment<3>(static_cast<Eigen::Index>(i)) = raw / len;
    }
    return d;
}

Material MaterialParameters::decode() const {
    const Eigen::VectorXd d = decode_values();
    Material m;
    m.albedo = Texture2D(albedo_width, albedo_height, 3);
    m.roughness = Texture2D(roughness_width, roughness_height, 1);
    m.normal = Texture2D(normal_width, normal_height, 3);
    const std::size_t ro = roughness_offset(), no = normal_offset();
    for (std::size_t i = 0; i < m.albedo.values.size(); ++i) m.albedo.values[i] = static_cast<float>(d[i]);
    for (std::size_t i = 0; i < m.roughness.values.size(); ++i)
        m.roughness.values[i] = std::max(static_cast<float>(d[ro + i]), static_cast<float>(kRoughMin));
    for (std::size_t i = 0; i < m.normal.values.size(); ++i) m.normal.values[i] = static_cast<float>(d[no + i]);
    return m;
}

Eigen::VectorXd MaterialParameters::latent_gradient(const Eigen::VectorXd& g) const {
    if (static_cast<std::size_t>(g.size()) != size()) throw InputError("material parameters: gradient size mismatch");
    Eigen::VectorXd out(g.size());
    const std::size_t ro = roughness_offset(), no = normal_offset(), end = size();
    for (std::size_t i = 0; i < ro; ++i) {
        const double s = sigmoid(values[i]);
        out[i] = g[i] * s * (1.0 - s);
    }
    for (std::size_t i = ro; i < no; ++i) {
        const double s = sigmoid(values[i]);
        out[i] = g[i] * kRoughSpan * s * (1.0 - s);
    }
    for (std::size_t i = no; i < end; i += 3) {
        const auto k = static_cast<Eigen::Index>(i);
        const Eigen::Vector3d raw = values.segment<3>(k);
        const double len = raw.norm();
        const Eigen::Vector3d n = raw / len;
        const Eigen::Vector3d gi = g.segment<3>(k);
        out.segment<3>(k) = (gi - n * n.dot(gi)) / len;
    }
    return out;
}

ViewTarget make_view_target(const Scene& scene, const Camera& camera, const LightSet& lights, const Image& target,
                            const LossConfig& config, const RenderOptions& options) {
    if (target.width != camera.width || target.height != camera.height || target.channels != 3)
        throw InputError("view target: image does not match the camera");
    ViewTarget v;
    v.width = camera.width;
    v.height = camera.height;
    v.points = shading_points(scene, camera, lights, options);
    v.target = target;
    v.weights = build_weight_mask(v.points, v.width, v.height, config.margin, config.cosine_power);
    return v;
}

PreparedView prepare_view(const ViewTarget& view, const MaterialParameters& layout) {
    if (view.points.size() != static_cast<std::size_t>(view.width) * view.height ||
        view.weights.pixel_count() != view.points.size() || view.weights.channels != 1 ||
        view.target.pixel_count() != view.points.size() || view.target.channels != 3)
        throw InputError("prepare view: inconsistent view data");
    if (!(view.view_weight >= 0.0) || !std::isfinite(view.view_weight))
        throw InputError("prepare view: view weight must be finite and >= 0");
    PreparedView pv;
    pv.view = &view;
    for (std::size_t p = 0; p < view.points.size(); ++p) {
        if (!(view.weights.data[p] > 0.0f) || !view.points[p].covered) continue;
        const Eigen::Vector2d& uv = view.points[p].uv;
        pv.pixels.push_back(static_cast<std::uint32_t>(p));
        pv.albedo_taps.push_back(bilinear_taps(layout.albedo_width, layout.albedo_height, uv));
        pv.roughness_taps.push_back(bilinear_taps(layout.roughness_width, layout.roughness_height, uv));
        pv.normal_taps.push_back(bilinear_taps(layout.normal_width, layout.normal_height, uv));
    }
    return pv;
}

namespace {

template <typename Scalar>
ShadingInputs<Scalar> gather(const PreparedView& pv, std::size_t k, const Eigen::VectorXd& d,
                             const MaterialParameters& layout) {
    const std::size_t ro = layout.roughness_offset(), no = layout.normal_offset();
    Eigen::Vector3d a = Eigen::Vector3d::Zero(), n = Eigen::Vector3d::Zero();
    double r = 0.0;
    for (int t = 0; t < 4; ++t) {
        const auto& at = pv.albedo_taps[k];
        const auto& rt = pv.roughness_taps[k];
        const auto& nt = pv.normal_taps[k];
        a += at.weight[t] * d.segment<3>(static_cast<Eigen::Index>(3 * std::size_t{at.texel[t]}));
        r += rt.weight[t] * d[static_cast<Eigen::Index>(ro + rt.texel[t])];
        n += nt.weight[t] * d.segment<3>(static_cast<Eigen::Index>(no + 3 * std::size_t{nt.texel[t]}));
    }
    ShadingInputs<Scalar> in;
    for (int c = 0; c < 3; ++c) {
        in.albedo[c] = Scalar(a[c]);
        in.normal_ts[c] = Scalar(n[c]);
    }
    in.roughness = Scalar(r);
    return in;
}

using Ad = Eigen::AutoDiffScalar<Eigen::Matrix<double, 7, 1>>;

} // namespace

Eigen::Vector3d shade_pixel(const PreparedView& pv, std::size_t k, const Eigen::VectorXd& decoded,
                            const MaterialParameters& layout, const LightSet& lights) {
    const ShadingPoint& sp = pv.view->points[pv.pixels[k]];
    return shade(gather<double>(pv, k, decoded, layout), sp.frame, lights, sp.view_dir, sp.visible_lights);
}

BatchEvaluation evaluate_batch(const std::vector<const PreparedView*>& views, const MaterialParameters& params,
                               const LightSet& lights, const LossConfig& config, bool gradient,
                               const FrozenDenominators* frozen) {
    if (!(config.epsilon > 0.0)) throw InputError("loss: epsilon must be positive");
    if (!(config.exposure > 0.0)) throw InputError("loss: exposure must be positive");
    if (frozen && frozen->size() != views.size()) throw InputError("loss: frozen denominators do not match views");
    const Eigen::VectorXd decoded = params.decode_values();

    BatchEvaluation out;
    out.view_losses.assign(views.size(), 0.0);
    out.denominators.resize(views.size());
    if (gradient) out.decoded_gradient = Eigen::VectorXd::Zero(decoded.size());

    double total_weight = 0.0;
    std::vector<double> view_weight_sums(views.size(), 0.0);
    for (std::size_t v = 0; v < views.size(); ++v) {
        const PreparedView& pv = *views[v];
        double s = 0.0;
        for (std::uint32_t p : pv.pixels) s += pv.view->weights.data[p];
        view_weight_sums[v] = s;
        total_weight += pv.view->view_weight * s;
    }
    if (!(total_weight > 0.0)) return out; // nothing to fit; loss 0 and zero gradient

    const std::size_t ro = params.roughness_offset(), no = params.normal_offset();
    double total = 0.0;
    for (std::size_t v = 0; v < views.size(); ++v) {
        const PreparedView& pv = *views[v];
        const ViewTarget& view = *pv.view;
        const std::size_t n = pv.pixels.size();
        if (frozen && (*frozen)[v].size() != 3 * n) throw InputError("loss: frozen denominators do not match pixels");
        std::vector<double> contrib(n, 0.0);
        std::vector<double>& dens = out.denominators[v];
        dens.assign(3 * n, 0.0);
        std::vector<Eigen::Matrix<double, 7, 1>> grads(gradient ? n : 0);
        const double scale = view.view_weight / total_weight;
        std::int64_t bad = -1;

#pragma omp parallel for schedule(dynamic, 256)
        for (std::int64_t ki = 0; ki < static_cast<std::int64_t>(n); ++ki) {
            const auto k = static_cast<std::size_t>(ki);
            const std::uint32_t p = pv.pixels[k];
            const ShadingPoint& sp = view.points[p];
            const double w = view.weights.data[p];
            Eigen::Vector3d radiance;
            Eigen::Matrix<double, 7, 3> jac;
            if (gradient) {
                ShadingInputs<Ad> in = gather<Ad>(pv, k, decoded, params);
                for (int c = 0; c < 3; ++c) {
                    in.albedo[c].derivatives() = Eigen::Matrix<double, 7, 1>::Unit(c);
                    in.normal_ts[c].derivatives() = Eigen::Matrix<double, 7, 1>::Unit(4 + c);
                }
                in.roughness.derivatives() = Eigen::Matrix<double, 7, 1>::Unit(3);
                const Vec3<Ad> r = shade(in, sp.frame, lights, sp.view_dir, sp.visible_lights);
                for (int c = 0; c < 3; ++c) {
                    radiance[c] = r[c].value();
                    // Channels that never depended on an input have empty derivatives.
                    if (r[c].derivatives().size() == 7) jac.col(c) = r[c].derivatives();
                    else jac.col(c).setZero();
                }
            } else {
                radiance = shade(gather<double>(pv, k, decoded, params), sp.frame, lights, sp.view_dir,
                                 sp.visible_lights);
            }
            Eigen::Vector3d dl_dr;
            double sum = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double x = config.exposure * radiance[c];
                const double t = tonemap_value(x);
                const double den = frozen ? (*frozen)[v][3 * k + c] : t * t + config.epsilon;
                dens[3 * k + c] = den;
                const double res = residual(t, view.target.data[3 * std::size_t{p} + c]);
                sum += w * res * res / den;
                dl_dr[c] = scale * w * 2.0 * res * config.exposure * tonemap_derivative(x) / den;
            }
            contrib[k] = sum;
            if (gradient) {
                grads[k] = jac * dl_dr;
                if (!grads[k].allFinite() || !std::isfinite(sum)) {
#pragma omp critical(mvc_bad_pixel)
                    if (bad < 0 || ki < bad) bad = ki;
                }
            } else if (!std::isfinite(sum)) {
#pragma omp critical(mvc_bad_pixel)
                if (bad < 0 || ki < bad) bad = ki;
            }
        }
        if (bad >= 0) {
            const std::uint32_t p = pv.pixels[static_cast<std::size_t>(bad)];
            std::ostringstream msg;
            msg << "non-finite loss or gradient at view " << v << " pixel (" << p % view.width << ", "
                << p / view.width << ")";
            throw NumericalError(msg.str());
        }

        double view_sum = 0.0;
        for (double c : contrib) view_sum += c;
        out.view_losses[v] = view_weight_sums[v] > 0.0 ? view_sum / view_weight_sums[v] : 0.0;
        total += view.view_weight * view_sum;

        if (!gradient) continue;
        Eigen::VectorXd& g = out.decoded_gradient;
        for (std::size_t k = 0; k < n; ++k) {
            const auto& gk = grads[k];
            const auto& at = pv.albedo_taps[k];
            const auto& rt = pv.roughness_taps[k];
            const auto& nt = pv.normal_taps[k];
            for (int t = 0; t < 4; ++t) {
                g.segment<3>(static_cast<Eigen::Index>(3 * std::size_t{at.texel[t]})) += at.weight[t] * gk.head<3>();
                g[static_cast<Eigen::Index>(ro + rt.texel[t])] += rt.weight[t] * gk[3];
                g.segment<3>(static_cast<Eigen::Index>(no + 3 * std::size_t{nt.texel[t]})) +=
                    nt.weight[t] * gk.tail<3>();
            }
        }
    }
    out.loss = total / total_weight;
    return out;
}

OptimizeResult optimize(const Material& initial, const std::vector<ViewTarget>& views, const LightSet& lights,
                        const LossConfig& loss, const OptimizerConfig& config,
                        const std::function<void(const StepRecord&)>& on_step) {
    validate(initial);
    validate(lights);
    if (views.empty()) throw InputError("optimize: no views");
    if (config.steps < 0) throw InputError("optimize: steps must be >= 0");
    if (config.batch < 1) throw InputError("optimize: batch must be >= 1");
    if (!(config.lr > 0.0) || !(config.lr_final > 0.0)) throw InputError("optimize: learning rates must be positive");
    if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) || !(config.beta2 >= 0.0 && config.beta2 < 1.0))
        throw InputError("optimize: Adam betas must be in [0, 1)");

    OptimizeResult result;
    result.params = MaterialParameters::encode(initial);
    MaterialParameters& params = result.params;
    AdamState& adam = result.adam;
    adam.m = Eigen::VectorXd::Zero(params.values.size());
    adam.v = Eigen::VectorXd::Zero(params.values.size());

    std::vector<PreparedView> prepared;
    prepared.reserve(views.size());
    for (const ViewTarget& v : views) prepared.push_back(prepare_view(v, params));

    std::mt19937_64 rng(config.seed);
    std::vector<int> order;
    std::size_t cursor = 0;
    auto next_view = [&]() {
        if (cursor == order.size()) {
            order.resize(views.size());
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        return order[cursor++];
    };

    for (double s : {config.albedo_lr_scale, config.roughness_lr_scale, config.normal_lr_scale})
        if (!(s >= 0.0) || !std::isfinite(s)) throw InputError("optimize: learning-rate scales must be finite and >= 0");
    Eigen::ArrayXd lr_scale(params.values.size());
    const auto ro = static_cast<Eigen::Index>(params.roughness_offset());
    const auto no = static_cast<Eigen::Index>(params.normal_offset());
    lr_scale.head(ro).setConstant(config.albedo_lr_scale);
    lr_scale.segment(ro, no - ro).setConstant(config.roughness_lr_scale);
    lr_scale.tail(lr_scale.size() - no).setConstant(config.normal_lr_scale);

    const int batch = std::min<int>(config.batch, static_cast<int>(views.size()));
    double initial_loss = -1.0;
    int diverged = 0;
    for (int step = 0; step < config.steps; ++step) {
        StepRecord rec;
        rec.step = step;
        std::vector<const PreparedView*> selected;
        for (int b = 0; b < batch; ++b) {
            rec.views.push_back(next_view());
            selected.push_back(&prepared[static_cast<std::size_t>(rec.views.back())]);
        }
        BatchEvaluation eval = evaluate_batch(selected, params, lights, loss, true);
        rec.loss = eval.loss;
        rec.view_losses = eval.view_losses;

        if (initial_loss < 0.0) initial_loss = eval.loss;
        // The floor keeps rounding noise around an exact fit from reading as divergence.
        diverged = eval.loss > config.divergence_factor * std::max(initial_loss, kDivergenceFloor) ? diverged + 1 : 0;
        if (diverged >= config.divergence_patience) {
            if (!config.divergence_dump.empty()) write_checkpoint(params, adam, config.divergence_dump);
            throw NumericalError("optimize: loss above " + std::to_string(config.divergence_factor) +
                                 "x its initial value for " + std::to_string(diverged) + " steps at step " +
                                 std::to_string(step));
        }

        const Eigen::VectorXd g = params.latent_gradient(eval.decoded_gradient);
        const double frac = config.steps > 1 ? static_cast<double>(step) / (config.steps - 1) : 0.0;
        const double lr = config.lr * std::pow(config.lr_final / config.lr, frac);
        ++adam.step;
        adam.m = config.beta1 * adam.m + (1.0 - config.beta1) * g;
        adam.v = config.beta2 * adam.v + (1.0 - config.beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(config.beta1, adam.step);
        const double c2 = 1.0 - std::pow(config.beta2, adam.step);
        params.values.array() -=
            lr * lr_scale * (adam.m.array() / c1) / ((adam.v.array() / c2).sqrt() + config.adam_epsilon);
        if (!params.values.allFinite()) throw NumericalError("optimize: parameters became non-finite");

        result.history.push_back(rec);
        if (on_step) on_step(rec);
    }
    result.material = params.decode();
    return result;
}

void write_loss_csv(const std::vector<StepRecord>& history, int view_count, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write " + path.string());
    f << "step,loss";
    for (int v = 0; v < view_count; ++v) f << ",view_" << v;
    f << '\n';
    f.precision(17);
    for (const StepRecord& r : history) {
        std::vector<std::string> cells(static_cast<std::size_t>(view_count));
        for (std::size_t i = 0; i < r.views.size(); ++i) {
            if (r.views[i] < 0 || r.views[i] >= view_count) throw InputError("loss csv: view index out of range");
            std::ostringstream s;
            s.precision(17);
            s << r.view_losses[i];
            cells[static_cast<std::size_t>(r.views[i])] = s.str();
        }
        f << r.step << ',' << r.loss;
        for (const auto& c : cells) f << ',' << c;
        f << '\n';
    }
}

namespace {

constexpr char kCheckpointMagic[4] = {'M', 'V', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::size_t kCheckpointHeader = 4 + 4 + 6 * 4 + 4 + 8;

template <typename T>
void put(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(const std::vector<char>& b, std::size_t& off) {
    if (off + sizeof(T) > b.size()) throw ParseError("checkpoint: truncated", b.size());
    T v;
    std::memcpy(&v, b.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

} // namespace

void write_checkpoint(const MaterialParameters& params, const AdamState& adam, const std::filesystem::path& path) {
    const std::size_t n = params.size();
    if (static_cast<std::size_t>(params.values.size()) != n || static_cast<std::size_t>(adam.m.size()) != n ||
        static_cast<std::size_t>(adam.v.size()) != n)
        throw InputError("checkpoint: inconsistent state sizes");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path.string());
    f.write(kCheckpointMagic, 4);
    put<std::uint32_t>(f, kCheckpointVersion);
    for (int d : {params.albedo_width, params.albedo_height, params.roughness_width, params.roughness_height,
                  params.normal_width, params.normal_height})
        put<std::uint32_t>(f, static_cast<std::uint32_t>(d));
    put<std::int32_t>(f, adam.step);
    put<std::uint64_t>(f, n);
    for (const Eigen::VectorXd* vec : {&params.values, &adam.m, &adam.v})
        f.write(reinterpret_cast<const char*>(vec->data()), static_cast<std::streamsize>(n * sizeof(double)));
}

std::pair<MaterialParameters, AdamState> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string());
    const std::vector<char> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (b.size() < kCheckpointHeader) throw ParseError("checkpoint: truncated header", b.size());
    if (!std::equal(kCheckpointMagic, kCheckpointMagic + 4, b.begin())) throw ParseError("checkpoint: bad magic", 0);
    std::size_t off = 4;
    if (get<std::uint32_t>(b, off) != kCheckpointVersion) throw ParseError("checkpoint: unsupported version", 4);
    MaterialParameters p;
    int* dims[] = {&p.albedo_width, &p.albedo_height, &p.roughness_width, &p.roughness_height, &p.normal_width,
                   &p.normal_height};
    for (int* d : dims) {
        const std::size_t at = off;
        const auto v = get<std::uint32_t>(b, off);
        if (v == 0 || v > 65536) throw ParseError("checkpoint: invalid texture dimension", at);
        *d = static_cast<int>(v);
    }
    AdamState a;
    a.step = get<std::int32_t>(b, off);
    const std::size_t count_at = off;
    const auto n = get<std::uint64_t>(b, off);
    if (n != p.size()) throw ParseError("checkpoint: parameter count does not match dimensions", count_at);
    if (b.size() != kCheckpointHeader + 3 * n * sizeof(double))
        throw ParseError("checkpoint: payload size does not match header", std::min(b.size(), kCheckpointHeader));
    for (Eigen::VectorXd* vec : {&p.values, &a.m, &a.v}) {
        vec->resize(static_cast<Eigen::Index>(n));
        std::memcpy(vec->data(), b.data() + off, n * sizeof(double));
        off += n * sizeof(double);
    }
    return {std::move(p), std::move(a)};
}

double psnr(double mse, double peak) {
    if (!(mse >= 0.0)) throw InputError("psnr: mse must be >= 0");
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

} // namespace mvc
