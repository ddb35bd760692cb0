#include "noise_oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mvc::oracle {

LinearForm pixel_linear_form(const GBuffer& g, int x, int y, int texture_resolution) {
    LinearForm out;
    if (!g.pixel(x, y).covered) {
        out.white_weight = 1.0;
        return out;
    }
    const double texel_area = 1.0 / (static_cast<double>(texture_resolution) * texture_resolution);
    const int n = g.subpixels * g.subpixels;
    const SubpixelFootprint* sub = g.pixel_footprints(x, y);
    double total = 0.0, norm2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double a = sub[i].valid ? sub[i].area : 0.0;
        if (a <= 0.0) continue;
        total += a;
        norm2 += a * a * std::max(texel_area / a, 1.0);
        const long tx = std::clamp(static_cast<long>(std::floor(sub[i].uv_center.x() * texture_resolution)),
                                   0L, static_cast<long>(texture_resolution) - 1);
        const long ty = std::clamp(static_cast<long>(std::floor(sub[i].uv_center.y() * texture_resolution)),
                                   0L, static_cast<long>(texture_resolution) - 1);
        out.texel_weights[static_cast<std::uint32_t>(ty * texture_resolution + tx)] += a;
    }
    if (norm2 <= 0.0) {
        out.texel_weights.clear();
        out.white_weight = 1.0;
        return out;
    }
    double t = std::clamp((total - texel_area) / (3.0 * texel_area), 0.0, 1.0);
    const double alpha = t * t * (3.0 - 2.0 * t);
    const double scale = std::sqrt(alpha) / std::sqrt(norm2);
    for (auto& [k, w] : out.texel_weights) w *= scale;
    out.white_weight = std::sqrt(1.0 - alpha);
    return out;
}

double exact_variance(const LinearForm& a) {
    double v = a.white_weight * a.white_weight;
    for (const auto& [k, w] : a.texel_weights) v += w * w;
    return v;
}

double exact_cross_covariance(const LinearForm& a, const LinearForm& b) {
    double c = 0.0;
    for (const auto& [k, w] : a.texel_weights) {
        auto it = b.texel_weights.find(k);
        if (it != b.texel_weights.end()) c += w * it->second;
    }
    return c;
}

double exact_same_view_covariance(const LinearForm& a, const LinearForm& b) {
    return exact_cross_covariance(a, b);
}

SweepResult sweep_seeds(const std::vector<ViewFootprints>& views, const std::vector<PixelRef>& pixels,
                        const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                        std::uint64_t seed0, int seeds) {
    // Compact the texels the pixels touch into one array of Philox blocks so each
    // seed draws every block once and pixels read it with dense indices.
    std::vector<std::uint32_t> blocks;
    for (const auto& ref : pixels) {
        const ViewFootprints& v = views[static_cast<std::size_t>(ref.view)];
        if (!v.covered[ref.pixel]) continue;
        for (std::uint32_t i = v.offsets[ref.pixel]; i < v.offsets[ref.pixel + 1]; ++i)
            blocks.push_back(v.texels[i] >> 1);
    }
    std::sort(blocks.begin(), blocks.end());
    blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());

    struct Term {
        std::uint32_t slot;
        double weight;
    };
    struct Pixel {
        std::vector<Term> terms; // area / factor * sqrt(alpha)
        double white = 0.0;      // sqrt(1 - alpha), or 1 for white-only pixels
    };
    std::vector<Pixel> forms(pixels.size());
    for (std::size_t k = 0; k < pixels.size(); ++k) {
        const auto& ref = pixels[k];
        const ViewFootprints& v = views[static_cast<std::size_t>(ref.view)];
        if (!v.covered[ref.pixel] || v.factors[ref.pixel] == 0.0) {
            forms[k].white = 1.0;
            continue;
        }
        const double a = v.alphas[ref.pixel];
        for (std::uint32_t i = v.offsets[ref.pixel]; i < v.offsets[ref.pixel + 1]; ++i) {
            const std::uint32_t t = v.texels[i];
            const auto block = std::lower_bound(blocks.begin(), blocks.end(), t >> 1) - blocks.begin();
            forms[k].terms.push_back({static_cast<std::uint32_t>(2 * block + (t & 1u)),
                                      std::sqrt(a) * v.areas[i] / v.factors[ref.pixel]});
        }
        forms[k].white = std::sqrt(1.0 - a);
    }

    std::vector<double> sum(pixels.size(), 0.0), sum2(pixels.size(), 0.0), prod(pairs.size(), 0.0);
    std::vector<double> value(pixels.size());
    std::vector<float> field(2 * blocks.size());
    for (int s = 0; s < seeds; ++s) {
        const std::uint64_t seed = seed0 + static_cast<std::uint64_t>(s);
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const auto [z0, z1] = normal_pair(seed, blocks[b], 0u, 0u, NoiseStream::Texture);
            field[2 * b] = z0;
            field[2 * b + 1] = z1;
        }
        for (std::size_t i = 0; i < pixels.size(); ++i) {
            const Pixel& f = forms[i];
            double x = 0.0;
            for (const Term& t : f.terms) x += static_cast<double>(field[t.slot]) * t.weight;
            if (f.white > 0.0)
                x += f.white * white_noise(seed, static_cast<std::uint32_t>(pixels[i].view), pixels[i].pixel, 0u);
            value[i] = x;
            sum[i] += x;
            sum2[i] += x * x;
        }
        for (std::size_t k = 0; k < pairs.size(); ++k)
            prod[k] += value[pairs[k].first] * value[pairs[k].second];
    }
    SweepResult r;
    r.seeds = seeds;
    r.mean.resize(pixels.size());
    r.variance.resize(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        r.mean[i] = sum[i] / seeds;
        r.variance[i] = sum2[i] / seeds - r.mean[i] * r.mean[i];
    }
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto [a, b] = pairs[k];
        const double cov = prod[k] / seeds - r.mean[a] * r.mean[b];
        r.correlation.push_back(cov / std::sqrt(r.variance[a] * r.variance[b]));
    }
    return r;
}

namespace {

// Cells of a uniform UV grid whose centers fall inside a convex-or-not quad,
// tested as two triangles (the same split the footprint area uses).
void rasterize_quad(const SubpixelFootprint& f, int n, std::set<std::pair<long, long>>& cells) {
    auto inside = [](const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                     const Eigen::Vector2d& c) {
        auto edge = [](const Eigen::Vector2d& u, const Eigen::Vector2d& v, const Eigen::Vector2d& q) {
            return (v.x() - u.x()) * (q.y() - u.y()) - (v.y() - u.y()) * (q.x() - u.x());
        };
        const double e0 = edge(a, b, p), e1 = edge(b, c, p), e2 = edge(c, a, p);
        return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    };
    const auto& q = f.uv_corners;
    Eigen::Vector2d lo = q[0], hi = q[0];
    for (const auto& c : q) {
        lo = lo.cwiseMin(c);
        hi = hi.cwiseMax(c);
    }
    for (long y = static_cast<long>(std::floor(lo.y() * n)); y <= static_cast<long>(std::ceil(hi.y() * n)); ++y)
        for (long x = static_cast<long>(std::floor(lo.x() * n)); x <= static_cast<long>(std::ceil(hi.x() * n)); ++x) {
            const Eigen::Vector2d p((x + 0.5) / n, (y + 0.5) / n);
            if (inside(p, q[0], q[1], q[2]) || inside(p, q[0], q[2], q[3])) cells.insert({x, y});
        }
}

std::set<std::pair<long, long>> pixel_cells(const GBuffer& g, int x, int y, int n) {
    std::set<std::pair<long, long>> cells;
    if (!g.pixel(x, y).covered) return cells;
    const SubpixelFootprint* sub = g.pixel_footprints(x, y);
    for (int i = 0; i < g.subpixels * g.subpixels; ++i)
        if (sub[i].valid && sub[i].area > 0.0) rasterize_quad(sub[i], n, cells);
    return cells;
}

} // namespace

double footprint_overlap(const GBuffer& ga, int xa, int ya, const GBuffer& gb, int xb, int yb,
                         int samples_per_unit) {
    const auto a = pixel_cells(ga, xa, ya, samples_per_unit);
    const auto b = pixel_cells(gb, xb, yb, samples_per_unit);
    if (a.empty() || b.empty()) return 0.0;
    std::size_t common = 0;
    for (const auto& c : a) common += b.count(c);
    return static_cast<double>(common) / static_cast<double>(std::max(a.size(), b.size()));
}

} // namespace mvc::oracle
