#include "mvc/noise/noisegen.hpp"

#include "mvc/errors.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mvc {

NoiseTexture sample_noise_texture(std::uint64_t seed, int resolution) {
    if (resolution < 64 || resolution > 8192)
        throw InputError("noise texture resolution must be in [64, 8192]");
    NoiseTexture tex;
    tex.resolution = resolution;
    tex.seed = seed;
    const std::uint32_t n = static_cast<std::uint32_t>(resolution) * static_cast<std::uint32_t>(resolution);
    tex.values.resize(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t pair = 0; pair < static_cast<std::int64_t>(n / 2); ++pair) {
        const auto [z0, z1] =
            normal_pair(seed, static_cast<std::uint32_t>(pair), 0u, 0u, NoiseStream::Texture);
        tex.values[2 * pair] = z0;
        tex.values[2 * pair + 1] = z1;
    }
    return tex;
}

std::uint32_t nearest_texel(const Eigen::Vector2d& uv, int resolution) {
    const int x = std::clamp(static_cast<int>(std::floor(uv.x() * resolution)), 0, resolution - 1);
    const int y = std::clamp(static_cast<int>(std::floor(uv.y() * resolution)), 0, resolution - 1);
    return static_cast<std::uint32_t>(y) * static_cast<std::uint32_t>(resolution) +
           static_cast<std::uint32_t>(x);
}

double PixelFootprint::total_area() const {
    double s = 0.0;
    for (double a : areas) s += a;
    return s;
}

double PixelFootprint::covariance(std::size_t i) const {
    const double a = areas[i];
    if (!(a > 0.0)) return 0.0;
    return std::max(texel_area / a - 1.0, 0.0);
}

bool PixelFootprint::degenerate() const {
    return std::none_of(areas.begin(), areas.end(), [](double a) { return a > 0.0; });
}

std::optional<double> normalization_factor(const PixelFootprint& footprint) {
    double sum = 0.0;
    for (std::size_t i = 0; i < footprint.areas.size(); ++i) {
        const double a = footprint.areas[i];
        if (!(a > 0.0)) continue;
        sum += a * a * (1.0 + footprint.covariance(i));
    }
    if (!(sum > 0.0)) return std::nullopt;
    return std::sqrt(sum);
}

double safeguard_alpha(double total_area, double texel_area) {
    const double t = std::clamp((total_area - texel_area) / (3.0 * texel_area), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

double blend_safeguard(double projected, double total_area, double white, double texel_area) {
    const double a = safeguard_alpha(total_area, texel_area);
    return std::sqrt(a) * projected + std::sqrt(1.0 - a) * white;
}

ViewFootprints prepare_view_footprints(const GBuffer& gbuffer, int texture_resolution) {
    if (texture_resolution < 64 || texture_resolution > 8192)
        throw InputError("noise texture resolution must be in [64, 8192]");
    ViewFootprints v;
    v.width = gbuffer.width;
    v.height = gbuffer.height;
    v.texture_resolution = texture_resolution;
    const std::size_t n = gbuffer.pixels.size();
    const int ns = gbuffer.subpixels * gbuffer.subpixels;
    const double texel_area = 1.0 / (static_cast<double>(texture_resolution) * texture_resolution);
    v.covered.assign(n, 0);
    v.offsets.assign(n + 1, 0);
    v.factors.assign(n, 0.0);
    v.alphas.assign(n, 0.0);
    PixelFootprint fp;
    fp.texel_area = texel_area;
    for (std::size_t p = 0; p < n; ++p) {
        v.offsets[p] = static_cast<std::uint32_t>(v.texels.size());
        if (!gbuffer.pixels[p].covered) continue;
        v.covered[p] = 1;
        fp.areas.clear();
        const SubpixelFootprint* sub = gbuffer.footprints.data() + p * static_cast<std::size_t>(ns);
        for (int i = 0; i < ns; ++i) {
            const double area = sub[i].valid ? sub[i].area : 0.0;
            fp.areas.push_back(area);
            if (area > 0.0) {
                v.texels.push_back(nearest_texel(sub[i].uv_center, texture_resolution));
                v.areas.push_back(area);
            }
        }
        if (auto f = normalization_factor(fp)) {
            v.factors[p] = *f;
            v.alphas[p] = safeguard_alpha(fp.total_area(), texel_area);
        }
    }
    v.offsets[n] = static_cast<std::uint32_t>(v.texels.size());
    return v;
}

NoiseImage generate_view_noise(const ViewFootprints& footprints,
                               const std::vector<NoiseTexture>& channel_textures,
                               std::uint64_t seed, int view_index) {
    NoiseImage img;
    img.width = footprints.width;
    img.height = footprints.height;
    img.channels = static_cast<int>(channel_textures.size());
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    img.data.resize(n * channel_textures.size());
    for (std::size_t c = 0; c < channel_textures.size(); ++c) {
        if (channel_textures[c].resolution != footprints.texture_resolution)
            throw InputError("noise texture resolution does not match prepared footprints");
#pragma omp parallel for schedule(static)
        for (std::int64_t p = 0; p < static_cast<std::int64_t>(n); ++p) {
            const double w = white_noise(seed, static_cast<std::uint32_t>(view_index),
                                         static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(c));
            img.data[c * n + static_cast<std::size_t>(p)] = static_cast<float>(
                view_noise_value(channel_textures[c], footprints, static_cast<std::size_t>(p), w));
        }
    }
    return img;
}

NoiseImage generate_view_noise(const Scene& scene, const Camera& latent_camera,
                               const NoiseSettings& settings, int view_index) {
    if (settings.channels < 1) throw InputError("noise: channel count must be >= 1");
    const GBuffer g = rasterize_gbuffer(scene, latent_camera, settings.subpixels);
    const ViewFootprints fp = prepare_view_footprints(g, settings.texture_resolution);
    std::vector<NoiseTexture> textures;
    for (int c = 0; c < settings.channels; ++c)
        textures.push_back(
            sample_noise_texture(channel_seed(settings.seed, c), settings.texture_resolution));
    return generate_view_noise(fp, textures, settings.seed, view_index);
}

namespace {

constexpr char kMvcnMagic[4] = {'M', 'V', 'C', 'N'};
constexpr std::size_t kMvcnHeader = 16;

void put_u32(std::vector<char>& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.insert(out.end(), b, b + 4);
}

std::uint32_t get_u32(const std::vector<char>& in, std::size_t offset) {
    std::uint32_t v;
    std::memcpy(&v, in.data() + offset, 4);
    return v;
}

} // namespace

std::vector<char> encode_mvcn(const NoiseImage& image) {
    std::vector<char> out(kMvcnMagic, kMvcnMagic + 4);
    put_u32(out, static_cast<std::uint32_t>(image.width));
    put_u32(out, static_cast<std::uint32_t>(image.height));
    put_u32(out, static_cast<std::uint32_t>(image.channels));
    const auto* bytes = reinterpret_cast<const char*>(image.data.data());
    out.insert(out.end(), bytes, bytes + image.data.size() * sizeof(float));
    return out;
}

NoiseImage decode_mvcn(const std::vector<char>& bytes) {
    if (bytes.size() < kMvcnHeader) throw ParseError("MVCN: truncated header", bytes.size());
    if (!std::equal(kMvcnMagic, kMvcnMagic + 4, bytes.begin())) throw ParseError("MVCN: bad magic", 0);
    NoiseImage img;
    img.width = static_cast<int>(get_u32(bytes, 4));
    img.height = static_cast<int>(get_u32(bytes, 8));
    img.channels = static_cast<int>(get_u32(bytes, 12));
    if (img.width <= 0 || img.height <= 0 || img.channels <= 0)
        throw ParseError("MVCN: invalid dimensions", 4);
    const std::size_t count =
        static_cast<std::size_t>(img.width) * img.height * static_cast<std::size_t>(img.channels);
    if (bytes.size() != kMvcnHeader + count * sizeof(float))
        throw ParseError("MVCN: payload size does not match header",
                         std::min(bytes.size(), kMvcnHeader + count * sizeof(float)));
    img.data.resize(count);
    std::memcpy(img.data.data(), bytes.data() + kMvcnHeader, count * sizeof(float));
    return img;
}

void write_mvcn(const NoiseImage& image, const std::filesystem::path& path) {
    const auto bytes = encode_mvcn(image);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

NoiseImage read_mvcn(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_mvcn(bytes);
}

} // namespace mvc
