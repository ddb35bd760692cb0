#include "mvc/render/render.hpp"

#include "mvc/errors.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace mvc {

Texture2D::Texture2D(int w, int h, int c, float fill)
    : width(w), height(h), channels(c), values(static_cast<std::size_t>(w) * h * c, fill) {}

BilinearTaps bilinear_taps(int width, int height, const Eigen::Vector2d& uv) {
    const double fx = std::clamp(uv.x() * width - 0.5, 0.0, static_cast<double>(width - 1));
    const double fy = std::clamp(uv.y() * height - 0.5, 0.0, static_cast<double>(height - 1));
    const int x0 = std::min(static_cast<int>(fx), width - 1), y0 = std::min(static_cast<int>(fy), height - 1);
    const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
    const double tx = fx - x0, ty = fy - y0;
    auto id = [width](int x, int y) { return static_cast<std::uint32_t>(y) * static_cast<std::uint32_t>(width) + x; };
    return {{id(x0, y0), id(x1, y0), id(x0, y1), id(x1, y1)},
            {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty}};
}

void validate(const Material& m) {
    auto shape = [](const Texture2D& t, int channels, const char* name) {
        if (t.width < 1 || t.height < 1 || t.channels != channels ||
            t.values.size() != t.texels() * static_cast<std::size_t>(channels))
            throw InputError(std::string("material: malformed ") + name + " texture");
        for (float v : t.values)
            if (!std::isfinite(v)) throw InputError(std::string("material: non-finite ") + name + " texel");
    };
    shape(m.albedo, 3, "albedo");
    shape(m.roughness, 1, "roughness");
    shape(m.normal, 3, "normal");
    for (float v : m.albedo.values)
        if (v < 0.0f || v > 1.0f) throw InputError("material: albedo outside [0, 1]");
    for (float v : m.roughness.values)
        if (v < 0.01f || v > 1.0f) throw InputError("material: roughness outside [0.01, 1]");
    for (std::size_t k = 0; k < m.normal.texels(); ++k) {
        const Eigen::Vector3d n(m.normal.values[3 * k], m.normal.values[3 * k + 1], m.normal.values[3 * k + 2]);
        if (std::abs(n.norm() - 1.0) > 1e-3) throw InputError("material: normal texel is not unit length");
    }
}

Material uniform_material(int resolution, const Eigen::Vector3d& albedo, double roughness) {
    Material m;
    m.albedo = Texture2D(resolution, resolution, 3);
    m.roughness = Texture2D(resolution, resolution, 1, static_cast<float>(roughness));
    m.normal = Texture2D(resolution, resolution, 3);
    for (std::size_t k = 0; k < m.albedo.texels(); ++k)
        for (int c = 0; c < 3; ++c) {
            m.albedo.values[3 * k + c] = static_cast<float>(albedo[c]);
            m.normal.values[3 * k + c] = c == 2 ? 1.0f : 0.0f;
        }
    return m;
}

void validate(const LightSet& lights) {
    if (lights.directional.size() > 64) throw InputError("lights: at most 64 directional lights");
    for (const auto& l : lights.directional) {
        if (!l.direction.allFinite() || std::abs(l.direction.norm() - 1.0) > 1e-9)
            throw InputError("lights: direction must be a unit vector");
        if (!l.radiance.allFinite() || (l.radiance.array() < 0.0).any())
            throw InputError("lights: radiance must be finite and non-negative");
    }
    if (!lights.environment.allFinite() || (lights.environment.array() < 0.0).any())
        throw InputError("lights: environment radiance must be finite and non-negative");
}

SurfaceFrame surface_frame(const Scene& scene, const HitRecord& hit) {
    SurfaceFrame f;
    f.normal = hit.shading_normal.normalized();
    const TangentFrame& tf = scene.tangent_frame(hit.triangle);
    Eigen::Vector3d t = tf.tangent - f.normal * f.normal.dot(tf.tangent);
    if (t.norm() < 1e-9) {
        // Tangent parallel to the normal: any perpendicular direction.
        t = std::abs(f.normal.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
        t -= f.normal * f.normal.dot(t);
    }
    f.tangent = t.normalized();
    f.bitangent = f.normal.cross(f.tangent);
    if (f.bitangent.dot(tf.bitangent) < 0.0) f.bitangent = -f.bitangent;
    return f;
}

std::vector<ShadingPoint> shading_points(const Scene& scene, const Camera& camera, const LightSet& lights,
                                         const RenderOptions& options) {
    validate(camera);
    validate(lights);
    const std::size_t n = static_cast<std::size_t>(camera.width) * camera.height;
    std::vector<ShadingPoint> points(n);
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(n); ++p) {
        const int x = static_cast<int>(p % camera.width), y = static_cast<int>(p / camera.width);
        const Ray ray = generate_ray(camera, {x + 0.5, y + 0.5});
        const auto hit = scene.intersect(ray);
        if (!hit) continue;
        ShadingPoint& sp = points[static_cast<std::size_t>(p)];
        sp.covered = true;
        sp.uv = hit->uv;
        sp.frame = surface_frame(scene, *hit);
        sp.view_dir = -ray.direction;
        sp.position = hit->position;
        if (options.shadows) {
            sp.visible_lights = 0;
            for (std::size_t k = 0; k < lights.directional.size(); ++k) {
                const Ray shadow{hit->position, lights.directional[k].direction};
                if (!scene.bvh().occluded(shadow, scene.epsilon(), std::numeric_limits<double>::infinity()))
                    sp.visible_lights |= 1ull << k;
            }
        }
    }
    return points;
}

HdrImage render(const std::vector<ShadingPoint>& points, int width, int height, const Material& material,
                const LightSet& lights, const RenderOptions& options) {
    if (points.size() != static_cast<std::size_t>(width) * height)
        throw InputError("render: shading points do not match the image size");
    HdrImage out;
    out.rgb = Image(width, height, 3);
    out.mask.assign(points.size(), 0);
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(points.size()); ++p) {
        const ShadingPoint& sp = points[static_cast<std::size_t>(p)];
        Eigen::Vector3d c = options.background;
        if (sp.covered) {
            out.mask[static_cast<std::size_t>(p)] = 1;
            c = shade(fetch_inputs(material, sp.uv), sp.frame, lights, sp.view_dir, sp.visible_lights);
        }
        for (int ch = 0; ch < 3; ++ch) out.rgb.data[3 * static_cast<std::size_t>(p) + ch] = static_cast<float>(c[ch]);
    }
    return out;
}

HdrImage render(const Scene& scene, const Camera& camera, const Material& material, const LightSet& lights,
                const RenderOptions& options) {
    validate(material);
    return render(shading_points(scene, camera, lights, options), camera.width, camera.height, material, lights,
                  options);
}

double tonemap(double x) {
    if (!(x >= 0.0)) throw InputError("tonemap: negative or NaN radiance");
    return x / (1.0 + x);
}

double tonemap_derivative(double x) { return 1.0 / ((1.0 + x) * (1.0 + x)); }

Image tonemap(const Image& hdr, double exposure) {
    if (!(exposure > 0.0)) throw InputError("tonemap: exposure must be positive");
    Image out = hdr;
    for (float& v : out.data) v = static_cast<float>(tonemap(exposure * static_cast<double>(v)));
    return out;
}

Image assemble_grid(const std::vector<Image>& images, int rows, int cols, float background) {
    if (images.empty()) throw InputError("grid: no images");
    if (rows < 1 || cols < 1 || static_cast<std::size_t>(rows) * cols < images.size())
        throw InputError("grid: layout too small for the view count");
    const int w = images[0].width, h = images[0].height, ch = images[0].channels;
    for (const Image& img : images)
        if (img.width != w || img.height != h || img.channels != ch) throw InputError("grid: image sizes differ");
    Image grid(w * cols, h * rows, ch, background);
    for (std::size_t v = 0; v < images.size(); ++v) {
        const int ox = static_cast<int>(v % cols) * w, oy = static_cast<int>(v / cols) * h;
        for (int y = 0; y < h; ++y)
            std::copy_n(images[v].data.begin() + static_cast<std::ptrdiff_t>(y) * w * ch, w * ch,
                        grid.data.begin() + (static_cast<std::ptrdiff_t>(oy + y) * grid.width + ox) * ch);
    }
    return grid;
}

std::vector<Image> split_grid(const Image& grid, int rows, int cols, int count) {
    if (rows < 1 || cols < 1 || count < 1 || count > rows * cols) throw InputError("grid: invalid layout");
    if (grid.width % cols != 0 || grid.height % rows != 0)
        throw InputError("grid: image size is not divisible by the layout");
    const int w = grid.width / cols, h = grid.height / rows, ch = grid.channels;
    std::vector<Image> out;
    for (int v = 0; v < count; ++v) {
        Image img(w, h, ch);
        const int ox = (v % cols) * w, oy = (v / cols) * h;
        for (int y = 0; y < h; ++y)
            std::copy_n(grid.data.begin() + (static_cast<std::ptrdiff_t>(oy + y) * grid.width + ox) * ch, w * ch,
                        img.data.begin() + static_cast<std::ptrdiff_t>(y) * w * ch);
        out.push_back(std::move(img));
    }
    return out;
}

void write_grid_sidecar(const GridLayout& layout, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write " + path.string());
    f << "rows=" << layout.rows << "\ncols=" << layout.cols << "\nviews=" << layout.views
      << "\nview_width=" << layout.view_width << "\nview_height=" << layout.view_height << "\n";
}

GridLayout read_grid_sidecar(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open " + path.string());
    std::map<std::string, int> kv;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InputError("grid sidecar: malformed line '" + line + "'");
        try {
            kv[line.substr(0, eq)] = std::stoi(line.substr(eq + 1));
        } catch (const std::exception&) {
            throw InputError("grid sidecar: bad value in '" + line + "'");
        }
    }
    GridLayout g;
    for (auto [key, field] : {std::pair{"rows", &g.rows}, {"cols", &g.cols}, {"views", &g.views},
                              {"view_width", &g.view_width}, {"view_height", &g.view_height}}) {
        const auto it = kv.find(key);
        if (it == kv.end()) throw InputError(std::string("grid sidecar: missing ") + key);
        *field = it->second;
    }
    if (g.rows < 1 || g.cols < 1 || g.views < 1 || g.views > g.rows * g.cols)
        throw InputError("grid sidecar: inconsistent layout");
    return g;
}

GridLayout default_grid_layout(int views, int width, int height) {
    if (views < 1) throw InputError("grid: need at least one view");
    int cols = 1;
    while (cols * cols < views) ++cols;
    const int rows = (views + cols - 1) / cols;
    return {rows, cols, views, width, height};
}

Image texture_image(const Texture2D& t) {
    Image img(t.width, t.height, t.channels);
    img.data = t.values;
    return img;
}

Texture2D image_texture(const Image& img) {
    Texture2D t(img.width, img.height, img.channels);
    t.values = img.data;
    return t;
}

void write_texture_pfm(const Texture2D& t, const std::filesystem::path& path) { write_pfm(texture_image(t), path); }

Texture2D read_texture_pfm(const std::filesystem::path& path) { return image_texture(read_pfm(path)); }

} // namespace mvc
