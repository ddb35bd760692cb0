#include "mvc/geometry/gbuffer.hpp"

#include "mvc/errors.hpp"

#include <cmath>
#include <optional>

namespace mvc {

double GBuffer::footprint_area(int x, int y) const {
    const SubpixelFootprint* f = pixel_footprints(x, y);
    double sum = 0.0;
    for (int i = 0; i < subpixels * subpixels; ++i) sum += f[i].area;
    return sum;
}

namespace {

struct LatticeHit {
    bool hit = false;
    int triangle = -1;
    Eigen::Vector3d position;
    Eigen::Vector2d uv;
};

LatticeHit cast(const Scene& scene, const Camera& camera, const Eigen::Vector2d& point) {
    LatticeHit out;
    if (auto h = scene.intersect(generate_ray(camera, point))) {
        out.hit = true;
        out.triangle = h->triangle;
        out.position = h->position;
        out.uv = h->uv;
    }
    return out;
}

// Intersects a ray with the supporting plane of a triangle and extends the
// triangle's UV parameterization affinely to the intersection point.
std::optional<std::pair<Eigen::Vector3d, Eigen::Vector2d>> plane_extension(const Mesh& mesh,
                                                                           int triangle,
                                                                           const Ray& ray) {
    const auto& t = mesh.triangles[static_cast<std::size_t>(triangle)];
    const Eigen::Vector3d& p0 = mesh.vertices[t[0]];
    const Eigen::Vector3d e0 = mesh.vertices[t[1]] - p0;
    const Eigen::Vector3d e1 = mesh.vertices[t[2]] - p0;
    const Eigen::Vector3d n = e0.cross(e1);
    const double denom = ray.direction.dot(n);
    if (std::abs(denom) < 1e-12 * n.norm()) return std::nullopt;
    const double dist = (p0 - ray.origin).dot(n) / denom;
    if (!(dist > 0.0)) return std::nullopt;
    const Eigen::Vector3d x = ray.origin + dist * ray.direction;
    const Eigen::Vector3d e2 = x - p0;
    const double d00 = e0.dot(e0), d01 = e0.dot(e1), d11 = e1.dot(e1);
    const double d20 = e2.dot(e0), d21 = e2.dot(e1);
    const double det = d00 * d11 - d01 * d01;
    if (!(det > 0.0)) return std::nullopt;
    const double b1 = (d11 * d20 - d01 * d21) / det;
    const double b2 = (d00 * d21 - d01 * d20) / det;
    const Eigen::Vector2d uv =
        (1.0 - b1 - b2) * mesh.uvs[t[0]] + b1 * mesh.uvs[t[1]] + b2 * mesh.uvs[t[2]];
    return std::make_pair(x, uv);
}

double triangle_area(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    const Eigen::Vector2d u = b - a, v = c - a;
    return 0.5 * std::abs(u.x() * v.y() - u.y() * v.x());
}

} // namespace

GBuffer rasterize_gbuffer(const Scene& scene, const Camera& camera, int subpixels) {
    validate(camera);
    if (subpixels < 1) throw InputError("gbuffer: subpixel grid must be >= 1");
    const int s = subpixels;
    const int W = camera.width, H = camera.height;
    GBuffer g;
    g.width = W;
    g.height = H;
    g.subpixels = s;
    g.pixels.resize(static_cast<std::size_t>(W) * H);
    g.footprints.resize(static_cast<std::size_t>(W) * H * s * s);

#pragma omp parallel for schedule(static)
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const Ray ray = generate_ray(camera, {x + 0.5, y + 0.5});
            auto& px = g.pixels[static_cast<std::size_t>(y) * W + x];
            if (auto h = scene.intersect(ray)) {
                px.covered = true;
                px.hit = *h;
                px.view_dir = -ray.direction;
            }
        }
    }

    // Corner lattice shared between neighbouring subpixels.
    const int LW = W * s + 1, LH = H * s + 1;
    std::vector<LatticeHit> lattice(static_cast<std::size_t>(LW) * LH);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < LH; ++b)
        for (int a = 0; a < LW; ++a)
            lattice[static_cast<std::size_t>(b) * LW + a] =
                cast(scene, camera, {static_cast<double>(a) / s, static_cast<double>(b) / s});

    const Mesh& mesh = scene.mesh();
#pragma omp parallel for schedule(static)
    for (int sy = 0; sy < H * s; ++sy) {
        for (int sx = 0; sx < W * s; ++sx) {
            const int x = sx / s, y = sy / s;
            if (!g.pixels[static_cast<std::size_t>(y) * W + x].covered) continue;
            auto& fp = g.footprints[(static_cast<std::size_t>(y) * W + x) * s * s +
                                    static_cast<std::size_t>(sy % s) * s + (sx % s)];
            const Ray center_ray = generate_ray(camera, {(sx + 0.5) / s, (sy + 0.5) / s});
            const auto center = scene.intersect(center_ray);
            if (!center) continue;
            fp.uv_center = center->uv;
            const int chart = scene.chart(center->triangle);
            const int corner_a[4] = {sx, sx + 1, sx + 1, sx};
            const int corner_b[4] = {sy, sy, sy + 1, sy + 1};
            bool ok = true;
            for (int k = 0; k < 4 && ok; ++k) {
                const LatticeHit& lh =
                    lattice[static_cast<std::size_t>(corner_b[k]) * LW + corner_a[k]];
                const Ray r = generate_ray(camera, {static_cast<double>(corner_a[k]) / s,
                                                    static_cast<double>(corner_b[k]) / s});
                const auto ext = plane_extension(mesh, center->triangle, r);
                const bool same_chart = lh.hit && scene.chart(lh.triangle) == chart;
                if (same_chart &&
                    (!ext || (lh.position - center->position).norm() <=
                                 4.0 * (ext->first - center->position).norm() + scene.epsilon())) {
                    fp.uv_corners[k] = lh.uv;
                } else if (ext) {
                    fp.uv_corners[k] = ext->second;
                } else {
                    ok = false;
                }
            }
            if (!ok) continue;
            fp.area = triangle_area(fp.uv_corners[0], fp.uv_corners[1], fp.uv_corners[2]) +
                      triangle_area(fp.uv_corners[0], fp.uv_corners[2], fp.uv_corners[3]);
            fp.valid = true;
        }
    }
    return g;
}

Image encode_normals(const GBuffer& gbuffer, const Camera& camera, NormalSpace space) {
    Image img(gbuffer.width, gbuffer.height, 3, 0.0f);
    const Eigen::Vector3d r = camera.right(), u = camera.true_up(), f = camera.forward();
    for (int y = 0; y < gbuffer.height; ++y) {
        for (int x = 0; x < gbuffer.width; ++x) {
            const auto& px = gbuffer.pixel(x, y);
            if (!px.covered) continue;
            const Eigen::Vector3d& n = px.hit.shading_normal;
            const Eigen::Vector3d v =
                space == NormalSpace::Camera ? Eigen::Vector3d(n.dot(r), n.dot(u), -n.dot(f)) : n;
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<float>(0.5 * (v[c] + 1.0));
        }
    }
    return img;
}

Image depth_image(const GBuffer& gbuffer) {
    Image img(gbuffer.width, gbuffer.height, 1, 0.0f);
    for (int y = 0; y < gbuffer.height; ++y)
        for (int x = 0; x < gbuffer.width; ++x)
            if (gbuffer.pixel(x, y).covered)
                img.at(x, y, 0) = static_cast<float>(gbuffer.pixel(x, y).hit.t);
    return img;
}

} // namespace mvc
