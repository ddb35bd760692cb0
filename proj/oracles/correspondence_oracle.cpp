#include "correspondence_oracle.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvc::oracle {

Eigen::Matrix<double, 3, 4> projection_matrix(const Camera& camera) {
    const Eigen::Vector3d f = (camera.target - camera.origin).normalized();
    const Eigen::Vector3d r = f.cross(camera.up).normalized();
    const Eigen::Vector3d u = r.cross(f);
    const double t = std::tan(0.5 * camera.fov_y);
    const double w = camera.width, h = camera.height;
    // Camera coordinates (r, u, f); pixel x = W/2 (1 + X / (Z t aspect)), y = H/2 (1 - Y / (Z t)).
    Eigen::Matrix3d k;
    k << w / (2.0 * t * (w / h)), 0.0, w / 2.0,
         0.0, -h / (2.0 * t), h / 2.0,
         0.0, 0.0, 1.0;
    Eigen::Matrix<double, 3, 4> rt;
    rt.block<1, 3>(0, 0) = r.transpose();
    rt.block<1, 3>(1, 0) = u.transpose();
    rt.block<1, 3>(2, 0) = f.transpose();
    rt.col(3) = -(rt.block<3, 3>(0, 0) * camera.origin);
    return k * rt;
}

namespace {

Ray pixel_ray(const Camera& camera, const Eigen::Vector2d& pixel) {
    // Invert the projection matrix on the plane Z = 1 in camera coordinates.
    const Eigen::Matrix<double, 3, 4> p = projection_matrix(camera);
    const Eigen::Matrix3d m = p.block<3, 3>(0, 0);
    const Eigen::Vector3d dir = m.inverse() * Eigen::Vector3d(pixel.x(), pixel.y(), 1.0);
    return {camera.origin, dir.normalized()};
}

} // namespace

bool depth_test_visible(const Scene& scene, const Eigen::Vector3d& p, const Camera& camera) {
    const Eigen::Vector4d ph(p.x(), p.y(), p.z(), 1.0);
    const Eigen::Vector3d s = projection_matrix(camera) * ph;
    if (!(s.z() > 0.0)) return false;
    const double px = s.x() / s.z(), py = s.y() / s.z();
    if (!(px >= 0.0 && px < camera.width && py >= 0.0 && py < camera.height)) return false;
    const Eigen::Vector3d d = p - camera.origin;
    const double len = d.norm();
    if (len <= 2.0 * scene.epsilon()) return true;
    const auto first = intersect_brute_force(scene.mesh(), {camera.origin, d / len}, scene.epsilon(),
                                             std::numeric_limits<double>::infinity());
    return !first || first->t >= len - scene.epsilon();
}

ScaleCorrespondences dense_correspondences(const Scene& scene, const std::vector<Camera>& cameras,
                                           const LatentGrid& grid, int scale, int side, bool same_view_pairs) {
    ScaleCorrespondences out;
    out.scale = scale;
    out.n = grid.size(scale);
    const int lw = grid.latent_width(scale), lh = grid.latent_height(scale);
    const double f = LatentGrid::factor(scale);
    const double half = 0.5 * side;

    // Surface point seen by every latent pixel of every view.
    struct Sample {
        bool hit = false;
        Eigen::Vector3d p;
    };
    std::vector<std::vector<Sample>> seen(static_cast<std::size_t>(grid.views()));
    for (int v = 0; v < grid.views(); ++v) {
        auto& img = seen[static_cast<std::size_t>(v)];
        img.resize(static_cast<std::size_t>(lw) * lh);
        for (int y = 0; y < lh; ++y)
            for (int x = 0; x < lw; ++x) {
                const Ray ray = pixel_ray(cameras[static_cast<std::size_t>(v)], {(x + 0.5) * f, (y + 0.5) * f});
                const auto h = intersect_brute_force(scene.mesh(), ray, scene.epsilon(),
                                                     std::numeric_limits<double>::infinity());
                if (h) img[static_cast<std::size_t>(y) * lw + x] = {true, h->position};
            }
    }

    for (int vj = 0; vj < grid.views(); ++vj)
        for (int yj = 0; yj < lh; ++yj)
            for (int xj = 0; xj < lw; ++xj) {
                const Sample& s = seen[static_cast<std::size_t>(vj)][static_cast<std::size_t>(yj) * lw + xj];
                if (!s.hit) continue;
                const std::uint32_t j = grid.index({vj, xj, yj}, scale);
                for (int vi = 0; vi < grid.views(); ++vi) {
                    if (vi == vj && !same_view_pairs) continue;
                    const Camera& cam = cameras[static_cast<std::size_t>(vi)];
                    if (!depth_test_visible(scene, s.p, cam)) continue;
                    const Eigen::Vector3d h = projection_matrix(cam) * s.p.homogeneous();
                    const double qx = h.x() / h.z() / f, qy = h.y() / h.z() / f;
                    for (int yi = 0; yi < lh; ++yi)
                        for (int xi = 0; xi < lw; ++xi) {
                            const double cx = xi + 0.5, cy = yi + 0.5;
                            if (qx >= cx - half && qx < cx + half && qy >= cy - half && qy < cy + half) {
                                const std::uint32_t i = grid.index({vi, xi, yi}, scale);
                                if (i != j) out.pairs.emplace_back(i, j);
                            }
                        }
                }
            }
    std::sort(out.pairs.begin(), out.pairs.end());
    return out;
}

} // namespace mvc::oracle
