#include "mvc/geometry/scene.hpp"

#include "mvc/errors.hpp"

#include <limits>
#include <numeric>

namespace mvc {

namespace {

int find_root(std::vector<int>& parent, int x) {
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

TangentFrame triangle_frame(const Mesh& m, const Eigen::Vector3i& t) {
    const Eigen::Vector3d dp1 = m.vertices[t[1]] - m.vertices[t[0]];
    const Eigen::Vector3d dp2 = m.vertices[t[2]] - m.vertices[t[0]];
    const Eigen::Vector2d d1 = m.uvs[t[1]] - m.uvs[t[0]];
    const Eigen::Vector2d d2 = m.uvs[t[2]] - m.uvs[t[0]];
    const double det = d1.x() * d2.y() - d2.x() * d1.y();
    const Eigen::Vector3d n = dp1.cross(dp2);
    if (std::abs(det) > 1e-14 && n.norm() > 0.0) {
        const Eigen::Vector3d tu = (dp1 * d2.y() - dp2 * d1.y()) / det;
        const Eigen::Vector3d tv = (dp2 * d1.x() - dp1 * d2.x()) / det;
        if (tu.norm() > 0.0 && tv.norm() > 0.0) return {tu.normalized(), tv.normalized()};
    }
    // Degenerate UVs: any frame orthogonal to the face.
    const Eigen::Vector3d nn = n.norm() > 0.0 ? Eigen::Vector3d(n.normalized()) : Eigen::Vector3d::UnitZ();
    const Eigen::Vector3d helper =
        std::abs(nn.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
    const Eigen::Vector3d tu = helper.cross(nn).normalized();
    return {tu, nn.cross(tu)};
}

} // namespace

Scene::Scene(Mesh mesh) {
    validate(mesh);
    if (mesh.empty()) throw InputError("scene: mesh has no triangles");
    mesh_ = std::make_shared<const Mesh>(std::move(mesh));
    bvh_ = std::make_shared<const Bvh>(*mesh_);
    bounds_ = bounding_sphere(*mesh_);
    epsilon_ = 1e-4 * bounds_.radius;

    const auto& m = *mesh_;
    std::vector<int> parent(m.vertices.size());
    std::iota(parent.begin(), parent.end(), 0);
    for (const auto& t : m.triangles) {
        const int r0 = find_root(parent, t[0]);
        parent[find_root(parent, t[1])] = r0;
        parent[find_root(parent, t[2])] = r0;
    }
    charts_.reserve(m.triangles.size());
    tangents_.reserve(m.triangles.size());
    for (const auto& t : m.triangles) {
        charts_.push_back(find_root(parent, t[0]));
        tangents_.push_back(triangle_frame(m, t));
    }
}

std::optional<HitRecord> Scene::intersect(const Ray& ray) const {
    return bvh_->intersect(ray, epsilon_, std::numeric_limits<double>::infinity());
}

std::optional<HitRecord> Scene::intersect(const Ray& ray, double t_min, double t_max) const {
    return bvh_->intersect(ray, t_min, t_max);
}

bool Scene::segment_clear(const Eigen::Vector3d& a, const Eigen::Vector3d& b) const {
    const Eigen::Vector3d d = b - a;
    const double len = d.norm();
    if (len <= 2.0 * epsilon_) return true;
    return !bvh_->occluded({a, d / len}, epsilon_, len - epsilon_);
}

} // namespace mvc
