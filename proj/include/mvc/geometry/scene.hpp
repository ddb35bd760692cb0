#pragma once

#include "mvc/geometry/bvh.hpp"
#include "mvc/geometry/mesh.hpp"

#include <Eigen/Core>

#include <memory>
#include <optional>
#include <vector>

namespace mvc {

/// Per-triangle tangent frame derived from UV derivatives.
struct TangentFrame {
    Eigen::Vector3d tangent;   // direction of increasing u
    Eigen::Vector3d bitangent; // direction of increasing v
};

/// Immutable scene: mesh, acceleration structure and derived per-triangle data.
/// Safe to share across threads after construction.
class Scene {
public:
    explicit Scene(Mesh mesh);

    const Mesh& mesh() const { return *mesh_; }
    const Bvh& bvh() const { return *bvh_; }

    /// Ray epsilon used for self-intersection and shadow tests: 1e-4 x bounding radius.
    double epsilon() const { return epsilon_; }
    const BoundingSphere& bounds() const { return bounds_; }

    /// Connected component of the triangle in UV space (triangles sharing a vertex).
    int chart(int triangle) const { return charts_[static_cast<std::size_t>(triangle)]; }
    const TangentFrame& tangent_frame(int triangle) const {
        return tangents_[static_cast<std::size_t>(triangle)];
    }

    std::optional<HitRecord> intersect(const Ray& ray) const;
    std::optional<HitRecord> intersect(const Ray& ray, double t_min, double t_max) const;

    /// True when the open segment between a and b is free of geometry, with the
    /// scene epsilon trimmed from both ends.
    bool segment_clear(const Eigen::Vector3d& a, const Eigen::Vector3d& b) const;

private:
    std::shared_ptr<const Mesh> mesh_;
    std::shared_ptr<const Bvh> bvh_;
    BoundingSphere bounds_;
    double epsilon_;
    std::vector<int> charts_;
    std::vector<TangentFrame> tangents_;
};

} // namespace mvc
