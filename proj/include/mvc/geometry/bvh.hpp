#pragma once

#include "mvc/geometry/mesh.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

namespace mvc {

struct Ray {
    Eigen::Vector3d origin;
    Eigen::Vector3d direction; // unit length
};

/// First surface intersection along a ray.
struct HitRecord {
    Eigen::Vector3d position;
    Eigen::Vector3d shading_normal;   // interpolated vertex normal, unit
    Eigen::Vector3d geometric_normal; // face normal, unit
    Eigen::Vector2d uv;
    Eigen::Vector2d barycentrics;     // weights of vertex 1 and 2
    int triangle = -1;
    double t = 0.0;
};

/// Moller-Trumbore test. Returns the ray parameter and the barycentrics of
/// vertices 1 and 2, or nothing when the ray misses or t is outside (t_min, t_max).
struct TriangleHit {
    double t;
    double b1;
    double b2;
};
std::optional<TriangleHit> intersect_triangle(const Ray& ray, const Eigen::Vector3d& p0,
                                              const Eigen::Vector3d& p1, const Eigen::Vector3d& p2,
                                              double t_min, double t_max);

/// Completes a hit record from triangle id and barycentrics.
HitRecord make_hit(const Mesh& mesh, const Ray& ray, int triangle, const TriangleHit& h);

/// Binary SAH bounding volume hierarchy over a mesh's triangles.
///
/// Nearest-hit queries break ties in t by the lower triangle id, so results are
/// identical to an exhaustive scan over all triangles.
class Bvh {
public:
    explicit Bvh(const Mesh& mesh);

    std::optional<HitRecord> intersect(const Ray& ray, double t_min, double t_max) const;

    /// Any-hit query for shadow rays.
    bool occluded(const Ray& ray, double t_min, double t_max) const;

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t leaf_count() const;
    const Mesh& mesh() const { return *mesh_; }

private:
    struct Node {
        Eigen::Vector3d lo;
        Eigen::Vector3d hi;
        // Leaves: first index into order_ and count > 0. Inner: right child, count == 0.
        std::uint32_t offset = 0;
        std::uint32_t count = 0;
    };

    std::uint32_t build(std::uint32_t begin, std::uint32_t end,
                        const std::vector<Eigen::Vector3d>& centroids,
                        const std::vector<Eigen::Vector3d>& tri_lo,
                        const std::vector<Eigen::Vector3d>& tri_hi, int depth);

    const Mesh* mesh_;
    std::vector<Node> nodes_;
    std::vector<std::uint32_t> order_;
};

/// Exhaustive nearest hit over all triangles. Reference for the BVH.
std::optional<HitRecord> intersect_brute_force(const Mesh& mesh, const Ray& ray, double t_min,
                                               double t_max);

} // namespace mvc
