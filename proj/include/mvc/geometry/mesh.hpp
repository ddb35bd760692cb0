#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <filesystem>
#include <string>
#include <vector>

namespace mvc {

/// Indexed triangle mesh with per-vertex normals and UVs.
///
/// OBJ corners with distinct (v, vt, vn) triples become distinct vertices, so UV
/// seams and hard edges split vertices.
struct Mesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<Eigen::Vector3d> normals;
    std::vector<Eigen::Vector2d> uvs;
    std::vector<Eigen::Vector3i> triangles;

    std::size_t triangle_count() const { return triangles.size(); }
    bool empty() const { return triangles.empty(); }
};

/// Throws InputError if indices, UVs or normals violate the mesh invariants.
void validate(const Mesh& mesh);

/// Center and radius of the axis-aligned bounding box's circumscribed sphere.
struct BoundingSphere {
    Eigen::Vector3d center;
    double radius;
};
BoundingSphere bounding_sphere(const Mesh& mesh);

/// Wavefront OBJ restricted to v/vt/vn/f records; every face corner must carry
/// v/vt/vn indices. Polygons are fan-triangulated. Comments, `o`, `g`, `s`,
/// `usemtl` and `mtllib` lines are ignored.
Mesh load_obj(const std::filesystem::path& path);
Mesh parse_obj(const std::string& text);
void save_obj(const Mesh& mesh, const std::filesystem::path& path);

// Built-in scenes.

/// Latitude/longitude sphere. u follows longitude, v follows colatitude, so the
/// seam at u = 0/1 and the pole rows are explicit.
Mesh make_uv_sphere(double radius, int segments, int rings);

/// Axis-aligned cube with one UV chart per face laid out on a 3x2 atlas.
Mesh make_cube(double half_extent);

/// Square in the z = 0 plane facing +z with UVs spanning [0,1]^2.
Mesh make_quad(double half_extent);

/// Resolves "builtin:sphere", "builtin:cube", "builtin:quad" or an OBJ path.
Mesh load_scene_mesh(const std::string& spec);

} // namespace mvc
