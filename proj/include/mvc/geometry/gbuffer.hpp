#pragma once

#include "mvc/geometry/bvh.hpp"
#include "mvc/geometry/camera.hpp"
#include "mvc/geometry/scene.hpp"
#include "mvc/image.hpp"

#include <Eigen/Core>

#include <array>
#include <vector>

namespace mvc {

/// UV-space footprint of one screen subpixel.
struct SubpixelFootprint {
    /// Corners in screen order (x0,y0), (x1,y0), (x1,y1), (x0,y1).
    std::array<Eigen::Vector2d, 4> uv_corners;
    /// UV of the surface point seen through the subpixel center.
    Eigen::Vector2d uv_center{0.0, 0.0};
    /// Area of the UV quad, as the sum of the two triangle areas split along corner 0-2.
    double area = 0.0;
    bool valid = false;
};

struct PixelSample {
    bool covered = false;
    HitRecord hit;
    Eigen::Vector3d view_dir{0.0, 0.0, 0.0}; // from the surface towards the camera
};

/// Per-pixel primary hits plus per-subpixel UV footprints on an s x s grid.
struct GBuffer {
    int width = 0;
    int height = 0;
    int subpixels = 1;
    std::vector<PixelSample> pixels;
    std::vector<SubpixelFootprint> footprints; // width * height * s * s, pixel-major

    const PixelSample& pixel(int x, int y) const {
        return pixels[static_cast<std::size_t>(y) * width + x];
    }
    /// Footprints of one pixel, subpixel row-major.
    const SubpixelFootprint* pixel_footprints(int x, int y) const {
        return footprints.data() +
               (static_cast<std::size_t>(y) * width + x) * subpixels * subpixels;
    }
    double footprint_area(int x, int y) const;
};

/// Rasterizes primary hits and subpixel footprints. Every subpixel corner ray is
/// cast once on a shared lattice, so adjacent subpixels share corners.
///
/// A corner takes the UV of its own hit when that hit lies in the same UV chart
/// as the subpixel center and close to the center's tangent plane; otherwise the
/// corner ray is intersected with the plane of the center triangle and its UV is
/// extended affinely. Subpixels whose center ray misses have zero area.
GBuffer rasterize_gbuffer(const Scene& scene, const Camera& camera, int subpixels);

enum class NormalSpace { Camera, World };

/// Normals encoded (n + 1) / 2 into an RGB image; background is 0.
/// Camera space uses x right, y up, z towards the viewer.
Image encode_normals(const GBuffer& gbuffer, const Camera& camera, NormalSpace space);

/// Primary-ray distance per pixel, 0 for background.
Image depth_image(const GBuffer& gbuffer);

} // namespace mvc
