#pragma once

#include "mvc/geometry/bvh.hpp"

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace mvc {

/// Pinhole camera. Image coordinates are continuous: pixel (x, y) spans
/// [x, x+1) x [y, y+1) with y growing downwards.
struct Camera {
    Eigen::Vector3d origin;
    Eigen::Vector3d target;
    Eigen::Vector3d up{0.0, 1.0, 0.0};
    double fov_y = 0.8; // radians
    int width = 64;
    int height = 64;

    Eigen::Vector3d forward() const;
    Eigen::Vector3d right() const;
    Eigen::Vector3d true_up() const;

    /// Same pose and field of view at a different resolution.
    Camera with_resolution(int w, int h) const;
};

/// Throws InputError unless origin != target, fov in (0, pi), resolution positive
/// and up not parallel to the viewing direction.
void validate(const Camera& camera);

/// Primary ray through a continuous image-plane point.
Ray generate_ray(const Camera& camera, const Eigen::Vector2d& image_point);

struct Projection {
    Eigen::Vector2d pixel; // continuous image coordinates
    double depth;          // distance along the viewing axis
};

/// Inverse of generate_ray. Returns nothing for points at or behind the camera plane.
std::optional<Projection> project_point(const Camera& camera, const Eigen::Vector3d& p);

bool inside_image(const Camera& camera, const Eigen::Vector2d& pixel);

/// Cameras at uniform azimuth steps of 360/count degrees, all looking at center.
/// Azimuth 0 places the camera on the +z side of center; elevation is measured
/// from the xz-plane towards +y.
std::vector<Camera> generate_orbit_cameras(int count, double elevation, double radius, double fov_y,
                                           int width, int height,
                                           const Eigen::Vector3d& center = Eigen::Vector3d::Zero());

} // namespace mvc
