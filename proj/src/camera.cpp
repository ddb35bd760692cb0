#include "mvc/geometry/camera.hpp"

#include "mvc/errors.hpp"

#include <cmath>
#include <numbers>

namespace mvc {

Eigen::Vector3d Camera::forward() const { return (target - origin).normalized(); }

Eigen::Vector3d Camera::right() const { return forward().cross(up).normalized(); }

Eigen::Vector3d Camera::true_up() const { return right().cross(forward()); }

Camera Camera::with_resolution(int w, int h) const {
    Camera c = *this;
    c.width = w;
    c.height = h;
    return c;
}

void validate(const Camera& camera) {
    if (!((camera.target - camera.origin).norm() > 0.0))
        throw InputError("camera: origin and target coincide");
    if (!(camera.fov_y > 0.0 && camera.fov_y < std::numbers::pi))
        throw InputError("camera: vertical fov must be in (0, pi)");
    if (camera.width <= 0 || camera.height <= 0)
        throw InputError("camera: resolution must be positive");
    if (!(camera.forward().cross(camera.up).norm() > 1e-9))
        throw InputError("camera: up vector parallel to viewing direction");
}

Ray generate_ray(const Camera& camera, const Eigen::Vector2d& image_point) {
    const double tan_half = std::tan(0.5 * camera.fov_y);
    const double aspect = static_cast<double>(camera.width) / camera.height;
    const double sx = (2.0 * image_point.x() / camera.width - 1.0) * tan_half * aspect;
    const double sy = (1.0 - 2.0 * image_point.y() / camera.height) * tan_half;
    const Eigen::Vector3d dir = camera.forward() + sx * camera.right() + sy * camera.true_up();
    return {camera.origin, dir.normalized()};
}

std::optional<Projection> project_point(const Camera& camera, const Eigen::Vector3d& p) {
    const Eigen::Vector3d d = p - camera.origin;
    const double z = d.dot(camera.forward());
    if (!(z > 0.0)) return std::nullopt;
    const double tan_half = std::tan(0.5 * camera.fov_y);
    const double aspect = static_cast<double>(camera.width) / camera.height;
    const double sx = d.dot(camera.right()) / z;
    const double sy = d.dot(camera.true_up()) / z;
    Projection out;
    out.pixel = {0.5 * camera.width * (sx / (tan_half * aspect) + 1.0),
                 0.5 * camera.height * (1.0 - sy / tan_half)};
    out.depth = z;
    return out;
}

bool inside_image(const Camera& camera, const Eigen::Vector2d& pixel) {
    return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < camera.width &&
           pixel.y() < camera.height;
}

std::vector<Camera> generate_orbit_cameras(int count, double elevation, double radius, double fov_y,
                                           int width, int height, const Eigen::Vector3d& center) {
    if (count < 1 || count > 64) throw InputError("orbit: view count must be in [1, 64]");
    if (!(radius > 0.0)) throw InputError("orbit: radius must be positive");
    if (!(std::abs(elevation) < 0.5 * std::numbers::pi))
        throw InputError("orbit: elevation must be strictly between -90 and 90 degrees");
    std::vector<Camera> cams;
    cams.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        const double az = 2.0 * std::numbers::pi * k / count;
        Camera c;
        c.origin = center + radius * Eigen::Vector3d(std::cos(elevation) * std::sin(az),
                                                     std::sin(elevation),
                                                     std::cos(elevation) * std::cos(az));
        c.target = center;
        c.up = Eigen::Vector3d::UnitY();
        c.fov_y = fov_y;
        c.width = width;
        c.height = height;
        validate(c);
        cams.push_back(c);
    }
    return cams;
}

} // namespace mvc
