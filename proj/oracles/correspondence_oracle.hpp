#pragma once

// Brute-force correspondence reference: every latent center ray and every
// visibility ray is intersected against all triangles, projection goes through an
// explicit 3x4 camera matrix, and neighborhoods are found by testing every latent
// pixel of the target view.

#include "mvc/correspondence/correspondence.hpp"

#include <Eigen/Core>

namespace mvc::oracle {

/// 3x4 matrix mapping homogeneous world points to homogeneous continuous pixels.
Eigen::Matrix<double, 3, 4> projection_matrix(const Camera& camera);

/// Visibility by depth comparison: the first brute-force hit along the ray from the
/// camera towards p is not closer than p minus the scene epsilon.
bool depth_test_visible(const Scene& scene, const Eigen::Vector3d& p, const Camera& camera);

ScaleCorrespondences dense_correspondences(const Scene& scene, const std::vector<Camera>& cameras,
                                           const LatentGrid& grid, int scale, int side,
                                           bool same_view_pairs = false);

} // namespace mvc::oracle
