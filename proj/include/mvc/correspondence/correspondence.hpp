#pragma once

#include "mvc/geometry/camera.hpp"
#include "mvc/geometry/scene.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace mvc {

/// Latent pixels of all views tiled into one rows x cols grid image. Flat
/// indices follow the token order of that grid image: row-major over the whole
/// grid, so view v occupies tile (v / cols, v % cols).
class LatentGrid {
public:
    static constexpr int kScales = 4;

    /// Throws InputError unless rows * cols >= views and the image resolution is
    /// divisible by the coarsest downsampling factor. Slots past the last view are
    /// padding: they own indices but never take part in correspondences.
    LatentGrid(int views, int rows, int cols, int image_width, int image_height);
    /// Square layout when `views` is a perfect square, a single row otherwise.
    static LatentGrid for_views(int views, int image_width, int image_height);

    int views() const { return views_; }
    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int image_width() const { return image_width_; }
    int image_height() const { return image_height_; }

    /// 8, 16, 32, 64 for scales 1..4.
    static int factor(int scale);
    int latent_width(int scale) const { return image_width_ / factor(scale); }
    int latent_height(int scale) const { return image_height_ / factor(scale); }
    std::uint32_t size(int scale) const;

    struct Coord {
        int view;
        int x;
        int y;
        bool operator==(const Coord&) const = default;
    };
    std::uint32_t index(const Coord& c, int scale) const;
    Coord coord(std::uint32_t index, int scale) const;

private:
    int views_, rows_, cols_, image_width_, image_height_;
};

/// Square neighborhood side per scale.
struct NeighborhoodSpec {
    std::array<int, LatentGrid::kScales> side{9, 5, 3, 1};
    int at(int scale) const { return side[static_cast<std::size_t>(scale - 1)]; }
};

/// Ordered pairs (i, j): latent pixel i attends to latent pixel j.
struct ScaleCorrespondences {
    int scale = 1;
    std::uint32_t n = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs; // sorted, unique
    bool operator==(const ScaleCorrespondences&) const = default;
};

struct CorrespondenceSet {
    std::vector<ScaleCorrespondences> scales;
    const ScaleCorrespondences& at(int scale) const;
};

struct CorrespondenceOptions {
    NeighborhoodSpec neighborhoods;
    bool same_view_pairs = false;
    std::vector<int> scales{1, 2, 3, 4};
};

/// Ray through the center of the latent pixel's image-space patch.
Ray latent_center_ray(const Camera& camera, int x, int y, int scale);

/// Segment from the camera to p unoccluded, and p projects in front of the
/// camera inside its image.
bool mutually_visible(const Scene& scene, const Eigen::Vector3d& p, const Camera& camera);

/// Latent pixels of one view whose neighborhood of side `side` contains the
/// latent-space point q. Cells are half-open, so q belongs to exactly one pixel.
void neighborhood_pixels(const Eigen::Vector2d& q_latent, int side, int latent_width, int latent_height,
                         std::vector<std::pair<int, int>>& out);

/// Cameras must be given at image resolution, one per view of the grid.
CorrespondenceSet compute_correspondences(const Scene& scene, const std::vector<Camera>& cameras,
                                          const LatentGrid& grid, const CorrespondenceOptions& options = {});

ScaleCorrespondences compute_scale_correspondences(const Scene& scene, const std::vector<Camera>& cameras,
                                                   const LatentGrid& grid, int scale,
                                                   const CorrespondenceOptions& options = {});

/// Binary layout: "MVCB", u32 version, u32 scale, u32 N, u64 pair count, then
/// (u32 i, u32 j) pairs sorted by (i, j). Little-endian.
std::vector<char> encode_mvcb(const ScaleCorrespondences& set);
ScaleCorrespondences decode_mvcb(const std::vector<char>& bytes);
void write_mvcb(const ScaleCorrespondences& set, const std::filesystem::path& path);
ScaleCorrespondences read_mvcb(const std::filesystem::path& path);

} // namespace mvc
