#include "mvc/correspondence/correspondence.hpp"

#include "mvc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mvc {

LatentGrid::LatentGrid(int views, int rows, int cols, int image_width, int image_height)
    : views_(views), rows_(rows), cols_(cols), image_width_(image_width), image_height_(image_height) {
    if (views < 1) throw InputError("latent grid: need at least one view");
    if (rows < 1 || cols < 1 || rows * cols < views)
        throw InputError("latent grid: rows x cols must hold every view");
    const int f = factor(kScales);
    if (image_width < f || image_height < f || image_width % f != 0 || image_height % f != 0)
        throw InputError("latent grid: image resolution must be a positive multiple of " + std::to_string(f));
    const std::uint64_t n = static_cast<std::uint64_t>(rows) * cols * (image_width / 8) * (image_height / 8);
    if (n > 0xFFFFFFFFull) throw InputError("latent grid: too many latent pixels");
}

LatentGrid LatentGrid::for_views(int views, int image_width, int image_height) {
    const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(std::max(views, 1)))));
    if (s * s == views) return LatentGrid(views, s, s, image_width, image_height);
    return LatentGrid(views, 1, views, image_width, image_height);
}

int LatentGrid::factor(int scale) {
    if (scale < 1 || scale > kScales) throw InputError("latent grid: scale must be in 1..4");
    return 8 << (scale - 1);
}

std::uint32_t LatentGrid::size(int scale) const {
    return static_cast<std::uint32_t>(rows_ * cols_) * static_cast<std::uint32_t>(latent_width(scale)) *
           static_cast<std::uint32_t>(latent_height(scale));
}

std::uint32_t LatentGrid::index(const Coord& c, int scale) const {
    const int lw = latent_width(scale), lh = latent_height(scale);
    const int row = c.view / cols_, col = c.view % cols_;
    const std::uint64_t gy = static_cast<std::uint64_t>(row) * lh + c.y;
    const std::uint64_t gx = static_cast<std::uint64_t>(col) * lw + c.x;
    return static_cast<std::uint32_t>(gy * static_cast<std::uint64_t>(cols_ * lw) + gx);
}

LatentGrid::Coord LatentGrid::coord(std::uint32_t index, int scale) const {
    const int lw = latent_width(scale), lh = latent_height(scale);
    const std::uint32_t grid_w = static_cast<std::uint32_t>(cols_ * lw);
    const int gx = static_cast<int>(index % grid_w), gy = static_cast<int>(index / grid_w);
    return {(gy / lh) * cols_ + gx / lw, gx % lw, gy % lh};
}

const ScaleCorrespondences& CorrespondenceSet::at(int scale) const {
    for (const auto& s : scales)
        if (s.scale == scale) return s;
    throw InputError("correspondence set has no scale " + std::to_string(scale));
}

Ray latent_center_ray(const Camera& camera, int x, int y, int scale) {
    const double f = LatentGrid::factor(scale);
    return generate_ray(camera, {(x + 0.5) * f, (y + 0.5) * f});
}

bool mutually_visible(const Scene& scene, const Eigen::Vector3d& p, const Camera& camera) {
    const auto proj = project_point(camera, p);
    if (!proj || !inside_image(camera, proj->pixel)) return false;
    return scene.segment_clear(camera.origin, p);
}

void neighborhood_pixels(const Eigen::Vector2d& q_latent, int side, int latent_width, int latent_height,
                         std::vector<std::pair<int, int>>& out) {
    out.clear();
    const int r = (side - 1) / 2;
    const int cx = static_cast<int>(std::floor(q_latent.x()));
    const int cy = static_cast<int>(std::floor(q_latent.y()));
    for (int y = std::max(cy - r, 0); y <= std::min(cy + r, latent_height - 1); ++y)
        for (int x = std::max(cx - r, 0); x <= std::min(cx + r, latent_width - 1); ++x)
            out.emplace_back(x, y);
}

ScaleCorrespondences compute_scale_correspondences(const Scene& scene, const std::vector<Camera>& cameras,
                                                   const LatentGrid& grid, int scale,
                                                   const CorrespondenceOptions& options) {
    if (grid.views() < 2) throw InputError("correspondences need at least two views");
    if (static_cast<int>(cameras.size()) != grid.views())
        throw InputError("correspondences: camera count does not match the latent grid");
    for (const Camera& c : cameras) {
        validate(c);
        if (c.width != grid.image_width() || c.height != grid.image_height())
            throw InputError("correspondences: camera resolution does not match the latent grid");
    }
    const int side = options.neighborhoods.at(scale);
    if (side < 1 || side % 2 == 0) throw InputError("neighborhood side must be odd and positive");

    ScaleCorrespondences out;
    out.scale = scale;
    out.n = grid.size(scale);
    const int lw = grid.latent_width(scale), lh = grid.latent_height(scale);
    const double f = LatentGrid::factor(scale);
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> per_source(out.n);

#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t jj = 0; jj < static_cast<std::int64_t>(out.n); ++jj) {
        const std::uint32_t j = static_cast<std::uint32_t>(jj);
        const LatentGrid::Coord cj = grid.coord(j, scale);
        if (cj.view >= grid.views()) continue; // padding slot
        const auto hit = scene.intersect(latent_center_ray(cameras[static_cast<std::size_t>(cj.view)],
                                                           cj.x, cj.y, scale));
        if (!hit) continue;
        std::vector<std::pair<int, int>> cells;
        auto& local = per_source[j];
        for (int vi = 0; vi < grid.views(); ++vi) {
            if (vi == cj.view && !options.same_view_pairs) continue;
            const Camera& cam = cameras[static_cast<std::size_t>(vi)];
            if (!mutually_visible(scene, hit->position, cam)) continue;
            const auto proj = project_point(cam, hit->position);
            neighborhood_pixels(proj->pixel / f, side, lw, lh, cells);
            for (const auto& [x, y] : cells) {
                const std::uint32_t i = grid.index({vi, x, y}, scale);
                if (i != j) local.emplace_back(i, j);
            }
        }
    }
    std::size_t total = 0;
    for (const auto& v : per_source) total += v.size();
    out.pairs.reserve(total);
    for (const auto& v : per_source) out.pairs.insert(out.pairs.end(), v.begin(), v.end());
    std::sort(out.pairs.begin(), out.pairs.end());
    out.pairs.erase(std::unique(out.pairs.begin(), out.pairs.end()), out.pairs.end());
    return out;
}

CorrespondenceSet compute_correspondences(const Scene& scene, const std::vector<Camera>& cameras,
                                          const LatentGrid& grid, const CorrespondenceOptions& options) {
    CorrespondenceSet set;
    for (int s : options.scales)
        set.scales.push_back(compute_scale_correspondences(scene, cameras, grid, s, options));
    return set;
}

namespace {

constexpr char kMvcbMagic[4] = {'M', 'V', 'C', 'B'};
constexpr std::uint32_t kMvcbVersion = 1;
constexpr std::size_t kMvcbHeader = 24;

template <typename T>
void put(std::vector<char>& out, T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
T get(const std::vector<char>& in, std::size_t offset) {
    T v;
    std::memcpy(&v, in.data() + offset, sizeof(T));
    return v;
}

} // namespace

std::vector<char> encode_mvcb(const ScaleCorrespondences& set) {
    std::vector<char> out(kMvcbMagic, kMvcbMagic + 4);
    out.reserve(kMvcbHeader + 8 * set.pairs.size());
    put<std::uint32_t>(out, kMvcbVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(set.scale));
    put<std::uint32_t>(out, set.n);
    put<std::uint64_t>(out, set.pairs.size());
    for (const auto& [i, j] : set.pairs) {
        put<std::uint32_t>(out, i);
        put<std::uint32_t>(out, j);
    }
    return out;
}

ScaleCorrespondences decode_mvcb(const std::vector<char>& bytes) {
    if (bytes.size() < kMvcbHeader) throw ParseError("MVCB: truncated header", bytes.size());
    if (!std::equal(kMvcbMagic, kMvcbMagic + 4, bytes.begin())) throw ParseError("MVCB: bad magic", 0);
    if (get<std::uint32_t>(bytes, 4) != kMvcbVersion) throw ParseError("MVCB: unsupported version", 4);
    ScaleCorrespondences s;
    const std::uint32_t scale = get<std::uint32_t>(bytes, 8);
    if (scale < 1 || scale > static_cast<std::uint32_t>(LatentGrid::kScales))
        throw ParseError("MVCB: scale out of range", 8);
    s.scale = static_cast<int>(scale);
    s.n = get<std::uint32_t>(bytes, 12);
    const std::uint64_t count = get<std::uint64_t>(bytes, 16);
    const std::uint64_t payload = bytes.size() - kMvcbHeader;
    if (payload % 8 != 0 || payload / 8 != count)
        throw ParseError("MVCB: pair count does not match file size",
                         kMvcbHeader + std::min<std::uint64_t>(payload / 8, count) * 8);
    s.pairs.resize(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        const std::size_t off = kMvcbHeader + 8 * k;
        const std::uint32_t i = get<std::uint32_t>(bytes, off), j = get<std::uint32_t>(bytes, off + 4);
        if (i >= s.n || j >= s.n) throw ParseError("MVCB: index out of range", off);
        if (i == j) throw ParseError("MVCB: self pair", off);
        if (k > 0 && !(s.pairs[k - 1] < std::make_pair(i, j)))
            throw ParseError("MVCB: pairs not strictly sorted", off);
        s.pairs[k] = {i, j};
    }
    return s;
}

void write_mvcb(const ScaleCorrespondences& set, const std::filesystem::path& path) {
    const auto bytes = encode_mvcb(set);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ScaleCorrespondences read_mvcb(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_mvcb(bytes);
}

} // namespace mvc
