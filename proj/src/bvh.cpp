#include "mvc/geometry/bvh.hpp"

#include "mvc/errors.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>

namespace mvc {

std::optional<TriangleHit> intersect_triangle(const Ray& ray, const Eigen::Vector3d& p0,
                                              const Eigen::Vector3d& p1, const Eigen::Vector3d& p2,
                                              double t_min, double t_max) {
    const Eigen::Vector3d e1 = p1 - p0;
    const Eigen::Vector3d e2 = p2 - p0;
    const Eigen::Vector3d pv = ray.direction.cross(e2);
    const double det = e1.dot(pv);
    if (det == 0.0) return std::nullopt;
    const double inv = 1.0 / det;
    const Eigen::Vector3d tv = ray.origin - p0;
    const double b1 = tv.dot(pv) * inv;
    if (b1 < 0.0 || b1 > 1.0) return std::nullopt;
    const Eigen::Vector3d qv = tv.cross(e1);
    const double b2 = ray.direction.dot(qv) * inv;
    if (b2 < 0.0 || b1 + b2 > 1.0) return std::nullopt;
    const double t = e2.dot(qv) * inv;
    if (!(t > t_min && t < t_max)) return std::nullopt;
    return TriangleHit{t, b1, b2};
}

HitRecord make_hit(const Mesh& mesh, const Ray& ray, int triangle, const TriangleHit& h) {
    const auto& tri = mesh.triangles[static_cast<std::size_t>(triangle)];
    const double b0 = 1.0 - h.b1 - h.b2;
    HitRecord r;
    r.triangle = triangle;
    r.t = h.t;
    r.barycentrics = {h.b1, h.b2};
    r.position = ray.origin + h.t * ray.direction;
    r.uv = b0 * mesh.uvs[tri[0]] + h.b1 * mesh.uvs[tri[1]] + h.b2 * mesh.uvs[tri[2]];
    Eigen::Vector3d n =
        b0 * mesh.normals[tri[0]] + h.b1 * mesh.normals[tri[1]] + h.b2 * mesh.normals[tri[2]];
    const double len = n.norm();
    Eigen::Vector3d g = (mesh.vertices[tri[1]] - mesh.vertices[tri[0]])
                            .cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
    const double glen = g.norm();
    g = glen > 0.0 ? Eigen::Vector3d(g / glen) : Eigen::Vector3d(-ray.direction);
    r.shading_normal = len > 0.0 ? Eigen::Vector3d(n / len) : g;
    if (g.dot(r.shading_normal) < 0.0) g = -g;
    r.geometric_normal = g;
    return r;
}

namespace {

struct Candidate {
    double t = std::numeric_limits<double>::infinity();
    int triangle = -1;
    TriangleHit hit{};

    // Nearest t, ties to the lower triangle id.
    void offer(int tri, const TriangleHit& h) {
        if (h.t < t || (h.t == t && tri < triangle)) {
            t = h.t;
            triangle = tri;
            hit = h;
        }
    }
};

bool slab_test(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, const Eigen::Vector3d& origin,
               const Eigen::Vector3d& inv_dir, double t_min, double t_max) {
    double t0 = t_min, t1 = t_max;
    for (int a = 0; a < 3; ++a) {
        double tn = (lo[a] - origin[a]) * inv_dir[a];
        double tf = (hi[a] - origin[a]) * inv_dir[a];
        if (tn > tf) std::swap(tn, tf);
        // NaN from 0 * inf (origin on a slab plane with a parallel ray) keeps the box.
        if (tn > t0) t0 = tn;
        if (tf < t1) t1 = tf;
        if (t0 > t1) return false;
    }
    return true;
}

constexpr std::uint32_t kLeafSize = 4;
constexpr int kBins = 16;
// Beyond this depth splits fall back to the median, bounding the traversal stack.
constexpr int kMaxSahDepth = 40;
constexpr std::size_t kStackSize = 128;

} // namespace

Bvh::Bvh(const Mesh& mesh) : mesh_(&mesh) {
    if (mesh.empty()) throw InputError("bvh: mesh has no triangles");
    const std::size_t n = mesh.triangles.size();
    std::vector<Eigen::Vector3d> centroids(n), lo(n), hi(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = mesh.triangles[i];
        const auto& a = mesh.vertices[t[0]];
        const auto& b = mesh.vertices[t[1]];
        const auto& c = mesh.vertices[t[2]];
        lo[i] = a.cwiseMin(b).cwiseMin(c);
        hi[i] = a.cwiseMax(b).cwiseMax(c);
        centroids[i] = (a + b + c) / 3.0;
    }
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * n);
    build(0, static_cast<std::uint32_t>(n), centroids, lo, hi, 0);
}

std::uint32_t Bvh::build(std::uint32_t begin, std::uint32_t end,
                         const std::vector<Eigen::Vector3d>& centroids,
                         const std::vector<Eigen::Vector3d>& tri_lo,
                         const std::vector<Eigen::Vector3d>& tri_hi, int depth) {
    const auto index = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    Eigen::Vector3d clo = lo, chi = hi;
    for (std::uint32_t i = begin; i < end; ++i) {
        lo = lo.cwiseMin(tri_lo[order_[i]]);
        hi = hi.cwiseMax(tri_hi[order_[i]]);
        clo = clo.cwiseMin(centroids[order_[i]]);
        chi = chi.cwiseMax(centroids[order_[i]]);
    }
    // Pad so that rounding in the slab test never rejects a box a triangle hit lies on.
    const Eigen::Vector3d pad = 1e-9 * (Eigen::Vector3d::Ones() + lo.cwiseAbs().cwiseMax(hi.cwiseAbs()));
    nodes_[index].lo = lo - pad;
    nodes_[index].hi = hi + pad;

    const std::uint32_t count = end - begin;
    auto make_leaf = [&] {
        nodes_[index].offset = begin;
        nodes_[index].count = count;
        return index;
    };
    if (count <= kLeafSize) return make_leaf();

    // Binned SAH over the widest centroid axis.
    int axis = 0;
    (chi - clo).maxCoeff(&axis);
    const double extent = chi[axis] - clo[axis];
    if (!(extent > 0.0)) return make_leaf();

    auto bin_of = [&](std::uint32_t tri) {
        const int b = static_cast<int>(kBins * (centroids[tri][axis] - clo[axis]) / extent);
        return std::clamp(b, 0, kBins - 1);
    };
    struct Bin {
        Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
        Eigen::Vector3d hi = Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity());
        std::uint32_t count = 0;
    };
    std::array<Bin, kBins> bins;
    for (std::uint32_t i = begin; i < end; ++i) {
        auto& b = bins[static_cast<std::size_t>(bin_of(order_[i]))];
        b.lo = b.lo.cwiseMin(tri_lo[order_[i]]);
        b.hi = b.hi.cwiseMax(tri_hi[order_[i]]);
        ++b.count;
    }
    auto area = [](const Eigen::Vector3d& l, const Eigen::Vector3d& h) {
        const Eigen::Vector3d d = (h - l).cwiseMax(0.0);
        return d.x() * d.y() + d.y() * d.z() + d.z() * d.x();
    };
    std::array<double, kBins - 1> left_cost{};
    {
        Bin acc;
        for (int s = 0; s < kBins - 1; ++s) {
            acc.lo = acc.lo.cwiseMin(bins[s].lo);
            acc.hi = acc.hi.cwiseMax(bins[s].hi);
            acc.count += bins[s].count;
            left_cost[s] = acc.count ? area(acc.lo, acc.hi) * acc.count : 0.0;
        }
    }
    double best = std::numeric_limits<double>::infinity();
    int split = -1;
    {
        Bin acc;
        for (int s = kBins - 1; s > 0; --s) {
            acc.lo = acc.lo.cwiseMin(bins[s].lo);
            acc.hi = acc.hi.cwiseMax(bins[s].hi);
            acc.count += bins[s].count;
            const double cost = left_cost[s - 1] + (acc.count ? area(acc.lo, acc.hi) * acc.count : 0.0);
            if (acc.count > 0 && acc.count < count && cost < best) {
                best = cost;
                split = s;
            }
        }
    }
    std::uint32_t mid;
    if (split < 0 || depth >= kMaxSahDepth) {
        mid = begin + count / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) {
                             return centroids[a][axis] < centroids[b][axis] ||
                                    (centroids[a][axis] == centroids[b][axis] && a < b);
                         });
    } else {
        auto it = std::stable_partition(order_.begin() + begin, order_.begin() + end,
                                        [&](std::uint32_t t) { return bin_of(t) < split; });
        mid = static_cast<std::uint32_t>(it - order_.begin());
    }
    build(begin, mid, centroids, tri_lo, tri_hi, depth + 1);
    const std::uint32_t right = build(mid, end, centroids, tri_lo, tri_hi, depth + 1);
    nodes_[index].offset = right;
    nodes_[index].count = 0;
    return index;
}

std::size_t Bvh::leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.count > 0; }));
}

std::optional<HitRecord> Bvh::intersect(const Ray& ray, double t_min, double t_max) const {
    const Eigen::Vector3d inv_dir = ray.direction.cwiseInverse();
    Candidate best;
    best.t = t_max;
    std::array<std::uint32_t, kStackSize> stack;
    int top = 0;
    stack[top++] = 0;
    const auto& tris = mesh_->triangles;
    const auto& verts = mesh_->vertices;
    while (top > 0) {
        const Node& node = nodes_[stack[--top]];
        // Inclusive upper bound: an equal-t hit with a lower id must still be found.
        if (!slab_test(node.lo, node.hi, ray.origin, inv_dir, t_min, best.t)) continue;
        if (node.count > 0) {
            for (std::uint32_t i = node.offset; i < node.offset + node.count; ++i) {
                const auto tri = static_cast<int>(order_[i]);
                const auto& t = tris[order_[i]];
                auto h = intersect_triangle(ray, verts[t[0]], verts[t[1]], verts[t[2]], t_min,
                                            std::nextafter(best.t, std::numeric_limits<double>::infinity()));
                if (h && (h->t < t_max)) best.offer(tri, *h);
            }
        } else {
            const auto self = static_cast<std::uint32_t>(&node - nodes_.data());
            stack[top++] = node.offset;
            stack[top++] = self + 1;
        }
    }
    if (best.triangle < 0) return std::nullopt;
    return make_hit(*mesh_, ray, best.triangle, best.hit);
}

bool Bvh::occluded(const Ray& ray, double t_min, double t_max) const {
    const Eigen::Vector3d inv_dir = ray.direction.cwiseInverse();
    std::array<std::uint32_t, kStackSize> stack;
    int top = 0;
    stack[top++] = 0;
    const auto& tris = mesh_->triangles;
    const auto& verts = mesh_->vertices;
    while (top > 0) {
        const Node& node = nodes_[stack[--top]];
        if (!slab_test(node.lo, node.hi, ray.origin, inv_dir, t_min, t_max)) continue;
        if (node.count > 0) {
            for (std::uint32_t i = node.offset; i < node.offset + node.count; ++i) {
                const auto& t = tris[order_[i]];
                if (intersect_triangle(ray, verts[t[0]], verts[t[1]], verts[t[2]], t_min, t_max))
                    return true;
            }
        } else {
            const auto self = static_cast<std::uint32_t>(&node - nodes_.data());
            stack[top++] = node.offset;
            stack[top++] = self + 1;
        }
    }
    return false;
}

std::optional<HitRecord> intersect_brute_force(const Mesh& mesh, const Ray& ray, double t_min,
                                               double t_max) {
    Candidate best;
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        const auto& t = mesh.triangles[i];
        if (auto h = intersect_triangle(ray, mesh.vertices[t[0]], mesh.vertices[t[1]],
                                        mesh.vertices[t[2]], t_min, t_max))
            best.offer(static_cast<int>(i), *h);
    }
    if (best.triangle < 0) return std::nullopt;
    return make_hit(mesh, ray, best.triangle, best.hit);
}

} // namespace mvc
