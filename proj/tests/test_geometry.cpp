#include <doctest.h>

#include "mvc/errors.hpp"
#include "mvc/geometry/bvh.hpp"
#include "mvc/geometry/camera.hpp"
#include "mvc/geometry/gbuffer.hpp"
#include "mvc/geometry/mesh.hpp"
#include "mvc/geometry/scene.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace mvc;

namespace {

Mesh unit_triangle() {
    Mesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.normals.assign(3, Eigen::Vector3d(0, 0, 1));
    m.uvs = {{0, 0}, {1, 0}, {0, 1}};
    m.triangles = {{0, 1, 2}};
    return m;
}

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Eigen::Vector3d v(n(rng), n(rng), n(rng));
    return v.normalized();
}

// Rays from a shell around the mesh aimed at jittered points inside it.
std::vector<Ray> random_rays(std::mt19937_64& rng, int count, double shell) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Ray> rays;
    for (int i = 0; i < count; ++i) {
        const Eigen::Vector3d o = shell * random_unit(rng);
        const Eigen::Vector3d target(u(rng), u(rng), u(rng));
        rays.push_back({o, (target - o).normalized()});
    }
    return rays;
}

void expect_bvh_matches_brute_force(const Mesh& mesh, int rays, std::uint64_t seed) {
    Bvh bvh(mesh);
    std::mt19937_64 rng(seed);
    int hits = 0;
    for (const Ray& r : random_rays(rng, rays, 3.0)) {
        const auto a = bvh.intersect(r, 1e-9, 1e30);
        const auto b = intersect_brute_force(mesh, r, 1e-9, 1e30);
        REQUIRE(a.has_value() == b.has_value());
        if (!a) continue;
        ++hits;
        CHECK(a->triangle == b->triangle);
        CHECK(a->t == doctest::Approx(b->t).epsilon(1e-6));
    }
    CHECK(hits > rays / 10);
}

} // namespace

TEST_CASE("bvh: single triangle is one leaf and is hit") {
    const Mesh m = unit_triangle();
    Bvh bvh(m);
    CHECK(bvh.leaf_count() == 1);
    const auto h = bvh.intersect({{0.2, 0.2, 1.0}, {0, 0, -1}}, 1e-6, 10.0);
    REQUIRE(h);
    CHECK(h->triangle == 0);
    CHECK(h->t == doctest::Approx(1.0));
}

TEST_CASE("bvh: ray parallel to and outside the geometry misses") {
    const Mesh m = unit_triangle();
    Bvh bvh(m);
    CHECK_FALSE(bvh.intersect({{-1.0, 0.2, 0.5}, {1, 0, 0}}, 0.0, 100.0));
    CHECK_FALSE(bvh.occluded({{-1.0, 0.2, 0.5}, {1, 0, 0}}, 0.0, 100.0));
}

TEST_CASE("bvh: empty mesh is rejected") {
    Mesh m;
    CHECK_THROWS_AS(Bvh{m}, InputError);
    CHECK_THROWS_AS(Scene{m}, InputError);
}

TEST_CASE("bvh: 500-triangle sphere agrees with brute force on 10^4 rays") {
    const Mesh m = make_uv_sphere(1.0, 20, 14);
    CHECK(m.triangle_count() == 520);
    expect_bvh_matches_brute_force(m, 10000, 1);
}

TEST_CASE("bvh: brute-force equivalence on larger meshes") {
    expect_bvh_matches_brute_force(make_uv_sphere(1.0, 64, 32), 3000, 2);
    expect_bvh_matches_brute_force(make_cube(0.8), 3000, 3);
    // Axis-aligned flat geometry stresses zero-thickness boxes.
    expect_bvh_matches_brute_force(make_quad(1.0), 3000, 4);
}

TEST_CASE("intersect: centroid ray returns analytic barycentrics and uv") {
    const Mesh m = unit_triangle();
    Bvh bvh(m);
    const Eigen::Vector3d centroid(1.0 / 3, 1.0 / 3, 0.0);
    const auto h = bvh.intersect({centroid + Eigen::Vector3d(0, 0, 2), {0, 0, -1}}, 1e-6, 10.0);
    REQUIRE(h);
    CHECK(h->barycentrics.x() == doctest::Approx(1.0 / 3));
    CHECK(h->barycentrics.y() == doctest::Approx(1.0 / 3));
    CHECK(h->uv.x() == doctest::Approx(1.0 / 3));
    CHECK(h->uv.y() == doctest::Approx(1.0 / 3));
    CHECK((h->position - centroid).norm() < 1e-12);
}

TEST_CASE("intersect: t_min excludes self-intersection at the ray origin") {
    const Mesh m = unit_triangle();
    Bvh bvh(m);
    const Ray r{{0.25, 0.25, 0.0}, Eigen::Vector3d(0.3, 0.1, -1.0).normalized()};
    CHECK_FALSE(bvh.intersect(r, 1e-4, 10.0));
    // With t_min = 0 the origin triangle at t = 0 is still excluded (open interval).
    const Ray back{{0.25, 0.25, 1e-5}, {0, 0, -1}};
    CHECK(bvh.intersect(back, 0.0, 10.0));
    CHECK_FALSE(bvh.intersect(back, 1e-4, 10.0));
}

TEST_CASE("scene: epsilon scales with the bounding radius") {
    const Scene small(make_uv_sphere(1.0, 16, 8));
    const Scene large(make_uv_sphere(100.0, 16, 8));
    CHECK(large.epsilon() == doctest::Approx(100.0 * small.epsilon()));
    CHECK(small.epsilon() == doctest::Approx(1e-4 * small.bounds().radius));
}

TEST_CASE("scene: cube faces are separate uv charts, sphere is one chart") {
    const Scene cube(make_cube(1.0));
    CHECK(cube.chart(0) == cube.chart(1));
    CHECK(cube.chart(0) != cube.chart(2));
    const Scene sphere(make_uv_sphere(1.0, 16, 8));
    for (std::size_t t = 0; t < sphere.mesh().triangle_count(); ++t)
        CHECK(sphere.chart(static_cast<int>(t)) == sphere.chart(0));
}

TEST_CASE("orbit cameras: uniform azimuth steps looking at the center") {
    const double deg = std::numbers::pi / 180.0;
    auto azimuth = [](const Camera& c) {
        double a = std::atan2(c.origin.x(), c.origin.z()) * 180.0 / std::numbers::pi;
        return a < -1e-9 ? a + 360.0 : a;
    };
    const auto nine = generate_orbit_cameras(9, 20 * deg, 3.0, 50 * deg, 64, 64);
    REQUIRE(nine.size() == 9);
    for (int k = 0; k < 9; ++k) {
        CHECK(azimuth(nine[k]) == doctest::Approx(40.0 * k));
        CHECK((nine[k].forward() + nine[k].origin.normalized()).norm() < 1e-12);
        CHECK(nine[k].origin.norm() == doctest::Approx(3.0));
    }
    const auto sixteen = generate_orbit_cameras(16, 0.0, 2.0, 0.8, 32, 32);
    CHECK(azimuth(sixteen[1]) - azimuth(sixteen[0]) == doctest::Approx(22.5));
    const auto one = generate_orbit_cameras(1, 0.0, 2.0, 0.8, 32, 32);
    REQUIRE(one.size() == 1);
    CHECK(azimuth(one[0]) == doctest::Approx(0.0));

    CHECK_THROWS_AS(generate_orbit_cameras(4, 0.0, 0.0, 0.8, 32, 32), InputError);
    CHECK_THROWS_AS(generate_orbit_cameras(4, 0.0, -1.0, 0.8, 32, 32), InputError);
    CHECK_THROWS_AS(generate_orbit_cameras(0, 0.0, 1.0, 0.8, 32, 32), InputError);
    CHECK_THROWS_AS(generate_orbit_cameras(65, 0.0, 1.0, 0.8, 32, 32), InputError);
}

TEST_CASE("project_point: on-axis point maps to the image center; behind is flagged") {
    Camera cam;
    cam.origin = {0, 0, 0};
    cam.target = {0, 0, -1};
    cam.width = 64;
    cam.height = 48;
    const auto q = project_point(cam, {0, 0, -5});
    REQUIRE(q);
    CHECK(q->pixel.x() == doctest::Approx(32.0));
    CHECK(q->pixel.y() == doctest::Approx(24.0));
    CHECK(q->depth == doctest::Approx(5.0));
    CHECK_FALSE(project_point(cam, {0, 0, 5}));
    CHECK_FALSE(project_point(cam, {1, 0, 0}));
}

TEST_CASE("project_point: round trip of random visible surface points") {
    const Scene scene(make_uv_sphere(1.0, 48, 24));
    const auto cams = generate_orbit_cameras(3, 0.3, 3.0, 0.9, 128, 96);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ux(0.0, 128.0), uy(0.0, 96.0);
    int tested = 0;
    while (tested < 1000) {
        const Camera& cam = cams[static_cast<std::size_t>(tested % 3)];
        const Eigen::Vector2d pix(ux(rng), uy(rng));
        const auto h = scene.intersect(generate_ray(cam, pix));
        if (!h) continue;
        const auto q = project_point(cam, h->position);
        REQUIRE(q);
        CHECK((q->pixel - pix).norm() < 0.5);
        const auto again = scene.intersect(generate_ray(cam, q->pixel));
        REQUIRE(again);
        CHECK((again->position - h->position).norm() < 1e-4);
        ++tested;
    }
}

TEST_CASE("gbuffer: fronto-parallel unit-uv quad filling the frame") {
    const double fov = 0.9, dist = 2.0;
    const double half = dist * std::tan(0.5 * fov);
    const Scene scene(make_quad(half));
    Camera cam;
    cam.origin = {0, 0, dist};
    cam.target = {0, 0, 0};
    cam.fov_y = fov;
    cam.width = cam.height = 16;
    const GBuffer g = rasterize_gbuffer(scene, cam, 4);
    const double expected = 1.0 / (16.0 * 16.0);
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            REQUIRE(g.pixel(x, y).covered);
            CHECK(std::abs(g.footprint_area(x, y) - expected) < 1e-6);
            // Pixel centre uv follows the affine mapping.
            CHECK(g.pixel(x, y).hit.uv.x() == doctest::Approx((x + 0.5) / 16.0));
        }
    }
}

TEST_CASE("gbuffer: background pixels carry no footprint") {
    const Scene scene(make_uv_sphere(0.2, 16, 8));
    Camera cam;
    cam.origin = {0, 0, 3};
    cam.target = {0, 0, 0};
    cam.width = cam.height = 32;
    const GBuffer g = rasterize_gbuffer(scene, cam, 4);
    CHECK_FALSE(g.pixel(0, 0).covered);
    CHECK(g.footprint_area(0, 0) == 0.0);
    for (int i = 0; i < 16; ++i) CHECK_FALSE(g.pixel_footprints(0, 0)[i].valid);
    CHECK(g.pixel(16, 16).covered);
}

TEST_CASE("gbuffer: subpixel quads tile the pixel and share corners") {
    const Scene scene(make_uv_sphere(1.0, 64, 32));
    const auto cam = generate_orbit_cameras(1, 0.2, 3.0, 0.9, 24, 24)[0];
    const int s = 4;
    const GBuffer g = rasterize_gbuffer(scene, cam, s);
    // Screen-space tiling is exact by construction: s*s quads of side 1/s.
    CHECK(s * s * (1.0 / s) * (1.0 / s) == 1.0);
    // Away from seams and silhouettes, horizontally adjacent subpixels use the
    // same lattice hits for their shared edge.
    int pairs = 0, shared = 0;
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 24; ++x) {
            if (!g.pixel(x, y).covered) continue;
            const auto* f = g.pixel_footprints(x, y);
            for (int i = 0; i < s * s; ++i) {
                CHECK(f[i].area >= 0.0);
                if (i % s + 1 == s || !f[i].valid || !f[i + 1].valid) continue;
                ++pairs;
                if (f[i].uv_corners[1] == f[i + 1].uv_corners[0] &&
                    f[i].uv_corners[2] == f[i + 1].uv_corners[3])
                    ++shared;
            }
        }
    }
    CHECK(pairs > 1000);
    CHECK(shared >= 0.95 * pairs);
}

TEST_CASE("gbuffer: footprint area scales with resolution^-2") {
    const Scene scene(make_uv_sphere(1.0, 128, 64));
    Camera base;
    base.origin = {0, 0.3, 3.0};
    base.target = {0, 0, 0};
    base.fov_y = 0.9;
    // Mean footprint over a fixed central image window at three resolutions.
    auto window_mean = [&](int res) {
        const GBuffer g = rasterize_gbuffer(scene, base.with_resolution(res, res), 4);
        double sum = 0.0;
        int n = 0;
        for (int y = res * 3 / 8; y < res * 5 / 8; ++y)
            for (int x = res * 3 / 8; x < res * 5 / 8; ++x) {
                REQUIRE(g.pixel(x, y).covered);
                sum += g.footprint_area(x, y);
                ++n;
            }
        return sum / n * res * res;
    };
    const double a = window_mean(32), b = window_mean(64), c = window_mean(128);
    CHECK(std::abs(b / a - 1.0) < 0.02);
    CHECK(std::abs(c / a - 1.0) < 0.02);
}

TEST_CASE("gbuffer: degenerate uv triangles give zero footprint") {
    Mesh m = make_quad(1.0);
    for (auto& uv : m.uvs) uv = {0.5, 0.5};
    const Scene scene(m);
    Camera cam;
    cam.origin = {0, 0, 3};
    cam.target = {0, 0, 0};
    cam.width = cam.height = 8;
    const GBuffer g = rasterize_gbuffer(scene, cam, 4);
    REQUIRE(g.pixel(4, 4).covered);
    CHECK(g.footprint_area(4, 4) == 0.0);
}

TEST_CASE("gbuffer: rasterization is deterministic") {
    const Scene scene(make_cube(0.8));
    const auto cam = generate_orbit_cameras(2, 0.4, 3.0, 0.9, 24, 24)[1];
    const GBuffer a = rasterize_gbuffer(scene, cam, 3);
    const GBuffer b = rasterize_gbuffer(scene, cam, 3);
    REQUIRE(a.footprints.size() == b.footprints.size());
    for (std::size_t i = 0; i < a.footprints.size(); ++i) {
        CHECK(a.footprints[i].area == b.footprints[i].area);
        CHECK(a.footprints[i].uv_center == b.footprints[i].uv_center);
    }
}

TEST_CASE("gbuffer: normal encoding maps a facing normal to (0.5, 0.5, 1)") {
    const Scene scene(make_quad(1.0));
    Camera cam;
    cam.origin = {0, 0, 3};
    cam.target = {0, 0, 0};
    cam.width = cam.height = 8;
    const GBuffer g = rasterize_gbuffer(scene, cam, 1);
    const Image n = encode_normals(g, cam, NormalSpace::Camera);
    CHECK(n.at(4, 4, 0) == doctest::Approx(0.5));
    CHECK(n.at(4, 4, 1) == doctest::Approx(0.5));
    CHECK(n.at(4, 4, 2) == doctest::Approx(1.0));
    const Image w = encode_normals(g, cam, NormalSpace::World);
    CHECK(w.at(4, 4, 2) == doctest::Approx(1.0));
}

TEST_CASE("obj: parse, round trip and malformed input") {
    const Mesh cube = make_cube(0.5);
    const auto path = std::filesystem::temp_directory_path() / "mvc_cube_test.obj";
    save_obj(cube, path);
    const Mesh back = load_obj(path);
    CHECK(back.triangle_count() == cube.triangle_count());
    for (std::size_t t = 0; t < back.triangle_count(); ++t)
        for (int k = 0; k < 3; ++k) {
            CHECK((back.vertices[back.triangles[t][k]] - cube.vertices[cube.triangles[t][k]]).norm() < 1e-12);
            CHECK((back.uvs[back.triangles[t][k]] - cube.uvs[cube.triangles[t][k]]).norm() < 1e-12);
        }
    std::filesystem::remove(path);

    CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"), InputError);
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nvt 0 0\nvn 0 0 1\nf 1/1/1 2/1/1 1/1/1\n"), InputError);
    CHECK_THROWS_AS(parse_obj("l 1 2\n"), InputError);
    const Mesh quad = parse_obj(
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nvn 0 0 2\n"
        "f 1/1/1 2/2/1 3/3/1 4/4/1\n");
    CHECK(quad.triangle_count() == 2);
    CHECK(quad.normals[0].norm() == doctest::Approx(1.0));
}
