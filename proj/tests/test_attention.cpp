#include "alloc_tracker.hpp"
#include "attention_oracle.hpp"
#include "mvc/attention/attention.hpp"
#include "mvc/correspondence/correspondence.hpp"
#include "mvc/geometry/mesh.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace mvc;

namespace {

template <typename Scalar = double>
AttentionTensors<Scalar> random_tensors(int n, int dk, int dv, std::mt19937_64& rng, double spread = 1.0) {
    std::normal_distribution<double> g(0.0, spread);
    AttentionTensors<Scalar> t;
    t.q.resize(n, dk);
    t.k.resize(n, dk);
    t.v.resize(n, dv);
    t.q = t.q.unaryExpr([&](Scalar) { return static_cast<Scalar>(g(rng)); });
    t.k = t.k.unaryExpr([&](Scalar) { return static_cast<Scalar>(g(rng)); });
    t.v = t.v.unaryExpr([&](Scalar) { return static_cast<Scalar>(g(rng)); });
    return t;
}

ScaleCorrespondences random_pairs(std::uint32_t n, double density, std::mt19937_64& rng) {
    std::bernoulli_distribution keep(density);
    ScaleCorrespondences s;
    s.n = n;
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < n; ++j)
            if (i != j && keep(rng)) s.pairs.emplace_back(i, j);
    return s;
}

template <typename A, typename B>
double max_relative(const A& a, const B& b) {
    const Eigen::MatrixXd ad = a.template cast<double>(), bd = b.template cast<double>();
    return (ad - bd).cwiseAbs().maxCoeff() / std::max(bd.cwiseAbs().maxCoeff(), 1e-300);
}

// Plain softmax(Q K^T / sqrt(d)) V written without any bias machinery.
Eigen::MatrixXd plain_attention(const AttentionTensors<double>& t) {
    Eigen::MatrixXd s = t.q * t.k.transpose() / std::sqrt(static_cast<double>(t.dk()));
    Eigen::MatrixXd out(t.n(), t.v.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const Eigen::RowVectorXd e = (s.row(i).array() - s.row(i).maxCoeff()).exp();
        out.row(i) = e * t.v / e.sum();
    }
    return out;
}

} // namespace

TEST_CASE("attention: closed-form two-token softmax") {
    AttentionTensors<double> t;
    t.q = RowMatrix<double>::Zero(2, 1);
    t.k = RowMatrix<double>::Zero(2, 1);
    t.v.resize(2, 1);
    t.v << 1.0, 0.0;
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(2, 2);
    b(0, 1) = std::log(3.0);
    const auto dense = dense_biased_attention(t, b, true);
    CHECK(std::abs(dense.weights(0, 0) - 0.25) < 1e-15);
    CHECK(std::abs(dense.weights(0, 1) - 0.75) < 1e-15);
    CHECK(std::abs(dense.out(0, 0) - 0.25) < 1e-15);
    ScaleCorrespondences pairs;
    pairs.n = 2;
    pairs.pairs = {{0, 1}};
    for (int block : {1, 2, 5}) {
        const auto out = blocked_biased_attention(t, BiasProvider(pairs, std::log(3.0)), block);
        CHECK(std::abs(out(0, 0) - 0.25) < 1e-15);
        CHECK(std::abs(out(1, 0) - 0.5) < 1e-15);
    }
}

TEST_CASE("attention: zero bias is plain attention") {
    std::mt19937_64 rng(1);
    const auto t = random_tensors(96, 16, 8, rng);
    const Eigen::MatrixXd plain = plain_attention(t);
    CHECK(max_relative(dense_biased_attention(t, Eigen::MatrixXd::Zero(96, 96)).out, plain) < 1e-6);
    CHECK(max_relative(blocked_biased_attention(t, BiasProvider(96, 0.0), 16), plain) < 1e-6);
}

TEST_CASE("attention: dense form matches extended precision") {
    std::mt19937_64 rng(2);
    const auto t = random_tensors(64, 8, 8, rng);
    const BiasProvider bias(random_pairs(64, 0.1, rng), 1.5);
    const Eigen::MatrixXd ref = oracle::extended_precision_attention(t, bias.dense());
    CHECK(max_relative(dense_biased_attention(t, bias.dense()).out, ref) < 1e-10);
    CHECK(max_relative(blocked_biased_attention(t, bias, 7), ref) < 1e-10);
}

TEST_CASE("attention: blocked equals dense for N <= 512") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> w(0.0, 3.5);
    int instances = 0;
    for (int n : {1, 2, 5, 33, 64, 130, 257, 512})
        for (int block : {1, 4, 32, 100, 600}) {
            if (n >= 257 && block < 4) continue;
            const auto t = random_tensors(n, 8, 5, rng, 1.5);
            const BiasProvider bias(random_pairs(static_cast<std::uint32_t>(n), 0.05, rng), w(rng));
            const auto dense = dense_biased_attention(t, bias.dense());
            CHECK(max_relative(blocked_biased_attention(t, bias, block), dense.out) < 1e-5);
            ++instances;
        }
    CHECK(instances >= 35);
}

TEST_CASE("attention: single precision inputs") {
    std::mt19937_64 rng(4);
    const auto t = random_tensors<float>(200, 16, 8, rng);
    const BiasProvider bias(random_pairs(200, 0.05, rng), 2.0);
    const auto dense = dense_biased_attention(t, bias.dense());
    CHECK(max_relative(blocked_biased_attention(t, bias, 64), dense.out) < 1e-5);
}

TEST_CASE("attention: zero weight provider is bit-identical to unbiased") {
    std::mt19937_64 rng(5);
    const auto t = random_tensors(150, 8, 4, rng);
    const auto a = blocked_biased_attention(t, BiasProvider(random_pairs(150, 0.2, rng), 0.0), 32);
    const auto b = blocked_biased_attention(t, BiasProvider(150, 0.0), 32);
    CHECK(a == b);
}

TEST_CASE("attention: rows are stochastic and outputs convex") {
    std::mt19937_64 rng(6);
    const auto t = random_tensors(80, 8, 3, rng, 2.0);
    const BiasProvider bias(random_pairs(80, 0.1, rng), 3.0);
    const auto dense = dense_biased_attention(t, bias.dense(), true);
    for (Eigen::Index i = 0; i < 80; ++i) CHECK(std::abs(dense.weights.row(i).sum() - 1.0) < 1e-5);
    const auto out = blocked_biased_attention(t, bias, 16);
    for (Eigen::Index c = 0; c < 3; ++c) {
        CHECK(out.col(c).minCoeff() >= t.v.col(c).minCoeff() - 1e-12);
        CHECK(out.col(c).maxCoeff() <= t.v.col(c).maxCoeff() + 1e-12);
    }
}

TEST_CASE("attention: biased mass grows with w") {
    std::mt19937_64 rng(7);
    const auto t = random_tensors(60, 8, 2, rng);
    const ScaleCorrespondences pairs = random_pairs(60, 0.1, rng);
    std::vector<double> previous(60, -1.0);
    for (double w : {0.0, 0.5, 1.2, 1.8, 3.5}) {
        const BiasProvider bias(pairs, w);
        const auto dense = dense_biased_attention(t, bias.dense(), true);
        for (std::uint32_t i = 0; i < 60; ++i) {
            const auto cols = bias.row(i);
            if (cols.empty() || cols.size() == 59) continue;
            double mass = 0.0;
            for (std::uint32_t j : cols) mass += dense.weights(i, j);
            CHECK(mass > previous[i]);
            previous[i] = mass;
        }
    }
}

TEST_CASE("attention: row shift invariance") {
    std::mt19937_64 rng(8);
    const auto t = random_tensors(40, 4, 4, rng);
    const BiasProvider bias(random_pairs(40, 0.1, rng), 1.0);
    Eigen::MatrixXd shifted = bias.dense();
    shifted.row(17).array() += 1e3;
    const auto a = dense_biased_attention(t, bias.dense());
    const auto b = dense_biased_attention(t, shifted);
    CHECK(max_relative(b.out, a.out) < 1e-10);
}

TEST_CASE("attention: boosted weights scale by exp(w / sqrt(d_k)) before normalization") {
    std::mt19937_64 rng(9);
    const auto t = random_tensors(50, 4, 2, rng);
    ScaleCorrespondences pairs;
    pairs.n = 50;
    for (std::uint32_t j : {3u, 4u, 5u}) pairs.pairs.emplace_back(10u, j);
    const double w = 1.7;
    const auto base = attention_row(t, BiasProvider(50, 0.0), 10);
    const auto boosted = attention_row(t, BiasProvider(pairs, w), 10);
    // The ratio of a boosted to an unboosted weight grows by exactly the factor.
    const double factor = std::exp(w / 2.0);
    CHECK(std::abs((boosted[4] / boosted[20]) / (base[4] / base[20]) - factor) < 1e-12);
}

TEST_CASE("attention: row image layout") {
    const LatentGrid grid(4, 2, 2, 64, 64);
    const std::uint32_t n = grid.size(2);
    AttentionTensors<double> t;
    t.q = RowMatrix<double>::Ones(n, 4);
    t.k = RowMatrix<double>::Ones(n, 4);
    t.v = RowMatrix<double>::Ones(n, 1);
    const auto images = attention_row_image(t, BiasProvider(n, 0.0), 5, grid, 2);
    REQUIRE(images.size() == 4);
    double total = 0.0;
    for (const Image& img : images) {
        CHECK(img.width == 4);
        for (float v : img.data) {
            CHECK(std::abs(v - 1.0 / n) < 1e-7);
            total += v;
        }
    }
    CHECK(std::abs(total - 1.0) < 1e-5);
}

TEST_CASE("attention: sphere row image peaks inside the reprojected neighborhood") {
    const Scene scene(make_uv_sphere(1.0, 64, 32));
    auto cams = generate_orbit_cameras(12, 0.2, 3.0, 0.8, 128, 128);
    cams.resize(3); // 30 degrees apart
    const LatentGrid grid(3, 1, 3, 128, 128);
    const int scale = 1;
    const ScaleCorrespondences pairs = compute_scale_correspondences(scene, cams, grid, scale);
    const std::uint32_t n = grid.size(scale);
    // Identical queries and keys: only the bias distinguishes columns.
    AttentionTensors<double> t;
    t.q = RowMatrix<double>::Constant(n, 8, 0.1);
    t.k = RowMatrix<double>::Constant(n, 8, 0.1);
    t.v = RowMatrix<double>::Ones(n, 1);
    const std::uint32_t row = grid.index({0, 8, 8}, scale);
    const auto images = attention_row_image(t, BiasProvider(pairs, 3.0), row, grid, scale);
    const auto hit = scene.intersect(latent_center_ray(cams[0], 8, 8, scale));
    REQUIRE(hit);
    for (int v = 1; v < 3; ++v) {
        const auto q = project_point(cams[static_cast<std::size_t>(v)], hit->position);
        REQUIRE(q);
        const Image& img = images[static_cast<std::size_t>(v)];
        REQUIRE(*std::min_element(img.data.begin(), img.data.end()) <
                *std::max_element(img.data.begin(), img.data.end()));
        const float peak = *std::max_element(img.data.begin(), img.data.end());
        int peaks = 0;
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                if (img.data[static_cast<std::size_t>(y) * img.width + x] != peak) continue;
                ++peaks;
                // Each boosted pixel sees a point that reprojects into the neighborhood of the row pixel.
                const auto pj = scene.intersect(latent_center_ray(cams[static_cast<std::size_t>(v)], x, y, scale));
                REQUIRE(pj);
                const auto back = project_point(cams[0], pj->position);
                REQUIRE(back);
                CHECK(std::abs(std::floor(back->pixel.x() / 8.0) - 8) <= 4);
                CHECK(std::abs(std::floor(back->pixel.y() / 8.0) - 8) <= 4);
            }
        // The latent pixel containing the reprojection is itself boosted.
        const int qx = static_cast<int>(q->pixel.x() / 8.0), qy = static_cast<int>(q->pixel.y() / 8.0);
        CHECK(img.data[static_cast<std::size_t>(qy) * img.width + qx] == peak);
        CHECK(peaks > 0);
    }
}

TEST_CASE("attention: input validation") {
    AttentionTensors<double> t;
    t.q = RowMatrix<double>::Zero(3, 2);
    t.k = RowMatrix<double>::Zero(3, 2);
    t.v = RowMatrix<double>::Zero(3, 1);
    t.q(1, 1) = std::nan("");
    CHECK_THROWS_AS(blocked_biased_attention(t, BiasProvider(3, 1.0), 2), InputError);
    t.q(1, 1) = 0.0;
    CHECK_THROWS_AS(blocked_biased_attention(t, BiasProvider(3, 1.0), 0), InputError);
    CHECK_THROWS_AS(blocked_biased_attention(t, BiasProvider(4, 1.0), 2), InputError);
    CHECK_THROWS_AS(BiasProvider(3, -1.0), InputError);
    t.k = RowMatrix<double>::Zero(2, 2);
    CHECK_THROWS_AS(dense_biased_attention(t, Eigen::MatrixXd::Zero(3, 3)), InputError);
}

TEST_CASE("attention: heap use of the blocked kernel stays linear in N") {
    std::mt19937_64 rng(10);
    for (int n : {1024, 2048, 4096}) {
        const auto t = random_tensors(n, 32, 32, rng);
        const BiasProvider bias(n, 1.0);
        oracle::reset_heap_peak();
        const std::size_t before = oracle::live_heap_bytes();
        AttentionStats stats;
        const auto out = blocked_biased_attention(t, bias, 64, &stats);
        const std::size_t measured = oracle::peak_heap_bytes() - before;
        const std::size_t output = static_cast<std::size_t>(out.size()) * sizeof(double);
        // Everything beyond the output is the kernel's own accounted scratch, up to allocator slack.
        CHECK(measured >= stats.auxiliary_bytes);
        CHECK(measured <= stats.auxiliary_bytes + output + 64 * 1024);
        CHECK(stats.auxiliary_bytes < static_cast<std::size_t>(n) * n * 4 / 10);
    }
}
