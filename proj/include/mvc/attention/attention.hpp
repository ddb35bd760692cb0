#pragma once

#include "mvc/correspondence/correspondence.hpp"
#include "mvc/errors.hpp"
#include "mvc/image.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <type_traits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mvc {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct AttentionTensors {
    RowMatrix<Scalar> q; // N x d_k
    RowMatrix<Scalar> k; // N x d_k
    RowMatrix<Scalar> v; // N x d_v

    Eigen::Index n() const { return q.rows(); }
    Eigen::Index dk() const { return q.cols(); }
};

template <typename Scalar>
struct AttentionOutput {
    RowMatrix<Scalar> out;    // N x d_v
    Eigen::MatrixXd weights;  // row softmax, only when requested
};

/// Sparse bias B[i, j] in {0, w}, stored as sorted column lists per row.
class BiasProvider {
public:
    /// No biased pairs.
    BiasProvider(std::uint32_t n, double w);
    /// Throws InputError when w < 0 or w is not finite.
    BiasProvider(const ScaleCorrespondences& pairs, double w);

    std::uint32_t size() const { return n_; }
    double weight() const { return w_; }
    std::size_t pair_count() const { return cols_.size(); }

    double operator()(std::uint32_t i, std::uint32_t j) const;
    std::span<const std::uint32_t> row(std::uint32_t i) const {
        return {cols_.data() + offsets_[i], cols_.data() + offsets_[i + 1]};
    }
    /// Dense N x N matrix; small N only.
    Eigen::MatrixXd dense() const;

private:
    std::uint32_t n_;
    double w_;
    std::vector<std::size_t> offsets_;
    std::vector<std::uint32_t> cols_;
};

/// Bytes of scratch memory a blocked evaluation held at its peak.
struct AttentionStats {
    std::size_t auxiliary_bytes = 0;
};

namespace detail {

template <typename Scalar>
void validate_tensors(const AttentionTensors<Scalar>& t) {
    if (t.q.rows() < 1 || t.q.cols() < 1 || t.v.cols() < 1)
        throw InputError("attention: N, d_k and d_v must be >= 1");
    if (t.k.rows() != t.q.rows() || t.k.cols() != t.q.cols() || t.v.rows() != t.q.rows())
        throw InputError("attention: Q, K, V shapes disagree");
    if (!t.q.allFinite() || !t.k.allFinite() || !t.v.allFinite())
        throw InputError("attention: non-finite input");
}

} // namespace detail

/// softmax((Q K^T + B) / sqrt(d_k)) V with a dense bias, evaluated in double.
template <typename Scalar>
AttentionOutput<Scalar> dense_biased_attention(const AttentionTensors<Scalar>& t, const Eigen::MatrixXd& bias,
                                               bool keep_weights = false) {
    detail::validate_tensors(t);
    if (bias.rows() != t.n() || bias.cols() != t.n()) throw InputError("attention: bias must be N x N");
    if (!bias.allFinite()) throw InputError("attention: non-finite bias");
    const Eigen::MatrixXd q = t.q.template cast<double>(), k = t.k.template cast<double>();
    Eigen::MatrixXd s = (q * k.transpose() + bias) / std::sqrt(static_cast<double>(t.dk()));
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        s.row(r).array() = (s.row(r).array() - s.row(r).maxCoeff()).exp();
        s.row(r) /= s.row(r).sum();
    }
    AttentionOutput<Scalar> out;
    out.out = (s * t.v.template cast<double>()).template cast<Scalar>();
    if (keep_weights) out.weights = std::move(s);
    return out;
}

/// Same result as the dense form without materializing B or the score matrix.
/// K/V are streamed in column blocks; each row keeps a running max, softmax
/// denominator and numerator accumulator in double (online softmax), so scratch
/// memory is O(N d_v + block_size^2).
template <typename Scalar>
RowMatrix<Scalar> blocked_biased_attention(const AttentionTensors<Scalar>& t, const BiasProvider& bias,
                                           int block_size, AttentionStats* stats = nullptr) {
    detail::validate_tensors(t);
    if (block_size < 1) throw InputError("attention: block size must be >= 1");
    if (bias.size() != static_cast<std::uint32_t>(t.n())) throw InputError("attention: bias size must be N");
    const Eigen::Index n = t.n(), dk = t.dk(), dv = t.v.cols(), b = block_size;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    using Map = Eigen::Map<RowMatrix<double>>;
    using ConstMap = Eigen::Map<const RowMatrix<double>>;

    std::size_t bytes = 0;
    auto scratch = [&bytes](std::vector<double>& buf, std::size_t count, double fill) {
        buf.assign(count, fill);
        bytes += count * sizeof(double);
    };

    // Inputs in double; copies only when the input scalar is not double.
    std::vector<double> qbuf, kbuf, vbuf;
    const double *qd, *kd, *vd;
    if constexpr (std::is_same_v<Scalar, double>) {
        qd = t.q.data();
        kd = t.k.data();
        vd = t.v.data();
    } else {
        scratch(qbuf, static_cast<std::size_t>(n * dk), 0.0);
        scratch(kbuf, static_cast<std::size_t>(n * dk), 0.0);
        scratch(vbuf, static_cast<std::size_t>(n * dv), 0.0);
        Map(qbuf.data(), n, dk) = t.q.template cast<double>();
        Map(kbuf.data(), n, dk) = t.k.template cast<double>();
        Map(vbuf.data(), n, dv) = t.v.template cast<double>();
        qd = qbuf.data();
        kd = kbuf.data();
        vd = vbuf.data();
    }
    const ConstMap q(qd, n, dk), k(kd, n, dk), v(vd, n, dv);

    std::vector<double> acc_buf, max_buf, sum_buf, tile_buf;
    scratch(acc_buf, static_cast<std::size_t>(n * dv), 0.0);
    scratch(max_buf, static_cast<std::size_t>(n), -std::numeric_limits<double>::infinity());
    scratch(sum_buf, static_cast<std::size_t>(n), 0.0);
    int threads = 1;
#ifdef _OPENMP
    threads = omp_get_max_threads();
#endif
    scratch(tile_buf, static_cast<std::size_t>(threads) * static_cast<std::size_t>(b * b), 0.0);
    Map acc(acc_buf.data(), n, dv);

    for (Eigen::Index c0 = 0; c0 < n; c0 += b) {
        const Eigen::Index bc = std::min(b, n - c0);
        const Eigen::Index row_blocks = (n + b - 1) / b;
#pragma omp parallel for schedule(static)
        for (Eigen::Index rb = 0; rb < row_blocks; ++rb) {
            int thread = 0;
#ifdef _OPENMP
            thread = omp_get_thread_num();
#endif
            const Eigen::Index r0 = rb * b, br = std::min(b, n - r0);
            Map s(tile_buf.data() + static_cast<std::size_t>(thread) * static_cast<std::size_t>(b * b), br, bc);
            s.noalias() = q.middleRows(r0, br) * k.middleRows(c0, bc).transpose();
            for (Eigen::Index r = 0; r < br; ++r) {
                const auto cols = bias.row(static_cast<std::uint32_t>(r0 + r));
                auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<std::uint32_t>(c0));
                for (; it != cols.end() && *it < static_cast<std::uint32_t>(c0 + bc); ++it)
                    s(r, static_cast<Eigen::Index>(*it) - c0) += bias.weight();
            }
            s *= inv_sqrt_dk;
            for (Eigen::Index r = 0; r < br; ++r) {
                const Eigen::Index row = r0 + r;
                const double m_new = std::max(max_buf[row], s.row(r).maxCoeff());
                const double rescale = std::exp(max_buf[row] - m_new);
                s.row(r) = (s.row(r).array() - m_new).exp().matrix();
                sum_buf[row] = sum_buf[row] * rescale + s.row(r).sum();
                acc.row(row) *= rescale;
                max_buf[row] = m_new;
            }
            acc.middleRows(r0, br).noalias() += s * v.middleRows(c0, bc);
        }
    }

    RowMatrix<Scalar> out(n, dv);
    for (Eigen::Index r = 0; r < n; ++r) out.row(r) = (acc.row(r) / sum_buf[r]).template cast<Scalar>();
    if (stats) stats->auxiliary_bytes = bytes;
    return out;
}

/// Independent heads sharing one geometric bias.
template <typename Scalar>
std::vector<RowMatrix<Scalar>> multi_head_biased_attention(const std::vector<AttentionTensors<Scalar>>& heads,
                                                           const BiasProvider& bias, int block_size) {
    std::vector<RowMatrix<Scalar>> out;
    out.reserve(heads.size());
    for (const auto& h : heads) out.push_back(blocked_biased_attention(h, bias, block_size));
    return out;
}

/// Softmax weights of one row in double.
template <typename Scalar>
std::vector<double> attention_row(const AttentionTensors<Scalar>& t, const BiasProvider& bias, std::uint32_t row) {
    detail::validate_tensors(t);
    if (bias.size() != static_cast<std::uint32_t>(t.n()) || row >= bias.size())
        throw InputError("attention: row out of range");
    const Eigen::Index n = t.n();
    const double inv = 1.0 / std::sqrt(static_cast<double>(t.dk()));
    const Eigen::RowVectorXd qr = t.q.row(row).template cast<double>();
    std::vector<double> w(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j)
        w[j] = (qr.dot(t.k.row(j).template cast<double>()) + bias(row, static_cast<std::uint32_t>(j))) * inv;
    const double m = *std::max_element(w.begin(), w.end());
    double sum = 0.0;
    for (double& x : w) sum += (x = std::exp(x - m));
    for (double& x : w) x /= sum;
    return w;
}

/// Softmax row reshaped into one single-channel image per view of the grid.
std::vector<Image> row_weight_images(const std::vector<double>& weights, const LatentGrid& grid, int scale);

template <typename Scalar>
std::vector<Image> attention_row_image(const AttentionTensors<Scalar>& t, const BiasProvider& bias,
                                       std::uint32_t row, const LatentGrid& grid, int scale) {
    if (grid.size(scale) != static_cast<std::uint32_t>(t.n()))
        throw InputError("attention: latent grid size does not match N");
    return row_weight_images(attention_row(t, bias, row), grid, scale);
}

} // namespace mvc
