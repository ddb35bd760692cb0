#pragma once

// Direct-summation attention in long double, one row at a time.

#include "mvc/attention/attention.hpp"

#include <cmath>

namespace mvc::oracle {

template <typename Scalar>
Eigen::MatrixXd extended_precision_attention(const AttentionTensors<Scalar>& t, const Eigen::MatrixXd& bias) {
    const Eigen::Index n = t.n(), dk = t.dk(), dv = t.v.cols();
    const long double scale = 1.0L / std::sqrt(static_cast<long double>(dk));
    Eigen::MatrixXd out(n, dv);
    std::vector<long double> logits(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        long double mx = -INFINITY;
        for (Eigen::Index j = 0; j < n; ++j) {
            long double s = 0.0L;
            for (Eigen::Index c = 0; c < dk; ++c)
                s += static_cast<long double>(t.q(i, c)) * static_cast<long double>(t.k(j, c));
            logits[j] = (s + static_cast<long double>(bias(i, j))) * scale;
            mx = std::max(mx, logits[j]);
        }
        long double sum = 0.0L;
        for (auto& l : logits) sum += (l = std::exp(l - mx));
        for (Eigen::Index c = 0; c < dv; ++c) {
            long double acc = 0.0L;
            for (Eigen::Index j = 0; j < n; ++j) acc += logits[j] * static_cast<long double>(t.v(j, c));
            out(i, c) = static_cast<double>(acc / sum);
        }
    }
    return out;
}

} // namespace mvc::oracle
