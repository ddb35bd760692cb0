#include "mvc/attention/attention.hpp"

namespace mvc {

BiasProvider::BiasProvider(std::uint32_t n, double w) : n_(n), w_(w), offsets_(static_cast<std::size_t>(n) + 1, 0) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("bias weight must be finite and >= 0");
}

BiasProvider::BiasProvider(const ScaleCorrespondences& pairs, double w) : BiasProvider(pairs.n, w) {
    cols_.reserve(pairs.pairs.size());
    for (std::size_t k = 0; k < pairs.pairs.size(); ++k) {
        const auto [i, j] = pairs.pairs[k];
        if (i >= n_ || j >= n_) throw InputError("bias pair index out of range");
        if (k > 0 && !(pairs.pairs[k - 1] < pairs.pairs[k])) throw InputError("bias pairs must be sorted and unique");
        ++offsets_[i + 1];
        cols_.push_back(j);
    }
    for (std::size_t r = 0; r < n_; ++r) offsets_[r + 1] += offsets_[r];
}

double BiasProvider::operator()(std::uint32_t i, std::uint32_t j) const {
    const auto r = row(i);
    return std::binary_search(r.begin(), r.end(), j) ? w_ : 0.0;
}

Eigen::MatrixXd BiasProvider::dense() const {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n_, n_);
    for (std::uint32_t i = 0; i < n_; ++i)
        for (std::uint32_t j : row(i)) b(i, j) = w_;
    return b;
}

std::vector<Image> row_weight_images(const std::vector<double>& weights, const LatentGrid& grid, int scale) {
    if (weights.size() != grid.size(scale)) throw InputError("row length does not match the latent grid");
    const int lw = grid.latent_width(scale), lh = grid.latent_height(scale);
    std::vector<Image> images;
    for (int v = 0; v < grid.views(); ++v) {
        Image img;
        img.width = lw;
        img.height = lh;
        img.channels = 1;
        img.data.resize(static_cast<std::size_t>(lw) * lh);
        for (int y = 0; y < lh; ++y)
            for (int x = 0; x < lw; ++x)
                img.data[static_cast<std::size_t>(y) * lw + x] =
                    static_cast<float>(weights[grid.index({v, x, y}, scale)]);
        images.push_back(std::move(img));
    }
    return images;
}

} // namespace mvc
