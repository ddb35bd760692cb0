#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace mvc {

/// Interleaved float image, row 0 at the top.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.0f)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    float& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    bool operator==(const Image&) const = default;
};

/// Portable float map: "PF" (3 channels) or "Pf" (1 channel), little-endian
/// (negative scale), rows stored bottom to top.
void write_pfm(const Image& image, const std::filesystem::path& path);
Image read_pfm(const std::filesystem::path& path);

/// 8-bit PNG. Values are clamped to [0,1]; with `gamma_encode` each value is
/// raised to 1/2.2 before quantization (and 2.2 on read).
void write_png(const Image& image, const std::filesystem::path& path, bool gamma_encode);
Image read_png(const std::filesystem::path& path, bool gamma_decode);

} // namespace mvc
