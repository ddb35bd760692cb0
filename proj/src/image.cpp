#include "mvc/image.hpp"

#include "mvc/errors.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace mvc {

static_assert(std::endian::native == std::endian::little, "PFM/MVCN writers assume little-endian");

void write_pfm(const Image& image, const std::filesystem::path& path) {
    if (image.channels != 1 && image.channels != 3)
        throw InputError("pfm: only 1 or 3 channels supported");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path.string());
    f << (image.channels == 3 ? "PF" : "Pf") << '\n'
      << image.width << ' ' << image.height << '\n'
      << "-1.0\n";
    const std::size_t row = static_cast<std::size_t>(image.width) * image.channels;
    for (int y = image.height - 1; y >= 0; --y)
        f.write(reinterpret_cast<const char*>(image.data.data() + y * row),
                static_cast<std::streamsize>(row * sizeof(float)));
}

Image read_pfm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string());
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    f >> magic >> w >> h >> scale;
    f.get();
    if ((magic != "PF" && magic != "Pf") || w <= 0 || h <= 0 || !f)
        throw InputError("pfm: bad header in " + path.string());
    if (scale > 0.0) throw InputError("pfm: big-endian files are not supported");
    Image img(w, h, magic == "PF" ? 3 : 1);
    const std::size_t row = static_cast<std::size_t>(w) * img.channels;
    for (int y = h - 1; y >= 0; --y)
        if (!f.read(reinterpret_cast<char*>(img.data.data() + y * row),
                    static_cast<std::streamsize>(row * sizeof(float))))
            throw InputError("pfm: truncated data in " + path.string());
    return img;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

int png_color_type(int channels) {
    switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGB_ALPHA;
    default: throw InputError("png: unsupported channel count");
    }
}

} // namespace

void write_png(const Image& image, const std::filesystem::path& path, bool gamma_encode) {
    const int color = png_color_type(image.channels);
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw InputError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw InputError("png: allocation failed");
    }
    std::vector<unsigned char> bytes(image.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        double v = std::clamp(static_cast<double>(image.data[i]), 0.0, 1.0);
        if (gamma_encode) v = std::pow(v, 1.0 / 2.2);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InputError("png: write failed for " + path.string());
    }
    png_init_io(png, fp.get());
    // Fixed settings keep the encoded bytes identical across runs.
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels;
    for (int y = 0; y < image.height; ++y) png_write_row(png, bytes.data() + y * stride);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path, bool gamma_decode) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw InputError("cannot open " + path.string());
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw InputError("png: not a PNG file: " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw InputError("png: allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("png: decode failed for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_packing(png);
    png_set_expand(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int c = png_get_channels(png, info);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * c);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * w * c;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    Image img(w, h, c);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        double v = bytes[i] / 255.0;
        if (gamma_decode) v = std::pow(v, 2.2);
        img.data[i] = static_cast<float>(v);
    }
    return img;
}

} // namespace mvc
