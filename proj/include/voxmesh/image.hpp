#pragma once

// RGB images with values in [0,1] plus 8-bit PNG round-tripping (libpng).

#include <cstdio>
#include <memory>
#include <vector>

#include <png.h>

#include "voxmesh/core.hpp"

namespace voxmesh {

struct Image {
    int width = 0, height = 0;
    std::vector<double> rgb;  // 3 * width * height, row-major

    Image() = default;
    Image(int w, int h, double fill = 0.0) : width(w), height(h), rgb(size_t(3) * w * h, fill) {}

    double& at(int x, int y, int c) { return rgb[(size_t(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return rgb[(size_t(y) * width + x) * 3 + c]; }

    void set_pixel(int x, int y, const Vec3& color) {
        at(x, y, 0) = color.x;
        at(x, y, 1) = color.y;
        at(x, y, 2) = color.z;
    }
    Vec3 pixel(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }

    // Snaps every channel to the nearest 8-bit level so that a PNG round trip
    // reproduces the in-memory image bit-exactly.
    void quantize8() {
        for (double& v : rgb) {
            int q = int(std::lround(clamp(v, 0.0, 1.0) * 255.0));
            v = q / 255.0;
        }
    }
};

inline double image_mse(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::runtime_error("image_mse: shape mismatch");
    double s = 0;
    for (size_t i = 0; i < a.rgb.size(); ++i) {
        double d = a.rgb[i] - b.rgb[i];
        s += d * d;
    }
    return a.rgb.empty() ? 0.0 : s / double(a.rgb.size());
}

inline void write_png(const Image& img, const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("write_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("write_png: libpng failure for " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(size_t(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                row[size_t(x) * 3 + c] =
                    png_byte(std::lround(clamp(img.at(x, y, c), 0.0, 1.0) * 255.0));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline Image read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("read_png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw std::runtime_error("read_png: libpng failure for " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    Image img(int(png_get_image_width(png, info)), int(png_get_image_height(png, info)));
    std::vector<png_byte> row(size_t(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = row[size_t(x) * 3 + c] / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

}  // namespace voxmesh
