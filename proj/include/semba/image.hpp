#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "semba/types.hpp"

namespace semba {

/// 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, int c, std::uint8_t fill = 0);

    ImageDims dims() const { return {width, height}; }
    bool empty() const { return pixels.empty(); }
    std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
};

/// Floating-point working copy used by the pyramid.
struct FloatImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    FloatImage() = default;
    FloatImage(int w, int h, int c) : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0.0f) {}
    explicit FloatImage(const Image& img);

    float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
};

/// Separable Gaussian blur with replicated borders.
FloatImage gaussian_blur(const FloatImage& src, double sigma);

/// Reads PNG, PPM (P6) or PGM (P5) by extension.
Image read_image(const std::filesystem::path& path);

/// Writes PNG, PPM or PGM by extension; PPM requires 3 channels, PGM 1.
void write_image(const Image& image, const std::filesystem::path& path);

}  // namespace semba
