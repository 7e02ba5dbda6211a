#pragma once

#include <cstdint>
#include <vector>

namespace cellscan {

// Row-major 8-bit RGB triples.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels; // width * height * 3

    std::uint8_t* px(std::size_t x, std::size_t y) { return &pixels[(y * width + x) * 3]; }
    const std::uint8_t* px(std::size_t x, std::size_t y) const {
        return &pixels[(y * width + x) * 3];
    }
};

// Row-major 8-bit intensities.
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels; // width * height

    std::uint8_t& px(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
    std::uint8_t px(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

// Real-valued single-channel field, the working type between Canny stages.
struct FieldImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> values;

    float& at(std::size_t x, std::size_t y) { return values[y * width + x]; }
    float at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

// ITU-R BT.601 luma: round(0.299 R + 0.587 G + 0.114 B).
GrayImage to_grayscale(const RgbImage& img);

// Bilinear resampling with pixel-center alignment and edge-clamped taps.
RgbImage resize_bilinear(const RgbImage& img, std::size_t out_w, std::size_t out_h);
GrayImage resize_bilinear(const GrayImage& img, std::size_t out_w, std::size_t out_h);

} // namespace cellscan
