#pragma once

#include <cstdint>

#include "cellscan/image.hpp"

namespace cellscan {

// Gradient magnitude plus quantized orientation, the state between the
// Sobel and suppression stages.
//
// Conventions (the reference oracle follows the same ones):
//   - x grows right, y grows down; Gy is the downward derivative.
//   - direction_bin holds the gradient angle folded to [0, 180) and snapped
//     to the nearest of {0, 45, 90, 135} degrees, ties toward the lower
//     angle. Stored as 0..3.
struct GradientField {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> magnitude;
    std::vector<std::uint8_t> direction_bin;
};

struct CannyParams {
    float sigma = 1.4f;       // Gaussian std-dev, pixels
    float low_threshold = 50.0f;
    float high_threshold = 100.0f;
};

void validate(const CannyParams& params);

// Separable Gaussian of radius ceil(3*sigma), kernel normalized to unit
// mass, borders edge-clamped.
FieldImage gaussian_blur(const GrayImage& img, float sigma);

// 3x3 Sobel with edge-clamped borders; magnitude = sqrt(Gx^2 + Gy^2).
GradientField sobel_gradients(const FieldImage& img);

// Keeps a pixel iff its magnitude is >= both neighbors along its
// direction_bin axis. Border pixels (either neighbor off-image) go to 0.
FieldImage nonmax_suppression(const GradientField& g);

// Double-threshold linking: pixels >= high seed edges, pixels in
// [low, high) survive iff 8-connected to a seed through other survivors.
// Output is binary 0/255.
GrayImage hysteresis(const FieldImage& thinned, float low, float high);

// to_grayscale -> blur -> Sobel -> suppression -> hysteresis at the image's
// native resolution.
GrayImage canny_pipeline(const RgbImage& img, const CannyParams& params);

} // namespace cellscan
