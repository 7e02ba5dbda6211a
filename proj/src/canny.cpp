#include "cellscan/canny.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "cellscan/error.hpp"
#include "cellscan/thread_pool.hpp"

namespace cellscan {
namespace {

std::size_t clamp_idx(long v, std::size_t n) {
    if (v < 0) return 0;
    if (v >= long(n)) return n - 1;
    return std::size_t(v);
}

constexpr float kBinAngles[4] = {0.0f, 45.0f, 90.0f, 135.0f};

// Axis step per direction bin, in (dx, dy) with y down.
constexpr int kBinStep[4][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}};

std::uint8_t quantize_direction(float gx, float gy) {
    float deg = std::atan2(gy, gx) * (180.0f / 3.14159265358979323846f);
    if (deg < 0.0f) deg += 180.0f;
    if (deg >= 180.0f) deg -= 180.0f;
    std::uint8_t best = 0;
    float best_dist = 1e9f;
    for (std::uint8_t b = 0; b < 4; ++b) {
        float d = std::fabs(deg - kBinAngles[b]);
        d = std::min(d, 180.0f - d);
        if (d < best_dist) { // strict: ties keep the lower angle
            best_dist = d;
            best = b;
        }
    }
    return best;
}

} // namespace

void validate(const CannyParams& params) {
    if (!(params.sigma > 0.0f))
        throw ParamError("canny", "sigma must be > 0, got " + std::to_string(params.sigma));
    if (!(params.low_threshold >= 0.0f && params.low_threshold < params.high_threshold &&
          params.high_threshold <= 255.0f))
        throw ParamError("canny", "thresholds must satisfy 0 <= low < high <= 255, got low=" +
                                      std::to_string(params.low_threshold) +
                                      " high=" + std::to_string(params.high_threshold));
}

FieldImage gaussian_blur(const GrayImage& img, float sigma) {
    if (!(sigma > 0.0f))
        throw ParamError("canny", "sigma must be > 0");
    long radius = long(std::ceil(3.0f * sigma));
    std::vector<float> kernel(2 * radius + 1);
    double sum = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        double w = std::exp(-double(i) * double(i) / (2.0 * double(sigma) * double(sigma)));
        kernel[std::size_t(i + radius)] = float(w);
        sum += w;
    }
    for (float& w : kernel) w = float(double(w) / sum);

    std::size_t w = img.width, h = img.height;
    FieldImage horiz{w, h, std::vector<float>(w * h)};
    parallel_for(h, [&](std::size_t y0, std::size_t y1) {
        for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                float acc = 0.0f;
                for (long i = -radius; i <= radius; ++i)
                    acc += kernel[std::size_t(i + radius)] *
                           float(img.px(clamp_idx(long(x) + i, w), y));
                horiz.at(x, y) = acc;
            }
    });

    FieldImage out{w, h, std::vector<float>(w * h)};
    parallel_for(h, [&](std::size_t y0, std::size_t y1) {
        for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                float acc = 0.0f;
                for (long i = -radius; i <= radius; ++i)
                    acc += kernel[std::size_t(i + radius)] *
                           horiz.at(x, clamp_idx(long(y) + i, h));
                out.at(x, y) = acc;
            }
    });
    return out;
}

GradientField sobel_gradients(const FieldImage& img) {
    std::size_t w = img.width, h = img.height;
    if (w < 3 || h < 3)
        throw ParamError("canny", "image must be at least 3x3 for gradients, got " +
                                      std::to_string(w) + "x" + std::to_string(h));
    GradientField g;
    g.width = w;
    g.height = h;
    g.magnitude.resize(w * h);
    g.direction_bin.resize(w * h);

    parallel_for(h, [&](std::size_t y0, std::size_t y1) {
        for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                auto v = [&](long dx, long dy) {
                    return img.at(clamp_idx(long(x) + dx, w), clamp_idx(long(y) + dy, h));
                };
                float gx = (v(1, -1) + 2.0f * v(1, 0) + v(1, 1)) -
                           (v(-1, -1) + 2.0f * v(-1, 0) + v(-1, 1));
                float gy = (v(-1, 1) + 2.0f * v(0, 1) + v(1, 1)) -
                           (v(-1, -1) + 2.0f * v(0, -1) + v(1, -1));
                g.magnitude[y * w + x] = std::sqrt(gx * gx + gy * gy);
                g.direction_bin[y * w + x] = quantize_direction(gx, gy);
            }
    });
    return g;
}

FieldImage nonmax_suppression(const GradientField& g) {
    std::size_t w = g.width, h = g.height;
    FieldImage out{w, h, std::vector<float>(w * h, 0.0f)};
    parallel_for(h, [&](std::size_t y0, std::size_t y1) {
        for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const int* step = kBinStep[g.direction_bin[y * w + x]];
                long xa = long(x) + step[0], ya = long(y) + step[1];
                long xb = long(x) - step[0], yb = long(y) - step[1];
                if (xa < 0 || xa >= long(w) || ya < 0 || ya >= long(h) ||
                    xb < 0 || xb >= long(w) || yb < 0 || yb >= long(h))
                    continue; // border: suppressed
                float m = g.magnitude[y * w + x];
                if (m >= g.magnitude[std::size_t(ya) * w + std::size_t(xa)] &&
                    m >= g.magnitude[std::size_t(yb) * w + std::size_t(xb)])
                    out.values[y * w + x] = m;
            }
    });
    return out;
}

GrayImage hysteresis(const FieldImage& thinned, float low, float high) {
    if (!(low < high))
        throw ParamError("canny", "hysteresis requires low < high");
    std::size_t w = thinned.width, h = thinned.height;
    GrayImage out{w, h, std::vector<std::uint8_t>(w * h, 0)};

    // Seed with strong pixels, then grow through weak ones (8-connected).
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < w * h; ++i)
        if (thinned.values[i] >= high) {
            out.pixels[i] = 255;
            stack.push_back(i);
        }
    while (!stack.empty()) {
        std::size_t i = stack.back();
        stack.pop_back();
        std::size_t x = i % w, y = i / w;
        for (long dy = -1; dy <= 1; ++dy)
            for (long dx = -1; dx <= 1; ++dx) {
                long nx = long(x) + dx, ny = long(y) + dy;
                if (nx < 0 || nx >= long(w) || ny < 0 || ny >= long(h)) continue;
                std::size_t j = std::size_t(ny) * w + std::size_t(nx);
                if (out.pixels[j] == 0 && thinned.values[j] >= low) {
                    out.pixels[j] = 255;
                    stack.push_back(j);
                }
            }
    }
    return out;
}

GrayImage canny_pipeline(const RgbImage& img, const CannyParams& params) {
    validate(params);
    if (img.width < 3 || img.height < 3)
        throw ParamError("canny", "image must be at least 3x3");
    GrayImage gray = to_grayscale(img);
    FieldImage blurred = gaussian_blur(gray, params.sigma);
    GradientField grad = sobel_gradients(blurred);
    FieldImage thinned = nonmax_suppression(grad);
    return hysteresis(thinned, params.low_threshold, params.high_threshold);
}

} // namespace cellscan
