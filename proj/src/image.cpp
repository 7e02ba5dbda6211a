#include "cellscan/image.hpp"

#include <algorithm>
#include <cmath>

#include "cellscan/error.hpp"

namespace cellscan {
namespace {

// Pixel-center sample position for output index i at scale in/out, clamped
// into the source grid. Returns the left tap index and the right-tap weight.
struct Tap {
    std::size_t lo;
    std::size_t hi;
    float frac;
};

Tap tap_for(std::size_t i, std::size_t out_size, std::size_t in_size) {
    double scale = double(in_size) / double(out_size);
    double src = (double(i) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    double max_idx = double(in_size - 1);
    if (src > max_idx) src = max_idx;
    std::size_t lo = static_cast<std::size_t>(src);
    std::size_t hi = std::min(lo + 1, in_size - 1);
    return {lo, hi, float(src - double(lo))};
}

std::uint8_t round_u8(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 255.0f)));
}

} // namespace

GrayImage to_grayscale(const RgbImage& img) {
    GrayImage out;
    out.width = img.width;
    out.height = img.height;
    out.pixels.resize(img.width * img.height);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        const std::uint8_t* p = &img.pixels[i * 3];
        double luma = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::min(luma, 255.0)));
    }
    return out;
}

RgbImage resize_bilinear(const RgbImage& img, std::size_t out_w, std::size_t out_h) {
    if (out_w == 0 || out_h == 0)
        throw ParamError("image", "resize target dimensions must be >= 1");
    if (out_w == img.width && out_h == img.height) return img;

    std::vector<Tap> xs(out_w), ys(out_h);
    for (std::size_t x = 0; x < out_w; ++x) xs[x] = tap_for(x, out_w, img.width);
    for (std::size_t y = 0; y < out_h; ++y) ys[y] = tap_for(y, out_h, img.height);

    RgbImage out;
    out.width = out_w;
    out.height = out_h;
    out.pixels.resize(out_w * out_h * 3);
    for (std::size_t y = 0; y < out_h; ++y) {
        const Tap& ty = ys[y];
        for (std::size_t x = 0; x < out_w; ++x) {
            const Tap& tx = xs[x];
            for (std::size_t c = 0; c < 3; ++c) {
                float v00 = img.px(tx.lo, ty.lo)[c];
                float v10 = img.px(tx.hi, ty.lo)[c];
                float v01 = img.px(tx.lo, ty.hi)[c];
                float v11 = img.px(tx.hi, ty.hi)[c];
                float top = v00 + (v10 - v00) * tx.frac;
                float bot = v01 + (v11 - v01) * tx.frac;
                out.pixels[(y * out_w + x) * 3 + c] = round_u8(top + (bot - top) * ty.frac);
            }
        }
    }
    return out;
}

GrayImage resize_bilinear(const GrayImage& img, std::size_t out_w, std::size_t out_h) {
    if (out_w == 0 || out_h == 0)
        throw ParamError("image", "resize target dimensions must be >= 1");
    if (out_w == img.width && out_h == img.height) return img;

    std::vector<Tap> xs(out_w), ys(out_h);
    for (std::size_t x = 0; x < out_w; ++x) xs[x] = tap_for(x, out_w, img.width);
    for (std::size_t y = 0; y < out_h; ++y) ys[y] = tap_for(y, out_h, img.height);

    GrayImage out;
    out.width = out_w;
    out.height = out_h;
    out.pixels.resize(out_w * out_h);
    for (std::size_t y = 0; y < out_h; ++y) {
        const Tap& ty = ys[y];
        for (std::size_t x = 0; x < out_w; ++x) {
            const Tap& tx = xs[x];
            float v00 = img.px(tx.lo, ty.lo);
            float v10 = img.px(tx.hi, ty.lo);
            float v01 = img.px(tx.lo, ty.hi);
            float v11 = img.px(tx.hi, ty.hi);
            float top = v00 + (v10 - v00) * tx.frac;
            float bot = v01 + (v11 - v01) * tx.frac;
            out.pixels[y * out_w + x] = round_u8(top + (bot - top) * ty.frac);
        }
    }
    return out;
}

} // namespace cellscan
