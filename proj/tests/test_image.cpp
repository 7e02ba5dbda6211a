#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <cstring>

#include "cellscan/error.hpp"
#include "cellscan/image.hpp"
#include "cellscan/png_io.hpp"
#include "cellscan/rng.hpp"
#include "support/synthetic.hpp"

using namespace cellscan;

namespace {

// Hand-rolled PNG chunk builder so decode tests do not depend on the
// library's own encoder.
void put_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

void chunk(std::vector<std::uint8_t>& out, const char* type,
           const std::vector<std::uint8_t>& data) {
    put_be(out, std::uint32_t(data.size()));
    std::size_t at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    put_be(out, std::uint32_t(crc32(0, out.data() + at, uInt(4 + data.size()))));
}

std::vector<std::uint8_t> build_png(std::uint32_t w, std::uint32_t h, std::uint8_t depth,
                                    std::uint8_t color_type,
                                    const std::vector<std::uint8_t>& raw_scanlines) {
    std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    std::vector<std::uint8_t> ihdr;
    put_be(ihdr, w);
    put_be(ihdr, h);
    ihdr.push_back(depth);
    ihdr.push_back(color_type);
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    chunk(png, "IHDR", ihdr);

    uLongf bound = compressBound(uLong(raw_scanlines.size()));
    std::vector<std::uint8_t> idat(bound);
    REQUIRE(compress2(idat.data(), &bound, raw_scanlines.data(), uLong(raw_scanlines.size()),
                      6) == Z_OK);
    idat.resize(bound);
    chunk(png, "IDAT", idat);
    chunk(png, "IEND", {});
    return png;
}

} // namespace

TEST_CASE("decode_png reads a hand-built 1x1 white RGB file") {
    auto png = build_png(1, 1, 8, 2, {0, 255, 255, 255}); // filter 0 + one pixel
    RgbImage img = decode_png(png);
    CHECK(img.width == 1);
    CHECK(img.height == 1);
    CHECK(img.pixels == std::vector<std::uint8_t>{255, 255, 255});
}

TEST_CASE("decode_png expands grayscale to RGB by replication") {
    auto png = build_png(2, 1, 8, 0, {0, 7, 200});
    RgbImage img = decode_png(png);
    CHECK(img.pixels == std::vector<std::uint8_t>{7, 7, 7, 200, 200, 200});
}

TEST_CASE("decode_png rejects malformed and unsupported streams") {
    auto png = build_png(1, 1, 8, 2, {0, 1, 2, 3});

    SUBCASE("truncated") {
        png.resize(png.size() / 2);
        CHECK_THROWS_AS(decode_png(png), DecodeError);
    }
    SUBCASE("bad signature") {
        png[0] = 0x42;
        CHECK_THROWS_AS(decode_png(png), DecodeError);
    }
    SUBCASE("corrupted CRC") {
        png[png.size() - 5] ^= 0xFF; // inside IEND's CRC
        CHECK_THROWS_AS(decode_png(png), DecodeError);
    }
    SUBCASE("16-bit depth") {
        auto deep = build_png(1, 1, 16, 2, {0, 0, 1, 0, 2, 0, 3});
        CHECK_THROWS_AS(decode_png(deep), UnsupportedFormatError);
    }
    SUBCASE("palette color type") {
        auto pal = build_png(1, 1, 8, 3, {0, 0});
        CHECK_THROWS_AS(decode_png(pal), UnsupportedFormatError);
    }
    SUBCASE("empty input") {
        CHECK_THROWS_AS(decode_png({}), DecodeError);
    }
}

TEST_CASE("png round trip: decode(encode(img)) is pixel-identical") {
    Rng rng(31);
    for (int it = 0; it < 5; ++it) {
        RgbImage img = synth::noise_rgb(1 + rng.next_below(40), 1 + rng.next_below(40), rng);
        RgbImage back = decode_png(encode_png(img));
        CHECK(back.width == img.width);
        CHECK(back.height == img.height);
        CHECK(back.pixels == img.pixels);
    }
}

TEST_CASE("gray png round trip through rgb replication") {
    Rng rng(32);
    GrayImage gray{9, 5, {}};
    gray.pixels.resize(45);
    for (auto& p : gray.pixels) p = std::uint8_t(rng.next_below(256));
    RgbImage back = decode_png(encode_png(gray));
    for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
        CHECK(back.pixels[i * 3] == gray.pixels[i]);
        CHECK(back.pixels[i * 3 + 1] == gray.pixels[i]);
        CHECK(back.pixels[i * 3 + 2] == gray.pixels[i]);
    }
}

TEST_CASE("all filter types decode correctly") {
    // Two rows, filters Sub and Up, 8-bit RGB 2x2.
    std::vector<std::uint8_t> raw = {
        1, 10, 20, 30, 5, 5, 5,   // Sub: second pixel = first + (5,5,5)
        2, 1, 1, 1, 2, 2, 2,      // Up: adds the row above
    };
    RgbImage img = decode_png(build_png(2, 2, 8, 2, raw));
    CHECK(img.pixels == std::vector<std::uint8_t>{10, 20, 30, 15, 25, 35, 11, 21, 31, 17, 27, 37});
}

TEST_CASE("gray encoding is smaller than rgb for the same content") {
    GrayImage gray{64, 64, std::vector<std::uint8_t>(64 * 64, 0)};
    RgbImage rgb = synth::solid_rgb(64, 64, 0, 0, 0);
    CHECK(encode_png(gray).size() < encode_png(rgb).size());
}

TEST_CASE("to_grayscale uses BT.601 luma") {
    RgbImage img{3, 1, {255, 255, 255, 255, 0, 0, 0, 0, 0}};
    GrayImage g = to_grayscale(img);
    CHECK(g.pixels[0] == 255);
    CHECK(g.pixels[1] == 76); // round(0.299 * 255)
    CHECK(g.pixels[2] == 0);
}

TEST_CASE("to_grayscale is a pure per-pixel map") {
    Rng rng(8);
    RgbImage img = synth::noise_rgb(13, 7, rng);
    RgbImage reversed = img;
    std::size_t n = img.width * img.height;
    for (std::size_t i = 0; i < n; ++i)
        std::memcpy(&reversed.pixels[(n - 1 - i) * 3], &img.pixels[i * 3], 3);
    GrayImage a = to_grayscale(img);
    GrayImage b = to_grayscale(reversed);
    for (std::size_t i = 0; i < n; ++i) CHECK(a.pixels[i] == b.pixels[n - 1 - i]);
}

TEST_CASE("resize_bilinear keeps constants constant") {
    RgbImage img = synth::solid_rgb(17, 9, 128, 128, 128);
    RgbImage out = resize_bilinear(img, 64, 64);
    for (auto p : out.pixels) CHECK(p == 128);
}

TEST_CASE("resize_bilinear with equal dims is the identity") {
    Rng rng(3);
    RgbImage img = synth::noise_rgb(21, 13, rng);
    RgbImage out = resize_bilinear(img, 21, 13);
    CHECK(out.pixels == img.pixels);
}

TEST_CASE("resize_bilinear 2x1 upsample matches hand-computed taps") {
    GrayImage img{2, 1, {0, 255}};
    GrayImage out = resize_bilinear(img, 4, 1);
    // centers map to src -0.25, 0.25, 0.75, 1.25 -> clamped lerps
    CHECK(out.pixels == std::vector<std::uint8_t>{0, 64, 191, 255});
    for (std::size_t i = 1; i < out.pixels.size(); ++i)
        CHECK(out.pixels[i] >= out.pixels[i - 1]);
}

TEST_CASE("resize_bilinear output stays within input min/max") {
    Rng rng(44);
    for (int it = 0; it < 5; ++it) {
        GrayImage img{4 + rng.next_below(30), 4 + rng.next_below(30), {}};
        img.pixels.resize(img.width * img.height);
        std::uint8_t lo = 255, hi = 0;
        for (auto& p : img.pixels) {
            p = std::uint8_t(40 + rng.next_below(150));
            lo = std::min(lo, p);
            hi = std::max(hi, p);
        }
        GrayImage out = resize_bilinear(img, 1 + rng.next_below(50), 1 + rng.next_below(50));
        for (auto p : out.pixels) {
            CHECK(p >= lo);
            CHECK(p <= hi);
        }
    }
}

TEST_CASE("resize_bilinear rejects zero target dims") {
    GrayImage img{2, 2, {0, 0, 0, 0}};
    CHECK_THROWS_AS(resize_bilinear(img, 0, 4), ParamError);
    CHECK_THROWS_AS(resize_bilinear(img, 4, 0), ParamError);
}
