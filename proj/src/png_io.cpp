#include "cellscan/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <string>

#include "cellscan/error.hpp"

namespace cellscan {
namespace {

constexpr std::uint8_t kSignature[8] = {0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A};

std::uint32_t read_u32be(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

[[noreturn]] void decode_fail(std::size_t offset, const std::string& what) {
    throw DecodeError("image", "PNG at byte " + std::to_string(offset) + ": " + what);
}

struct Header {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint8_t bit_depth = 0;
    std::uint8_t color_type = 0;
    std::uint8_t interlace = 0;
};

std::size_t channels_for(std::uint8_t color_type) {
    switch (color_type) {
        case 0: return 1; // grayscale
        case 2: return 3; // RGB
        case 4: return 2; // gray + alpha
        case 6: return 4; // RGBA
        default: return 0;
    }
}

std::uint8_t paeth(std::uint8_t a, std::uint8_t b, std::uint8_t c) {
    int p = int(a) + int(b) - int(c);
    int pa = std::abs(p - int(a));
    int pb = std::abs(p - int(b));
    int pc = std::abs(p - int(c));
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

std::vector<std::uint8_t> inflate_idat(const std::vector<std::uint8_t>& compressed,
                                       std::size_t expected) {
    std::vector<std::uint8_t> out(expected);
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK)
        throw DecodeError("image", "zlib init failed");
    zs.next_in = const_cast<Bytef*>(compressed.data());
    zs.avail_in = static_cast<uInt>(compressed.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    int rc = inflate(&zs, Z_FINISH);
    std::size_t produced = out.size() - zs.avail_out;
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || produced != expected)
        throw DecodeError("image", "PNG image data is truncated or corrupt (inflated " +
                                       std::to_string(produced) + " of " +
                                       std::to_string(expected) + " bytes)");
    return out;
}

std::vector<std::uint8_t> deflate_bytes(const std::vector<std::uint8_t>& raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> out(bound);
    if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                  Z_DEFAULT_COMPRESSION) != Z_OK)
        throw IoError("image", "zlib compression failed");
    out.resize(bound);
    return out;
}

void unfilter_rows(std::vector<std::uint8_t>& raw, std::size_t width, std::size_t height,
                   std::size_t bpp) {
    std::size_t stride = width * bpp;
    std::vector<std::uint8_t> prev(stride, 0);
    for (std::size_t y = 0; y < height; ++y) {
        std::uint8_t* row = raw.data() + y * (stride + 1);
        std::uint8_t filter = row[0];
        std::uint8_t* cur = row + 1;
        switch (filter) {
            case 0:
                break;
            case 1: // Sub
                for (std::size_t i = bpp; i < stride; ++i) cur[i] += cur[i - bpp];
                break;
            case 2: // Up
                for (std::size_t i = 0; i < stride; ++i) cur[i] += prev[i];
                break;
            case 3: // Average
                for (std::size_t i = 0; i < bpp; ++i) cur[i] += prev[i] / 2;
                for (std::size_t i = bpp; i < stride; ++i)
                    cur[i] += std::uint8_t((int(cur[i - bpp]) + int(prev[i])) / 2);
                break;
            case 4: // Paeth
                for (std::size_t i = 0; i < bpp; ++i) cur[i] += paeth(0, prev[i], 0);
                for (std::size_t i = bpp; i < stride; ++i)
                    cur[i] += paeth(cur[i - bpp], prev[i], prev[i - bpp]);
                break;
            default:
                throw DecodeError("image", "PNG row " + std::to_string(y) +
                                               ": unknown filter type " + std::to_string(filter));
        }
        std::memcpy(prev.data(), cur, stride);
    }
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& data) {
    put_u32be(out, static_cast<std::uint32_t>(data.size()));
    std::size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0, out.data() + type_at, static_cast<uInt>(4 + data.size())));
    put_u32be(out, crc);
}

std::vector<std::uint8_t> encode_impl(std::size_t width, std::size_t height,
                                      const std::uint8_t* pixels, std::size_t channels) {
    std::vector<std::uint8_t> out(kSignature, kSignature + 8);

    std::vector<std::uint8_t> ihdr;
    put_u32be(ihdr, static_cast<std::uint32_t>(width));
    put_u32be(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8);                                  // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);              // color type
    ihdr.push_back(0);                                  // compression
    ihdr.push_back(0);                                  // filter method
    ihdr.push_back(0);                                  // no interlace
    append_chunk(out, "IHDR", ihdr);

    std::size_t stride = width * channels;
    std::vector<std::uint8_t> raw;
    raw.reserve(height * (stride + 1));
    for (std::size_t y = 0; y < height; ++y) {
        raw.push_back(0); // filter type 0 on every row
        raw.insert(raw.end(), pixels + y * stride, pixels + (y + 1) * stride);
    }
    append_chunk(out, "IDAT", deflate_bytes(raw));
    append_chunk(out, "IEND", {});
    return out;
}

} // namespace

RgbImage decode_png(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        decode_fail(0, "bad signature (not a PNG file)");

    Header hdr;
    bool have_header = false;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    bool done = false;

    while (!done) {
        if (pos + 8 > bytes.size())
            decode_fail(pos, "truncated chunk header");
        std::uint32_t len = read_u32be(&bytes[pos]);
        char type[5] = {};
        std::memcpy(type, &bytes[pos + 4], 4);
        if (pos + 12 + std::size_t(len) > bytes.size())
            decode_fail(pos, std::string("truncated ") + type + " chunk");
        const std::uint8_t* data = &bytes[pos + 8];
        std::uint32_t stored_crc = read_u32be(&bytes[pos + 8 + len]);
        std::uint32_t actual_crc = static_cast<std::uint32_t>(
            crc32(0, &bytes[pos + 4], static_cast<uInt>(4 + len)));
        if (stored_crc != actual_crc)
            decode_fail(pos, std::string("CRC mismatch in ") + type + " chunk");

        if (!have_header) {
            if (std::strcmp(type, "IHDR") != 0 || len != 13)
                decode_fail(pos, "first chunk is not a valid IHDR");
            hdr.width = read_u32be(data);
            hdr.height = read_u32be(data + 4);
            hdr.bit_depth = data[8];
            hdr.color_type = data[9];
            hdr.interlace = data[12];
            if (hdr.width == 0 || hdr.height == 0)
                decode_fail(pos, "zero image dimension");
            if (data[10] != 0 || data[11] != 0)
                decode_fail(pos, "unknown compression/filter method");
            if (hdr.bit_depth != 8)
                throw UnsupportedFormatError(
                    "image", "PNG bit depth " + std::to_string(hdr.bit_depth) +
                                 " not supported (only 8-bit)");
            if (channels_for(hdr.color_type) == 0)
                throw UnsupportedFormatError(
                    "image", "PNG color type " + std::to_string(hdr.color_type) +
                                 " not supported (grayscale, RGB, and alpha variants only)");
            if (hdr.interlace != 0)
                throw UnsupportedFormatError("image", "interlaced PNG not supported");
            have_header = true;
        } else if (std::strcmp(type, "IDAT") == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::strcmp(type, "IEND") == 0) {
            done = true;
        }
        // Ancillary chunks (tEXt, pHYs, ...) are skipped.
        pos += 12 + len;
    }

    if (idat.empty())
        decode_fail(pos, "no IDAT data before IEND");

    std::size_t ch = channels_for(hdr.color_type);
    std::size_t stride = std::size_t(hdr.width) * ch;
    auto raw = inflate_idat(idat, std::size_t(hdr.height) * (stride + 1));
    unfilter_rows(raw, hdr.width, hdr.height, ch);

    RgbImage img;
    img.width = hdr.width;
    img.height = hdr.height;
    img.pixels.resize(std::size_t(hdr.width) * hdr.height * 3);
    for (std::size_t y = 0; y < hdr.height; ++y) {
        const std::uint8_t* src = raw.data() + y * (stride + 1) + 1;
        std::uint8_t* dst = &img.pixels[y * hdr.width * 3];
        for (std::size_t x = 0; x < hdr.width; ++x) {
            const std::uint8_t* p = src + x * ch;
            switch (hdr.color_type) {
                case 0:
                case 4: // replicate gray, drop alpha
                    dst[x * 3 + 0] = dst[x * 3 + 1] = dst[x * 3 + 2] = p[0];
                    break;
                case 2:
                case 6: // copy RGB, drop alpha
                    dst[x * 3 + 0] = p[0];
                    dst[x * 3 + 1] = p[1];
                    dst[x * 3 + 2] = p[2];
                    break;
            }
        }
    }
    return img;
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
    if (img.width == 0 || img.height == 0 ||
        img.pixels.size() != img.width * img.height * 3)
        throw ParamError("image", "encode_png: inconsistent RgbImage");
    return encode_impl(img.width, img.height, img.pixels.data(), 3);
}

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
    if (img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height)
        throw ParamError("image", "encode_png: inconsistent GrayImage");
    return encode_impl(img.width, img.height, img.pixels.data(), 1);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("image", "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (!f.good() && !f.eof())
        throw IoError("image", "read failed for " + path.string());
    return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw IoError("image", "cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f.good())
        throw IoError("image", "write failed for " + path.string());
}

RgbImage load_png(const std::filesystem::path& path) {
    try {
        return decode_png(read_file(path));
    } catch (const DecodeError& e) {
        throw LoadError("image", path.string() + ": " + e.what());
    }
}

} // namespace cellscan
