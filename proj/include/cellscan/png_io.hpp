#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cellscan/image.hpp"

namespace cellscan {

// Decodes an 8-bit PNG. Grayscale and gray+alpha files are expanded to RGB
// by channel replication; alpha channels are dropped. 16-bit, palette and
// interlaced files are rejected with UnsupportedFormatError; malformed
// streams raise DecodeError naming the byte offset.
RgbImage decode_png(const std::vector<std::uint8_t>& bytes);

// Encodes as color type 2 (RGB) or 0 (grayscale), bit depth 8, no
// interlacing, one zlib stream with per-row filter 0. Output is
// deterministic for a given input.
std::vector<std::uint8_t> encode_png(const RgbImage& img);
std::vector<std::uint8_t> encode_png(const GrayImage& img);

// Whole-file convenience wrappers.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
RgbImage load_png(const std::filesystem::path& path);

} // namespace cellscan
