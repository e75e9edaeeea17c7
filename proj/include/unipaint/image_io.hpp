#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unipaint/tensor.hpp"

namespace unipaint {

enum class PixelFormat { Gray = 1, Rgb = 3, Rgba = 4 };

/// 8-bit sample k maps to quantize_pixel(k / 255); writing rounds to the
/// nearest 8-bit level after clamping to [0,1].
ImageBuffer read_png(const std::string& path, PixelFormat format);
ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes, PixelFormat format);
void write_png(const std::string& path, const ImageBuffer& image);
std::vector<std::uint8_t> encode_png(const ImageBuffer& image);

/// Gray ≥ 128 is known (1).
RegionMask read_mask_png(const std::string& path);
RegionMask decode_mask_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_mask_png(const RegionMask& mask);

RegionMask threshold_mask(const ImageBuffer& gray);

std::vector<std::uint8_t> read_file(const std::string& path);
/// Writes to `path`.tmp then renames over `path`.
void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes);
void write_file_atomic(const std::string& path, const std::string& text);

}  // namespace unipaint
