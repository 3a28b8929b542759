#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace entroloss::data {

/// Decoded grayscale raster, intensities scaled to [0,1] by the maximum code
/// value of its bit depth (255 or 65535).
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  int bit_depth = 8;
  std::vector<double> pixels;  // row-major
};

/// Decodes an 8- or 16-bit grayscale PNG. Throws IoError for unreadable files,
/// unsupported bit depths and non-grayscale colour types (with a hint on how
/// to convert).
GrayImage read_png_gray(const std::filesystem::path& path);

/// Encodes 8-bit grayscale; `pixels` are clamped to [0,1] and rounded to the
/// nearest code value.
void write_png_gray8(const std::filesystem::path& path, std::size_t width, std::size_t height,
                     std::span<const double> pixels);

/// Bilinear resampling with pixel-centre alignment and edge clamping. Returns
/// the input unchanged when the size already matches.
std::vector<double> resize_bilinear(std::span<const double> src, std::size_t src_w,
                                    std::size_t src_h, std::size_t dst_w, std::size_t dst_h);

}  // namespace entroloss::data
