#include "image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include <fmt/core.h>
#include <png.h>

#include "errors.hpp"

namespace entroloss::data {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct ErrorSink {
  char message[256] = {};
};

void on_png_error(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png));
  std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct RawRaster {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
  std::vector<std::uint16_t> samples;
};

// Decodes 8/16-bit grayscale; any other format returns with only the header
// fields filled. Returns false with sink.message set on a libpng error.
bool decode_png(std::FILE* fp, RawRaster& raster, ErrorSink& sink) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, on_png_error, on_png_warning);
  if (!png) {
    std::snprintf(sink.message, sizeof(sink.message), "out of memory");
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    std::snprintf(sink.message, sizeof(sink.message), "out of memory");
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  raster.width = png_get_image_width(png, info);
  raster.height = png_get_image_height(png, info);
  raster.bit_depth = png_get_bit_depth(png, info);
  raster.color_type = png_get_color_type(png, info);
  if (raster.color_type != PNG_COLOR_TYPE_GRAY ||
      (raster.bit_depth != 8 && raster.bit_depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    return true;  // caller reports the unsupported format
  }
  if (raster.bit_depth == 16 && std::endian::native == std::endian::little) {
    png_set_swap(png);
  }
  png_read_update_info(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> row(rowbytes);
  raster.samples.resize(static_cast<std::size_t>(raster.width) * raster.height);
  for (png_uint_32 y = 0; y < raster.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    std::uint16_t* dst = raster.samples.data() + static_cast<std::size_t>(y) * raster.width;
    if (raster.bit_depth == 8) {
      for (png_uint_32 x = 0; x < raster.width; ++x) {
        dst[x] = row[x];
      }
    } else {
      std::memcpy(dst, row.data(), static_cast<std::size_t>(raster.width) * 2);
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool encode_png8(std::FILE* fp, std::size_t width, std::size_t height,
                 const std::vector<png_byte>& bytes, ErrorSink& sink) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, on_png_error, on_png_warning);
  if (!png) {
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y) {
    png_write_row(png, bytes.data() + y * width);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

const char* color_type_name(int color_type) {
  switch (color_type) {
    case PNG_COLOR_TYPE_RGB:
      return "RGB";
    case PNG_COLOR_TYPE_RGB_ALPHA:
      return "RGBA";
    case PNG_COLOR_TYPE_PALETTE:
      return "palette";
    case PNG_COLOR_TYPE_GRAY_ALPHA:
      return "grayscale+alpha";
    default:
      return "grayscale";
  }
}

}  // namespace

GrayImage read_png_gray(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) {
    throw IoError(fmt::format("cannot open image {}", path.string()));
  }
  png_byte signature[8];
  if (std::fread(signature, 1, 8, fp.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw IoError(fmt::format("{} is not a PNG file", path.string()));
  }
  std::rewind(fp.get());

  RawRaster raster;
  ErrorSink sink;
  if (!decode_png(fp.get(), raster, sink)) {
    throw IoError(fmt::format("cannot decode {}: {}", path.string(), sink.message));
  }
  if (raster.color_type != PNG_COLOR_TYPE_GRAY) {
    throw IoError(fmt::format(
        "{} is a {} image; only single-channel grayscale is accepted "
        "(convert first, e.g. `magick in.png -colorspace Gray -depth 8 out.png`)",
        path.string(), color_type_name(raster.color_type)));
  }
  if (raster.bit_depth != 8 && raster.bit_depth != 16) {
    throw IoError(fmt::format("{} has unsupported bit depth {} (expected 8 or 16)",
                              path.string(), raster.bit_depth));
  }
  GrayImage img;
  img.width = raster.width;
  img.height = raster.height;
  img.bit_depth = raster.bit_depth;
  const double scale = raster.bit_depth == 8 ? 255.0 : 65535.0;
  img.pixels.resize(raster.samples.size());
  for (std::size_t i = 0; i < raster.samples.size(); ++i) {
    img.pixels[i] = raster.samples[i] / scale;
  }
  return img;
}

void write_png_gray8(const std::filesystem::path& path, std::size_t width, std::size_t height,
                     std::span<const double> pixels) {
  if (pixels.size() != width * height || width == 0 || height == 0) {
    throw ShapeError("write_png_gray8: pixel count does not match the image size");
  }
  std::vector<png_byte> bytes(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    bytes[i] = static_cast<png_byte>(std::lround(std::clamp(pixels[i], 0.0, 1.0) * 255.0));
  }
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) {
    throw IoError(fmt::format("cannot open {} for writing", path.string()));
  }
  ErrorSink sink;
  if (!encode_png8(fp.get(), width, height, bytes, sink)) {
    throw IoError(fmt::format("cannot encode {}: {}", path.string(), sink.message));
  }
  if (std::fflush(fp.get()) != 0) {
    throw IoError(fmt::format("failed writing {}", path.string()));
  }
}

std::vector<double> resize_bilinear(std::span<const double> src, std::size_t src_w,
                                    std::size_t src_h, std::size_t dst_w, std::size_t dst_h) {
  if (src.size() != src_w * src_h || src_w == 0 || src_h == 0 || dst_w == 0 || dst_h == 0) {
    throw ShapeError("resize_bilinear: invalid dimensions");
  }
  if (src_w == dst_w && src_h == dst_h) {
    return {src.begin(), src.end()};
  }
  // Precompute the two source taps and weights along each axis.
  struct Tap {
    std::size_t i0, i1;
    double w1;
  };
  auto taps = [](std::size_t n_src, std::size_t n_dst) {
    std::vector<Tap> t(n_dst);
    const double scale = static_cast<double>(n_src) / static_cast<double>(n_dst);
    for (std::size_t i = 0; i < n_dst; ++i) {
      double pos = (static_cast<double>(i) + 0.5) * scale - 0.5;
      pos = std::clamp(pos, 0.0, static_cast<double>(n_src - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(pos));
      const std::size_t i1 = std::min(i0 + 1, n_src - 1);
      t[i] = {i0, i1, pos - static_cast<double>(i0)};
    }
    return t;
  };
  const auto tx = taps(src_w, dst_w);
  const auto ty = taps(src_h, dst_h);
  std::vector<double> dst(dst_w * dst_h);
  for (std::size_t y = 0; y < dst_h; ++y) {
    const double* r0 = src.data() + ty[y].i0 * src_w;
    const double* r1 = src.data() + ty[y].i1 * src_w;
    const double wy = ty[y].w1;
    for (std::size_t x = 0; x < dst_w; ++x) {
      const Tap& t = tx[x];
      const double top = r0[t.i0] * (1.0 - t.w1) + r0[t.i1] * t.w1;
      const double bottom = r1[t.i0] * (1.0 - t.w1) + r1[t.i1] * t.w1;
      dst[y * dst_w + x] = top * (1.0 - wy) + bottom * wy;
    }
  }
  return dst;
}

}  // namespace entroloss::data
