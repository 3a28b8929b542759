#pragma once

// 3x3, stride-1, zero-padded ("same") convolution kernels over a single
// image in CHW layout. Two algorithms compute the same map:
//
//  * direct: im2col followed by one GEMM; best for few input channels.
//  * winograd: F(4x4, 3x3) minimal filtering. Tiles are transformed, the
//    channel reduction becomes 36 independent GEMMs, and the backward pass
//    differentiates through the same transforms, so the gradient is exact for
//    the computed forward map.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace entroloss::nn {

enum class ConvAlgorithm { automatic, direct, winograd };

struct ConvGeometry {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t input_size() const { return in_channels * height * width; }
  std::size_t output_size() const { return out_channels * height * width; }
  std::size_t weight_size() const { return out_channels * in_channels * 9; }
};

/// Resolves `automatic` for the given geometry.
ConvAlgorithm choose_conv_algorithm(const ConvGeometry& g, ConvAlgorithm requested);

/// One convolution evaluation. Holds the transformed operands between
/// forward and backward when the Winograd path is used.
class Conv3x3 {
 public:
  Conv3x3(ConvGeometry geometry, ConvAlgorithm algorithm);

  ConvAlgorithm algorithm() const { return algorithm_; }
  const ConvGeometry& geometry() const { return g_; }

  /// y[o,y,x] = b[o] + sum w[o,c,dy,dx] * xpad[c,y+dy,x+dx]
  void forward(std::span<const double> x, std::span<const double> w,
               std::span<const double> b, std::span<double> y, bool keep_for_backward);

  /// Accumulates into dw and db, and into dx unless it is empty.
  void backward(std::span<const double> dy, std::span<const double> x,
                std::span<const double> w, std::span<double> dx, std::span<double> dw,
                std::span<double> db);

 private:
  void direct_forward(std::span<const double> x, std::span<const double> w,
                      std::span<const double> b, std::span<double> y);
  void direct_backward(std::span<const double> dy, std::span<const double> x,
                       std::span<const double> w, std::span<double> dx,
                       std::span<double> dw);
  void build_columns(std::span<const double> x);
  void winograd_forward(std::span<const double> x, std::span<const double> w,
                        std::span<const double> b, std::span<double> y);
  void winograd_backward(std::span<const double> dy, std::span<const double> x,
                         std::span<const double> w, std::span<double> dx,
                         std::span<double> dw);
  void transform_input(std::span<const double> x);
  void transform_weights(std::span<const double> w);

  ConvGeometry g_;
  ConvAlgorithm algorithm_;
  std::size_t tiles_y_ = 0;
  std::size_t tiles_x_ = 0;
  std::vector<double> v_;  // winograd [36][C_in][T]; direct columns [9*C_in][H*W]
  std::vector<double> u_;  // [36][C_out][C_in]
};

/// Direct convolution followed by 2x2 / stride-2 max pooling, computed two
/// image rows at a time so the full-resolution map is never stored. Only the
/// pooled map and, per pooled cell, the winning pixel of its window are kept.
/// Ties go to the first maximal cell in row-major window order.
class ConvPool3x3 {
 public:
  explicit ConvPool3x3(ConvGeometry geometry);

  const ConvGeometry& geometry() const { return g_; }
  std::size_t pooled_size() const { return g_.out_channels * (g_.height / 2) * (g_.width / 2); }

  /// winners[i] is the in-plane pixel index that produced y[i].
  void forward(std::span<const double> x, std::span<const double> w,
               std::span<const double> b, std::span<double> y, std::span<std::uint32_t> winners);

  /// Accumulates into dw and db, and into dx unless it is empty.
  void backward(std::span<const double> dy, std::span<const double> x,
                std::span<const double> w, std::span<const std::uint32_t> winners,
                std::span<double> dx, std::span<double> dw, std::span<double> db);

 private:
  ConvGeometry g_;
  std::vector<double> cols_;  // [H*W][9*C_in]
};

}  // namespace entroloss::nn
