#include "conv_kernels.hpp"

#include <algorithm>

#include <Eigen/Core>

#include "errors.hpp"

namespace entroloss::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

constexpr std::size_t kOut = 4;      // output tile side
constexpr std::size_t kPoints = 36;  // transform-domain points per tile

// F(4x4, 3x3) transforms written out term by term:
//   B^T = [4 0 -5 0 1 0; 0 -4 -4 1 1 0; 0 4 -4 -1 1 0;
//          0 -2 -1 2 1 0; 0 2 -1 -2 1 0; 0 4 0 -5 0 1]
//   G   = [1/4 0 0; -1/6 -1/6 -1/6; -1/6 1/6 -1/6;
//          1/24 1/12 1/6; 1/24 -1/12 1/6; 0 0 1]
//   A^T = [1 1 1 1 1 0; 0 1 -1 2 -2 0; 0 1 1 4 4 0; 0 1 -1 8 -8 1]
// Each helper maps whole rows (length n) at once so the compiler vectorizes
// across tiles or columns.

// Inputs and outputs never overlap; the restrict locals let the loops vectorize.
using RowIn = const double* __restrict;
using RowOut = double* __restrict;

// out[a] = sum_i B^T[a][i] in[i]
void apply_bt(const double* const in[6], double* const out[6], std::size_t n) {
  RowIn i0 = in[0], i1 = in[1], i2 = in[2], i3 = in[3], i4 = in[4], i5 = in[5];
  RowOut o0 = out[0], o1 = out[1], o2 = out[2], o3 = out[3], o4 = out[4], o5 = out[5];
  for (std::size_t x = 0; x < n; ++x) {
    const double d0 = i0[x], d1 = i1[x], d2 = i2[x], d3 = i3[x], d4 = i4[x], d5 = i5[x];
    o0[x] = 4.0 * d0 - 5.0 * d2 + d4;
    o1[x] = -4.0 * d1 - 4.0 * d2 + d3 + d4;
    o2[x] = 4.0 * d1 - 4.0 * d2 - d3 + d4;
    o3[x] = -2.0 * d1 - d2 + 2.0 * d3 + d4;
    o4[x] = 2.0 * d1 - d2 - 2.0 * d3 + d4;
    o5[x] = 4.0 * d1 - 5.0 * d3 + d5;
  }
}

// out[i] += sum_a B^T[a][i] in[a]
void accumulate_b(const double* const in[6], double* const out[6], std::size_t n) {
  RowIn i0 = in[0], i1 = in[1], i2 = in[2], i3 = in[3], i4 = in[4], i5 = in[5];
  RowOut o0 = out[0], o1 = out[1], o2 = out[2], o3 = out[3], o4 = out[4], o5 = out[5];
  for (std::size_t x = 0; x < n; ++x) {
    const double v0 = i0[x], v1 = i1[x], v2 = i2[x], v3 = i3[x], v4 = i4[x], v5 = i5[x];
    o0[x] += 4.0 * v0;
    o1[x] += -4.0 * v1 + 4.0 * v2 - 2.0 * v3 + 2.0 * v4 + 4.0 * v5;
    o2[x] += -5.0 * v0 - 4.0 * v1 - 4.0 * v2 - v3 - v4;
    o3[x] += v1 - v2 + 2.0 * v3 - 2.0 * v4 - 5.0 * v5;
    o4[x] += v0 + v1 + v2 + v3 + v4;
    o5[x] += v5;
  }
}

// out[k] = sum_b A^T[k][b] in[b]
void apply_at(const double* const in[6], double* const out[4], std::size_t n) {
  RowIn i0 = in[0], i1 = in[1], i2 = in[2], i3 = in[3], i4 = in[4], i5 = in[5];
  RowOut o0 = out[0], o1 = out[1], o2 = out[2], o3 = out[3];
  for (std::size_t x = 0; x < n; ++x) {
    const double m0 = i0[x], m1 = i1[x], m2 = i2[x], m3 = i3[x], m4 = i4[x], m5 = i5[x];
    o0[x] = m0 + m1 + m2 + m3 + m4;
    o1[x] = m1 - m2 + 2.0 * m3 - 2.0 * m4;
    o2[x] = m1 + m2 + 4.0 * m3 + 4.0 * m4;
    o3[x] = m1 - m2 + 8.0 * m3 - 8.0 * m4 + m5;
  }
}

// out[a] = sum_k A^T[k][a] in[k]
void apply_a(const double* const in[4], double* const out[6], std::size_t n) {
  RowIn i0 = in[0], i1 = in[1], i2 = in[2], i3 = in[3];
  RowOut o0 = out[0], o1 = out[1], o2 = out[2], o3 = out[3], o4 = out[4], o5 = out[5];
  for (std::size_t x = 0; x < n; ++x) {
    const double g0 = i0[x], g1 = i1[x], g2 = i2[x], g3 = i3[x];
    o0[x] = g0;
    o1[x] = g0 + g1 + g2 + g3;
    o2[x] = g0 - g1 + g2 - g3;
    o3[x] = g0 + 2.0 * g1 + 4.0 * g2 + 8.0 * g3;
    o4[x] = g0 - 2.0 * g1 + 4.0 * g2 - 8.0 * g3;
    o5[x] = g3;
  }
}

constexpr double kG[6][3] = {
    {1.0 / 4, 0, 0},
    {-1.0 / 6, -1.0 / 6, -1.0 / 6},
    {-1.0 / 6, 1.0 / 6, -1.0 / 6},
    {1.0 / 24, 1.0 / 12, 1.0 / 6},
    {1.0 / 24, -1.0 / 12, 1.0 / 6},
    {0, 0, 1},
};

// Scratch reused across calls on one thread; contents are not preserved.
std::span<double> scratch(std::size_t slot, std::size_t n) {
  thread_local std::vector<double> buffers[4];
  auto& b = buffers[slot];
  if (b.size() < n) {
    b.resize(n);
  }
  return {b.data(), n};
}

// cols[(c*3+ky)*3+kx][r*W+q] = x[c][r+ky-1][q+kx-1], zero outside the image.
void im2col(const ConvGeometry& g, std::span<const double> x, std::vector<double>& cols) {
  const std::size_t C = g.in_channels, H = g.height, W = g.width, plane = H * W;
  cols.assign(9 * C * plane, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double* in = x.data() + c * plane;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* col = cols.data() + ((c * 3 + ky) * 3 + kx) * plane;
        const std::size_t q0 = kx == 0 ? 1 : 0;
        const std::size_t q1 = kx == 2 ? W - 1 : W;
        for (std::size_t r = 0; r < H; ++r) {
          const std::ptrdiff_t sr = static_cast<std::ptrdiff_t>(r + ky) - 1;
          if (sr < 0 || sr >= static_cast<std::ptrdiff_t>(H) || q1 <= q0) {
            continue;
          }
          const double* src = in + static_cast<std::size_t>(sr) * W + kx - 1;
          std::copy(src + q0, src + q1, col + r * W + q0);
        }
      }
    }
  }
}

void check_sizes(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                 std::size_t out_len, std::size_t expected_out) {
  if (x.size() != g.input_size() || w.size() != g.weight_size() || out_len != expected_out) {
    throw ShapeError("conv3x3: buffer sizes do not match the geometry");
  }
}

}  // namespace

ConvAlgorithm choose_conv_algorithm(const ConvGeometry& g, ConvAlgorithm requested) {
  if (requested != ConvAlgorithm::automatic) {
    return requested;
  }
  // With few input channels the transforms cost more than they save.
  return g.in_channels >= 8 ? ConvAlgorithm::winograd : ConvAlgorithm::direct;
}

Conv3x3::Conv3x3(ConvGeometry geometry, ConvAlgorithm algorithm)
    : g_(geometry), algorithm_(choose_conv_algorithm(geometry, algorithm)) {
  if (g_.in_channels == 0 || g_.out_channels == 0 || g_.height == 0 || g_.width == 0) {
    throw ShapeError("conv3x3: empty geometry");
  }
  tiles_y_ = (g_.height + kOut - 1) / kOut;
  tiles_x_ = (g_.width + kOut - 1) / kOut;
}

void Conv3x3::forward(std::span<const double> x, std::span<const double> w,
                      std::span<const double> b, std::span<double> y,
                      bool keep_for_backward) {
  check_sizes(g_, x, w, y.size(), g_.output_size());
  if (b.size() != g_.out_channels) {
    throw ShapeError("conv3x3: bias length does not match output channels");
  }
  if (algorithm_ == ConvAlgorithm::direct) {
    direct_forward(x, w, b, y);
  } else {
    winograd_forward(x, w, b, y);
  }
  if (!keep_for_backward) {
    std::vector<double>().swap(v_);
    std::vector<double>().swap(u_);
  }
}

void Conv3x3::backward(std::span<const double> dy, std::span<const double> x,
                       std::span<const double> w, std::span<double> dx, std::span<double> dw,
                       std::span<double> db) {
  check_sizes(g_, x, w, dy.size(), g_.output_size());
  if (!dx.empty() && dx.size() != g_.input_size()) {
    throw ShapeError("conv3x3: input-gradient length mismatch");
  }
  if (dw.size() != g_.weight_size() || db.size() != g_.out_channels) {
    throw ShapeError("conv3x3: parameter-gradient length mismatch");
  }
  const std::size_t plane = g_.height * g_.width;
  for (std::size_t o = 0; o < g_.out_channels; ++o) {
    const double* row = dy.data() + o * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      s += row[i];
    }
    db[o] += s;
  }
  if (algorithm_ == ConvAlgorithm::direct) {
    direct_backward(dy, x, w, dx, dw);
  } else {
    winograd_backward(dy, x, w, dx, dw);
  }
}

// ---- direct: im2col + GEMM ------------------------------------------------

void Conv3x3::build_columns(std::span<const double> x) { im2col(g_, x, v_); }

void Conv3x3::direct_forward(std::span<const double> x, std::span<const double> w,
                             std::span<const double> b, std::span<double> y) {
  const auto O = static_cast<Eigen::Index>(g_.out_channels);
  const auto K = static_cast<Eigen::Index>(9 * g_.in_channels);
  const auto P = static_cast<Eigen::Index>(g_.height * g_.width);
  build_columns(x);
  MatrixMap out(y.data(), O, P);
  out.noalias() = ConstMatrixMap(w.data(), O, K) * ConstMatrixMap(v_.data(), K, P);
  for (Eigen::Index o = 0; o < O; ++o) {
    out.row(o).array() += b[static_cast<std::size_t>(o)];
  }
}

void Conv3x3::direct_backward(std::span<const double> dy, std::span<const double> x,
                              std::span<const double> w, std::span<double> dx,
                              std::span<double> dw) {
  const std::size_t C = g_.in_channels, H = g_.height, W = g_.width, plane = H * W;
  const auto O = static_cast<Eigen::Index>(g_.out_channels);
  const auto K = static_cast<Eigen::Index>(9 * C);
  const auto P = static_cast<Eigen::Index>(plane);
  if (v_.empty()) {
    build_columns(x);
  }
  ConstMatrixMap g(dy.data(), O, P);
  MatrixMap(dw.data(), O, K).noalias() += g * ConstMatrixMap(v_.data(), K, P).transpose();
  if (dx.empty()) {
    return;
  }
  auto dcols = scratch(0, 9 * C * plane);
  MatrixMap(dcols.data(), K, P).noalias() = ConstMatrixMap(w.data(), O, K).transpose() * g;
  for (std::size_t c = 0; c < C; ++c) {
    double* din = dx.data() + c * plane;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* col = dcols.data() + ((c * 3 + ky) * 3 + kx) * plane;
        const std::size_t q0 = kx == 0 ? 1 : 0;
        const std::size_t q1 = kx == 2 ? W - 1 : W;
        for (std::size_t r = 0; r < H; ++r) {
          const std::ptrdiff_t sr = static_cast<std::ptrdiff_t>(r + ky) - 1;
          if (sr < 0 || sr >= static_cast<std::ptrdiff_t>(H)) {
            continue;
          }
          double* dst = din + static_cast<std::size_t>(sr) * W + kx - 1;
          const double* src = col + r * W;
          for (std::size_t q = q0; q < q1; ++q) {
            dst[q] += src[q];
          }
        }
      }
    }
  }
}

// ---- Winograd F(4x4, 3x3) -------------------------------------------------
//
// Layouts: v_ [36][C][T], u_ [36][O][C], M [36][O][T] with T = tiles_y *
// tiles_x in row-major tile order. The input is viewed through a zero-padded
// frame of (4*tiles_y + 2) x (4*tiles_x + 2) whose origin sits at (-1, -1).
// Frame rows are stored split by column phase: element (r, 4q + k) lives at
// row r, block k, position q. A tile's six columns 4q..4q+5 are then blocks
// 0..3 at q followed by blocks 0..1 at q + 1, so every transform reads whole
// contiguous runs over q.

namespace {

struct PhaseRows {
  std::size_t phase_len;  // tiles_x + 1
  std::size_t row_len;    // 4 * phase_len
};

}  // namespace

void Conv3x3::transform_input(std::span<const double> x) {
  const std::size_t C = g_.in_channels, H = g_.height, W = g_.width;
  const std::size_t T = tiles_y_ * tiles_x_, tx_n = tiles_x_;
  const std::size_t Hp = 4 * tiles_y_ + 2;
  const PhaseRows pr{tx_n + 1, 4 * (tx_n + 1)};
  v_.resize(kPoints * C * T);
  auto padded = scratch(0, Hp * pr.row_len);
  auto rows = scratch(1, 6 * pr.row_len);
  double* t[6];
  for (std::size_t a = 0; a < 6; ++a) t[a] = rows.data() + a * pr.row_len;
  // Border cells are never overwritten, so one fill serves every channel.
  std::fill(padded.begin(), padded.end(), 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double* in = x.data() + c * H * W;
    for (std::size_t r = 0; r < H; ++r) {
      double* dst = padded.data() + (r + 1) * pr.row_len;
      const double* src = in + r * W;
      // Frame column 4j + k holds image column 4j + k - 1.
      for (std::size_t k = 0; k < 4; ++k) {
        double* block = dst + k * pr.phase_len;
        for (std::size_t j = (k == 0 ? 1 : 0); j < pr.phase_len && 4 * j + k <= W; ++j) {
          block[j] = src[4 * j + k - 1];
        }
      }
    }
    for (std::size_t ty = 0; ty < tiles_y_; ++ty) {
      const double* src[6];
      for (std::size_t i = 0; i < 6; ++i) src[i] = padded.data() + (4 * ty + i) * pr.row_len;
      apply_bt(src, t, pr.row_len);
      for (std::size_t a = 0; a < 6; ++a) {
        const std::size_t L = pr.phase_len;
        const double* cin[6] = {t[a], t[a] + L, t[a] + 2 * L, t[a] + 3 * L, t[a] + 1, t[a] + L + 1};
        double* dst[6];
        for (std::size_t b = 0; b < 6; ++b) {
          dst[b] = v_.data() + ((a * 6 + b) * C + c) * T + ty * tx_n;
        }
        apply_bt(cin, dst, tx_n);
      }
    }
  }
}

void Conv3x3::transform_weights(std::span<const double> w) {
  const std::size_t C = g_.in_channels, O = g_.out_channels;
  u_.resize(kPoints * O * C);
  // Vectorized over input channels: k[e][c] is kernel element e of (o, c).
  auto buf = scratch(1, (9 + 18) * C);
  double* k = buf.data();
  double* tmp = buf.data() + 9 * C;  // [6][3][C]
  for (std::size_t o = 0; o < O; ++o) {
    const double* src = w.data() + o * C * 9;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t e = 0; e < 9; ++e) k[e * C + c] = src[c * 9 + e];
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        RowIn k0 = k + j * C, k1 = k + (3 + j) * C, k2 = k + (6 + j) * C;
        RowOut d = tmp + (i * 3 + j) * C;
        for (std::size_t c = 0; c < C; ++c) {
          d[c] = kG[i][0] * k0[c] + kG[i][1] * k1[c] + kG[i][2] * k2[c];
        }
      }
    }
    for (std::size_t i = 0; i < 6; ++i) {
      RowIn t0 = tmp + (i * 3) * C, t1 = tmp + (i * 3 + 1) * C, t2 = tmp + (i * 3 + 2) * C;
      for (std::size_t j = 0; j < 6; ++j) {
        RowOut d = u_.data() + ((i * 6 + j) * O + o) * C;
        for (std::size_t c = 0; c < C; ++c) {
          d[c] = t0[c] * kG[j][0] + t1[c] * kG[j][1] + t2[c] * kG[j][2];
        }
      }
    }
  }
}

void Conv3x3::winograd_forward(std::span<const double> x, std::span<const double> w,
                               std::span<const double> b, std::span<double> y) {
  const std::size_t C = g_.in_channels, O = g_.out_channels, H = g_.height, W = g_.width;
  const std::size_t T = tiles_y_ * tiles_x_, tx_n = tiles_x_;
  transform_input(x);
  transform_weights(w);

  auto m = scratch(2, kPoints * O * T);
  for (std::size_t p = 0; p < kPoints; ++p) {
    ConstMatrixMap u(u_.data() + p * O * C, static_cast<Eigen::Index>(O),
                     static_cast<Eigen::Index>(C));
    ConstMatrixMap v(v_.data() + p * C * T, static_cast<Eigen::Index>(C),
                     static_cast<Eigen::Index>(T));
    MatrixMap(m.data() + p * O * T, static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(T))
        .noalias() = u * v;
  }

  // Y = A^T M A, first along the column index b, then along the row index a.
  auto rows = scratch(3, 24 * tx_n + 4 * tx_n);
  double* s[6][4];
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t k = 0; k < 4; ++k) s[a][k] = rows.data() + (a * 4 + k) * tx_n;
  double* yi[4];
  for (std::size_t i = 0; i < 4; ++i) yi[i] = rows.data() + 24 * tx_n + i * tx_n;
  for (std::size_t o = 0; o < O; ++o) {
    double* out = y.data() + o * H * W;
    for (std::size_t ty = 0; ty < tiles_y_; ++ty) {
      for (std::size_t a = 0; a < 6; ++a) {
        const double* src[6];
        for (std::size_t bb = 0; bb < 6; ++bb) {
          src[bb] = m.data() + ((a * 6 + bb) * O + o) * T + ty * tx_n;
        }
        apply_at(src, s[a], tx_n);
      }
      for (std::size_t k = 0; k < 4; ++k) {
        const double* src[6] = {s[0][k], s[1][k], s[2][k], s[3][k], s[4][k], s[5][k]};
        apply_at(src, yi, tx_n);
        for (std::size_t i = 0; i < 4 && 4 * ty + i < H; ++i) {
          double* orow = out + (4 * ty + i) * W;
          for (std::size_t q = 0; q < tx_n && 4 * q + k < W; ++q) {
            orow[4 * q + k] = yi[i][q] + b[o];
          }
        }
      }
    }
  }
}

void Conv3x3::winograd_backward(std::span<const double> dy, std::span<const double> x,
                                std::span<const double> w, std::span<double> dx,
                                std::span<double> dw) {
  const std::size_t C = g_.in_channels, O = g_.out_channels, H = g_.height, W = g_.width;
  const std::size_t T = tiles_y_ * tiles_x_, tx_n = tiles_x_;
  if (v_.empty()) {
    transform_input(x);
  }
  if (u_.empty()) {
    transform_weights(w);
  }

  // dM = A dY A^T per output channel and tile; positions past the image edge
  // were never written in forward and carry zero gradient. Gradient rows are
  // split by column phase (block k holds columns 4q + k).
  auto dm = scratch(2, kPoints * O * T);
  {
    const std::size_t Wq = 4 * tx_n;
    auto rows = scratch(3, 10 * Wq);
    double* g[4];
    for (std::size_t i = 0; i < 4; ++i) g[i] = rows.data() + i * Wq;
    double* t[6];
    for (std::size_t a = 0; a < 6; ++a) t[a] = rows.data() + (4 + a) * Wq;
    for (std::size_t o = 0; o < O; ++o) {
      const double* grad = dy.data() + o * H * W;
      for (std::size_t ty = 0; ty < tiles_y_; ++ty) {
        for (std::size_t i = 0; i < 4; ++i) {
          std::fill(g[i], g[i] + Wq, 0.0);
          if (4 * ty + i < H) {
            const double* src = grad + (4 * ty + i) * W;
            for (std::size_t q = 0; q < W; ++q) g[i][(q % 4) * tx_n + q / 4] = src[q];
          }
        }
        const double* gin[4] = {g[0], g[1], g[2], g[3]};
        apply_a(gin, t, Wq);
        for (std::size_t a = 0; a < 6; ++a) {
          const double* cin[4] = {t[a], t[a] + tx_n, t[a] + 2 * tx_n, t[a] + 3 * tx_n};
          double* dst[6];
          for (std::size_t bb = 0; bb < 6; ++bb) {
            dst[bb] = dm.data() + ((a * 6 + bb) * O + o) * T + ty * tx_n;
          }
          apply_a(cin, dst, tx_n);
        }
      }
    }
  }

  // dU = dM V^T, dV = U^T dM per transform point.
  auto du = scratch(1, kPoints * O * C);
  std::span<double> dv;
  if (!dx.empty()) {
    dv = scratch(0, kPoints * C * T);
  }
  for (std::size_t p = 0; p < kPoints; ++p) {
    ConstMatrixMap dmp(dm.data() + p * O * T, static_cast<Eigen::Index>(O),
                       static_cast<Eigen::Index>(T));
    ConstMatrixMap v(v_.data() + p * C * T, static_cast<Eigen::Index>(C),
                     static_cast<Eigen::Index>(T));
    MatrixMap(du.data() + p * O * C, static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(C))
        .noalias() = dmp * v.transpose();
    if (!dx.empty()) {
      ConstMatrixMap u(u_.data() + p * O * C, static_cast<Eigen::Index>(O),
                       static_cast<Eigen::Index>(C));
      MatrixMap(dv.data() + p * C * T, static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(T))
          .noalias() = u.transpose() * dmp;
    }
  }

  // dg = G^T dU G, vectorized over input channels.
  {
    auto buf = scratch(3, (18 + 9) * C);
    double* tmp = buf.data();          // [3][6][C]
    double* dk = buf.data() + 18 * C;  // [9][C]
    for (std::size_t o = 0; o < O; ++o) {
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
          RowOut d = tmp + (i * 6 + j) * C;
          std::fill(d, d + C, 0.0);
          for (std::size_t a = 0; a < 6; ++a) {
            if (kG[a][i] == 0.0) continue;
            RowIn src = du.data() + ((a * 6 + j) * O + o) * C;
            const double f = kG[a][i];
            for (std::size_t c = 0; c < C; ++c) d[c] += f * src[c];
          }
        }
      }
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
          RowOut d = dk + (i * 3 + j) * C;
          std::fill(d, d + C, 0.0);
          for (std::size_t bb = 0; bb < 6; ++bb) {
            if (kG[bb][j] == 0.0) continue;
            RowIn src = tmp + (i * 6 + bb) * C;
            const double f = kG[bb][j];
            for (std::size_t c = 0; c < C; ++c) d[c] += f * src[c];
          }
        }
      }
      double* dst = dw.data() + o * C * 9;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t e = 0; e < 9; ++e) dst[c * 9 + e] += dk[e * C + c];
    }
  }

  if (dx.empty()) {
    return;
  }
  // dd = B dV B^T, overlap-added into the phase-split padded frame, then
  // cropped back to the image.
  const std::size_t Hp = 4 * tiles_y_ + 2;
  const PhaseRows pr{tx_n + 1, 4 * (tx_n + 1)};
  const std::size_t L = pr.phase_len;
  auto padded = scratch(2, Hp * pr.row_len);  // dm is no longer needed
  auto rows = scratch(3, 6 * pr.row_len + 6 * tx_n);
  double* t[6];
  for (std::size_t a = 0; a < 6; ++a) t[a] = rows.data() + a * pr.row_len;
  double* sums[6];
  for (std::size_t j = 0; j < 6; ++j) sums[j] = rows.data() + 6 * pr.row_len + j * tx_n;
  for (std::size_t c = 0; c < C; ++c) {
    std::fill(padded.begin(), padded.end(), 0.0);
    for (std::size_t ty = 0; ty < tiles_y_; ++ty) {
      for (std::size_t a = 0; a < 6; ++a) {
        const double* src[6];
        for (std::size_t bb = 0; bb < 6; ++bb) {
          src[bb] = dv.data() + ((a * 6 + bb) * C + c) * T + ty * tx_n;
        }
        for (std::size_t j = 0; j < 6; ++j) std::fill(sums[j], sums[j] + tx_n, 0.0);
        accumulate_b(src, sums, tx_n);
        double* row = t[a];
        std::fill(row, row + pr.row_len, 0.0);
        for (std::size_t k = 0; k < 4; ++k) {
          RowOut d = row + k * L;
          RowIn s = sums[k];
          for (std::size_t q = 0; q < tx_n; ++q) d[q] += s[q];
        }
        for (std::size_t k = 0; k < 2; ++k) {
          RowOut d = row + k * L + 1;
          RowIn s = sums[4 + k];
          for (std::size_t q = 0; q < tx_n; ++q) d[q] += s[q];
        }
      }
      double* dst[6];
      for (std::size_t i = 0; i < 6; ++i) dst[i] = padded.data() + (4 * ty + i) * pr.row_len;
      const double* tin[6] = {t[0], t[1], t[2], t[3], t[4], t[5]};
      accumulate_b(tin, dst, pr.row_len);
    }
    double* din = dx.data() + c * H * W;
    for (std::size_t r = 0; r < H; ++r) {
      const double* src = padded.data() + (r + 1) * pr.row_len;
      double* drow = din + r * W;
      for (std::size_t k = 0; k < 4; ++k) {
        const double* block = src + k * pr.phase_len;
        for (std::size_t j = (k == 0 ? 1 : 0); j < pr.phase_len && 4 * j + k <= W; ++j) {
          drow[4 * j + k - 1] += block[j];
        }
      }
    }
  }
}

// ---- fused direct convolution + 2x2 max pooling --------------------------

ConvPool3x3::ConvPool3x3(ConvGeometry geometry) : g_(geometry) {
  if (g_.in_channels == 0 || g_.out_channels == 0 || g_.height == 0 || g_.width == 0) {
    throw ShapeError("conv3x3+pool: empty geometry");
  }
  if (g_.height % 2 != 0 || g_.width % 2 != 0) {
    throw ShapeError("conv3x3+pool: spatial dimensions must be even");
  }
}

void ConvPool3x3::forward(std::span<const double> x, std::span<const double> w,
                          std::span<const double> b, std::span<double> y,
                          std::span<std::uint32_t> winners) {
  check_sizes(g_, x, w, y.size(), pooled_size());
  if (b.size() != g_.out_channels || winners.size() != y.size()) {
    throw ShapeError("conv3x3+pool: bias or winner buffer length mismatch");
  }
  const std::size_t O = g_.out_channels, H = g_.height, W = g_.width;
  const std::size_t Ho = H / 2, Wo = W / 2, K = 9 * g_.in_channels;
  // Pixel-major columns: the K inputs of one output pixel are contiguous,
  // which the winner gather in backward relies on.
  std::vector<double> cols;
  im2col(g_, x, cols);
  cols_.resize(cols.size());
  MatrixMap(cols_.data(), static_cast<Eigen::Index>(H * W), static_cast<Eigen::Index>(K)) =
      ConstMatrixMap(cols.data(), static_cast<Eigen::Index>(K),
                     static_cast<Eigen::Index>(H * W)).transpose();

  constexpr std::size_t kPooledRowsPerBlock = 4;
  ConstMatrixMap wm(w.data(), static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(K));
  auto block = scratch(0, O * 2 * kPooledRowsPerBlock * W);
  for (std::size_t r0 = 0; r0 < Ho; r0 += kPooledRowsPerBlock) {
    const std::size_t nr = std::min(kPooledRowsPerBlock, Ho - r0);
    const std::size_t span_px = 2 * nr * W;
    ConstMatrixMap patch(cols_.data() + 2 * r0 * W * K, static_cast<Eigen::Index>(span_px),
                         static_cast<Eigen::Index>(K));
    MatrixMap out(block.data(), static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(span_px));
    out.noalias() = wm * patch.transpose();
    for (std::size_t o = 0; o < O; ++o) {
      const double bias = b[o];
      for (std::size_t rr = 0; rr < nr; ++rr) {
        const std::size_t r = r0 + rr;
        RowIn top = block.data() + o * span_px + 2 * rr * W;
        RowIn bottom = top + W;
        double* yo = y.data() + (o * Ho + r) * Wo;
        std::uint32_t* wo = winners.data() + (o * Ho + r) * Wo;
        const auto row_top = static_cast<std::uint32_t>(2 * r * W);
        const auto row_bottom = static_cast<std::uint32_t>((2 * r + 1) * W);
        // Bias before the comparison keeps ties identical to the unfused
        // path; strict comparisons give the first maximum in window order.
        // Written without branches: the comparisons are data dependent.
        const std::uint32_t step_down = row_bottom - row_top;
        for (std::size_t q = 0; q < Wo; ++q) {
          const double c0 = top[2 * q] + bias, c1 = top[2 * q + 1] + bias;
          const double c2 = bottom[2 * q] + bias, c3 = bottom[2 * q + 1] + bias;
          const std::uint32_t right_top = c1 > c0;
          const std::uint32_t right_bottom = c3 > c2;
          const double m_top = std::max(c0, c1);
          const double m_bottom = std::max(c2, c3);
          const std::uint32_t lower = m_bottom > m_top;
          yo[q] = std::max(m_top, m_bottom);
          wo[q] = row_top + static_cast<std::uint32_t>(2 * q) + right_top +
                  lower * (step_down + right_bottom - right_top);
        }
      }
    }
  }
}

void ConvPool3x3::backward(std::span<const double> dy, std::span<const double> x,
                           std::span<const double> w, std::span<const std::uint32_t> winners,
                           std::span<double> dx, std::span<double> dw, std::span<double> db) {
  check_sizes(g_, x, w, dy.size(), pooled_size());
  if (winners.size() != dy.size() || dw.size() != g_.weight_size() ||
      db.size() != g_.out_channels || (!dx.empty() && dx.size() != g_.input_size())) {
    throw ShapeError("conv3x3+pool: gradient buffer length mismatch");
  }
  const std::size_t O = g_.out_channels, plane = g_.height * g_.width, pooled = plane / 4;
  const std::size_t K = 9 * g_.in_channels;
  if (!dx.empty()) {
    // Input gradients need the dense map; route through the plain kernel.
    auto dense = scratch(1, O * plane);
    std::fill(dense.begin(), dense.end(), 0.0);
    for (std::size_t o = 0; o < O; ++o) {
      for (std::size_t p = 0; p < pooled; ++p) {
        dense[o * plane + winners[o * pooled + p]] += dy[o * pooled + p];
      }
    }
    Conv3x3 plain(g_, ConvAlgorithm::direct);
    plain.backward(dense, x, w, dx, dw, db);
    return;
  }
  if (cols_.empty()) {
    throw StateError("conv3x3+pool: backward without a preceding forward");
  }
  // Only the winning pixels carry gradient, so dW gathers their columns.
  for (std::size_t o = 0; o < O; ++o) {
    const double* g = dy.data() + o * pooled;
    const std::uint32_t* win = winners.data() + o * pooled;
    RowOut dk = dw.data() + o * K;
    double s = 0.0;
    for (std::size_t p = 0; p < pooled; ++p) {
      s += g[p];
      RowIn col = cols_.data() + static_cast<std::size_t>(win[p]) * K;
      const double gp = g[p];
      for (std::size_t k = 0; k < K; ++k) {
        dk[k] += gp * col[k];
      }
    }
    db[o] += s;
  }
}

}  // namespace entroloss::nn
