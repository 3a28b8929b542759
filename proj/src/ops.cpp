#include "ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <Eigen/Core>
#include <fmt/core.h>

#include "errors.hpp"

namespace entroloss::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

Eigen::Map<const RowMatrix> as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return {t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
Eigen::Map<const Vector> as_vector(std::span<const double> s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}
Eigen::Map<Vector> as_vector(std::span<double> s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}

void accumulate(const Var& target, std::span<const double> g) {
  if (!target->requires_grad()) {
    return;
  }
  auto dst = target->grad();
  for (std::size_t i = 0; i < g.size(); ++i) {
    dst[i] += g[i];
  }
}

Var scalar(double v) { return make_var(Tensor(Shape{1}, std::vector<double>{v})); }

}  // namespace

double sigmoid_value(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var identity(Tape& tape, const Var& x) {
  auto out = make_var(*x);
  out->clear_grad();
  out->set_requires_grad(false);
  if (tape.needs_grad({&x})) {
    tape.record(out, [x](const Tensor& y) { accumulate(x, y.grad()); });
  }
  return out;
}

Var sum(Tape& tape, std::span<const Var> inputs) {
  double total = 0.0;
  bool any = false;
  for (const Var& v : inputs) {
    for (double d : v->data()) {
      total += d;
    }
    any = any || tape.needs_grad({&v});
  }
  auto out = scalar(total);
  if (any) {
    std::vector<Var> captured(inputs.begin(), inputs.end());
    tape.record(out, [captured](const Tensor& y) {
      const double g = y.grad()[0];
      for (const Var& v : captured) {
        if (v->requires_grad()) {
          for (double& d : v->grad()) {
            d += g;
          }
        }
      }
    });
  }
  return out;
}

Var half_sum_squares(Tape& tape, const Var& x) {
  double total = 0.0;
  for (double d : x->data()) {
    total += 0.5 * d * d;
  }
  auto out = scalar(total);
  if (tape.needs_grad({&x})) {
    tape.record(out, [x](const Tensor& y) {
      const double g = y.grad()[0];
      auto dx = x->grad();
      auto xv = x->data();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        dx[i] += g * xv[i];
      }
    });
  }
  return out;
}

Var conv2d(Tape& tape, const Var& x, const Var& weights, const Var& bias,
           ConvAlgorithm algorithm) {
  if (x->rank() != 3 || weights->rank() != 4 || bias->rank() != 1 || weights->dim(2) != 3 ||
      weights->dim(3) != 3 || weights->dim(1) != x->dim(0) || bias->dim(0) != weights->dim(0)) {
    throw ShapeError(fmt::format("conv2d: input {} incompatible with weights {} and bias {}",
                                 shape_string(x->shape()), shape_string(weights->shape()),
                                 shape_string(bias->shape())));
  }
  const ConvGeometry g{x->dim(0), weights->dim(0), x->dim(1), x->dim(2)};
  auto kernel = std::make_shared<Conv3x3>(g, algorithm);
  auto out = make_var(Tensor(Shape{g.out_channels, g.height, g.width}));
  const bool record = tape.needs_grad({&x, &weights, &bias});
  kernel->forward(x->data(), weights->data(), bias->data(), out->data(), record);
  if (record) {
    tape.record(out, [x, weights, bias, kernel](const Tensor& y) {
      // The kernel accumulates, so it writes straight into the gradient
      // buffers; a throwaway buffer stands in for parameters without one.
      std::vector<double> sink_w, sink_b;
      auto dw = weights->requires_grad() ? weights->grad()
                                         : (sink_w.assign(weights->size(), 0.0), sink_w);
      auto db = bias->requires_grad() ? bias->grad() : (sink_b.assign(bias->size(), 0.0), sink_b);
      auto dx = x->requires_grad() ? x->grad() : std::span<double>{};
      kernel->backward(y.grad(), x->data(), weights->data(), dx, dw, db);
    });
  }
  return out;
}

Var maxpool2(Tape& tape, const Var& x) {
  if (x->rank() != 3) {
    throw ShapeError("maxpool2: expected a [C,H,W] tensor, got " + shape_string(x->shape()));
  }
  const std::size_t C = x->dim(0), H = x->dim(1), W = x->dim(2);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ShapeError(fmt::format("maxpool2: spatial dimensions must be even, got {}x{}", H, W));
  }
  const std::size_t Ho = H / 2, Wo = W / 2;
  auto out = make_var(Tensor(Shape{C, Ho, Wo}));
  const bool record = tape.needs_grad({&x});
  std::vector<std::uint32_t> argmax(record ? out->size() : 0);
  const bool track = tape.tracking_branches();
  std::vector<std::uint64_t> winners(track ? (out->size() + 31) / 32 : 0);
  auto in = x->data();
  auto y = out->data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t r = 0; r < Ho; ++r) {
      for (std::size_t col = 0; col < Wo; ++col) {
        const std::size_t base = (c * H + 2 * r) * W + 2 * col;
        // Branch-free first maximum in window order (slot 0..3).
        const double c0 = in[base], c1 = in[base + 1], c2 = in[base + W], c3 = in[base + W + 1];
        const std::size_t right_top = c1 > c0, right_bottom = c3 > c2;
        const double m_top = std::max(c0, c1), m_bottom = std::max(c2, c3);
        const std::size_t lower = m_bottom > m_top;
        const std::size_t slot = lower ? 2 + right_bottom : right_top;
        const std::size_t best = base + (slot >> 1) * W + (slot & 1);
        const std::size_t o = (c * Ho + r) * Wo + col;
        y[o] = std::max(m_top, m_bottom);
        if (track) {
          winners[o / 32] |= static_cast<std::uint64_t>(slot) << (2 * (o % 32));
        }
        if (record) {
          argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  if (track) {
    tape.append_branches(winners);
  }
  if (record) {
    tape.record(out, [x, argmax = std::move(argmax)](const Tensor& yt) {
      auto g = yt.grad();
      auto dx = x->grad();
      for (std::size_t o = 0; o < g.size(); ++o) {
        dx[argmax[o]] += g[o];
      }
    });
  }
  return out;
}

Var conv2d_maxpool2(Tape& tape, const Var& x, const Var& weights, const Var& bias,
                    ConvAlgorithm algorithm) {
  if (x->rank() != 3 || weights->rank() != 4 || bias->rank() != 1 || weights->dim(2) != 3 ||
      weights->dim(3) != 3 || weights->dim(1) != x->dim(0) || bias->dim(0) != weights->dim(0)) {
    throw ShapeError(fmt::format("conv2d: input {} incompatible with weights {} and bias {}",
                                 shape_string(x->shape()), shape_string(weights->shape()),
                                 shape_string(bias->shape())));
  }
  const ConvGeometry g{x->dim(0), weights->dim(0), x->dim(1), x->dim(2)};
  if (choose_conv_algorithm(g, algorithm) != ConvAlgorithm::direct) {
    return maxpool2(tape, conv2d(tape, x, weights, bias, algorithm));
  }
  if (g.height % 2 != 0 || g.width % 2 != 0) {
    throw ShapeError(fmt::format("maxpool2: spatial dimensions must be even, got {}x{}",
                                 g.height, g.width));
  }
  const std::size_t Ho = g.height / 2, Wo = g.width / 2;
  auto kernel = std::make_shared<ConvPool3x3>(g);
  auto out = make_var(Tensor(Shape{g.out_channels, Ho, Wo}));
  std::vector<std::uint32_t> winners(out->size());
  kernel->forward(x->data(), weights->data(), bias->data(), out->data(), winners);
  if (tape.tracking_branches()) {
    // Same encoding as maxpool2: window slot 0..3 in row-major order.
    std::vector<std::uint64_t> slots((out->size() + 31) / 32, 0);
    for (std::size_t o = 0; o < winners.size(); ++o) {
      const std::size_t within = o % (Ho * Wo);
      const std::size_t r = within / Wo, q = within % Wo;
      const std::size_t w = winners[o];
      const std::uint64_t slot = (w / g.width - 2 * r) * 2 + (w % g.width - 2 * q);
      slots[o / 32] |= slot << (2 * (o % 32));
    }
    tape.append_branches(slots);
  }
  if (tape.needs_grad({&x, &weights, &bias})) {
    tape.record(out, [x, weights, bias, kernel, winners = std::move(winners)](const Tensor& y) {
      std::vector<double> sink_w, sink_b;
      auto dw = weights->requires_grad() ? weights->grad()
                                         : (sink_w.assign(weights->size(), 0.0), sink_w);
      auto db = bias->requires_grad() ? bias->grad() : (sink_b.assign(bias->size(), 0.0), sink_b);
      auto dx = x->requires_grad() ? x->grad() : std::span<double>{};
      kernel->backward(y.grad(), x->data(), weights->data(), winners, dx, dw, db);
    });
  }
  return out;
}

Var relu(Tape& tape, const Var& x) {
  auto out = make_var(Tensor(x->shape()));
  auto in = x->data();
  auto y = out->data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    y[i] = in[i] > 0.0 ? in[i] : 0.0;
  }
  if (tape.tracking_branches()) {
    std::vector<std::uint64_t> mask((in.size() + 63) / 64, 0);
    for (std::size_t i = 0; i < in.size(); ++i) {
      mask[i / 64] |= static_cast<std::uint64_t>(in[i] > 0.0) << (i % 64);
    }
    tape.append_branches(mask);
  }
  if (tape.needs_grad({&x})) {
    tape.record(out, [x](const Tensor& yt) {
      auto g = yt.grad();
      auto in = x->data();
      auto dx = x->grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (in[i] > 0.0) {
          dx[i] += g[i];
        }
      }
    });
  }
  return out;
}

Var sigmoid(Tape& tape, const Var& x) {
  auto out = make_var(Tensor(x->shape()));
  auto in = x->data();
  auto y = out->data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    y[i] = sigmoid_value(in[i]);
  }
  if (tape.needs_grad({&x})) {
    tape.record(out, [x](const Tensor& yt) {
      auto g = yt.grad();
      auto s = yt.data();
      auto dx = x->grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        dx[i] += g[i] * s[i] * (1.0 - s[i]);
      }
    });
  }
  return out;
}

Var dense(Tape& tape, const Var& x, const Var& weights, const Var& bias) {
  if (weights->rank() != 2 || bias->rank() != 1 || weights->dim(1) != x->size() ||
      bias->dim(0) != weights->dim(0)) {
    throw ShapeError(fmt::format("dense: input {} incompatible with weights {} and bias {}",
                                 shape_string(x->shape()), shape_string(weights->shape()),
                                 shape_string(bias->shape())));
  }
  const std::size_t m = weights->dim(0), n = weights->dim(1);
  auto out = make_var(Tensor(Shape{m}));
  as_vector(out->data()).noalias() =
      as_matrix(*weights, m, n) * as_vector(x->data()) + as_vector(bias->data());
  if (tape.needs_grad({&x, &weights, &bias})) {
    tape.record(out, [x, weights, bias, m, n](const Tensor& y) {
      auto g = as_vector(y.grad());
      if (weights->requires_grad()) {
        Eigen::Map<RowMatrix> dw(weights->grad().data(), static_cast<Eigen::Index>(m),
                                 static_cast<Eigen::Index>(n));
        dw.noalias() += g * as_vector(x->data()).transpose();
      }
      if (bias->requires_grad()) {
        as_vector(bias->grad()) += g;
      }
      if (x->requires_grad()) {
        as_vector(x->grad()).noalias() += as_matrix(*weights, m, n).transpose() * g;
      }
    });
  }
  return out;
}

Var dropout(Tape& tape, const Var& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw DomainError(fmt::format("dropout rate must lie in [0,1), got {}", rate));
  }
  if (mode == Mode::eval || rate == 0.0) {
    return x;
  }
  const double scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x->size());
  for (double& m : mask) {
    m = uniform01(rng) < rate ? 0.0 : scale;
  }
  auto out = make_var(Tensor(x->shape()));
  auto in = x->data();
  auto y = out->data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    y[i] = in[i] * mask[i];
  }
  if (tape.needs_grad({&x})) {
    tape.record(out, [x, mask = std::move(mask)](const Tensor& yt) {
      auto g = yt.grad();
      auto dx = x->grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        dx[i] += g[i] * mask[i];
      }
    });
  }
  return out;
}

Var entropy_loss(Tape& tape, const Var& p1, const ProbabilityPair& target, const LossSpec& spec,
                 double weight) {
  if (p1->size() != 1) {
    throw ShapeError("entropy_loss: expected a scalar probability");
  }
  if (!std::isfinite((*p1)[0])) {
    throw NumericalError(fmt::format("non-finite network output {}", (*p1)[0]));
  }
  const ProbabilityPair p = ProbabilityPair::from_p1((*p1)[0]);
  auto out = scalar(weight * cross_entropy(target, p, spec));
  if (tape.tracking_branches()) {
    const double eps = spec.clamp_epsilon;
    const std::uint64_t clamped = p.p1 < eps ? 1 : p.p1 > 1.0 - eps ? 2 : 0;
    tape.append_branches(std::span<const std::uint64_t>(&clamped, 1));
  }
  if (tape.needs_grad({&p1})) {
    const double dp1 = weight * cross_entropy_grad(target, p, spec);
    tape.record(out, [p1, dp1](const Tensor& y) { p1->grad()[0] += dp1 * y.grad()[0]; });
  }
  return out;
}

}  // namespace entroloss::nn
