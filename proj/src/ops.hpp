#pragma once

// Differentiable operations. Each op evaluates eagerly and, when the tape is
// recording and some input requires a gradient, records a pullback.

#include "conv_kernels.hpp"
#include "entropy.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace entroloss::nn {

enum class Mode { train, eval };

Var identity(Tape& tape, const Var& x);

/// Scalar sum of the elements of every input.
Var sum(Tape& tape, std::span<const Var> inputs);

/// Scalar 0.5 * sum x^2.
Var half_sum_squares(Tape& tape, const Var& x);

/// x: [C_in,H,W], weights: [C_out,C_in,3,3], bias: [C_out] -> [C_out,H,W].
/// Stride 1, one pixel of zero padding on each border.
Var conv2d(Tape& tape, const Var& x, const Var& weights, const Var& bias,
           ConvAlgorithm algorithm = ConvAlgorithm::automatic);

/// 2x2 / stride-2 max pooling over [C,H,W] with even H and W. The gradient
/// goes to the first maximal cell of each window in row-major order.
Var maxpool2(Tape& tape, const Var& x);

/// maxpool2(conv2d(x, weights, bias)) with identical values, gradients and
/// tie-breaking. Uses the fused kernel when the direct algorithm is selected.
Var conv2d_maxpool2(Tape& tape, const Var& x, const Var& weights, const Var& bias,
                    ConvAlgorithm algorithm = ConvAlgorithm::automatic);

Var relu(Tape& tape, const Var& x);

/// Elementwise logistic function, evaluated without overflow for any input.
Var sigmoid(Tape& tape, const Var& x);

/// weights: [m,n], bias: [m]; x is read as a flat vector of length n.
Var dense(Tape& tape, const Var& x, const Var& weights, const Var& bias);

/// Inverted dropout: in train mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate). Identity in eval mode.
Var dropout(Tape& tape, const Var& x, double rate, Mode mode, Rng& rng);

/// weight * cross_entropy(target, (1 - p1, p1)) for a scalar p1.
Var entropy_loss(Tape& tape, const Var& p1, const ProbabilityPair& target,
                 const LossSpec& spec, double weight = 1.0);

double sigmoid_value(double x);

}  // namespace entroloss::nn
