#pragma once

#include <vector>

#include "tensor.hpp"

namespace entroloss {

enum class OptimizerKind { sgd, adam };

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First-order update over a fixed parameter list, reading each parameter's
/// accumulated gradient.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, std::vector<nn::Var> params,
            AdamSettings adam = {});

  /// Applies one update and returns how many scalars it touched.
  std::size_t step();
  std::size_t steps_taken() const { return t_; }
  OptimizerKind kind() const { return kind_; }

 private:
  OptimizerKind kind_;
  double lr_;
  AdamSettings adam_;
  std::vector<nn::Var> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

}  // namespace entroloss
