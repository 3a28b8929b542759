#include "optimizer.hpp"

#include <cmath>

#include <fmt/core.h>

#include "errors.hpp"

namespace entroloss {

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, std::vector<nn::Var> params,
                     AdamSettings adam)
    : kind_(kind), lr_(learning_rate), adam_(adam), params_(std::move(params)) {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw DomainError(fmt::format("learning rate must be finite and >= 0, got {}", learning_rate));
  }
  if (kind_ == OptimizerKind::adam) {
    for (const auto& p : params_) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
}

std::size_t Optimizer::step() {
  ++t_;
  std::size_t touched = 0;
  const double bc1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k]->data();
    auto g = params_[k]->grad();
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] -= lr_ * g[i];
      }
    } else {
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = adam_.beta1 * m[i] + (1.0 - adam_.beta1) * g[i];
        v[i] = adam_.beta2 * v[i] + (1.0 - adam_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr_ * mhat / (std::sqrt(vhat) + adam_.epsilon);
      }
    }
    touched += w.size();
  }
  return touched;
}

}  // namespace entroloss
