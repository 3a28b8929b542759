#include "tensor.hpp"

#include <algorithm>

#include <fmt/core.h>

#include "errors.hpp"

namespace entroloss::nn {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    s += (i ? "," : "") + std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) {
      throw ShapeError("tensor dimensions must be positive: " + shape_string(shape_));
    }
  }
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError(fmt::format("shape {} holds {} elements, data has {}", shape_string(shape_),
                                 shape_size(shape_), data_.size()));
  }
}

void Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (!on) {
    grad_.reset();
  }
}

std::span<double> Tensor::grad() {
  if (!grad_) {
    grad_.emplace(data_.size(), 0.0);
  }
  return *grad_;
}

std::span<const double> Tensor::grad() const {
  if (!grad_) {
    throw StateError("tensor has no gradient buffer");
  }
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) {
    std::fill(grad_->begin(), grad_->end(), 0.0);
  }
}

void Tensor::reshape(Shape shape) {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError(fmt::format("cannot reshape {} to {}", shape_string(shape_),
                                 shape_string(shape)));
  }
  shape_ = std::move(shape);
}

Var make_var(Tensor t, bool requires_grad) {
  auto v = std::make_shared<Tensor>(std::move(t));
  v->set_requires_grad(requires_grad);
  return v;
}

bool Tape::needs_grad(std::initializer_list<const Var*> inputs) const {
  if (!recording_) {
    return false;
  }
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Var* v) { return *v && (*v)->requires_grad(); });
}

void Tape::record(const Var& output, Pullback pullback) {
  output->set_requires_grad(true);
  entries_.push_back({output, std::move(pullback)});
}

void Tape::backward(const Var& loss) {
  if (entries_.empty()) {
    throw StateError("backward called before any forward pass was recorded");
  }
  if (!loss || loss->size() != 1) {
    throw ShapeError("backward requires a scalar loss");
  }
  auto it = std::find_if(entries_.rbegin(), entries_.rend(),
                         [&](const Entry& e) { return e.output == loss; });
  if (it == entries_.rend()) {
    throw StateError("loss was not produced by this tape");
  }
  // Intermediate gradients start from zero; parameters keep accumulating.
  for (auto& e : entries_) {
    e.output->grad();
    e.output->zero_grad();
  }
  loss->grad()[0] = 1.0;
  for (; it != entries_.rend(); ++it) {
    it->pullback(*it->output);
  }
  entries_.clear();
}

}  // namespace entroloss::nn
