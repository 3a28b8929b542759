#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace entroloss::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer of the
/// same length. Tensors that require a gradient take part in reverse-mode
/// differentiation; their gradient buffer accumulates across backward passes
/// until zero_grad().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on);

  bool has_grad() const { return grad_.has_value(); }
  /// Gradient buffer, allocated zero-filled on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();
  void clear_grad() { grad_.reset(); }

  /// Same data, new shape of equal element count.
  void reshape(Shape shape);

 private:
  Shape shape_;
  std::vector<double> data_;
  std::optional<std::vector<double>> grad_;
  bool requires_grad_ = false;
};

using Var = std::shared_ptr<Tensor>;

Var make_var(Tensor t, bool requires_grad = false);

/// Records the forward computation so gradients can be propagated in reverse.
/// A tape created with recording disabled evaluates ops without keeping any
/// state for differentiation.
class Tape {
 public:
  using Pullback = std::function<void(const Tensor& output)>;

  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  /// Whether an op over `inputs` must be recorded.
  bool needs_grad(std::initializer_list<const Var*> inputs) const;

  /// Register `output` as produced by an op; `pullback` reads output.grad()
  /// and accumulates into the op's inputs.
  void record(const Var& output, Pullback pullback);

  /// Seeds d loss / d loss = 1 and propagates to every tensor that requires a
  /// gradient. Consumes the recorded graph. Throws StateError when nothing was
  /// recorded or `loss` was not produced on this tape, ShapeError for a
  /// non-scalar loss.
  void backward(const Var& loss);

  void clear() { entries_.clear(); }

  /// When enabled, piecewise ops (ReLU masks, max-pool winners) append their
  /// discrete decisions here, so two evaluations can be checked for lying on
  /// the same smooth piece.
  void track_branches(bool on) { tracking_ = on; }
  bool tracking_branches() const { return tracking_; }
  void append_branches(std::span<const std::uint64_t> words) {
    branches_.insert(branches_.end(), words.begin(), words.end());
  }
  const std::vector<std::uint64_t>& branches() const { return branches_; }

 private:
  struct Entry {
    Var output;
    Pullback pullback;
  };
  std::vector<Entry> entries_;
  bool recording_;
  bool tracking_ = false;
  std::vector<std::uint64_t> branches_;
};

}  // namespace entroloss::nn
