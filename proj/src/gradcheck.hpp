#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "entropy.hpp"
#include "model.hpp"
#include "tensor.hpp"

namespace entroloss {

struct GradCheckEntry {
  std::size_t param = 0;  // index into the parameter list
  std::size_t index = 0;  // flat index inside that parameter
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
  /// The +-step evaluations took a different ReLU, max-pool or clamp branch
  /// than the base point, so the difference quotient straddles a kink.
  bool crosses_kink = false;
  /// Relative error the difference quotient can show from rounding alone:
  /// eps * (|L(+h)| + |L(-h)|) / (2h) / max(|analytic|, |numeric|).
  double resolution = 0.0;
  /// resolution > max_resolution: the gradient is too small for the quotient
  /// to confirm it, so the entry does not count and another is drawn.
  bool unresolved = false;
};

struct GradCheckReport {
  /// Every evaluated entry, kink-crossing ones included.
  std::vector<GradCheckEntry> entries;
  /// Max over resolved entries that stay on one smooth piece.
  double max_relative_error = 0.0;
  /// Max over all entries, for reference.
  double max_relative_error_all = 0.0;
  std::size_t smooth_count = 0;
  std::size_t kink_count = 0;
  /// Smooth entries skipped as unresolved.
  std::size_t unresolved_count = 0;
  /// n_samples as requested.
  std::size_t requested = 0;
  /// False when the draw budget ran out first: the check did not confirm
  /// the requested number of entries and must not be read as a pass.
  bool complete() const { return smooth_count >= requested; }
};

/// Each requested sample may cost at most this many draws.
inline constexpr std::size_t kGradCheckDrawsPerSample = 20;

/// |a - n| / max(|a|, |n|, 1e-12).
double relative_error(double analytic, double numeric);

/// Builds the scalar loss on the given tape from the current parameter values.
using LossBuilder = std::function<nn::Var(nn::Tape&)>;

/// Compares reverse-mode gradients with central differences of step `step`
/// at parameter scalars drawn uniformly without replacement until n_samples
/// of them are resolved and lie on a smooth piece, every scalar has been
/// tried, or kGradCheckDrawsPerSample * n_samples draws are spent. Kink-
/// crossing and unresolved entries are kept in the report but drawn again.
/// Parameter values are restored afterwards. Throws DomainError for an empty
/// parameter list, n_samples == 0, or a step or max_resolution that is not
/// finite and positive.
GradCheckReport grad_check(const std::vector<nn::Var>& params, const LossBuilder& loss,
                           std::size_t n_samples, double step, std::uint64_t seed,
                           double max_resolution = 1e-5);

/// Eval-mode check of the whole network on one image with the entropy loss
/// against `target`.
GradCheckReport grad_check(const Model& model, const nn::Tensor& image,
                           const ProbabilityPair& target, const LossSpec& spec,
                           std::size_t n_samples, double step, std::uint64_t seed,
                           double max_resolution = 1e-5);

}  // namespace entroloss
