#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <unordered_set>

#include <fmt/core.h>

#include "errors.hpp"
#include "rng.hpp"

namespace entroloss {

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport grad_check(const std::vector<nn::Var>& params, const LossBuilder& loss,
                           std::size_t n_samples, double step, std::uint64_t seed,
                           double max_resolution) {
  if (params.empty()) {
    throw DomainError("gradient check needs at least one parameter");
  }
  if (n_samples == 0) {
    throw DomainError("gradient check needs at least one sample");
  }
  if (!(step > 0.0) || !std::isfinite(step)) {
    throw DomainError(fmt::format("finite-difference step must be finite and > 0, got {}", step));
  }
  if (!(max_resolution > 0.0) || !std::isfinite(max_resolution)) {
    throw DomainError(
        fmt::format("max_resolution must be finite and > 0, got {}", max_resolution));
  }
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : params) {
    offsets.push_back(total);
    total += p->size();
  }
  if (total == 0) {
    throw DomainError("gradient check needs at least one parameter scalar");
  }

  for (const auto& p : params) {
    p->set_requires_grad(true);
    p->zero_grad();
  }
  {
    nn::Tape tape;
    auto l = loss(tape);
    tape.backward(l);
  }

  struct Eval {
    double loss;
    std::vector<std::uint64_t> branches;
  };
  auto evaluate = [&] {
    nn::Tape tape(false);
    tape.track_branches(true);
    auto l = loss(tape);
    if (l->size() != 1) {
      throw ShapeError("gradient check loss must be a scalar");
    }
    return Eval{(*l)[0], tape.branches()};
  };
  const Eval base = evaluate();

  Rng rng = make_rng(seed, {0x4743u});
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  std::unordered_set<std::size_t> seen;
  auto next_index = [&]() -> std::optional<std::size_t> {
    if (seen.size() == total) return std::nullopt;
    if (2 * seen.size() >= total) {
      // Dense regime: walk forward from a random start to stay O(total).
      for (std::size_t k = pick(rng);; k = (k + 1) % total) {
        if (seen.insert(k).second) return k;
      }
    }
    while (true) {
      const std::size_t k = pick(rng);
      if (seen.insert(k).second) return k;
    }
  };

  GradCheckReport report;
  report.requested = n_samples;
  const std::size_t budget = kGradCheckDrawsPerSample * n_samples;
  while (report.smooth_count < n_samples && report.entries.size() < budget) {
    const auto flat = next_index();
    if (!flat) break;
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), *flat);
    const auto pi = static_cast<std::size_t>(it - offsets.begin()) - 1;
    const std::size_t idx = *flat - offsets[pi];
    auto w = params[pi]->data();
    const double saved = w[idx];
    w[idx] = saved + step;
    const Eval up = evaluate();
    w[idx] = saved - step;
    const Eval down = evaluate();
    w[idx] = saved;
    GradCheckEntry e;
    e.param = pi;
    e.index = idx;
    e.analytic = params[pi]->grad()[idx];
    e.numeric = (up.loss - down.loss) / (2.0 * step);
    e.relative_error = relative_error(e.analytic, e.numeric);
    e.crosses_kink = up.branches != base.branches || down.branches != base.branches;
    const double rounding = std::numeric_limits<double>::epsilon() *
                            (std::abs(up.loss) + std::abs(down.loss)) / (2.0 * step);
    const double magnitude = std::max(std::abs(e.analytic), std::abs(e.numeric));
    e.resolution = magnitude > 0.0 ? rounding / magnitude : std::numeric_limits<double>::infinity();
    e.unresolved = e.resolution > max_resolution;
    report.max_relative_error_all = std::max(report.max_relative_error_all, e.relative_error);
    if (e.crosses_kink) {
      ++report.kink_count;
    } else if (e.unresolved) {
      ++report.unresolved_count;
    } else {
      ++report.smooth_count;
      report.max_relative_error = std::max(report.max_relative_error, e.relative_error);
    }
    report.entries.push_back(e);
  }
  return report;
}

GradCheckReport grad_check(const Model& model, const nn::Tensor& image,
                           const ProbabilityPair& target, const LossSpec& spec,
                           std::size_t n_samples, double step, std::uint64_t seed,
                           double max_resolution) {
  spec.validate();
  auto input = nn::make_var(image);
  LossBuilder loss = [&](nn::Tape& tape) {
    auto p1 = model.forward(tape, input, nn::Mode::eval);
    return nn::entropy_loss(tape, p1, target, spec);
  };
  return grad_check(model.parameters(), loss, n_samples, step, seed, max_resolution);
}

}  // namespace entroloss
