#include "entropy.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "errors.hpp"

namespace entroloss {

namespace {

constexpr double kSumTolerance = 1e-9;

void require_valid(const ProbabilityPair& p, const char* what) {
  if (!p.is_valid()) {
    throw DomainError(fmt::format("{} is not a probability pair: ({}, {})", what, p.p0, p.p1));
  }
}

void require_alpha(double alpha) {
  if (!(alpha >= 1.0) || !std::isfinite(alpha)) {
    throw DomainError(fmt::format("alpha must be >= 1, got {}", alpha));
  }
}

void require_eps(double eps) {
  if (!(eps > 0.0 && eps <= kMaxClampEpsilon)) {
    throw DomainError(fmt::format("clamp epsilon must lie in (0, {}], got {}", kMaxClampEpsilon, eps));
  }
}

void require_measure(const Measure& nu) {
  if (!nu.is_valid()) {
    throw DomainError(fmt::format("measure weights must be positive, got ({}, {})", nu.w0, nu.w1));
  }
}

// p clamped to [eps, 1 - eps] on the p(1) coordinate; p(0) follows.
ProbabilityPair clamped(const ProbabilityPair& p, double eps) {
  const double p1 = std::clamp(p.p1, eps, 1.0 - eps);
  return {1.0 - p1, p1};
}

double x_log_x(double p) { return p == 0.0 ? 0.0 : p * std::log(p); }

// (1 - p^(a-1)) / (a - 1) for p in (0, 1], a > 1; expm1 keeps the a -> 1 end
// accurate.
double hc_term(double p, double alpha) {
  const double b = alpha - 1.0;
  return -std::expm1(b * std::log(p)) / b;
}

}  // namespace

bool ProbabilityPair::is_valid() const {
  return std::isfinite(p0) && std::isfinite(p1) && p0 >= 0.0 && p1 >= 0.0 && p0 <= 1.0 &&
         p1 <= 1.0 && std::abs(p0 + p1 - 1.0) <= kSumTolerance;
}

LossSpec LossSpec::havrda_charvat(double alpha) {
  LossSpec spec;
  spec.family = alpha == 1.0 ? EntropyFamily::shannon : EntropyFamily::havrda_charvat;
  spec.alpha = alpha;
  return spec;
}

void LossSpec::validate() const {
  require_alpha(alpha);
  require_measure(measure);
  require_eps(clamp_epsilon);
}

double h_alpha(double p, double alpha) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw DomainError(fmt::format("h_alpha: p must lie in [0,1], got {}", p));
  }
  require_alpha(alpha);
  if (p == 0.0) {
    return 0.0;
  }
  if (alpha == 1.0) {
    return x_log_x(p);
  }
  // (p^a - p)/(a-1) = p (p^(a-1) - 1)/(a-1)
  return -p * hc_term(p, alpha);
}

double shannon_entropy(const ProbabilityPair& p, const Measure& nu) {
  require_valid(p, "p");
  require_measure(nu);
  return -(x_log_x(p.p0) * nu.w0 + x_log_x(p.p1) * nu.w1);
}

double hc_entropy(const ProbabilityPair& p, double alpha, const Measure& nu) {
  require_alpha(alpha);
  if (alpha == 1.0) {
    return shannon_entropy(p, nu);
  }
  require_valid(p, "p");
  require_measure(nu);
  return -(h_alpha(p.p0, alpha) * nu.w0 + h_alpha(p.p1, alpha) * nu.w1);
}

double generalized_cross_entropy(const ProbabilityPair& q, const ProbabilityPair& p,
                                 const std::function<double(double)>& h, double eps) {
  require_valid(q, "q");
  require_valid(p, "p");
  require_eps(eps);
  const ProbabilityPair pc = clamped(p, eps);
  double sum = 0.0;
  if (q.p0 != 0.0) {
    sum += h(pc.p0) * q.p0 / pc.p0;
  }
  if (q.p1 != 0.0) {
    sum += h(pc.p1) * q.p1 / pc.p1;
  }
  return -sum;
}

double shannon_cross_entropy(const ProbabilityPair& q, const ProbabilityPair& p, double eps,
                             const Measure& nu) {
  require_valid(q, "q");
  require_valid(p, "p");
  require_eps(eps);
  require_measure(nu);
  const ProbabilityPair pc = clamped(p, eps);
  double sum = 0.0;
  if (q.p0 != 0.0) {
    sum -= q.p0 * std::log(pc.p0) * nu.w0;
  }
  if (q.p1 != 0.0) {
    sum -= q.p1 * std::log(pc.p1) * nu.w1;
  }
  return sum;
}

double hc_cross_entropy(const ProbabilityPair& q, const ProbabilityPair& p, double alpha,
                        double eps, const Measure& nu) {
  require_alpha(alpha);
  if (alpha == 1.0) {
    return shannon_cross_entropy(q, p, eps, nu);
  }
  require_valid(q, "q");
  require_valid(p, "p");
  require_eps(eps);
  require_measure(nu);
  const ProbabilityPair pc = clamped(p, eps);
  // sum q (1 - p^(a-1)) / (a-1) equals (1 - sum p^(a-1) q)/(a-1) since sum q = 1.
  double sum = 0.0;
  if (q.p0 != 0.0) {
    sum += q.p0 * hc_term(pc.p0, alpha) * nu.w0;
  }
  if (q.p1 != 0.0) {
    sum += q.p1 * hc_term(pc.p1, alpha) * nu.w1;
  }
  return sum;
}

double hc_cross_entropy_grad(const ProbabilityPair& q, const ProbabilityPair& p, double alpha,
                             double eps, const Measure& nu) {
  require_alpha(alpha);
  require_valid(q, "q");
  require_valid(p, "p");
  require_eps(eps);
  require_measure(nu);
  const ProbabilityPair pc = clamped(p, eps);
  const double e = alpha - 2.0;
  double g = 0.0;
  if (q.p1 != 0.0) {
    g -= q.p1 * std::pow(pc.p1, e) * nu.w1;
  }
  if (q.p0 != 0.0) {
    g += q.p0 * std::pow(pc.p0, e) * nu.w0;
  }
  return g;
}

double cross_entropy(const ProbabilityPair& q, const ProbabilityPair& p, const LossSpec& spec) {
  spec.validate();
  if (spec.is_shannon()) {
    return shannon_cross_entropy(q, p, spec.clamp_epsilon, spec.measure);
  }
  return hc_cross_entropy(q, p, spec.alpha, spec.clamp_epsilon, spec.measure);
}

double cross_entropy_grad(const ProbabilityPair& q, const ProbabilityPair& p,
                          const LossSpec& spec) {
  spec.validate();
  return hc_cross_entropy_grad(q, p, spec.is_shannon() ? 1.0 : spec.alpha, spec.clamp_epsilon,
                               spec.measure);
}

double batch_loss(std::span<const ProbabilityPair> targets,
                  std::span<const ProbabilityPair> outputs, const LossSpec& spec) {
  if (targets.size() != outputs.size()) {
    throw DomainError(fmt::format("batch_loss: {} targets but {} outputs", targets.size(),
                                  outputs.size()));
  }
  if (targets.empty()) {
    throw DomainError("batch_loss: empty batch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    sum += cross_entropy(targets[i], outputs[i], spec);
  }
  return sum / static_cast<double>(targets.size());
}

}  // namespace entroloss
