#pragma once

// Shannon and Havrda-Charvat entropies and cross-entropies over the binary
// outcome space {0 = uninformative, 1 = informative}, plus the analytic
// derivative used to train a sigmoid classifier with these losses.
//
// Natural logarithms throughout. 0*log(0) and 0^b (b > 0) evaluate to 0.

#include <cstdint>
#include <functional>
#include <span>

namespace entroloss {

enum class BinaryOutcome : std::uint8_t { uninformative = 0, informative = 1 };

/// A distribution over the two outcomes. Components are non-negative and sum
/// to one within 1e-9; operations validate on entry.
struct ProbabilityPair {
  double p0 = 0.5;
  double p1 = 0.5;

  static ProbabilityPair from_p1(double p1) { return {1.0 - p1, p1}; }
  static ProbabilityPair dirac(BinaryOutcome outcome) {
    return outcome == BinaryOutcome::informative ? ProbabilityPair{0.0, 1.0}
                                                 : ProbabilityPair{1.0, 0.0};
  }

  double operator[](BinaryOutcome o) const {
    return o == BinaryOutcome::informative ? p1 : p0;
  }
  bool is_valid() const;
};

/// Reference measure on the outcome space; (1,1) is the counting measure.
struct Measure {
  double w0 = 1.0;
  double w1 = 1.0;

  static Measure counting() { return {}; }
  bool is_valid() const { return w0 > 0.0 && w1 > 0.0; }
};

enum class EntropyFamily { shannon, havrda_charvat };

inline constexpr double kDefaultClampEpsilon = 1e-7;
inline constexpr double kMaxClampEpsilon = 1e-3;

struct LossSpec {
  EntropyFamily family = EntropyFamily::shannon;
  double alpha = 1.0;
  Measure measure{};
  double clamp_epsilon = kDefaultClampEpsilon;

  static LossSpec shannon() { return {}; }
  /// alpha == 1 selects the Shannon family.
  static LossSpec havrda_charvat(double alpha);

  /// Shannon, or Havrda-Charvat at alpha == 1.
  bool is_shannon() const { return family == EntropyFamily::shannon || alpha == 1.0; }
  /// Throws DomainError when alpha < 1, the measure is not positive, or the
  /// clamp epsilon is outside (0, 1e-3].
  void validate() const;
};

/// The convex functional (p^a - p)/(a - 1); p*log(p) at a == 1.
double h_alpha(double p, double alpha);

double shannon_entropy(const ProbabilityPair& p, const Measure& nu = {});
double hc_entropy(const ProbabilityPair& p, double alpha, const Measure& nu = {});

/// -sum h(p(w)) q(w) / p(w), with p clamped to [eps, 1-eps].
double generalized_cross_entropy(const ProbabilityPair& q, const ProbabilityPair& p,
                                 const std::function<double(double)>& h,
                                 double eps = kDefaultClampEpsilon);

double shannon_cross_entropy(const ProbabilityPair& q, const ProbabilityPair& p,
                             double eps = kDefaultClampEpsilon, const Measure& nu = {});

/// (1 - sum p(w)^(a-1) q(w)) / (a - 1). Dispatches to Shannon at a == 1.
double hc_cross_entropy(const ProbabilityPair& q, const ProbabilityPair& p, double alpha,
                        double eps = kDefaultClampEpsilon, const Measure& nu = {});

/// d hc_cross_entropy / d p(1) with p(0) = 1 - p(1):
///   -q(1) p(1)^(a-2) + q(0) p(0)^(a-2),
/// evaluated at the clamped point. Valid for a == 1 (the Shannon gradient).
double hc_cross_entropy_grad(const ProbabilityPair& q, const ProbabilityPair& p, double alpha,
                             double eps = kDefaultClampEpsilon, const Measure& nu = {});

double cross_entropy(const ProbabilityPair& q, const ProbabilityPair& p, const LossSpec& spec);
double cross_entropy_grad(const ProbabilityPair& q, const ProbabilityPair& p,
                          const LossSpec& spec);

/// Mean of the per-sample cross-entropies.
double batch_loss(std::span<const ProbabilityPair> targets,
                  std::span<const ProbabilityPair> outputs, const LossSpec& spec);

}  // namespace entroloss
