#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

#include "data.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace entroloss::data {

namespace {

constexpr double kPi = 3.14159265358979323846;

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

struct Point {
  double x, y;
};

Point bezier(const Point (&p)[4], double t) {
  const double u = 1.0 - t;
  const double b0 = u * u * u, b1 = 3 * u * u * t, b2 = 3 * u * t * t, b3 = t * t * t;
  return {b0 * p[0].x + b1 * p[1].x + b2 * p[2].x + b3 * p[3].x,
          b0 * p[0].y + b1 * p[1].y + b2 * p[2].y + b3 * p[3].y};
}

// Max-composites a Gaussian-profile ridge along a cubic Bezier curve.
void draw_stroke(std::vector<double>& layer, std::size_t side, Rng& rng) {
  const double lo = 0.1 * static_cast<double>(side), hi = 0.9 * static_cast<double>(side);
  Point ctrl[4];
  for (auto& c : ctrl) {
    c = {uniform(rng, lo, hi), uniform(rng, lo, hi)};
  }
  const double width = uniform(rng, 1.0, 2.0);
  const double amplitude = uniform(rng, 0.3, 0.45);
  double polygon = 0.0;
  for (int i = 0; i < 3; ++i) {
    polygon += std::hypot(ctrl[i + 1].x - ctrl[i].x, ctrl[i + 1].y - ctrl[i].y);
  }
  const auto steps = static_cast<std::size_t>(std::ceil(2.0 * polygon)) + 1;
  const int reach = static_cast<int>(std::ceil(3.0 * width));
  const double inv2s2 = 1.0 / (2.0 * width * width);
  for (std::size_t s = 0; s <= steps; ++s) {
    const Point c = bezier(ctrl, static_cast<double>(s) / static_cast<double>(steps));
    const int cx = static_cast<int>(std::lround(c.x)), cy = static_cast<int>(std::lround(c.y));
    for (int y = std::max(0, cy - reach); y <= std::min<int>(static_cast<int>(side) - 1, cy + reach); ++y) {
      for (int x = std::max(0, cx - reach); x <= std::min<int>(static_cast<int>(side) - 1, cx + reach); ++x) {
        const double d2 = (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y);
        double& v = layer[static_cast<std::size_t>(y) * side + static_cast<std::size_t>(x)];
        v = std::max(v, amplitude * std::exp(-d2 * inv2s2));
      }
    }
  }
}

nn::Tensor render(BinaryOutcome label, std::size_t side, double noise_sigma, Rng& rng) {
  const std::size_t npix = side * side;
  const double background = uniform(rng, 0.25, 0.35);
  std::vector<double> base(npix, background);
  if (label == BinaryOutcome::informative) {
    std::vector<double> strokes(npix, 0.0);
    const auto count = 3 + static_cast<std::size_t>(rng() % 6);  // 3..8
    for (std::size_t i = 0; i < count; ++i) {
      draw_stroke(strokes, side, rng);
    }
    for (std::size_t i = 0; i < npix; ++i) {
      base[i] += strokes[i];
    }
  } else if (uniform01(rng) < 0.5) {
    // Low-frequency illumination ramp across the frame.
    const double theta = uniform(rng, 0.0, 2.0 * kPi);
    const double amplitude = uniform(rng, 0.2, 0.4);
    const double c = 0.5 * static_cast<double>(side - 1);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double along = ((static_cast<double>(x) - c) * std::cos(theta) +
                              (static_cast<double>(y) - c) * std::sin(theta)) /
                             static_cast<double>(side);
        base[y * side + x] += amplitude * along;
      }
    }
  }
  std::normal_distribution<double> noise(0.0, noise_sigma);
  nn::Tensor image(nn::Shape{1, side, side});
  auto px = image.data();
  for (std::size_t i = 0; i < npix; ++i) {
    const double n = noise_sigma > 0.0 ? noise(rng) : 0.0;
    px[i] = std::clamp(base[i] + n, 0.0, 1.0);
  }
  return image;
}

}  // namespace

std::size_t SynthSpec::informative_count() const {
  const auto k = static_cast<std::size_t>(
      std::llround(informative_fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

Dataset synth_generate(const SynthSpec& spec) {
  if (spec.n < 2) {
    throw DomainError(fmt::format("synthetic dataset needs n >= 2, got {}", spec.n));
  }
  if (!(spec.informative_fraction > 0.0 && spec.informative_fraction < 1.0)) {
    throw DomainError(fmt::format("informative fraction must lie in (0,1), got {}",
                                  spec.informative_fraction));
  }
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw DomainError("noise_sigma must be finite and non-negative");
  }
  if (spec.side < 8) {
    throw DomainError("synthetic images must be at least 8 pixels wide");
  }
  std::vector<BinaryOutcome> labels(spec.n, BinaryOutcome::uninformative);
  std::fill_n(labels.begin(), spec.informative_count(), BinaryOutcome::informative);
  Rng order_rng = make_rng(spec.seed, {0x4c42u});
  std::shuffle(labels.begin(), labels.end(), order_rng);

  Dataset ds;
  ds.samples.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    Rng rng = make_rng(spec.seed, {0x494du, i});
    ds.samples.push_back({render(labels[i], spec.side, spec.noise_sigma, rng), labels[i],
                          fmt::format("synth-{:05d}", i)});
  }
  return ds;
}

}  // namespace entroloss::data
