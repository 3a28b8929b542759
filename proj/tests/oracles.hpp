#pragma once

// Independent reference implementations. Nothing here calls into the
// library's numerical code.

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cstddef>
#include <vector>

namespace oracle {

using Big = boost::multiprecision::cpp_bin_float_50;

inline Big clamp(Big p, double eps) {
  const Big lo = eps;
  const Big hi = Big(1) - Big(eps);
  return p < lo ? lo : (p > hi ? hi : p);
}

// q and p are given by their informative component.
inline double shannon_ce(double q1, double p1, double eps) {
  const Big c1 = clamp(Big(p1), eps);
  const Big c0 = clamp(Big(1) - Big(p1), eps);
  const Big r = -(Big(q1) * log(c1) + (Big(1) - Big(q1)) * log(c0));
  return static_cast<double>(r);
}

inline double hc_ce(double q1, double p1, double alpha, double eps) {
  if (alpha == 1.0) return shannon_ce(q1, p1, eps);
  const Big a = alpha;
  const Big c1 = clamp(Big(p1), eps);
  const Big c0 = clamp(Big(1) - Big(p1), eps);
  const Big s = Big(q1) * pow(c1, a - 1) + (Big(1) - Big(q1)) * pow(c0, a - 1);
  return static_cast<double>((Big(1) - s) / (a - 1));
}

inline double hc_entropy(double p1, double alpha) {
  const Big b1 = p1;
  const Big b0 = Big(1) - b1;
  if (alpha == 1.0) {
    Big r = 0;
    if (b1 > 0) r -= b1 * log(b1);
    if (b0 > 0) r -= b0 * log(b0);
    return static_cast<double>(r);
  }
  const Big a = alpha;
  return static_cast<double>((Big(1) - pow(b1, a) - pow(b0, a)) / (a - 1));
}

// Textbook 7-deep loop, zero padding of one pixel.
inline std::vector<double> conv3x3(const std::vector<double>& x, const std::vector<double>& w,
                                   const std::vector<double>& b, std::size_t cin,
                                   std::size_t cout, std::size_t h, std::size_t wd) {
  std::vector<double> y(cout * h * wd);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < wd; ++c) {
        double acc = b[o];
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t dy = 0; dy < 3; ++dy) {
            for (std::size_t dx = 0; dx < 3; ++dx) {
              const long rr = static_cast<long>(r + dy) - 1;
              const long cc = static_cast<long>(c + dx) - 1;
              if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(wd)) {
                continue;
              }
              acc += w[((o * cin + ci) * 3 + dy) * 3 + dx] *
                     x[(ci * h + static_cast<std::size_t>(rr)) * wd + static_cast<std::size_t>(cc)];
            }
          }
        }
        y[(o * h + r) * wd + c] = acc;
      }
    }
  }
  return y;
}

inline std::vector<double> maxpool2(const std::vector<double>& x, std::size_t ch, std::size_t h,
                                    std::size_t w) {
  std::vector<double> y(ch * (h / 2) * (w / 2));
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t r = 0; r < h / 2; ++r) {
      for (std::size_t q = 0; q < w / 2; ++q) {
        double m = x[(c * h + 2 * r) * w + 2 * q];
        for (std::size_t k = 1; k < 4; ++k) {
          m = std::max(m, x[(c * h + 2 * r + k / 2) * w + 2 * q + k % 2]);
        }
        y[(c * (h / 2) + r) * (w / 2) + q] = m;
      }
    }
  }
  return y;
}

}  // namespace oracle
