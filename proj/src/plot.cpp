#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/core.h>

#include "errors.hpp"

namespace entroloss {

namespace {

constexpr double kLeft = 70.0, kRight = 150.0, kTop = 40.0, kBottom = 50.0;

// Ticks at 1, 2 or 5 times a power of ten covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target) {
  const double span = hi - lo;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) {
    ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  }
  return ticks;
}

std::string tick_label(double v) { return fmt::format("{:.4g}", v); }

}  // namespace

std::string loss_curve_svg(std::span<const EpochRecord> records, std::optional<std::size_t> onset,
                           const PlotOptions& o) {
  if (records.empty()) {
    throw DomainError("cannot plot an empty report");
  }
  double ymin = records[0].train_loss, ymax = ymin;
  for (const auto& r : records) {
    for (double v : {r.train_loss, r.val_loss}) {
      if (!std::isfinite(v)) {
        throw DomainError("cannot plot non-finite losses");
      }
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  } else {
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
  }
  const double xmin = 0.0;
  const double xmax = std::max(1.0, static_cast<double>(records.back().epoch));
  const double pw = o.width - kLeft - kRight, ph = o.height - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return kTop + (ymax - y) / (ymax - ymin) * ph; };

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"12\">\n",
      o.width, o.height);
  s += fmt::format("<title>{}</title>\n", o.title);
  s += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", o.width, o.height);
  s += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
                   kLeft + pw / 2, o.title);

  // Axes.
  s += "<g id=\"axes\" stroke=\"black\" fill=\"none\">\n";
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\"/>\n", kLeft, kTop + ph,
                   kLeft + pw);
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\"/>\n", kLeft, kTop,
                   kTop + ph);
  s += "</g>\n<g id=\"x-ticks\">\n";
  for (double t : nice_ticks(xmin, xmax, 8)) {
    if (t != std::floor(t)) continue;
    const double x = sx(t);
    s += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1}\" x2=\"{0:.2f}\" y2=\"{2}\" stroke=\"black\"/>"
                     "<text x=\"{0:.2f}\" y=\"{3}\" text-anchor=\"middle\">{4}</text>\n",
                     x, kTop + ph, kTop + ph + 5, kTop + ph + 19, tick_label(t));
  }
  s += "</g>\n<g id=\"y-ticks\">\n";
  for (double t : nice_ticks(ymin, ymax, 6)) {
    const double y = sy(t);
    s += fmt::format("<line x1=\"{0}\" y1=\"{2:.2f}\" x2=\"{1}\" y2=\"{2:.2f}\" stroke=\"black\"/>"
                     "<text x=\"{3}\" y=\"{4:.2f}\" text-anchor=\"end\">{5}</text>\n",
                     kLeft - 5, kLeft, y, kLeft - 8, y + 4, tick_label(t));
  }
  s += "</g>\n";
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">epoch</text>\n", kLeft + pw / 2,
                   o.height - 10);
  s += fmt::format("<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" "
                   "transform=\"rotate(-90 16 {0})\">loss</text>\n",
                   kTop + ph / 2);

  if (onset) {
    const double x = sx(static_cast<double>(*onset));
    s += fmt::format("<line id=\"overfitting-onset\" data-epoch=\"{0}\" x1=\"{1:.2f}\" y1=\"{2}\" "
                     "x2=\"{1:.2f}\" y2=\"{3}\" stroke=\"#7f7f7f\" stroke-dasharray=\"6 4\"/>\n",
                     *onset, x, kTop, kTop + ph);
  }

  struct Series {
    const char* id;
    const char* label;
    const char* colour;
    double EpochRecord::*field;
  };
  const Series series[] = {{"train-loss", "train loss", "#1f77b4", &EpochRecord::train_loss},
                           {"val-loss", "validation loss", "#d62728", &EpochRecord::val_loss}};
  for (const auto& ser : series) {
    if (records.size() >= 2) {
      std::string pts;
      for (const auto& r : records) {
        if (!pts.empty()) pts += ' ';
        pts += fmt::format("{:.2f},{:.2f}", sx(static_cast<double>(r.epoch)), sy(r.*ser.field));
      }
      s += fmt::format("<polyline id=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\" "
                       "points=\"{}\"/>\n",
                       ser.id, ser.colour, pts);
    }
    s += fmt::format("<g id=\"{}-points\" fill=\"{}\">\n", ser.id, ser.colour);
    for (const auto& r : records) {
      s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.5\"/>\n",
                       sx(static_cast<double>(r.epoch)), sy(r.*ser.field));
    }
    s += "</g>\n";
  }

  s += "<g id=\"legend\">\n";
  double ly = kTop + 10;
  const double lx = kLeft + pw + 15;
  for (const auto& ser : series) {
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" "
                     "stroke-width=\"2\"/><text x=\"{4}\" y=\"{5}\">{6}</text>\n",
                     lx, ly, lx + 20, ser.colour, lx + 26, ly + 4, ser.label);
    ly += 20;
  }
  if (onset) {
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#7f7f7f\" "
                     "stroke-dasharray=\"6 4\"/><text x=\"{3}\" y=\"{4}\">overfitting onset</text>\n",
                     lx, ly, lx + 20, lx + 26, ly + 4);
  }
  s += "</g>\n</svg>\n";
  return s;
}

std::string loss_curve_svg(std::span<const EpochRecord> records, std::size_t patience,
                           const PlotOptions& options) {
  std::optional<std::size_t> onset;
  if (patience >= 1 && records.size() >= patience + 1) {
    onset = detect_overfitting(records, patience);
  }
  return loss_curve_svg(records, onset, options);
}

}  // namespace entroloss
