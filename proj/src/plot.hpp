#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "training.hpp"

namespace entroloss {

struct PlotOptions {
  std::string title = "Training and validation loss";
  double width = 720.0;
  double height = 440.0;
};

/// Standalone SVG: train and validation loss against epoch as polylines
/// (ids "train-loss" and "val-loss", omitted below two points), a circle per
/// point, axis ticks and a legend. When `onset` is set, a vertical line with
/// id "overfitting-onset" marks that epoch.
std::string loss_curve_svg(std::span<const EpochRecord> records, std::optional<std::size_t> onset,
                           const PlotOptions& options = {});

/// Runs detect_overfitting when there are enough records, then plots.
std::string loss_curve_svg(std::span<const EpochRecord> records, std::size_t patience = 5,
                           const PlotOptions& options = {});

}  // namespace entroloss
