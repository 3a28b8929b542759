#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "data.hpp"
#include "model.hpp"
#include "training.hpp"

namespace entroloss {

struct SweepCell {
  double alpha = 1.0;
  std::size_t epochs = 0;
  bool ok = false;
  std::string error;  // set when !ok
  Metrics metrics;    // validation metrics after `epochs` epochs
};

struct SweepTable {
  std::vector<double> alphas;
  std::vector<std::size_t> epoch_counts;
  /// Row-major over (epoch_counts, alphas): cells[i * alphas.size() + j].
  std::vector<SweepCell> cells;

  const SweepCell& at(std::size_t epochs, double alpha) const;
  std::size_t succeeded() const;
};

struct SweepOptions {
  double train_fraction = 0.7;
  std::uint64_t split_seed = 0;
  bool group_by_prefix = false;
  /// Concurrent alpha runs; 0 means hardware concurrency.
  std::size_t max_parallel = 1;
};

/// Trains a fresh model (model_cfg, including its seed) on a fresh split for
/// every (alpha, N) cell. Cells sharing an alpha share one run of max(N)
/// epochs, read out after each requested N; training is deterministic and
/// has no schedule, so this equals separate runs. A failing run marks its
/// cells and the sweep continues. Throws DomainError for empty or invalid
/// grids.
SweepTable sweep(const TrainConfig& base, const ModelConfig& model_cfg,
                 std::span<const double> alphas, std::span<const std::size_t> epoch_counts,
                 const data::Dataset& ds, const SweepOptions& options = {});

}  // namespace entroloss
