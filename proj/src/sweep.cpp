#include "sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <set>
#include <thread>

#include <fmt/core.h>

#include "errors.hpp"

namespace entroloss {

const SweepCell& SweepTable::at(std::size_t epochs, double alpha) const {
  for (const auto& c : cells) {
    if (c.epochs == epochs && c.alpha == alpha) {
      return c;
    }
  }
  throw DomainError(fmt::format("no sweep cell for N={} alpha={}", epochs, alpha));
}

std::size_t SweepTable::succeeded() const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const SweepCell& c) { return c.ok; }));
}

namespace {

// Trains one alpha to the largest N and fills that alpha's column.
void run_alpha(const TrainConfig& base, const ModelConfig& model_cfg, double alpha,
               std::span<const std::size_t> epoch_counts, const data::Dataset& ds,
               const SweepOptions& options, std::vector<SweepCell*> column) {
  try {
    TrainConfig cfg = base;
    cfg.loss = LossSpec::havrda_charvat(alpha);
    cfg.loss.measure = base.loss.measure;
    cfg.loss.clamp_epsilon = base.loss.clamp_epsilon;
    cfg.epochs = *std::max_element(epoch_counts.begin(), epoch_counts.end());
    auto [train_set, val_set] =
        options.group_by_prefix
            ? data::split_grouped(ds, options.train_fraction, options.split_seed)
            : data::split(ds, options.train_fraction, options.split_seed);
    Model model(model_cfg);
    train(model, train_set, val_set, cfg,
          [&](const EpochRecord& rec, const Model&, const Metrics& val) {
            for (auto* cell : column) {
              if (cell->epochs == rec.epoch + 1) {
                cell->ok = true;
                cell->metrics = val;
              }
            }
          });
  } catch (const std::exception& e) {
    for (auto* cell : column) {
      if (!cell->ok) {
        cell->error = e.what();
      }
    }
  }
  for (auto* cell : column) {
    if (!cell->ok && cell->error.empty()) {
      cell->error = "run ended before this epoch count";
    }
  }
}

}  // namespace

SweepTable sweep(const TrainConfig& base, const ModelConfig& model_cfg,
                 std::span<const double> alphas, std::span<const std::size_t> epoch_counts,
                 const data::Dataset& ds, const SweepOptions& options) {
  if (alphas.empty() || epoch_counts.empty()) {
    throw DomainError("sweep grids must be non-empty");
  }
  if (std::set<double>(alphas.begin(), alphas.end()).size() != alphas.size() ||
      std::set<std::size_t>(epoch_counts.begin(), epoch_counts.end()).size() !=
          epoch_counts.size()) {
    throw DomainError("sweep grids must not repeat values");
  }
  for (double a : alphas) {
    LossSpec::havrda_charvat(a).validate();
  }
  for (std::size_t n : epoch_counts) {
    if (n == 0) {
      throw DomainError("epoch counts must be at least 1");
    }
  }
  {
    TrainConfig probe = base;
    probe.epochs = 1;
    probe.validate();
  }
  model_cfg.validate();

  SweepTable table;
  table.alphas.assign(alphas.begin(), alphas.end());
  table.epoch_counts.assign(epoch_counts.begin(), epoch_counts.end());
  for (std::size_t n : epoch_counts) {
    for (double a : alphas) {
      table.cells.push_back(SweepCell{a, n, false, {}, {}});
    }
  }

  std::vector<std::vector<SweepCell*>> columns(alphas.size());
  for (std::size_t i = 0; i < epoch_counts.size(); ++i) {
    for (std::size_t j = 0; j < alphas.size(); ++j) {
      columns[j].push_back(&table.cells[i * alphas.size() + j]);
    }
  }

  std::size_t workers = options.max_parallel == 0
                            ? std::max<std::size_t>(1, std::thread::hardware_concurrency())
                            : options.max_parallel;
  workers = std::min(workers, alphas.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t j = next++; j < alphas.size(); j = next++) {
      run_alpha(base, model_cfg, alphas[j], epoch_counts, ds, options, columns[j]);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back(work);
    }
  }
  return table;
}

}  // namespace entroloss
