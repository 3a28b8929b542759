#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "data.hpp"
#include "entropy.hpp"
#include "model.hpp"
#include "optimizer.hpp"

namespace entroloss {

struct TrainConfig {
  std::size_t epochs = 40;
  LossSpec loss{};
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  /// Predicted label is informative iff p(1) >= threshold.
  double threshold = 0.5;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Losses and accuracies after one epoch, measured in eval mode over the
/// whole train and validation sets. `epoch` counts from 0.
struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

/// Confusion counts with informative (label 1) as the positive class.
struct Metrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  std::optional<double> sensitivity;  // absent when tp + fn == 0
  std::optional<double> specificity;  // absent when tn + fp == 0

  static Metrics from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);
  std::size_t total() const { return tp + fp + tn + fn; }
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  Metrics final_metrics;  // validation set, last epoch
  data::ClassCounts train_counts;
  data::ClassCounts val_counts;
};

/// Called after each epoch's record is computed.
using EpochCallback = std::function<void(const EpochRecord&, const Model&, const Metrics& val)>;

/// Shuffle, batch, forward, batch-mean loss, backward and optimizer step for
/// cfg.epochs epochs, updating `model` in place. Throws NumericalError when a
/// loss or gradient becomes non-finite.
TrainReport train(Model& model, const data::Dataset& train_set, const data::Dataset& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Per-sample p(1) in eval mode.
std::vector<double> predict_all(const Model& model, const data::Dataset& ds);

Metrics evaluate_predictions(std::span<const double> p1, std::span<const BinaryOutcome> labels,
                             double threshold = 0.5);
Metrics evaluate(const Model& model, const data::Dataset& ds, double threshold = 0.5);

struct LossAndMetrics {
  double loss = 0.0;
  Metrics metrics;
};
/// Mean cross-entropy and metrics over `ds` from a single eval-mode pass.
LossAndMetrics evaluate_with_loss(const Model& model, const data::Dataset& ds,
                                  const LossSpec& spec, double threshold = 0.5);

/// First record index e such that val_loss strictly increases over each of
/// the `patience` following epochs while train_loss does not increase.
/// Throws DomainError with fewer than patience + 1 records.
std::optional<std::size_t> detect_overfitting(std::span<const EpochRecord> records,
                                              std::size_t patience = 5);

}  // namespace entroloss
