#include "training.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "errors.hpp"

namespace entroloss {

namespace {

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw DomainError("unknown optimizer '" + s + "'");
}

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) {
    throw NumericalError(fmt::format("non-finite {} ({})", what, v));
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) {
    throw DomainError("epochs must be at least 1");
  }
  if (batch_size == 0) {
    throw DomainError("batch_size must be at least 1");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw DomainError(fmt::format("learning_rate must be finite and >= 0, got {}", learning_rate));
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw DomainError(fmt::format("threshold must lie in [0,1], got {}", threshold));
  }
  loss.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"epochs", c.epochs},
      {"loss",
       {{"family", c.loss.is_shannon() ? "shannon" : "havrda_charvat"},
        {"alpha", c.loss.alpha},
        {"measure", {c.loss.measure.w0, c.loss.measure.w1}},
        {"clamp_epsilon", c.loss.clamp_epsilon}}},
      {"optimizer", optimizer_name(c.optimizer)},
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"threshold", c.threshold}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.epochs = j.value("epochs", c.epochs);
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    const double alpha = l.value("alpha", 1.0);
    const std::string family = l.value("family", alpha == 1.0 ? "shannon" : "havrda_charvat");
    if (family == "shannon") {
      c.loss = LossSpec::shannon();
      if (alpha != 1.0) {
        throw DomainError("the shannon family takes alpha = 1");
      }
    } else if (family == "havrda_charvat") {
      c.loss = LossSpec::havrda_charvat(alpha);
    } else {
      throw DomainError("unknown loss family '" + family + "'");
    }
    if (l.contains("measure")) {
      const auto m = l.at("measure").get<std::vector<double>>();
      if (m.size() != 2) {
        throw DomainError("loss.measure must have two weights");
      }
      c.loss.measure = {m[0], m[1]};
    }
    c.loss.clamp_epsilon = l.value("clamp_epsilon", c.loss.clamp_epsilon);
  }
  c.optimizer = parse_optimizer(j.value("optimizer", std::string("adam")));
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.threshold = j.value("threshold", c.threshold);
}

Metrics Metrics::from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  const std::size_t total = tp + fp + tn + fn;
  m.accuracy = total ? static_cast<double>(tp + tn) / static_cast<double>(total) : 0.0;
  if (tp + fn > 0) {
    m.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  if (tn + fp > 0) {
    m.specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);
  }
  return m;
}

Metrics evaluate_predictions(std::span<const double> p1, std::span<const BinaryOutcome> labels,
                             double threshold) {
  if (p1.size() != labels.size()) {
    throw DomainError(fmt::format("{} predictions for {} labels", p1.size(), labels.size()));
  }
  if (p1.empty()) {
    throw DomainError("cannot evaluate on an empty dataset");
  }
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    const bool predicted = p1[i] >= threshold;
    const bool actual = labels[i] == BinaryOutcome::informative;
    if (predicted && actual) ++tp;
    else if (predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
  }
  return Metrics::from_counts(tp, fp, tn, fn);
}

std::vector<double> predict_all(const Model& model, const data::Dataset& ds) {
  std::vector<double> p1;
  p1.reserve(ds.size());
  for (const auto& s : ds.samples) {
    p1.push_back(model.predict(s.image).p1);
  }
  return p1;
}

Metrics evaluate(const Model& model, const data::Dataset& ds, double threshold) {
  std::vector<BinaryOutcome> labels;
  for (const auto& s : ds.samples) {
    labels.push_back(s.label);
  }
  return evaluate_predictions(predict_all(model, ds), labels, threshold);
}

LossAndMetrics evaluate_with_loss(const Model& model, const data::Dataset& ds,
                                  const LossSpec& spec, double threshold) {
  const auto p1 = predict_all(model, ds);
  for (double p : p1) {
    require_finite(p, "network output");
  }
  std::vector<BinaryOutcome> labels;
  std::vector<ProbabilityPair> targets, outputs;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    labels.push_back(ds.samples[i].label);
    targets.push_back(ds.samples[i].target());
    outputs.push_back(ProbabilityPair::from_p1(p1[i]));
  }
  LossAndMetrics out;
  out.metrics = evaluate_predictions(p1, labels, threshold);
  out.loss = batch_loss(targets, outputs, spec);
  return out;
}

TrainReport train(Model& model, const data::Dataset& train_set, const data::Dataset& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) {
    throw DomainError("training needs non-empty train and validation sets");
  }
  const std::size_t side = model.config().input_side;
  for (const auto* ds : {&train_set, &val_set}) {
    for (const auto& s : ds->samples) {
      if (s.image.shape() != nn::Shape{1, side, side}) {
        throw ShapeError(fmt::format("sample {} has shape {}, model expects [1,{},{}]",
                                     s.source_id, nn::shape_string(s.image.shape()), side, side));
      }
      // Max-pool comparisons would silently drop a NaN pixel.
      const auto px = s.image.data();
      if (!std::all_of(px.begin(), px.end(), [](double v) { return std::isfinite(v); })) {
        throw DomainError(fmt::format("sample {} has a non-finite pixel", s.source_id));
      }
    }
  }

  TrainReport report;
  report.train_counts = train_set.class_counts();
  report.val_counts = val_set.class_counts();
  Optimizer optimizer(cfg.optimizer, cfg.learning_rate, model.parameters());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng dropout_rng = make_rng(cfg.seed, {0x4450u, epoch});
    const auto plan = data::batches(train_set, cfg.batch_size, cfg.seed, epoch);
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const auto& batch = plan[b];
      model.zero_grad();
      const double weight = 1.0 / static_cast<double>(batch.size());
      for (std::size_t idx : batch) {
        const auto& sample = train_set.samples[idx];
        nn::Tape tape;
        auto image = nn::make_var(sample.image);
        auto p1 = model.forward(tape, image, nn::Mode::train, &dropout_rng);
        auto loss = nn::entropy_loss(tape, p1, sample.target(), cfg.loss, weight);
        require_finite((*loss)[0], fmt::format("loss at epoch {} batch {}", epoch, b));
        tape.backward(loss);
      }
      optimizer.step();
    }

    const auto tr = evaluate_with_loss(model, train_set, cfg.loss, cfg.threshold);
    const auto va = evaluate_with_loss(model, val_set, cfg.loss, cfg.threshold);
    require_finite(tr.loss, fmt::format("training loss after epoch {}", epoch));
    require_finite(va.loss, fmt::format("validation loss after epoch {}", epoch));
    EpochRecord rec{epoch, tr.loss, va.loss, tr.metrics.accuracy, va.metrics.accuracy};
    report.epochs.push_back(rec);
    report.final_metrics = va.metrics;
    if (on_epoch) {
      on_epoch(rec, model, va.metrics);
    }
  }
  return report;
}

std::optional<std::size_t> detect_overfitting(std::span<const EpochRecord> records,
                                              std::size_t patience) {
  if (patience == 0) {
    throw DomainError("patience must be at least 1");
  }
  if (records.size() < patience + 1) {
    throw DomainError(fmt::format("overfitting detection with patience {} needs at least {} "
                                  "records, got {}",
                                  patience, patience + 1, records.size()));
  }
  for (std::size_t e = 0; e + patience < records.size(); ++e) {
    bool rising = true;
    for (std::size_t k = 1; k <= patience && rising; ++k) {
      rising = records[e + k].val_loss > records[e + k - 1].val_loss &&
               records[e + k].train_loss <= records[e + k - 1].train_loss;
    }
    if (rising) {
      return e;
    }
  }
  return std::nullopt;
}

}  // namespace entroloss
