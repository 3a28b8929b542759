#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

#include "data.hpp"
#include "doctest.h"
#include "errors.hpp"
#include "model.hpp"
#include "optimizer.hpp"
#include "plot.hpp"
#include "report_io.hpp"
#include "rng.hpp"
#include "sweep.hpp"
#include "training.hpp"

using namespace entroloss;

namespace {

ModelConfig tiny_model(std::uint64_t seed = 2) {
  ModelConfig c;
  c.input_side = 16;
  c.conv_channels = {4, 4};
  c.dense_sizes = {8, 4};
  c.dropout_after_dense = 1;
  c.seed = seed;
  return c;
}

data::Dataset tiny_data(std::size_t n, std::uint64_t seed = 7) {
  return data::synth_generate({.n = n, .informative_fraction = 0.5, .seed = seed, .side = 16});
}

TrainConfig quick_config(std::size_t epochs, double alpha = 1.0) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.loss = LossSpec::havrda_charvat(alpha);
  cfg.batch_size = 8;
  cfg.seed = 4;
  return cfg;
}

std::vector<double> flat_params(const Model& m) {
  std::vector<double> all;
  for (const auto& p : m.parameters()) all.insert(all.end(), p->data().begin(), p->data().end());
  return all;
}

std::vector<EpochRecord> records_from_val(const std::vector<double>& val,
                                          const std::vector<double>& train) {
  std::vector<EpochRecord> out;
  for (std::size_t i = 0; i < val.size(); ++i) {
    out.push_back({i, train[i], val[i], 0.5, 0.5});
  }
  return out;
}

std::size_t count_of(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

const std::vector<double> kHandVal{1.0, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4};
const std::vector<double> kHandTrain{1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3};

}  // namespace

TEST_CASE("metrics from counts") {
  const auto m = Metrics::from_counts(79, 13, 87, 21);
  CHECK(*m.sensitivity == doctest::Approx(0.79).epsilon(1e-15));
  CHECK(*m.specificity == doctest::Approx(0.87).epsilon(1e-15));
  CHECK(m.accuracy == doctest::Approx(0.83).epsilon(1e-15));
  const auto none = Metrics::from_counts(5, 0, 0, 0);
  CHECK(!none.specificity);
  CHECK(*none.sensitivity == 1.0);
}

TEST_CASE("constant predictors expose the collapse signature") {
  std::vector<BinaryOutcome> all_pos(10, BinaryOutcome::informative);
  std::vector<double> p(10, 0.99);
  const auto a = evaluate_predictions(p, all_pos);
  CHECK(a.accuracy == 1.0);
  CHECK(*a.sensitivity == 1.0);
  CHECK(!a.specificity);

  std::vector<BinaryOutcome> balanced;
  for (int i = 0; i < 50; ++i) {
    balanced.push_back(BinaryOutcome::informative);
    balanced.push_back(BinaryOutcome::uninformative);
  }
  std::vector<double> high(100, 0.99), low(100, 0.01);
  const auto b = evaluate_predictions(high, balanced);
  CHECK(*b.sensitivity == 1.0);
  CHECK(*b.specificity == 0.0);
  CHECK(b.accuracy == 0.5);
  const auto c = evaluate_predictions(low, balanced);
  CHECK(*c.sensitivity == 0.0);
  CHECK(*c.specificity == 1.0);

  CHECK(evaluate_predictions(std::vector<double>{0.5}, std::vector{BinaryOutcome::informative}).tp == 1);
  CHECK_THROWS_AS(evaluate_predictions(std::vector<double>{}, std::vector<BinaryOutcome>{}),
                  DomainError);
  CHECK_THROWS_AS(evaluate_predictions(high, all_pos), DomainError);
}

TEST_CASE("property: metrics match a brute-force recount") {
  Rng rng = make_rng(55);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    const double threshold = uniform01(rng);
    std::vector<double> p(n);
    std::vector<BinaryOutcome> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = (rng() % 4 == 0) ? threshold : uniform01(rng);
      y[i] = BinaryOutcome(rng() % 2);
    }
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool pred = !(p[i] < threshold);
      const bool pos = y[i] == BinaryOutcome::informative;
      tp += pred && pos;
      fp += pred && !pos;
      tn += !pred && !pos;
      fn += !pred && pos;
    }
    const auto m = evaluate_predictions(p, y, threshold);
    REQUIRE(m.tp == tp);
    REQUIRE(m.fp == fp);
    REQUIRE(m.tn == tn);
    REQUIRE(m.fn == fn);
    REQUIRE(m.accuracy == static_cast<double>(tp + tn) / static_cast<double>(n));
    REQUIRE(m.sensitivity.has_value() == (tp + fn > 0));
    if (m.sensitivity) REQUIRE(*m.sensitivity == static_cast<double>(tp) / static_cast<double>(tp + fn));
    REQUIRE(m.specificity.has_value() == (tn + fp > 0));
    if (m.specificity) REQUIRE(*m.specificity == static_cast<double>(tn) / static_cast<double>(tn + fp));
  }
}

TEST_CASE("detect_overfitting") {
  CHECK(detect_overfitting(records_from_val(kHandVal, kHandTrain), 5) == std::optional<std::size_t>{1});
  const std::vector<double> down{1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3};
  CHECK(!detect_overfitting(records_from_val(down, down), 5));
  const std::vector<double> flat(8, 0.7);
  CHECK(!detect_overfitting(records_from_val(flat, flat), 5));
  // Rising validation loss while training loss also rises is not the pattern.
  CHECK(!detect_overfitting(records_from_val(kHandVal, kHandVal), 5));
  CHECK_THROWS_AS(detect_overfitting(records_from_val({1, 2, 3}, {1, 2, 3}), 5), DomainError);
  CHECK_THROWS_AS(detect_overfitting(records_from_val(flat, flat), 0), DomainError);
}

TEST_CASE("training runs and records one row per epoch") {
  Model m(tiny_model());
  const auto ds = tiny_data(2);
  data::Dataset tr, va;
  tr.samples = {ds.samples[0]};
  va.samples = {ds.samples[1]};
  const auto report = train(m, tr, va, quick_config(1));
  REQUIRE(report.epochs.size() == 1);
  CHECK(report.epochs[0].epoch == 0);
  CHECK(report.epochs[0].train_loss >= 0.0);
  CHECK(report.final_metrics.total() == 1);

  CHECK_THROWS_AS(train(m, data::Dataset{}, va, quick_config(1)), DomainError);
  const auto wrong = data::synth_generate({.n = 2, .seed = 1, .side = 8});
  CHECK_THROWS_AS(train(m, wrong, va, quick_config(1)), ShapeError);
  TrainConfig bad = quick_config(1);
  bad.learning_rate = -1.0;
  CHECK_THROWS_AS(train(m, tr, va, bad), DomainError);
}

TEST_CASE("learning rate 0 is a null update") {
  for (auto opt : {OptimizerKind::adam, OptimizerKind::sgd}) {
    Model m(tiny_model());
    const auto before = flat_params(m);
    const auto ds = tiny_data(20);
    auto [tr, va] = data::split(ds, 0.7, 1);
    TrainConfig cfg = quick_config(3);
    cfg.learning_rate = 0.0;
    cfg.optimizer = opt;
    const auto report = train(m, tr, va, cfg);
    CHECK(flat_params(m) == before);
    for (const auto& r : report.epochs) CHECK(r.train_loss == report.epochs[0].train_loss);
  }
}

TEST_CASE("optimizer step touches exactly param_count scalars") {
  for (auto opt : {OptimizerKind::adam, OptimizerKind::sgd}) {
    Model m(tiny_model());
    const auto before = flat_params(m);
    for (const auto& p : m.parameters()) {
      for (double& g : p->grad()) g = 1.0;
    }
    Optimizer o(opt, 1e-2, m.parameters());
    CHECK(o.step() == m.param_count());
    const auto after = flat_params(m);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < after.size(); ++i) changed += after[i] != before[i];
    CHECK(changed == m.param_count());
  }
}

TEST_CASE("property: training is bit-for-bit deterministic") {
  const auto ds = tiny_data(24);
  auto [tr, va] = data::split(ds, 0.7, 3);
  Model a(tiny_model(9)), b(tiny_model(9));
  const auto ra = train(a, tr, va, quick_config(3, 1.3));
  const auto rb = train(b, tr, va, quick_config(3, 1.3));
  CHECK(ra.epochs == rb.epochs);
  CHECK(flat_params(a) == flat_params(b));
  CHECK(report_csv(ra.epochs) == report_csv(rb.epochs));
}

TEST_CASE("property: train loss at epoch 10 is below epoch 1 for every alpha") {
  // Default architecture and optimiser settings on a small synthetic set.
  const auto ds = data::synth_generate({.n = 40, .informative_fraction = 0.5, .seed = 7});
  auto [tr, va] = data::split(ds, 0.7, 0);
  for (double alpha : {1.0, 1.1, 1.3, 1.5, 2.0}) {
    CAPTURE(alpha);
    Model m{ModelConfig{}};
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.loss = LossSpec::havrda_charvat(alpha);
    const auto r = train(m, tr, va, cfg);
    CHECK(r.epochs[9].train_loss < r.epochs[0].train_loss);
  }
}

TEST_CASE("evaluate agrees with predict_all") {
  const Model m(tiny_model());
  const auto ds = tiny_data(30);
  const auto p = predict_all(m, ds);
  std::vector<BinaryOutcome> y;
  for (const auto& s : ds.samples) y.push_back(s.label);
  const auto a = evaluate(m, ds, 0.5);
  const auto b = evaluate_predictions(p, y, 0.5);
  CHECK(a.tp == b.tp);
  CHECK(a.tn == b.tn);
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(p[i] == m.predict(ds.samples[i].image).p1);
}

TEST_CASE("sweep") {
  const auto ds = tiny_data(30);
  const TrainConfig base = quick_config(1);
  const std::vector<double> one_alpha{1.3};
  const std::vector<std::size_t> counts{1, 3};

  SUBCASE("a 1x1 grid is a single train and evaluate") {
    const std::vector<std::size_t> three{3};
    const auto t = sweep(base, tiny_model(), one_alpha, three, ds, {.split_seed = 5});
    REQUIRE(t.cells.size() == 1);
    auto [tr, va] = data::split(ds, 0.7, 5);
    Model m(tiny_model());
    TrainConfig cfg = base;
    cfg.epochs = 3;
    cfg.loss = LossSpec::havrda_charvat(1.3);
    const auto r = train(m, tr, va, cfg);
    CHECK(t.cells[0].ok);
    CHECK(t.cells[0].metrics.accuracy == r.final_metrics.accuracy);
    CHECK(t.cells[0].metrics.tp == r.final_metrics.tp);
    CHECK(t.cells[0].metrics.tn == r.final_metrics.tn);
    CHECK(sweep_long_csv(t).find('\n') != std::string::npos);
    CHECK(count_of(sweep_long_csv(t), "\n") == 2);
  }

  SUBCASE("shorter epoch counts equal a fresh run of that length") {
    const auto t = sweep(base, tiny_model(), one_alpha, counts, ds, {.split_seed = 5});
    auto [tr, va] = data::split(ds, 0.7, 5);
    Model m(tiny_model());
    TrainConfig cfg = base;
    cfg.epochs = 1;
    cfg.loss = LossSpec::havrda_charvat(1.3);
    const auto r = train(m, tr, va, cfg);
    CHECK(t.at(1, 1.3).metrics.accuracy == r.final_metrics.accuracy);
    CHECK(t.at(1, 1.3).metrics.tp == r.final_metrics.tp);
    CHECK(t.at(1, 1.3).metrics.fp == r.final_metrics.fp);
  }

  SUBCASE("full default grid shape") {
    const std::vector<double> alphas{1.0, 1.1, 1.3, 1.5, 2.0};
    const std::vector<std::size_t> ns{20, 30, 40};
    const auto small = tiny_data(12);
    TrainConfig fast = base;
    const auto t = sweep(fast, tiny_model(), alphas, ns, small, {.max_parallel = 2});
    CHECK(t.cells.size() == 15);
    CHECK(t.succeeded() == 15);
    for (const auto& c : t.cells) {
      CHECK(c.metrics.accuracy >= 0.0);
      CHECK(c.metrics.accuracy <= 1.0);
    }
    const std::string grid = sweep_grid_csv(t);
    std::istringstream in(grid);
    std::string line;
    std::getline(in, line);
    CHECK(line == "epochs,alpha=1,alpha=1.1,alpha=1.3,alpha=1.5,alpha=2");
    for (std::size_t n : ns) {
      REQUIRE(std::getline(in, line));
      CHECK(line.rfind(std::to_string(n) + ",", 0) == 0);
      CHECK(count_of(line, ",") == 5);
    }
    CHECK(!std::getline(in, line));
    CHECK(count_of(sweep_long_csv(t), "\n") == 16);
  }

  SUBCASE("failing cells are flagged without aborting the sweep") {
    auto broken = ds;
    for (auto& s : broken.samples) s.image[0] = std::nan("");
    const auto t = sweep(base, tiny_model(), one_alpha, counts, broken);
    CHECK(t.succeeded() == 0);
    for (const auto& c : t.cells) {
      CHECK(!c.ok);
      CHECK(!c.error.empty());
    }
    CHECK(sweep_grid_csv(t).find("1,\n") != std::string::npos);
  }

  SUBCASE("invalid grids") {
    CHECK_THROWS_AS(sweep(base, tiny_model(), std::vector<double>{}, counts, ds), DomainError);
    CHECK_THROWS_AS(sweep(base, tiny_model(), std::vector<double>{0.5}, counts, ds), DomainError);
    CHECK_THROWS_AS(sweep(base, tiny_model(), std::vector<double>{1.0, 1.0}, counts, ds),
                    DomainError);
    CHECK_THROWS_AS(sweep(base, tiny_model(), one_alpha, std::vector<std::size_t>{0}, ds),
                    DomainError);
  }
}

TEST_CASE("report csv round trip and parse errors") {
  const auto recs = records_from_val(kHandVal, kHandTrain);
  const auto text = report_csv(recs);
  CHECK(text.rfind("epoch,train_loss,val_loss,train_acc,val_acc\n", 0) == 0);
  CHECK(parse_report_csv(text) == recs);
  CHECK(parse_report_csv("epoch,train_loss,val_loss,train_acc,val_acc\r\n0,1,2,0.5,0.5\r\n").size() == 1);
  CHECK_THROWS_AS(parse_report_csv(""), DomainError);
  CHECK_THROWS_AS(parse_report_csv("epoch,loss\n0,1\n"), DomainError);
  CHECK_THROWS_AS(parse_report_csv("epoch,train_loss,val_loss,train_acc,val_acc\n"), DomainError);
  CHECK_THROWS_AS(parse_report_csv("epoch,train_loss,val_loss,train_acc,val_acc\n0,1,2,x,0\n"),
                  DomainError);
  CHECK_THROWS_AS(parse_report_csv("epoch,train_loss,val_loss,train_acc,val_acc\n0,1,2,0\n"),
                  DomainError);
  CHECK_THROWS_AS(parse_report_csv("epoch,train_loss,val_loss,train_acc,val_acc\n1,1,2,0,0\n"),
                  DomainError);
  CHECK_THROWS_AS(parse_report_csv("epoch,train_loss,val_loss,train_acc,val_acc\n0,nan,2,0,0\n"),
                  DomainError);
}

TEST_CASE("loss curve svg") {
  std::vector<double> v(40), t(40);
  for (int i = 0; i < 40; ++i) {
    v[i] = 1.0 / (1 + i);
    t[i] = 1.2 / (1 + i);
  }
  const auto svg40 = loss_curve_svg(records_from_val(v, t), 5);
  CHECK(svg40.rfind("<svg", 0) == 0);
  const std::regex poly("<polyline id=\"(train|val)-loss\"[^>]*points=\"([^\"]*)\"");
  std::size_t polylines = 0;
  for (auto it = std::sregex_iterator(svg40.begin(), svg40.end(), poly); it != std::sregex_iterator(); ++it) {
    ++polylines;
    CHECK(count_of((*it)[2].str(), ",") == 40);
  }
  CHECK(polylines == 2);
  CHECK(svg40.find("overfitting-onset") == std::string::npos);
  CHECK(svg40.find("train loss") != std::string::npos);
  CHECK(svg40.find("validation loss") != std::string::npos);

  const auto svg1 = loss_curve_svg(records_from_val({0.5}, {0.6}), 5);
  CHECK(svg1.find("<polyline") == std::string::npos);
  CHECK(count_of(svg1, "<circle") == 2);
  CHECK(svg1.find("</svg>") != std::string::npos);

  const auto marked = loss_curve_svg(records_from_val(kHandVal, kHandTrain), 5);
  CHECK(marked.find("id=\"overfitting-onset\" data-epoch=\"1\"") != std::string::npos);
  CHECK(loss_curve_svg(records_from_val(kHandVal, kHandTrain), 0).find("overfitting-onset") ==
        std::string::npos);
}

TEST_CASE("config json round trips") {
  TrainConfig cfg = quick_config(7, 1.5);
  cfg.optimizer = OptimizerKind::sgd;
  nlohmann::json j = cfg;
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(back.epochs == 7);
  CHECK(back.loss.alpha == 1.5);
  CHECK(back.optimizer == OptimizerKind::sgd);
  nlohmann::json mj = tiny_model(4);
  const ModelConfig mb = mj.get<ModelConfig>();
  CHECK(mb.conv_channels == tiny_model().conv_channels);
  CHECK(mb.seed == 4);
}
