#include "entroloss.h"

#include <cstring>
#include <exception>
#include <new>
#include <optional>
#include <string>

#include <json.hpp>

#include "data.hpp"
#include "entropy.hpp"
#include "errors.hpp"
#include "gradcheck.hpp"
#include "model.hpp"
#include "plot.hpp"
#include "report_io.hpp"
#include "sweep.hpp"
#include "training.hpp"

struct entl_dataset {
  entroloss::data::Dataset ds;
};

struct entl_model {
  entroloss::Model model;
};

struct entl_report {
  std::vector<entroloss::EpochRecord> records;
  std::optional<entroloss::Metrics> final_metrics;
};

struct entl_sweep {
  entroloss::SweepTable table;
};

namespace {

using namespace entroloss;

thread_local std::string g_last_error;

entl_status fail(entl_status s, const char* what) {
  g_last_error = what;
  return s;
}

struct NullArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

template <class T>
T& need(T* p, const char* name) {
  if (p == nullptr) {
    throw NullArgument(std::string(name) + " must not be NULL");
  }
  return *p;
}

const char* need(const char* p, const char* name) {
  if (p == nullptr) {
    throw NullArgument(std::string(name) + " must not be NULL");
  }
  return p;
}

template <class F>
entl_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return ENTL_OK;
  } catch (const NullArgument& e) {
    return fail(ENTL_ERR_INVALID_ARGUMENT, e.what());
  } catch (const ShapeError& e) {
    return fail(ENTL_ERR_SHAPE, e.what());
  } catch (const DomainError& e) {
    return fail(ENTL_ERR_DOMAIN, e.what());
  } catch (const IoError& e) {
    return fail(ENTL_ERR_IO, e.what());
  } catch (const NumericalError& e) {
    return fail(ENTL_ERR_NUMERICAL, e.what());
  } catch (const StateError& e) {
    return fail(ENTL_ERR_STATE, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(ENTL_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(ENTL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(ENTL_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(ENTL_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  auto* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse_object(const char* text) {
  if (text == nullptr || *text == '\0') {
    return nlohmann::json::object();
  }
  auto j = nlohmann::json::parse(text);
  if (!j.is_object()) {
    throw NullArgument("configuration must be a JSON object");
  }
  return j;
}

ModelConfig model_config_from(const char* text) {
  ModelConfig c = parse_object(text).get<ModelConfig>();
  c.validate();
  return c;
}

TrainConfig train_config_from(const char* text) {
  TrainConfig c = parse_object(text).get<TrainConfig>();
  c.validate();
  return c;
}

entl_metrics to_c(const Metrics& m) {
  entl_metrics out{};
  out.tp = m.tp;
  out.fp = m.fp;
  out.tn = m.tn;
  out.fn = m.fn;
  out.accuracy = m.accuracy;
  out.has_sensitivity = m.sensitivity.has_value();
  out.sensitivity = m.sensitivity.value_or(0.0);
  out.has_specificity = m.specificity.has_value();
  out.specificity = m.specificity.value_or(0.0);
  return out;
}

entl_epoch to_c(const EpochRecord& r) {
  return {r.epoch, r.train_loss, r.val_loss, r.train_accuracy, r.val_accuracy};
}

const data::Sample& sample_at(const entl_dataset* ds, size_t index) {
  const auto& d = need(ds, "dataset").ds;
  if (index >= d.size()) {
    throw DomainError("sample index " + std::to_string(index) + " out of range for " +
                      std::to_string(d.size()) + " samples");
  }
  return d.samples[index];
}

}  // namespace

extern "C" {

const char* entl_version(void) { return "1.0.0"; }

const char* entl_last_error(void) { return g_last_error.c_str(); }

const char* entl_status_name(entl_status status) {
  switch (status) {
    case ENTL_OK: return "ok";
    case ENTL_ERR_INVALID_ARGUMENT: return "invalid argument";
    case ENTL_ERR_DOMAIN: return "domain error";
    case ENTL_ERR_SHAPE: return "shape error";
    case ENTL_ERR_IO: return "i/o error";
    case ENTL_ERR_NUMERICAL: return "numerical error";
    case ENTL_ERR_STATE: return "state error";
    case ENTL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void entl_string_free(char* s) { delete[] s; }

entl_status entl_entropy(double p1, double alpha, double* out) {
  return guarded([&] {
    auto& o = need(out, "out");
    const auto p = ProbabilityPair::from_p1(p1);
    o = alpha == 1.0 ? shannon_entropy(p) : hc_entropy(p, alpha);
  });
}

entl_status entl_cross_entropy(double q1, double p1, double alpha, double* out) {
  return guarded([&] {
    need(out, "out") = cross_entropy(ProbabilityPair::from_p1(q1), ProbabilityPair::from_p1(p1),
                                     LossSpec::havrda_charvat(alpha));
  });
}

entl_status entl_cross_entropy_grad(double q1, double p1, double alpha, double* out) {
  return guarded([&] {
    need(out, "out") = cross_entropy_grad(ProbabilityPair::from_p1(q1),
                                          ProbabilityPair::from_p1(p1),
                                          LossSpec::havrda_charvat(alpha));
  });
}

entl_status entl_dataset_synth(size_t n, double informative_fraction, uint64_t seed,
                               double noise_sigma, entl_dataset** out) {
  return guarded([&] {
    auto& o = need(out, "out");
    data::SynthSpec spec;
    spec.n = n;
    spec.informative_fraction = informative_fraction;
    spec.seed = seed;
    spec.noise_sigma = noise_sigma;
    o = new entl_dataset{data::synth_generate(spec)};
  });
}

entl_status entl_dataset_load_dir(const char* root, entl_dataset** out) {
  return guarded([&] {
    auto& o = need(out, "out");
    o = new entl_dataset{data::load_directory(need(root, "root"))};
  });
}

entl_status entl_dataset_export(const entl_dataset* ds, const char* root) {
  return guarded([&] { data::export_directory(need(ds, "dataset").ds, need(root, "root")); });
}

entl_status entl_dataset_size(const entl_dataset* ds, size_t* out) {
  return guarded([&] { need(out, "out") = need(ds, "dataset").ds.size(); });
}

entl_status entl_dataset_counts(const entl_dataset* ds, size_t* uninformative,
                                size_t* informative) {
  return guarded([&] {
    const auto c = need(ds, "dataset").ds.class_counts();
    need(uninformative, "uninformative") = c.uninformative;
    need(informative, "informative") = c.informative;
  });
}

entl_status entl_dataset_label(const entl_dataset* ds, size_t index, int* label) {
  return guarded([&] {
    need(label, "label") = sample_at(ds, index).label == BinaryOutcome::informative ? 1 : 0;
  });
}

entl_status entl_dataset_split(const entl_dataset* ds, double train_fraction, uint64_t seed,
                               int group_by_prefix, entl_dataset** train, entl_dataset** val) {
  return guarded([&] {
    const auto& d = need(ds, "dataset").ds;
    auto& t = need(train, "train");
    auto& v = need(val, "val");
    auto [a, b] = group_by_prefix ? data::split_grouped(d, train_fraction, seed)
                                  : data::split(d, train_fraction, seed);
    auto* ta = new entl_dataset{std::move(a)};
    try {
      v = new entl_dataset{std::move(b)};
    } catch (...) {
      delete ta;
      throw;
    }
    t = ta;
  });
}

void entl_dataset_free(entl_dataset* ds) { delete ds; }

entl_status entl_model_create(const char* config_json, entl_model** out) {
  return guarded([&] {
    auto& o = need(out, "out");
    o = new entl_model{Model(model_config_from(config_json))};
  });
}

entl_status entl_model_config_json(const entl_model* m, char** out) {
  return guarded([&] {
    auto& o = need(out, "out");
    o = dup_string(nlohmann::json(need(m, "model").model.config()).dump(2));
  });
}

entl_status entl_model_param_count(const entl_model* m, size_t* out) {
  return guarded([&] { need(out, "out") = need(m, "model").model.param_count(); });
}

entl_status entl_model_predict(const entl_model* m, const entl_dataset* ds, size_t index,
                               double* p1) {
  return guarded([&] {
    auto& o = need(p1, "p1");
    o = need(m, "model").model.predict(sample_at(ds, index).image).p1;
  });
}

entl_status entl_model_save(const entl_model* m, const char* checkpoint_path,
                            const char* config_path) {
  return guarded([&] {
    save_model(need(m, "model").model, need(checkpoint_path, "checkpoint_path"),
               need(config_path, "config_path"));
  });
}

entl_status entl_model_load(const char* checkpoint_path, const char* config_path,
                            entl_model** out) {
  return guarded([&] {
    auto& o = need(out, "out");
    o = new entl_model{
        load_model(need(checkpoint_path, "checkpoint_path"), need(config_path, "config_path"))};
  });
}

void entl_model_free(entl_model* m) { delete m; }

entl_status entl_train_config_resolve(const char* train_json, char** out) {
  return guarded([&] {
    auto& o = need(out, "out");
    o = dup_string(nlohmann::json(train_config_from(train_json)).dump(2));
  });
}

entl_status entl_model_config_resolve(const char* model_json, char** out) {
  return guarded([&] {
    auto& o = need(out, "out");
    o = dup_string(nlohmann::json(model_config_from(model_json)).dump(2));
  });
}

entl_status entl_train(entl_model* m, const entl_dataset* train_ds, const entl_dataset* val_ds,
                       const char* train_config_json, entl_epoch_callback on_epoch, void* user,
                       entl_report** out) {
  return guarded([&] {
    auto& model = need(m, "model").model;
    const auto& tr = need(train_ds, "train").ds;
    const auto& va = need(val_ds, "val").ds;
    const TrainConfig cfg = train_config_from(train_config_json);
    EpochCallback cb;
    if (on_epoch != nullptr) {
      cb = [&](const EpochRecord& r, const Model&, const Metrics&) {
        const entl_epoch e = to_c(r);
        on_epoch(&e, user);
      };
    }
    auto report = train(model, tr, va, cfg, cb);
    if (out != nullptr) {
      *out = new entl_report{std::move(report.epochs), report.final_metrics};
    }
  });
}

entl_status entl_report_from_records(const entl_epoch* records, size_t n, entl_report** out) {
  return guarded([&] {
    auto& o = need(out, "out");
    if (n > 0) need(records, "records");
    auto r = std::make_unique<entl_report>();
    for (size_t i = 0; i < n; ++i) {
      if (records[i].epoch != i) {
        throw DomainError("record " + std::to_string(i) + " has epoch " +
                          std::to_string(records[i].epoch));
      }
      r->records.push_back({records[i].epoch, records[i].train_loss, records[i].val_loss,
                            records[i].train_accuracy, records[i].val_accuracy});
    }
    o = r.release();
  });
}

entl_status entl_report_read_csv(const char* path, entl_report** out) {
  return guarded([&] {
    auto& o = need(out, "out");
    auto records = parse_report_csv(read_text(need(path, "path")));
    o = new entl_report{std::move(records), std::nullopt};
  });
}

entl_status entl_report_epoch_count(const entl_report* r, size_t* out) {
  return guarded([&] { need(out, "out") = need(r, "report").records.size(); });
}

entl_status entl_report_epoch(const entl_report* r, size_t index, entl_epoch* out) {
  return guarded([&] {
    const auto& rec = need(r, "report").records;
    if (index >= rec.size()) {
      throw DomainError("epoch index out of range");
    }
    need(out, "out") = to_c(rec[index]);
  });
}

entl_status entl_report_final_metrics(const entl_report* r, entl_metrics* out) {
  return guarded([&] {
    const auto& rep = need(r, "report");
    if (!rep.final_metrics) {
      throw StateError("report carries no metrics");
    }
    need(out, "out") = to_c(*rep.final_metrics);
  });
}

entl_status entl_report_write_csv(const entl_report* r, const char* path) {
  return guarded([&] { write_text(need(path, "path"), report_csv(need(r, "report").records)); });
}

entl_status entl_report_write_svg(const entl_report* r, size_t patience, const char* path) {
  return guarded([&] {
    write_text(need(path, "path"), loss_curve_svg(need(r, "report").records, patience));
  });
}

entl_status entl_report_detect_overfitting(const entl_report* r, size_t patience, int* found,
                                           size_t* epoch) {
  return guarded([&] {
    auto& f = need(found, "found");
    auto& e = need(epoch, "epoch");
    const auto onset = detect_overfitting(need(r, "report").records, patience);
    f = onset.has_value();
    e = onset.value_or(0);
  });
}

void entl_report_free(entl_report* r) { delete r; }

entl_status entl_evaluate(const entl_model* m, const entl_dataset* ds, double threshold,
                          entl_metrics* out) {
  return guarded([&] {
    auto& o = need(out, "out");
    o = to_c(evaluate(need(m, "model").model, need(ds, "dataset").ds, threshold));
  });
}

entl_status entl_evaluate_predictions(const double* p1, const int* labels, size_t n,
                                      double threshold, entl_metrics* out) {
  return guarded([&] {
    auto& o = need(out, "out");
    if (n > 0) {
      need(p1, "p1");
      need(labels, "labels");
    }
    std::vector<BinaryOutcome> lab;
    for (size_t i = 0; i < n; ++i) {
      if (labels[i] != 0 && labels[i] != 1) {
        throw DomainError("labels must be 0 or 1");
      }
      lab.push_back(labels[i] ? BinaryOutcome::informative : BinaryOutcome::uninformative);
    }
    o = to_c(evaluate_predictions(std::span<const double>(p1, n), lab, threshold));
  });
}

entl_status entl_sweep_run(const entl_dataset* ds, const char* model_config_json,
                           const char* train_config_json, const double* alphas, size_t n_alphas,
                           const size_t* epoch_counts, size_t n_epoch_counts,
                           double train_fraction, uint64_t split_seed, int group_by_prefix,
                           size_t max_parallel, entl_sweep** out) {
  return guarded([&] {
    auto& o = need(out, "out");
    if (n_alphas > 0) need(alphas, "alphas");
    if (n_epoch_counts > 0) need(epoch_counts, "epoch_counts");
    SweepOptions opts;
    opts.train_fraction = train_fraction;
    opts.split_seed = split_seed;
    opts.group_by_prefix = group_by_prefix != 0;
    opts.max_parallel = max_parallel;
    auto table = sweep(train_config_from(train_config_json), model_config_from(model_config_json),
                       std::span<const double>(alphas, n_alphas),
                       std::span<const std::size_t>(epoch_counts, n_epoch_counts),
                       need(ds, "dataset").ds, opts);
    o = new entl_sweep{std::move(table)};
  });
}

entl_status entl_sweep_cell_count(const entl_sweep* s, size_t* out) {
  return guarded([&] { need(out, "out") = need(s, "sweep").table.cells.size(); });
}

entl_status entl_sweep_succeeded(const entl_sweep* s, size_t* out) {
  return guarded([&] { need(out, "out") = need(s, "sweep").table.succeeded(); });
}

entl_status entl_sweep_cell(const entl_sweep* s, size_t index, double* alpha, size_t* epochs,
                            int* ok, entl_metrics* metrics, const char** error) {
  return guarded([&] {
    const auto& cells = need(s, "sweep").table.cells;
    if (index >= cells.size()) {
      throw DomainError("sweep cell index out of range");
    }
    const auto& c = cells[index];
    if (alpha) *alpha = c.alpha;
    if (epochs) *epochs = c.epochs;
    if (ok) *ok = c.ok;
    if (metrics) *metrics = to_c(c.metrics);
    if (error) *error = c.error.c_str();
  });
}

entl_status entl_sweep_write_csv(const entl_sweep* s, const char* grid_path,
                                 const char* long_path) {
  return guarded([&] {
    const auto& t = need(s, "sweep").table;
    if (grid_path) write_text(grid_path, sweep_grid_csv(t));
    if (long_path) write_text(long_path, sweep_long_csv(t));
  });
}

void entl_sweep_free(entl_sweep* s) { delete s; }

entl_status entl_gradcheck(const entl_model* m, const entl_dataset* ds, size_t index,
                           double alpha, size_t n_samples, double step, uint64_t seed,
                           double max_resolution, entl_gradcheck_result* out) {
  return guarded([&] {
    auto& o = need(out, "out");
    const auto& sample = sample_at(ds, index);
    const auto report = grad_check(need(m, "model").model, sample.image, sample.target(),
                                   LossSpec::havrda_charvat(alpha), n_samples, step, seed,
                                   max_resolution);
    o.max_relative_error = report.max_relative_error;
    o.max_relative_error_all = report.max_relative_error_all;
    o.smooth_count = report.smooth_count;
    o.kink_count = report.kink_count;
    o.unresolved_count = report.unresolved_count;
    o.complete = report.complete() ? 1 : 0;
  });
}

}  // extern "C"
