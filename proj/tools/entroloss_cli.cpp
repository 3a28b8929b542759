// entroloss command-line front end. Talks to the library only through the C
// API in entroloss.h.
//
// Exit codes: 0 ok, 1 internal error, 2 usage or domain error, 3 I/O error,
// 4 numerical failure, 5 gate failure.

#include <entroloss.h>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitGate = 5;

constexpr double kGradTolerance = 1e-4;

struct CliError {
  int code;
  std::string message;
};

int exit_code_for(entl_status s) {
  switch (s) {
    case ENTL_OK: return kExitOk;
    case ENTL_ERR_INVALID_ARGUMENT:
    case ENTL_ERR_DOMAIN:
    case ENTL_ERR_SHAPE: return kExitUsage;
    case ENTL_ERR_IO: return kExitIo;
    case ENTL_ERR_NUMERICAL: return kExitNumerical;
    default: return kExitInternal;
  }
}

void check(entl_status s) {
  if (s != ENTL_OK) {
    throw CliError{exit_code_for(s), std::string(entl_status_name(s)) + ": " + entl_last_error()};
  }
}

struct DatasetDeleter {
  void operator()(entl_dataset* p) const { entl_dataset_free(p); }
};
struct ModelDeleter {
  void operator()(entl_model* p) const { entl_model_free(p); }
};
struct ReportDeleter {
  void operator()(entl_report* p) const { entl_report_free(p); }
};
struct SweepDeleter {
  void operator()(entl_sweep* p) const { entl_sweep_free(p); }
};
using DatasetPtr = std::unique_ptr<entl_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<entl_model, ModelDeleter>;
using ReportPtr = std::unique_ptr<entl_report, ReportDeleter>;
using SweepPtr = std::unique_ptr<entl_sweep, SweepDeleter>;

std::string take_string(char* s) {
  std::string out(s);
  entl_string_free(s);
  return out;
}

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string metrics_line(const entl_metrics& m) {
  std::string s = "accuracy=" + num(m.accuracy);
  s += " sensitivity=" + (m.has_sensitivity ? num(m.sensitivity) : std::string("n/a"));
  s += " specificity=" + (m.has_specificity ? num(m.specificity) : std::string("n/a"));
  s += " tp=" + std::to_string(m.tp) + " fp=" + std::to_string(m.fp) +
       " tn=" + std::to_string(m.tn) + " fn=" + std::to_string(m.fn);
  return s;
}

json metrics_json(const entl_metrics& m) {
  json j{{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}, {"accuracy", m.accuracy}};
  j["sensitivity"] = m.has_sensitivity ? json(m.sensitivity) : json(nullptr);
  j["specificity"] = m.has_specificity ? json(m.specificity) : json(nullptr);
  return j;
}

// Global seed: the flag, else ENTROLOSS_SEED, else none.
std::optional<std::uint64_t> resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return flag;
  if (const char* env = std::getenv("ENTROLOSS_SEED"); env != nullptr && *env != '\0') {
    std::uint64_t v = 0;
    const char* end = env + std::char_traits<char>::length(env);
    const auto [ptr, ec] = std::from_chars(env, end, v);
    if (ec != std::errc{} || ptr != end) {
      throw CliError{kExitUsage, std::string("ENTROLOSS_SEED is not an unsigned integer: ") + env};
    }
    return v;
  }
  return std::nullopt;
}

// ISO-8601 UTC; SOURCE_DATE_EPOCH pins it for reproducible manifests.
std::string timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde != nullptr && *sde != '\0') {
    long long v = 0;
    const char* end = sde + std::char_traits<char>::length(sde);
    const auto [ptr, ec] = std::from_chars(sde, end, v);
    if (ec != std::errc{} || ptr != end) {
      throw CliError{kExitUsage, std::string("SOURCE_DATE_EPOCH is not an integer: ") + sde};
    }
    t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) {
    throw CliError{kExitIo, "cannot write " + path.string()};
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw CliError{kExitIo, "cannot create directory " + dir.string()};
  }
}

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) {
    throw CliError{kExitIo, "cannot read config " + path};
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw CliError{kExitUsage, "config " + path + ": " + e.what()};
  }
  if (!j.is_object()) {
    throw CliError{kExitUsage, "config " + path + " must be a JSON object"};
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "model" && key != "train" && key != "split") {
      throw CliError{kExitUsage, "config " + path + ": unknown section '" + key + "'"};
    }
    if (!value.is_object()) {
      throw CliError{kExitUsage, "config " + path + ": section '" + key + "' must be an object"};
    }
  }
  return j;
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma - start);
    T v{};
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size()) {
      throw CliError{kExitUsage, std::string("malformed ") + what + " list '" + text + "'"};
    }
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

struct Manifest {
  json doc;

  Manifest(const std::string& command, const std::vector<std::string>& argv) {
    doc["command"] = command;
    doc["argv"] = argv;
    doc["library_version"] = entl_version();
    doc["timestamp"] = timestamp();
    doc["positive_class"] = "informative";
  }
  void write(const fs::path& path) const { write_file(path, doc.dump(2) + "\n"); }
};

json dataset_counts(const entl_dataset* ds) {
  std::size_t u = 0, i = 0;
  check(entl_dataset_counts(ds, &u, &i));
  return json{{"uninformative", u}, {"informative", i}, {"total", u + i}};
}

// Resolved {model, train, split} configuration from file plus flag overrides.
struct RunConfig {
  json model;
  json train;
  double train_fraction = 0.7;
  std::uint64_t split_seed = 0;
  bool group_by_prefix = false;
};

struct TrainFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<std::string> optimizer;
  std::optional<std::size_t> batch_size;
  std::optional<double> train_fraction;
  std::optional<double> threshold;
  bool group_by_prefix = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config, "JSON file with model/train/split sections");
  cmd->add_option("--seed", f.seed, "Seed for weights, shuffling, dropout and the split");
  cmd->add_option("--lr", f.lr, "Learning rate");
  cmd->add_option("--optimizer", f.optimizer, "adam or sgd");
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size");
  cmd->add_option("--train-fraction", f.train_fraction, "Training share of the split");
  cmd->add_option("--threshold", f.threshold, "Decision threshold on p(informative)");
  cmd->add_flag("--group-by-prefix", f.group_by_prefix,
                "Keep samples whose ids share a prefix in one partition");
}

RunConfig resolve(const TrainFlags& f) {
  const json file = read_config(f.config);
  RunConfig rc;
  rc.model = file.value("model", json::object());
  rc.train = file.value("train", json::object());
  const json split = file.value("split", json::object());
  try {
    rc.train_fraction = split.value("train_fraction", rc.train_fraction);
    rc.split_seed = split.value("seed", rc.split_seed);
    rc.group_by_prefix = split.value("group_by_prefix", rc.group_by_prefix);
  } catch (const json::exception& e) {
    throw CliError{kExitUsage, std::string("config split section: ") + e.what()};
  }
  if (const auto seed = resolve_seed(f.seed)) {
    rc.model["seed"] = *seed;
    rc.train["seed"] = *seed;
    rc.split_seed = *seed;
  }
  if (f.lr) rc.train["learning_rate"] = *f.lr;
  if (f.optimizer) rc.train["optimizer"] = *f.optimizer;
  if (f.batch_size) rc.train["batch_size"] = *f.batch_size;
  if (f.threshold) rc.train["threshold"] = *f.threshold;
  if (f.train_fraction) rc.train_fraction = *f.train_fraction;
  if (f.group_by_prefix) rc.group_by_prefix = true;
  return rc;
}

json canonical_model(const json& model) {
  char* out = nullptr;
  check(entl_model_config_resolve(model.dump().c_str(), &out));
  return json::parse(take_string(out));
}

json canonical_train(const json& train) {
  char* out = nullptr;
  check(entl_train_config_resolve(train.dump().c_str(), &out));
  return json::parse(take_string(out));
}

DatasetPtr load_dataset(const std::string& dir) {
  entl_dataset* ds = nullptr;
  check(entl_dataset_load_dir(dir.c_str(), &ds));
  return DatasetPtr(ds);
}

// ---- gen-data -------------------------------------------------------------

struct GenDataArgs {
  std::size_t n = 0;
  double fraction = 0.5;
  std::optional<std::uint64_t> seed;
  double noise = 0.15;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a, const std::vector<std::string>& argv) {
  const std::uint64_t seed = resolve_seed(a.seed).value_or(0);
  entl_dataset* raw = nullptr;
  check(entl_dataset_synth(a.n, a.fraction, seed, a.noise, &raw));
  DatasetPtr ds(raw);
  ensure_dir(a.out);
  check(entl_dataset_export(ds.get(), a.out.c_str()));

  Manifest m("gen-data", argv);
  m.doc["config"] = {{"n", a.n}, {"informative_fraction", a.fraction}, {"noise_sigma", a.noise}};
  m.doc["seeds"] = {{"data", seed}};
  m.doc["dataset"] = dataset_counts(ds.get());
  m.doc["artifacts"] = {{"data_manifest", (fs::path(a.out) / "manifest.json").string()},
                        {"informative", (fs::path(a.out) / "informative").string()},
                        {"uninformative", (fs::path(a.out) / "uninformative").string()}};
  m.write(fs::path(a.out) / "run_manifest.json");
  std::cout << "wrote " << m.doc["dataset"]["total"].get<std::size_t>() << " images to "
            << a.out << "\n";
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::optional<double> alpha;
  std::optional<std::size_t> epochs;
  std::string out;
  std::size_t patience = 5;
  bool quiet = false;
  TrainFlags flags;
};

void print_epoch(const entl_epoch* e, void* user) {
  const auto total = *static_cast<const std::size_t*>(user);
  std::cerr << "epoch " << (e->epoch + 1) << "/" << total << " train_loss=" << num(e->train_loss)
            << " val_loss=" << num(e->val_loss) << " train_acc=" << num(e->train_accuracy)
            << " val_acc=" << num(e->val_accuracy) << "\n";
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  RunConfig rc = resolve(a.flags);
  if (a.alpha) {
    json loss = rc.train.value("loss", json::object());
    loss["alpha"] = *a.alpha;
    loss["family"] = *a.alpha == 1.0 ? "shannon" : "havrda_charvat";
    rc.train["loss"] = loss;
  }
  if (a.epochs) rc.train["epochs"] = *a.epochs;
  const json model_cfg = canonical_model(rc.model);
  const json train_cfg = canonical_train(rc.train);

  DatasetPtr all = load_dataset(a.data);
  entl_dataset* tr_raw = nullptr;
  entl_dataset* va_raw = nullptr;
  check(entl_dataset_split(all.get(), rc.train_fraction, rc.split_seed, rc.group_by_prefix,
                           &tr_raw, &va_raw));
  DatasetPtr train_ds(tr_raw), val_ds(va_raw);

  ensure_dir(a.out);
  entl_model* m_raw = nullptr;
  check(entl_model_create(model_cfg.dump().c_str(), &m_raw));
  ModelPtr model(m_raw);

  std::size_t total = train_cfg.at("epochs").get<std::size_t>();
  entl_report* r_raw = nullptr;
  check(entl_train(model.get(), train_ds.get(), val_ds.get(), train_cfg.dump().c_str(),
                   a.quiet ? nullptr : print_epoch, &total, &r_raw));
  ReportPtr report(r_raw);

  const fs::path out(a.out);
  const auto ckpt = out / "model.entl", cfg_path = out / "model_config.json";
  const auto csv = out / "report.csv", svg = out / "loss_curve.svg";
  check(entl_model_save(model.get(), ckpt.c_str(), cfg_path.c_str()));
  check(entl_report_write_csv(report.get(), csv.c_str()));
  check(entl_report_write_svg(report.get(), a.patience, svg.c_str()));

  entl_metrics fm{};
  check(entl_report_final_metrics(report.get(), &fm));
  std::optional<std::size_t> onset;
  if (a.patience > 0 && total >= a.patience + 1) {
    int found = 0;
    std::size_t epoch = 0;
    check(entl_report_detect_overfitting(report.get(), a.patience, &found, &epoch));
    if (found) onset = epoch;
  }

  Manifest m("train", argv);
  m.doc["config"] = {{"model", model_cfg},
                     {"train", train_cfg},
                     {"split",
                      {{"train_fraction", rc.train_fraction},
                       {"seed", rc.split_seed},
                       {"group_by_prefix", rc.group_by_prefix}}}};
  m.doc["seeds"] = {{"model", model_cfg.at("seed")},
                    {"train", train_cfg.at("seed")},
                    {"split", rc.split_seed}};
  m.doc["dataset"] = {{"path", a.data},
                      {"all", dataset_counts(all.get())},
                      {"train", dataset_counts(train_ds.get())},
                      {"validation", dataset_counts(val_ds.get())}};
  m.doc["final_validation_metrics"] = metrics_json(fm);
  m.doc["overfitting_onset_epoch"] = onset ? json(*onset) : json(nullptr);
  m.doc["artifacts"] = {{"checkpoint", ckpt.string()},
                        {"model_config", cfg_path.string()},
                        {"report", csv.string()},
                        {"loss_curve", svg.string()}};
  m.write(out / "run_manifest.json");

  std::cout << "final validation " << metrics_line(fm) << " (positive class: informative)\n";
  return kExitOk;
}

// ---- sweep ----------------------------------------------------------------

struct SweepArgs {
  std::string data;
  std::string alphas = "1.0,1.1,1.3,1.5,2.0";
  std::string epoch_counts = "20,30,40";
  std::string out;
  std::size_t jobs = 1;
  TrainFlags flags;
};

int cmd_sweep(const SweepArgs& a, const std::vector<std::string>& argv) {
  const auto alphas = parse_list<double>(a.alphas, "alpha");
  const auto epochs = parse_list<std::size_t>(a.epoch_counts, "epoch-count");
  RunConfig rc = resolve(a.flags);
  rc.train["epochs"] = 1;  // per-cell values come from the grid
  const json model_cfg = canonical_model(rc.model);
  json train_cfg = canonical_train(rc.train);
  train_cfg.erase("epochs");

  DatasetPtr ds = load_dataset(a.data);
  ensure_dir(a.out);
  entl_sweep* s_raw = nullptr;
  check(entl_sweep_run(ds.get(), model_cfg.dump().c_str(), train_cfg.dump().c_str(),
                       alphas.data(), alphas.size(), epochs.data(), epochs.size(),
                       rc.train_fraction, rc.split_seed, rc.group_by_prefix, a.jobs, &s_raw));
  SweepPtr sw(s_raw);

  const fs::path out(a.out);
  const auto grid = out / "sweep_table.csv", long_form = out / "sweep_long.csv";
  check(entl_sweep_write_csv(sw.get(), grid.c_str(), long_form.c_str()));

  std::size_t cells = 0, ok = 0;
  check(entl_sweep_cell_count(sw.get(), &cells));
  check(entl_sweep_succeeded(sw.get(), &ok));
  json cell_docs = json::array();
  for (std::size_t i = 0; i < cells; ++i) {
    double alpha = 0;
    std::size_t n = 0;
    int cell_ok = 0;
    entl_metrics met{};
    const char* err = nullptr;
    check(entl_sweep_cell(sw.get(), i, &alpha, &n, &cell_ok, &met, &err));
    json c{{"alpha", alpha}, {"epochs", n}, {"ok", cell_ok != 0}};
    if (cell_ok) {
      c["metrics"] = metrics_json(met);
      std::cout << "alpha=" << num(alpha) << " N=" << n << " " << metrics_line(met) << "\n";
    } else {
      c["error"] = err;
      std::cerr << "alpha=" << num(alpha) << " N=" << n << " failed: " << err << "\n";
    }
    cell_docs.push_back(c);
  }

  Manifest m("sweep", argv);
  m.doc["config"] = {{"model", model_cfg},
                     {"train", train_cfg},
                     {"alphas", alphas},
                     {"epoch_counts", epochs},
                     {"split",
                      {{"train_fraction", rc.train_fraction},
                       {"seed", rc.split_seed},
                       {"group_by_prefix", rc.group_by_prefix}}}};
  m.doc["seeds"] = {{"model", model_cfg.at("seed")},
                    {"train", train_cfg.at("seed")},
                    {"split", rc.split_seed}};
  m.doc["dataset"] = {{"path", a.data}, {"all", dataset_counts(ds.get())}};
  m.doc["cells"] = cell_docs;
  m.doc["artifacts"] = {{"grid", grid.string()}, {"long", long_form.string()}};
  m.write(out / "run_manifest.json");

  std::cout << ok << "/" << cells << " cells succeeded\n";
  return ok > 0 ? kExitOk : kExitNumerical;
}

// ---- gradcheck ------------------------------------------------------------

struct GradcheckArgs {
  double alpha = 1.0;
  std::size_t samples = 20;
  double step = 1e-5;
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
};

int cmd_gradcheck(const GradcheckArgs& a, const std::vector<std::string>& argv) {
  TrainFlags f;
  f.config = a.config;
  f.seed = a.seed;
  const RunConfig rc = resolve(f);
  const std::uint64_t seed = resolve_seed(a.seed).value_or(0);
  const json model_cfg = canonical_model(rc.model);

  entl_model* m_raw = nullptr;
  check(entl_model_create(model_cfg.dump().c_str(), &m_raw));
  ModelPtr model(m_raw);
  // One synthetic frame per class, sized for the model.
  entl_dataset* d_raw = nullptr;
  const auto side = model_cfg.at("input_side").get<std::size_t>();
  if (side != 128) {
    throw CliError{kExitUsage, "gradcheck uses 128x128 synthetic frames; input_side must be 128"};
  }
  check(entl_dataset_synth(2, 0.5, seed, 0.15, &d_raw));
  DatasetPtr ds(d_raw);

  double worst = 0.0, worst_all = 0.0;
  std::size_t smooth = 0, kinks = 0, unresolved = 0;
  bool complete = true;
  for (std::size_t i = 0; i < 2; ++i) {
    entl_gradcheck_result r{};
    check(entl_gradcheck(model.get(), ds.get(), i, a.alpha, a.samples, a.step, seed + i,
                         kGradTolerance / 10.0, &r));
    worst = std::max(worst, r.max_relative_error);
    worst_all = std::max(worst_all, r.max_relative_error_all);
    smooth += r.smooth_count;
    kinks += r.kink_count;
    unresolved += r.unresolved_count;
    complete = complete && r.complete;
  }
  const bool pass = complete && worst <= kGradTolerance;
  std::cout << "max relative error " << num(worst) << " over " << smooth << " entries (tolerance "
            << num(kGradTolerance) << ", alpha " << num(a.alpha) << ", step " << num(a.step)
            << ") " << (pass ? "PASS" : "FAIL") << "\n";
  if (!complete) {
    std::cout << "only " << smooth << " of " << 2 * a.samples
              << " requested entries were resolved and smooth within the draw budget; "
              << "the difference quotient does not confirm the gradient at this step\n";
  }
  if (unresolved > 0) {
    std::cout << unresolved << " further entries had gradients too small for the difference "
              << "quotient to resolve to a tenth of the tolerance and were redrawn\n";
  }
  if (kinks > 0) {
    std::cout << kinks << " further entries crossed a ReLU/max-pool switch within the step and "
              << "were redrawn; max relative error including all skipped entries " << num(worst_all) << "\n";
  }

  ensure_dir(a.out);
  Manifest m("gradcheck", argv);
  m.doc["config"] = {{"model", model_cfg},
                     {"alpha", a.alpha},
                     {"samples", a.samples},
                     {"step", a.step},
                     {"tolerance", kGradTolerance}};
  m.doc["seeds"] = {{"check", seed}, {"model", model_cfg.at("seed")}};
  m.doc["dataset"] = dataset_counts(ds.get());
  m.doc["result"] = {{"max_relative_error", worst},
                     {"max_relative_error_including_kinks", worst_all},
                     {"smooth_entries", smooth},
                     {"kink_entries", kinks},
                     {"unresolved_entries", unresolved},
                     {"max_resolution", kGradTolerance / 10.0},
                     {"complete", complete},
                     {"pass", pass}};
  m.doc["artifacts"] = json::object();
  m.write(fs::path(a.out) / "run_manifest.json");
  return pass ? kExitOk : kExitGate;
}

// ---- plot -----------------------------------------------------------------

struct PlotArgs {
  std::string report;
  std::string out;
  std::size_t patience = 5;
};

int cmd_plot(const PlotArgs& a, const std::vector<std::string>& argv) {
  entl_report* r_raw = nullptr;
  check(entl_report_read_csv(a.report.c_str(), &r_raw));
  ReportPtr report(r_raw);
  check(entl_report_write_svg(report.get(), a.patience, a.out.c_str()));
  std::size_t n = 0;
  check(entl_report_epoch_count(report.get(), &n));
  std::optional<std::size_t> onset;
  if (a.patience > 0 && n >= a.patience + 1) {
    int found = 0;
    std::size_t epoch = 0;
    check(entl_report_detect_overfitting(report.get(), a.patience, &found, &epoch));
    if (found) onset = epoch;
  }

  Manifest m("plot", argv);
  m.doc["config"] = {{"report", a.report}, {"patience", a.patience}};
  m.doc["seeds"] = json::object();
  m.doc["dataset"] = {{"epochs", n}};
  m.doc["overfitting_onset_epoch"] = onset ? json(*onset) : json(nullptr);
  m.doc["artifacts"] = {{"svg", a.out}};
  m.write(a.out + ".manifest.json");
  std::cout << "wrote " << a.out << " (" << n << " epochs, overfitting onset: "
            << (onset ? std::to_string(*onset) : std::string("none")) << ")\n";
  return kExitOk;
}

}  // namespace

// Each training step allocates and frees activations of several megabytes.
// glibc serves those with fresh mmap pages by default, and faulting them in
// costs about a third of the step; keep them on the heap instead.
static void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

int main(int argc, char** argv) {
  tune_allocator();
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Entropy-loss training and evaluation for frame-quality classification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", entl_version());

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic labelled image set");
  gen_cmd->add_option("--n", gen.n, "Number of images")->required();
  gen_cmd->add_option("--fraction", gen.fraction, "Informative share");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--noise", gen.noise, "Gaussian noise sigma");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train one model and write its artifacts");
  train_cmd->add_option("--data", train.data, "Dataset directory")->required();
  train_cmd->add_option("--alpha", train.alpha, "Entropy parameter; 1 selects Shannon");
  train_cmd->add_option("--epochs", train.epochs, "Epoch count");
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--patience", train.patience, "Overfitting window; 0 disables");
  train_cmd->add_flag("--quiet", train.quiet, "No per-epoch progress");
  add_train_flags(train_cmd, train.flags);

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train over an alpha x epochs grid");
  sweep_cmd->add_option("--data", sw.data, "Dataset directory")->required();
  sweep_cmd->add_option("--alphas", sw.alphas, "Comma-separated alphas");
  sweep_cmd->add_option("--epoch-counts", sw.epoch_counts, "Comma-separated epoch counts");
  sweep_cmd->add_option("--out", sw.out, "Output directory")->required();
  sweep_cmd->add_option("--jobs", sw.jobs, "Alphas trained concurrently; 0 = all cores");
  add_train_flags(sweep_cmd, sw.flags);

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gc_cmd->add_option("--alpha", gc.alpha, "Entropy parameter");
  gc_cmd->add_option("--samples", gc.samples, "Parameters checked per frame");
  gc_cmd->add_option("--step", gc.step, "Central-difference step");
  gc_cmd->add_option("--seed", gc.seed, "Seed for the frames and the parameter draw");
  gc_cmd->add_option("--config", gc.config, "JSON file with a model section");
  gc_cmd->add_option("--out", gc.out, "Directory for the run manifest");

  PlotArgs pl;
  auto* plot_cmd = app.add_subcommand("plot", "Plot a training report as SVG");
  plot_cmd->add_option("--report", pl.report, "report.csv from train")->required();
  plot_cmd->add_option("--out", pl.out, "SVG path")->required();
  plot_cmd->add_option("--patience", pl.patience, "Overfitting window; 0 disables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, args);
    if (*train_cmd) return cmd_train(train, args);
    if (*sweep_cmd) return cmd_sweep(sw, args);
    if (*gc_cmd) return cmd_gradcheck(gc, args);
    if (*plot_cmd) return cmd_plot(pl, args);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    if (e.code == kExitUsage) {
      const auto used = app.get_subcommands();
      std::cerr << (used.empty() ? app.help() : used.front()->help());
    }
    return e.code;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
