#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <fmt/core.h>
#include <json.hpp>

#include "errors.hpp"
#include "image_io.hpp"
#include "rng.hpp"

namespace entroloss::data {

namespace fs = std::filesystem;

namespace {

constexpr const char* kInformativeDir = "informative";
constexpr const char* kUninformativeDir = "uninformative";

std::vector<fs::path> png_files(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw IoError(fmt::format("missing class directory {}", dir.string()));
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (entry.is_regular_file() && ext == ".png") {
      files.push_back(entry.path());
    }
  }
  if (ec) {
    throw IoError(fmt::format("cannot list {}: {}", dir.string(), ec.message()));
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::size_t train_size(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw DomainError(fmt::format("train fraction must lie in (0,1), got {}", fraction));
  }
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

void require_non_empty_sides(std::size_t n_train, std::size_t n) {
  if (n_train == 0 || n_train >= n) {
    throw DomainError(fmt::format(
        "split of {} samples would leave a partition empty (train size {})", n, n_train));
  }
}

}  // namespace

ClassCounts Dataset::class_counts() const {
  ClassCounts c;
  for (const auto& s : samples) {
    if (s.label == BinaryOutcome::informative) {
      ++c.informative;
    } else {
      ++c.uninformative;
    }
  }
  return c;
}

nn::Tensor load_image(const fs::path& path, std::size_t side) {
  GrayImage img = read_png_gray(path);
  auto pixels = resize_bilinear(img.pixels, img.width, img.height, side, side);
  for (double& p : pixels) {
    p = std::clamp(p, 0.0, 1.0);
  }
  return nn::Tensor(nn::Shape{1, side, side}, std::move(pixels));
}

Dataset load_directory(const fs::path& root, std::size_t side) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw IoError(fmt::format("data directory {} does not exist", root.string()));
  }
  Dataset ds;
  for (auto [dir, label] : {std::pair{kUninformativeDir, BinaryOutcome::uninformative},
                            std::pair{kInformativeDir, BinaryOutcome::informative}}) {
    for (const auto& file : png_files(root / dir)) {
      ds.samples.push_back({load_image(file, side), label, file.stem().string()});
    }
  }
  if (ds.empty()) {
    throw IoError(fmt::format("no PNG images found under {}", root.string()));
  }
  return ds;
}

fs::path export_directory(const Dataset& ds, const fs::path& root) {
  std::error_code ec;
  for (const char* dir : {kInformativeDir, kUninformativeDir}) {
    fs::create_directories(root / dir, ec);
    if (ec) {
      throw IoError(fmt::format("cannot create {}: {}", (root / dir).string(), ec.message()));
    }
  }
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& s : ds.samples) {
    const bool informative = s.label == BinaryOutcome::informative;
    const fs::path rel = fs::path(informative ? kInformativeDir : kUninformativeDir) /
                         (s.source_id + ".png");
    const auto& shape = s.image.shape();
    if (shape.size() != 3 || shape[0] != 1) {
      throw ShapeError("export_directory: images must be [1,H,W]");
    }
    write_png_gray8(root / rel, shape[2], shape[1], s.image.data());
    entries.push_back({{"path", rel.generic_string()},
                       {"label", informative ? 1 : 0},
                       {"source_id", s.source_id}});
  }
  const ClassCounts counts = ds.class_counts();
  nlohmann::json manifest = {
      {"samples", entries},
      {"class_counts",
       {{"uninformative", counts.uninformative}, {"informative", counts.informative}}}};
  const fs::path path = root / "manifest.json";
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << manifest.dump(2) << '\n')) {
    throw IoError(fmt::format("failed writing {}", path.string()));
  }
  return path;
}

double mean_abs_laplacian(const nn::Tensor& image) {
  const std::size_t H = image.dim(image.rank() - 2), W = image.dim(image.rank() - 1);
  auto p = image.data();
  double sum = 0.0;
  for (std::size_t y = 1; y + 1 < H; ++y) {
    for (std::size_t x = 1; x + 1 < W; ++x) {
      const std::size_t i = y * W + x;
      sum += std::abs(p[i - W] + p[i + W] + p[i - 1] + p[i + 1] - 4.0 * p[i]);
    }
  }
  return sum / static_cast<double>((H - 2) * (W - 2));
}

double smoothed_laplacian_energy(const nn::Tensor& image) {
  const std::size_t H = image.dim(image.rank() - 2), W = image.dim(image.rank() - 1);
  auto p = image.data();
  std::vector<double> blurred(H * W, 0.0);
  constexpr double k[3] = {0.25, 0.5, 0.25};
  for (std::size_t y = 1; y + 1 < H; ++y) {
    for (std::size_t x = 1; x + 1 < W; ++x) {
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          s += k[dy + 1] * k[dx + 1] * p[(y + dy) * W + x + dx];
        }
      }
      blurred[y * W + x] = s;
    }
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 2; y + 2 < H; ++y) {
    for (std::size_t x = 2; x + 2 < W; ++x) {
      const std::size_t i = y * W + x;
      const double l =
          blurred[i - W] + blurred[i + W] + blurred[i - 1] + blurred[i + 1] - 4.0 * blurred[i];
      sum += l * l;
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  const std::size_t n = ds.size();
  const std::size_t n_train = train_size(n, train_fraction);
  require_non_empty_sides(n_train, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, {0x5350u});
  std::shuffle(order.begin(), order.end(), rng);
  std::pair<Dataset, Dataset> parts;
  parts.first.samples.reserve(n_train);
  parts.second.samples.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? parts.first : parts.second).samples.push_back(ds.samples[order[i]]);
  }
  return parts;
}

std::string group_key(const std::string& source_id) {
  const auto pos = source_id.rfind('_');
  return pos == std::string::npos ? source_id : source_id.substr(0, pos);
}

std::pair<Dataset, Dataset> split_grouped(const Dataset& ds, double train_fraction,
                                          std::uint64_t seed) {
  const std::size_t n = ds.size();
  const std::size_t target = train_size(n, train_fraction);
  require_non_empty_sides(target, n);
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    groups[group_key(ds.samples[i].source_id)].push_back(i);
  }
  std::vector<const std::vector<std::size_t>*> order;
  for (const auto& [key, members] : groups) {
    order.push_back(&members);
  }
  Rng rng = make_rng(seed, {0x5347u});
  std::shuffle(order.begin(), order.end(), rng);
  std::pair<Dataset, Dataset> parts;
  for (const auto* members : order) {
    Dataset& side = parts.first.size() < target ? parts.first : parts.second;
    for (std::size_t i : *members) {
      side.samples.push_back(ds.samples[i]);
    }
  }
  if (parts.first.empty() || parts.second.empty()) {
    throw DomainError(fmt::format("grouped split of {} samples in {} groups leaves a partition empty",
                                  n, groups.size()));
  }
  return parts;
}

std::vector<std::vector<std::size_t>> batches(const Dataset& ds, std::size_t batch_size,
                                              std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) {
    throw DomainError("batch_size must be at least 1");
  }
  if (ds.empty()) {
    throw DomainError("cannot batch an empty dataset");
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, {0x4241u, epoch});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace entroloss::data
