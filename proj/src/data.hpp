#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "entropy.hpp"
#include "tensor.hpp"

namespace entroloss::data {

inline constexpr std::size_t kImageSide = 128;

struct Sample {
  nn::Tensor image;  // [1, S, S], values in [0,1]
  BinaryOutcome label = BinaryOutcome::uninformative;
  std::string source_id;

  ProbabilityPair target() const { return ProbabilityPair::dirac(label); }
};

struct ClassCounts {
  std::size_t uninformative = 0;
  std::size_t informative = 0;

  std::size_t total() const { return uninformative + informative; }
  bool operator==(const ClassCounts&) const = default;
};

struct Dataset {
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  ClassCounts class_counts() const;
};

/// Decode, rescale to [0,1] and resize to side x side (bilinear).
nn::Tensor load_image(const std::filesystem::path& path, std::size_t side = kImageSide);

/// Reads <root>/informative/*.png and <root>/uninformative/*.png in file-name
/// order, uninformative first. source_id is the file stem. Throws IoError
/// naming the missing or unreadable path.
Dataset load_directory(const std::filesystem::path& root, std::size_t side = kImageSide);

/// Writes the same layout as load_directory reads (8-bit PNG) plus
/// <root>/manifest.json listing {path, label, source_id} for every sample.
/// Returns the manifest path.
std::filesystem::path export_directory(const Dataset& ds, const std::filesystem::path& root);

struct SynthSpec {
  std::size_t n = 100;
  double informative_fraction = 0.5;
  std::uint64_t seed = 0;
  double noise_sigma = 0.15;
  std::size_t side = kImageSide;

  /// Informative count: round(fraction * n), kept within [1, n-1].
  std::size_t informative_count() const;
};

/// Synthetic stand-in for endomicroscopy frames. Informative frames carry 3-8
/// smooth bright curvilinear strokes (fibre-like structure) over noise;
/// uninformative frames are pure noise or noise over a low-frequency
/// illumination gradient (motion-artefact analogue), 50/50. Deterministic in
/// the seed. Throws DomainError when n < 2 or the fraction is outside (0,1).
Dataset synth_generate(const SynthSpec& spec);

/// Mean absolute 4-neighbour Laplacian response over the interior pixels.
double mean_abs_laplacian(const nn::Tensor& image);

/// Band-pass energy used as a one-feature baseline classifier: mean squared
/// Laplacian of the image after a 3x3 binomial blur.
double smoothed_laplacian_energy(const nn::Tensor& image);

/// Seeded uniform shuffle then a prefix split; train size is
/// round(fraction * n). Throws DomainError when either side would be empty.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed);

/// Group key used by split_grouped: the source_id up to its last '_'
/// (the whole id when it has none).
std::string group_key(const std::string& source_id);

/// Like split, but samples sharing a group_key stay in the same partition.
/// Groups are shuffled and assigned to train until it holds at least
/// round(fraction * n) samples.
std::pair<Dataset, Dataset> split_grouped(const Dataset& ds, double train_fraction,
                                          std::uint64_t seed);

/// Sample indices per batch for one epoch: a shuffle keyed by (seed, epoch),
/// consecutive chunks of batch_size, final partial batch kept.
std::vector<std::vector<std::size_t>> batches(const Dataset& ds, std::size_t batch_size,
                                              std::uint64_t seed, std::uint64_t epoch);

}  // namespace entroloss::data
