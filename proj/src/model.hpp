#pragma once

// The frame-quality classifier: a stack of 3x3 convolutions (ReLU, optional
// 2x2 max-pool each), flatten, ReLU dense layers with dropout after the first
// few, and a single sigmoid unit giving p(informative).

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "entropy.hpp"
#include "ops.hpp"

namespace entroloss {

struct ModelConfig {
  std::size_t input_side = 128;
  std::vector<std::size_t> conv_channels{128, 64, 32, 16, 8};
  /// One flag per conv layer; empty means "pool after every conv layer".
  std::vector<bool> pool_after{};
  std::vector<std::size_t> dense_sizes{128, 64, 32, 16};
  double dropout_rate = 0.25;
  std::size_t dropout_after_dense = 3;
  std::uint64_t seed = 0;
  nn::ConvAlgorithm conv_algorithm = nn::ConvAlgorithm::automatic;

  bool pools_after(std::size_t conv_index) const {
    return pool_after.empty() || pool_after.at(conv_index);
  }
  /// Dense layers carrying ReLU; the sigmoid head is the last entry of
  /// dense_sizes when it equals 1, otherwise a 1-unit layer is appended.
  std::size_t hidden_dense_count() const;
  /// Throws DomainError for empty layer lists, non-positive sizes, a side not
  /// divisible by 2^(pooled layers), or a bad dropout setting.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct ConvLayer {
  nn::Var weights;  // [C_out, C_in, 3, 3]
  nn::Var bias;     // [C_out]
  bool pool = true;
};

struct DenseLayer {
  nn::Var weights;  // [out, in]
  nn::Var bias;     // [out]
  bool hidden = true;   // ReLU follows
  bool dropout = false;
};

class Model {
 public:
  /// Deterministic Glorot-uniform weights from config.seed; zero biases.
  explicit Model(ModelConfig config);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Deep copy with independent parameters.
  Model clone() const;

  const ModelConfig& config() const { return config_; }
  const std::vector<ConvLayer>& conv_layers() const { return conv_; }
  const std::vector<DenseLayer>& dense_layers() const { return dense_; }

  /// Weights and biases in layer order, convolutions first.
  std::vector<nn::Var> parameters() const;
  std::size_t param_count() const;
  std::size_t flatten_size() const { return flatten_size_; }

  /// image: [1, S, S]. Returns the scalar sigmoid output. `dropout_rng` is
  /// required in train mode.
  nn::Var forward(nn::Tape& tape, const nn::Var& image, nn::Mode mode,
                  Rng* dropout_rng = nullptr) const;

  /// Eval-mode probability pair (1 - s, s).
  ProbabilityPair predict(const nn::Tensor& image) const;

  void zero_grad() const;

  void save_parameters(const std::filesystem::path& checkpoint) const;
  /// Replaces parameter values; throws IoError when shapes differ from the
  /// built architecture.
  void load_parameters(const std::filesystem::path& checkpoint);

 private:
  ModelConfig config_;
  std::vector<ConvLayer> conv_;
  std::vector<DenseLayer> dense_;
  std::size_t flatten_size_ = 0;
};

/// Writes the checkpoint plus the adjacent JSON config document.
void save_model(const Model& model, const std::filesystem::path& checkpoint,
                const std::filesystem::path& config_json);
Model load_model(const std::filesystem::path& checkpoint,
                 const std::filesystem::path& config_json);

}  // namespace entroloss
