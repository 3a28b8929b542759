#include "model.hpp"

#include <cmath>
#include <fstream>

#include <fmt/core.h>

#include "checkpoint.hpp"
#include "errors.hpp"

namespace entroloss {

namespace {

const char* algorithm_name(nn::ConvAlgorithm a) {
  switch (a) {
    case nn::ConvAlgorithm::direct:
      return "direct";
    case nn::ConvAlgorithm::winograd:
      return "winograd";
    default:
      return "automatic";
  }
}

nn::ConvAlgorithm parse_algorithm(const std::string& s) {
  if (s == "direct") return nn::ConvAlgorithm::direct;
  if (s == "winograd") return nn::ConvAlgorithm::winograd;
  if (s == "automatic") return nn::ConvAlgorithm::automatic;
  throw DomainError("unknown conv_algorithm '" + s + "'");
}

nn::Var glorot(nn::Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  nn::Tensor t(std::move(shape));
  for (double& v : t.data()) {
    v = -limit + 2.0 * limit * uniform01(rng);
  }
  return nn::make_var(std::move(t), true);
}

nn::Var zeros(std::size_t n) { return nn::make_var(nn::Tensor(nn::Shape{n}), true); }

}  // namespace

std::size_t ModelConfig::hidden_dense_count() const {
  if (!dense_sizes.empty() && dense_sizes.back() == 1) {
    return dense_sizes.size() - 1;
  }
  return dense_sizes.size();
}

void ModelConfig::validate() const {
  if (input_side == 0) {
    throw DomainError("input_side must be positive");
  }
  if (conv_channels.empty()) {
    throw DomainError("conv_channels must not be empty");
  }
  if (dense_sizes.empty()) {
    throw DomainError("dense_sizes must not be empty");
  }
  for (std::size_t c : conv_channels) {
    if (c == 0) throw DomainError("conv_channels entries must be positive");
  }
  for (std::size_t d : dense_sizes) {
    if (d == 0) throw DomainError("dense_sizes entries must be positive");
  }
  if (!pool_after.empty() && pool_after.size() != conv_channels.size()) {
    throw DomainError(fmt::format("pool_after has {} entries for {} conv layers",
                                  pool_after.size(), conv_channels.size()));
  }
  std::size_t pooled = 0;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    pooled += pools_after(i) ? 1 : 0;
  }
  if (pooled >= 63 || input_side % (std::size_t{1} << pooled) != 0) {
    throw DomainError(fmt::format("input_side {} is not divisible by 2^{} (pooled layers)",
                                  input_side, pooled));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw DomainError(fmt::format("dropout_rate must lie in [0,1), got {}", dropout_rate));
  }
  if (dropout_after_dense > hidden_dense_count()) {
    throw DomainError(fmt::format("dropout_after_dense = {} exceeds the {} hidden dense layers",
                                  dropout_after_dense, hidden_dense_count()));
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  std::vector<bool> pools(c.conv_channels.size());
  for (std::size_t i = 0; i < pools.size(); ++i) {
    pools[i] = c.pools_after(i);
  }
  j = nlohmann::json{{"input_side", c.input_side},
                     {"conv_channels", c.conv_channels},
                     {"pool_after", pools},
                     {"dense_sizes", c.dense_sizes},
                     {"dropout_rate", c.dropout_rate},
                     {"dropout_after_dense", c.dropout_after_dense},
                     {"seed", c.seed},
                     {"conv_algorithm", algorithm_name(c.conv_algorithm)}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig{};
  c.input_side = j.value("input_side", c.input_side);
  c.conv_channels = j.value("conv_channels", c.conv_channels);
  c.pool_after = j.value("pool_after", c.pool_after);
  c.dense_sizes = j.value("dense_sizes", c.dense_sizes);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.dropout_after_dense = j.value("dropout_after_dense", c.dropout_after_dense);
  c.seed = j.value("seed", c.seed);
  c.conv_algorithm = parse_algorithm(j.value("conv_algorithm", std::string("automatic")));
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  std::size_t in_channels = 1;
  std::size_t side = config_.input_side;
  std::uint64_t layer_index = 0;
  for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
    const std::size_t out_channels = config_.conv_channels[i];
    Rng rng = make_rng(config_.seed, {layer_index++});
    ConvLayer layer;
    layer.weights = glorot(nn::Shape{out_channels, in_channels, 3, 3}, in_channels * 9,
                           out_channels * 9, rng);
    layer.bias = zeros(out_channels);
    layer.pool = config_.pools_after(i);
    conv_.push_back(std::move(layer));
    in_channels = out_channels;
    if (config_.pools_after(i)) {
      side /= 2;
    }
  }
  flatten_size_ = in_channels * side * side;

  std::vector<std::size_t> sizes = config_.dense_sizes;
  if (sizes.back() != 1) {
    sizes.push_back(1);
  }
  std::size_t in_features = flatten_size_;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    Rng rng = make_rng(config_.seed, {layer_index++});
    DenseLayer layer;
    layer.weights = glorot(nn::Shape{sizes[i], in_features}, in_features, sizes[i], rng);
    layer.bias = zeros(sizes[i]);
    layer.hidden = i + 1 < sizes.size();
    layer.dropout = layer.hidden && i < config_.dropout_after_dense;
    dense_.push_back(std::move(layer));
    in_features = sizes[i];
  }
}

Model Model::clone() const {
  Model copy(config_);
  auto src = parameters();
  auto dst = copy.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::copy(src[i]->data().begin(), src[i]->data().end(), dst[i]->data().begin());
  }
  return copy;
}

std::vector<nn::Var> Model::parameters() const {
  std::vector<nn::Var> params;
  for (const auto& l : conv_) {
    params.push_back(l.weights);
    params.push_back(l.bias);
  }
  for (const auto& l : dense_) {
    params.push_back(l.weights);
    params.push_back(l.bias);
  }
  return params;
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) {
    n += p->size();
  }
  return n;
}

nn::Var Model::forward(nn::Tape& tape, const nn::Var& image, nn::Mode mode,
                       Rng* dropout_rng) const {
  const std::size_t s = config_.input_side;
  if (image->rank() != 3 || image->dim(0) != 1 || image->dim(1) != s || image->dim(2) != s) {
    throw ShapeError(fmt::format("model expects a [1,{},{}] image, got {}", s, s,
                                 nn::shape_string(image->shape())));
  }
  if (mode == nn::Mode::train && config_.dropout_rate > 0.0 && dropout_rng == nullptr) {
    throw StateError("train-mode forward needs a dropout generator");
  }
  nn::Var x = image;
  for (const auto& layer : conv_) {
    // ReLU is monotone, so it commutes with max-pooling in value and
    // gradient; pooling first runs the ReLU on a quarter of the elements.
    if (layer.pool) {
      x = nn::conv2d_maxpool2(tape, x, layer.weights, layer.bias, config_.conv_algorithm);
    } else {
      x = nn::conv2d(tape, x, layer.weights, layer.bias, config_.conv_algorithm);
    }
    x = nn::relu(tape, x);
  }
  for (const auto& layer : dense_) {
    x = nn::dense(tape, x, layer.weights, layer.bias);
    if (layer.hidden) {
      x = nn::relu(tape, x);
      if (layer.dropout && mode == nn::Mode::train) {
        x = nn::dropout(tape, x, config_.dropout_rate, mode, *dropout_rng);
      }
    }
  }
  return nn::sigmoid(tape, x);
}

ProbabilityPair Model::predict(const nn::Tensor& image) const {
  nn::Tape tape(false);
  auto input = nn::make_var(image);
  auto out = forward(tape, input, nn::Mode::eval);
  return ProbabilityPair::from_p1((*out)[0]);
}

void Model::zero_grad() const {
  for (const auto& p : parameters()) {
    p->zero_grad();
  }
}

void Model::save_parameters(const std::filesystem::path& checkpoint) const {
  std::vector<std::vector<const nn::Tensor*>> layers;
  for (const auto& l : conv_) {
    layers.push_back({l.weights.get(), l.bias.get()});
  }
  for (const auto& l : dense_) {
    layers.push_back({l.weights.get(), l.bias.get()});
  }
  nn::write_checkpoint(checkpoint, layers);
}

void Model::load_parameters(const std::filesystem::path& checkpoint) {
  auto layers = nn::read_checkpoint(checkpoint);
  const std::size_t expected = conv_.size() + dense_.size();
  if (layers.size() != expected) {
    throw IoError(fmt::format("{} holds {} layers, the model has {}", checkpoint.string(),
                              layers.size(), expected));
  }
  auto params = parameters();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].size() != 2 || layers[i][0].shape() != params[2 * i]->shape() ||
        layers[i][1].shape() != params[2 * i + 1]->shape()) {
      throw IoError(fmt::format("{}: layer {} does not match the model architecture",
                                checkpoint.string(), i));
    }
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto src = layers[i][k].data();
      std::copy(src.begin(), src.end(), params[2 * i + k]->data().begin());
    }
  }
}

void save_model(const Model& model, const std::filesystem::path& checkpoint,
                const std::filesystem::path& config_json) {
  model.save_parameters(checkpoint);
  std::ofstream out(config_json, std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + config_json.string() + " for writing");
  }
  out << nlohmann::json(model.config()).dump(2) << '\n';
  if (!out) {
    throw IoError("failed writing " + config_json.string());
  }
}

Model load_model(const std::filesystem::path& checkpoint,
                 const std::filesystem::path& config_json) {
  std::ifstream in(config_json);
  if (!in) {
    throw IoError("cannot open model config " + config_json.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(config_json.string() + ": " + e.what());
  }
  Model model(j.get<ModelConfig>());
  model.load_parameters(checkpoint);
  return model;
}

}  // namespace entroloss
