#include "checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include <fmt/core.h>

#include "errors.hpp"

namespace entroloss::nn {

namespace {

constexpr std::uint64_t kMaxRank = 16;

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>(std::endian::native == std::endian::little
                                     ? bits[i]
                                     : bits[sizeof(T) - 1 - i]);
  }
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw IoError(fmt::format("checkpoint {} is truncated", path.string()));
  }
  if constexpr (std::endian::native != std::endian::little) {
    std::reverse(bytes.begin(), bytes.end());
  }
  return std::bit_cast<T>(bytes);
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<std::vector<const Tensor*>>& layers) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError(fmt::format("cannot open {} for writing", path.string()));
  }
  out.write(kCheckpointMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, layers.size());
  for (const auto& layer : layers) {
    put_le<std::uint64_t>(out, layer.size());
    for (const Tensor* t : layer) {
      put_le<std::uint64_t>(out, t->rank());
      for (std::size_t d : t->shape()) {
        put_le<std::uint64_t>(out, d);
      }
      for (double v : t->data()) {
        put_le<double>(out, v);
      }
    }
  }
  if (!out.flush()) {
    throw IoError(fmt::format("failed writing {}", path.string()));
  }
}

std::vector<CheckpointLayer> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError(fmt::format("cannot open checkpoint {}", path.string()));
  }
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw IoError(fmt::format("{} is not an ENTL checkpoint", path.string()));
  }
  const auto version = get_le<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw IoError(fmt::format("{}: unsupported checkpoint version {}", path.string(), version));
  }
  const auto file_size = std::filesystem::file_size(path);
  const auto layer_count = get_le<std::uint64_t>(in, path);
  if (layer_count > file_size) {
    throw IoError(fmt::format("{}: implausible layer count {}", path.string(), layer_count));
  }
  std::vector<CheckpointLayer> layers(layer_count);
  for (auto& layer : layers) {
    const auto tensor_count = get_le<std::uint64_t>(in, path);
    if (tensor_count > file_size) {
      throw IoError(fmt::format("{}: implausible tensor count {}", path.string(), tensor_count));
    }
    for (std::uint64_t t = 0; t < tensor_count; ++t) {
      const auto rank = get_le<std::uint64_t>(in, path);
      if (rank == 0 || rank > kMaxRank) {
        throw IoError(fmt::format("{}: invalid tensor rank {}", path.string(), rank));
      }
      Shape shape(rank);
      std::uint64_t count = 1;
      for (auto& d : shape) {
        d = get_le<std::uint64_t>(in, path);
        if (d == 0 || d > file_size / 8 || count > file_size / 8 / d) {
          throw IoError(fmt::format("{}: invalid tensor dimension {}", path.string(), d));
        }
        count *= d;
      }
      std::vector<double> data(count);
      for (double& v : data) {
        v = get_le<double>(in, path);
      }
      layer.emplace_back(std::move(shape), std::move(data));
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError(fmt::format("{}: trailing bytes after last layer", path.string()));
  }
  return layers;
}

}  // namespace entroloss::nn
