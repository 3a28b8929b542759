#pragma once

// Binary parameter container.
//
//   bytes 0..3   magic "ENTL"
//   u32          format version (1)
//   u64          layer count
//   per layer:
//     u64        tensor count (weights, bias)
//     per tensor:
//       u64      rank
//       u64[rank] dims
//       f64[prod(dims)] data
//
// All integers and floats are little-endian; floats are IEEE-754 binary64.

#include <filesystem>
#include <vector>

#include "tensor.hpp"

namespace entroloss::nn {

inline constexpr char kCheckpointMagic[4] = {'E', 'N', 'T', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

using CheckpointLayer = std::vector<Tensor>;

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<std::vector<const Tensor*>>& layers);

/// Throws IoError on unreadable, truncated or foreign files.
std::vector<CheckpointLayer> read_checkpoint(const std::filesystem::path& path);

}  // namespace entroloss::nn
