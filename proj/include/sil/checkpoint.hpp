#pragma once

// Versioned binary dump of network parameters.

#include <filesystem>

#include "sil/nn.hpp"

namespace sil::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

/// Layout (little-endian): "SILCKPT\0", u32 version, u64 input_dim,
/// u64 action_count, u32 activation, u64 n_hidden, u64 widths[],
/// u64 n_values, f64 values[].
void save(const std::filesystem::path& path, const nn::MlpParams& params);

/// Throws ConfigError on a missing file, bad magic, unknown version,
/// truncation or a value count that disagrees with the shape.
nn::MlpParams load(const std::filesystem::path& path);

}  // namespace sil::checkpoint
