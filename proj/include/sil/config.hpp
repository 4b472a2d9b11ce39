#pragma once

// Flat `key = value` run configuration with one section per module.

#include <filesystem>
#include <string>
#include <string_view>

#include "sil/trainer.hpp"

namespace sil::config {

/// Parses config text. Unknown sections or keys, malformed values and
/// duplicate keys throw ConfigError naming `section.key`. A relative
/// env.map is resolved against base_dir.
trainer::TrainConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});

/// Reads and parses a file; relative map paths resolve against its directory.
trainer::TrainConfig load(const std::filesystem::path& path);

/// Canonical text form: every key, fixed order, doubles printed exactly.
std::string serialize(const trainer::TrainConfig& config);

}  // namespace sil::config
