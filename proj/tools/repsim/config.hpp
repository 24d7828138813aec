#pragma once

#include <filesystem>
#include <string>

#include "output.hpp"

namespace repsim::cli {

// Parses the TOML subset used by run configs: [tables], bare keys, strings,
// integers, floats, booleans and (possibly multi-line) arrays.
Json parse_toml(const std::string& text);

// .toml files are TOML, anything else is tried as JSON first.
Json load_config(const std::filesystem::path& path);

}  // namespace repsim::cli
