#pragma once

#include <json.hpp>

#include <string_view>

namespace stairwise {

/// Parsed contents of config/defaults.json as compiled into the library.
const nlohmann::json& default_config();

/// Section of the defaults; throws ValidationError if it is missing.
const nlohmann::json& default_section(std::string_view name);

/// Version number declared by the defaults file.
int default_config_version();

}  // namespace stairwise
