#include "stairwise/config.hpp"

#include "stairwise/embedded_defaults.hpp"
#include "stairwise/types.hpp"

#include <string>

namespace stairwise {

const nlohmann::json& default_config() {
  static const nlohmann::json parsed = nlohmann::json::parse(detail::kEmbeddedDefaults);
  return parsed;
}

const nlohmann::json& default_section(std::string_view name) {
  const auto& cfg = default_config();
  const auto it = cfg.find(std::string(name));
  if (it == cfg.end()) {
    throw ValidationError("defaults file has no section '" + std::string(name) + "'");
  }
  return *it;
}

int default_config_version() { return default_config().at("version").get<int>(); }

}  // namespace stairwise
