#include "stairwise/settings.hpp"

#include "stairwise/config.hpp"
#include "stairwise/io.hpp"

namespace stairwise {

namespace {

void check_known(const nlohmann::json& base, const nlohmann::json& patch, const std::string& path) {
  if (!patch.is_object()) return;
  for (const auto& [key, value] : patch.items()) {
    const auto it = base.find(key);
    const std::string where = path.empty() ? key : path + "." + key;
    if (it == base.end()) throw ValidationError("unknown config key '" + where + "'");
    if (it->is_object()) check_known(*it, value, where);
  }
}

}  // namespace

Settings::Settings() : doc_(default_config()) {}

Settings Settings::resolve(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::string>& assignments) {
  Settings s;
  if (file) {
    auto patch = io::read_json(*file);
    if (patch.contains("version") && patch["version"] != s.doc_["version"]) {
      throw VersionError("config file version " + patch["version"].dump() + " does not match " +
                         s.doc_["version"].dump());
    }
    s.merge(patch);
  }
  for (const auto& a : assignments) s.assign(a);
  // Fail early on anything the typed views would reject.
  s.sim().sensor.validate();
  s.map().validate();
  s.schedule().validate();
  s.penalty().validate();
  s.masks().validate();
  s.loss().validate();
  return s;
}

void Settings::merge(const nlohmann::json& patch) {
  if (!patch.is_object()) throw ValidationError("config override must be a JSON object");
  check_known(doc_, patch, "");
  doc_.merge_patch(patch);
}

void Settings::assign(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError("expected section.key=value, got '" + assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  nlohmann::json patch = value;
  std::string rest = path;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1)) {
    parts.push_back(rest.substr(0, pos));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    patch = nlohmann::json{{*it, patch}};
  }
  const nlohmann::json* node = &doc_;
  for (const auto& p : parts) {
    if (!node->is_object() || !node->contains(p)) {
      throw ValidationError("unknown config key '" + path + "'");
    }
    node = &(*node)[p];
  }
  if (node->is_object()) throw ValidationError("'" + path + "' is a section, not a value");
  merge(patch);
}

SensorModel Settings::sensor() const {
  SensorModel m = SensorModel::defaults();
  from_json(doc_.at("sensor"), m);
  from_json(doc_.at("ray_drop"), m.drop);
  return m;
}

MapParams Settings::map() const { return doc_.at("map").get<MapParams>(); }

RobotGeometry Settings::robot() const {
  RobotGeometry g;
  g.base_height = doc_.at("robot").at("base_height").get<double>();
  const auto& off = doc_.at("sensor").at("mount_offset");
  g.sensor_offset = Vec3(off.at(0).get<double>(), off.at(1).get<double>(), off.at(2).get<double>());
  return g;
}

Schedule Settings::schedule() const { return doc_.at("schedule").get<Schedule>(); }
PenaltyParams Settings::penalty() const { return doc_.at("penalty").get<PenaltyParams>(); }
MaskThresholds Settings::masks() const { return doc_.at("masks").get<MaskThresholds>(); }
LossWeights Settings::loss() const { return doc_.at("loss").get<LossWeights>(); }

SimConfig Settings::sim() const { return {sensor(), map(), robot(), true}; }

double Settings::terrain_extent_x() const {
  return doc_.at("terrain").at("extent_x").get<double>();
}
double Settings::terrain_extent_y() const {
  return doc_.at("terrain").at("extent_y").get<double>();
}

}  // namespace stairwise
