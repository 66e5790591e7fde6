#pragma once

#include "stairwise/dataset.hpp"
#include "stairwise/foothold_penalty.hpp"
#include "stairwise/lidar.hpp"
#include "stairwise/recon_metrics.hpp"
#include "stairwise/rolling_map.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stairwise {

/// Fully resolved configuration: compiled-in defaults, then an optional
/// override file (JSON merge patch), then `section.key=value` assignments.
/// Typed views read from the resolved document.
class Settings {
 public:
  Settings();

  static Settings resolve(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::string>& assignments);

  /// Throws ValidationError for unknown sections or keys.
  void merge(const nlohmann::json& patch);
  /// `section.key=value`; value is parsed as JSON, else taken as a string.
  void assign(const std::string& assignment);

  const nlohmann::json& doc() const noexcept { return doc_; }

  SensorModel sensor() const;
  MapParams map() const;
  RobotGeometry robot() const;
  Schedule schedule() const;
  PenaltyParams penalty() const;
  MaskThresholds masks() const;
  LossWeights loss() const;
  SimConfig sim() const;
  double terrain_extent_x() const;
  double terrain_extent_y() const;

 private:
  nlohmann::json doc_;
};

}  // namespace stairwise
