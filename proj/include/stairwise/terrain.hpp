#pragma once

#include "stairwise/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace stairwise {

enum class TerrainKind { kFlat, kStairsUp, kStairsDown, kSlopeUp, kSlopeDown };

std::string_view to_string(TerrainKind kind);
TerrainKind terrain_kind_from_string(std::string_view name);

// Curriculum parameter ranges.
struct TerrainRanges {
  static constexpr double kTreadMin = 0.25;
  static constexpr double kTreadMax = 0.6;
  static constexpr double kStepHeightMin = 0.0;
  static constexpr double kStepHeightMax = 0.23;
  static constexpr double kSlopeMin = 0.0;
  static constexpr double kSlopeMax = 0.4;
  static constexpr int kMaxLevel = 9;
};

/// Parameters of one procedural terrain.
///
/// The traversal axis starts at `origin` and points along `yaw`. Stairs have
/// their first riser on the line through `origin` orthogonal to the axis;
/// everything before it is the zero-height landing. Slopes are planes through
/// `origin`. The field covers `extent_x` x `extent_y` metres centred on the
/// world origin.
struct TerrainSpec {
  TerrainKind kind = TerrainKind::kFlat;
  double tread_depth = TerrainRanges::kTreadMin;
  double step_height = 0.0;
  double slope_angle = 0.0;
  int level = 0;
  double yaw = 0.0;
  Vec2 origin = Vec2::Zero();
  double extent_x = 12.0;
  double extent_y = 12.0;

  /// Throws ValidationError when a parameter leaves its range.
  void validate() const;

  bool operator==(const TerrainSpec&) const = default;
};

void to_json(nlohmann::json& j, const TerrainSpec& spec);
void from_json(const nlohmann::json& j, TerrainSpec& spec);

/// Inclusive upper bound of a parameter at `level`, lower bound fixed.
double curriculum_upper(double lower, double upper, int level);

/// Samples a spec uniformly within the level-scaled ranges. Deterministic
/// for a fixed seed. When `kind` is empty it is drawn uniformly too.
TerrainSpec sample_curriculum(int level, std::uint64_t seed,
                              std::optional<TerrainKind> kind = std::nullopt);

/// Continuous ground-truth height field. Immutable and cheap to copy.
class HeightField {
 public:
  explicit HeightField(const TerrainSpec& spec);

  const TerrainSpec& spec() const noexcept { return spec_; }
  double extent_x() const noexcept { return spec_.extent_x; }
  double extent_y() const noexcept { return spec_.extent_y; }

  bool contains(double x, double y) const noexcept;

  /// Height in metres. Throws OutOfExtentError outside the field.
  double height_at(double x, double y) const;

  /// Analytic planar gradient (rise/run). At a riser the value is the
  /// one-sided limit from the lower tread, which is zero like every tread.
  Vec2 gradient_at(double x, double y) const;

  /// Central finite-difference gradient over +-half_width along both axes.
  /// Resolves risers at cell scale where the analytic gradient cannot.
  Vec2 local_gradient_at(double x, double y, double half_width) const;

  /// Coordinate along the traversal axis, measured from the origin.
  double axis_coordinate(double x, double y) const noexcept;

  /// Upper bound of the height over the whole extent.
  double max_height() const noexcept { return max_height_; }
  double min_height() const noexcept { return min_height_; }

 private:
  double height_unchecked(double x, double y) const noexcept;
  void check_extent(double x, double y) const;

  TerrainSpec spec_;
  double cos_yaw_;
  double sin_yaw_;
  double signed_rise_ = 0.0;
  double slope_tan_ = 0.0;
  double max_height_ = 0.0;
  double min_height_ = 0.0;
};

/// Validates `spec` and builds its height field.
HeightField make_terrain(const TerrainSpec& spec);

}  // namespace stairwise
