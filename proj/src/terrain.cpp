#include "stairwise/terrain.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace stairwise {

namespace {

constexpr std::array<std::pair<TerrainKind, std::string_view>, 5> kKindNames{{
    {TerrainKind::kFlat, "flat"},
    {TerrainKind::kStairsUp, "stairs_up"},
    {TerrainKind::kStairsDown, "stairs_down"},
    {TerrainKind::kSlopeUp, "slope_up"},
    {TerrainKind::kSlopeDown, "slope_down"},
}};

bool is_stairs(TerrainKind kind) {
  return kind == TerrainKind::kStairsUp || kind == TerrainKind::kStairsDown;
}

bool is_slope(TerrainKind kind) {
  return kind == TerrainKind::kSlopeUp || kind == TerrainKind::kSlopeDown;
}

void require_range(double value, double lo, double hi, const char* name) {
  if (!std::isfinite(value) || value < lo || value > hi) {
    std::ostringstream msg;
    msg << name << " = " << value << " outside [" << lo << ", " << hi << "]";
    throw ValidationError(msg.str());
  }
}

}  // namespace

std::string_view to_string(TerrainKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

TerrainKind terrain_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  throw ValidationError("unknown terrain kind '" + std::string(name) + "'");
}

void TerrainSpec::validate() const {
  if (level < 0 || level > TerrainRanges::kMaxLevel) {
    throw ValidationError("curriculum level " + std::to_string(level) + " outside [0, 9]");
  }
  require_range(tread_depth, TerrainRanges::kTreadMin, TerrainRanges::kTreadMax, "tread_depth");
  require_range(step_height, TerrainRanges::kStepHeightMin, TerrainRanges::kStepHeightMax,
                "step_height");
  require_range(slope_angle, TerrainRanges::kSlopeMin, TerrainRanges::kSlopeMax, "slope_angle");
  if (!(extent_x > 0.0) || !(extent_y > 0.0) || !std::isfinite(extent_x) ||
      !std::isfinite(extent_y)) {
    throw ValidationError("terrain extent must be positive and finite");
  }
  if (!std::isfinite(yaw) || !origin.allFinite()) {
    throw ValidationError("terrain yaw and origin must be finite");
  }
}

void to_json(nlohmann::json& j, const TerrainSpec& spec) {
  j = nlohmann::json{{"kind", std::string(to_string(spec.kind))},
                     {"tread_depth", spec.tread_depth},
                     {"step_height", spec.step_height},
                     {"slope_angle", spec.slope_angle},
                     {"level", spec.level},
                     {"yaw", spec.yaw},
                     {"origin", {spec.origin.x(), spec.origin.y()}},
                     {"extent_x", spec.extent_x},
                     {"extent_y", spec.extent_y}};
}

void from_json(const nlohmann::json& j, TerrainSpec& spec) {
  spec.kind = terrain_kind_from_string(j.at("kind").get<std::string>());
  spec.tread_depth = j.at("tread_depth").get<double>();
  spec.step_height = j.at("step_height").get<double>();
  spec.slope_angle = j.at("slope_angle").get<double>();
  spec.level = j.at("level").get<int>();
  spec.yaw = j.value("yaw", 0.0);
  if (j.contains("origin")) {
    spec.origin = Vec2(j["origin"].at(0).get<double>(), j["origin"].at(1).get<double>());
  }
  spec.extent_x = j.value("extent_x", spec.extent_x);
  spec.extent_y = j.value("extent_y", spec.extent_y);
}

double curriculum_upper(double lower, double upper, int level) {
  if (level < 0 || level > TerrainRanges::kMaxLevel) {
    throw ValidationError("curriculum level " + std::to_string(level) + " outside [0, 9]");
  }
  return lower + (upper - lower) * static_cast<double>(level) / TerrainRanges::kMaxLevel;
}

TerrainSpec sample_curriculum(int level, std::uint64_t seed, std::optional<TerrainKind> kind) {
  const double tread_hi =
      curriculum_upper(TerrainRanges::kTreadMin, TerrainRanges::kTreadMax, level);
  const double rise_hi =
      curriculum_upper(TerrainRanges::kStepHeightMin, TerrainRanges::kStepHeightMax, level);
  const double slope_hi =
      curriculum_upper(TerrainRanges::kSlopeMin, TerrainRanges::kSlopeMax, level);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_kind(0, static_cast<int>(kKindNames.size()) - 1);
  // Every draw happens regardless of kind so the stream layout is fixed.
  const TerrainKind drawn_kind = kKindNames[static_cast<std::size_t>(pick_kind(rng))].first;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u_tread = unit(rng);
  const double u_rise = unit(rng);
  const double u_slope = unit(rng);

  TerrainSpec spec;
  spec.kind = kind.value_or(drawn_kind);
  spec.level = level;
  spec.tread_depth = TerrainRanges::kTreadMin + (tread_hi - TerrainRanges::kTreadMin) * u_tread;
  spec.step_height = is_stairs(spec.kind) ? rise_hi * u_rise : 0.0;
  spec.slope_angle = is_slope(spec.kind) ? slope_hi * u_slope : 0.0;
  spec.validate();
  return spec;
}

HeightField::HeightField(const TerrainSpec& spec)
    : spec_(spec), cos_yaw_(std::cos(spec.yaw)), sin_yaw_(std::sin(spec.yaw)) {
  switch (spec.kind) {
    case TerrainKind::kStairsUp: signed_rise_ = spec.step_height; break;
    case TerrainKind::kStairsDown: signed_rise_ = -spec.step_height; break;
    case TerrainKind::kSlopeUp: slope_tan_ = std::tan(spec.slope_angle); break;
    case TerrainKind::kSlopeDown: slope_tan_ = -std::tan(spec.slope_angle); break;
    case TerrainKind::kFlat: break;
  }
  // Heights are monotone along the axis, so the corners bound them.
  const double hx = spec.extent_x / 2.0;
  const double hy = spec.extent_y / 2.0;
  max_height_ = -std::numeric_limits<double>::infinity();
  min_height_ = std::numeric_limits<double>::infinity();
  for (double cx : {-hx, hx}) {
    for (double cy : {-hy, hy}) {
      const double h = height_unchecked(cx, cy);
      max_height_ = std::max(max_height_, h);
      min_height_ = std::min(min_height_, h);
    }
  }
  max_height_ = std::max(max_height_, 0.0);
  min_height_ = std::min(min_height_, 0.0);
}

bool HeightField::contains(double x, double y) const noexcept {
  return std::abs(x) <= spec_.extent_x / 2.0 && std::abs(y) <= spec_.extent_y / 2.0;
}

void HeightField::check_extent(double x, double y) const {
  if (!contains(x, y)) {
    std::ostringstream msg;
    msg << "query (" << x << ", " << y << ") outside terrain extent";
    throw OutOfExtentError(msg.str());
  }
}

double HeightField::axis_coordinate(double x, double y) const noexcept {
  return cos_yaw_ * (x - spec_.origin.x()) + sin_yaw_ * (y - spec_.origin.y());
}

double HeightField::height_unchecked(double x, double y) const noexcept {
  const double u = axis_coordinate(x, y);
  if (signed_rise_ != 0.0) {
    if (u < 0.0) return 0.0;
    return (std::floor(u / spec_.tread_depth) + 1.0) * signed_rise_;
  }
  return slope_tan_ * u;
}

double HeightField::height_at(double x, double y) const {
  check_extent(x, y);
  return height_unchecked(x, y);
}

Vec2 HeightField::gradient_at(double x, double y) const {
  check_extent(x, y);
  if (slope_tan_ != 0.0) return Vec2(slope_tan_ * cos_yaw_, slope_tan_ * sin_yaw_);
  return Vec2::Zero();
}

Vec2 HeightField::local_gradient_at(double x, double y, double half_width) const {
  check_extent(x, y);
  auto h = [&](double qx, double qy) {
    const double hx = spec_.extent_x / 2.0;
    const double hy = spec_.extent_y / 2.0;
    return height_unchecked(std::clamp(qx, -hx, hx), std::clamp(qy, -hy, hy));
  };
  const double gx = (h(x + half_width, y) - h(x - half_width, y)) / (2.0 * half_width);
  const double gy = (h(x, y + half_width) - h(x, y - half_width)) / (2.0 * half_width);
  return {gx, gy};
}

HeightField make_terrain(const TerrainSpec& spec) {
  spec.validate();
  return HeightField(spec);
}

}  // namespace stairwise
