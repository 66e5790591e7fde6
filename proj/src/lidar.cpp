#include "stairwise/lidar.hpp"

#include "stairwise/config.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace stairwise {

namespace {

constexpr double kBisectionTolerance = 1e-9;
constexpr double kNoiseTruncation = 4.0;
constexpr double kDegToRad = std::numbers::pi / 180.0;

double truncated_normal(std::mt19937_64& rng, double stddev) {
  if (stddev <= 0.0) return 0.0;
  std::normal_distribution<double> normal(0.0, stddev);
  for (;;) {
    const double n = normal(rng);
    if (std::abs(n) <= kNoiseTruncation * stddev) return n;
  }
}

}  // namespace

RayDropParams RayDropParams::defaults() {
  RayDropParams p;
  from_json(default_section("ray_drop"), p);
  return p;
}

void RayDropParams::validate() const {
  if (!(base_drop_prob >= 0.0 && base_drop_prob <= 1.0)) {
    throw ValidationError("base_drop_prob must lie in [0, 1]");
  }
  if (!(slope_gain >= 0.0) || !(slope_threshold >= 0.0) || !(gradient_half_width > 0.0)) {
    throw ValidationError("ray drop gain/threshold must be >= 0 and half width > 0");
  }
}

double RayDropParams::probability(double gradient_norm) const {
  const double p = base_drop_prob + slope_gain * std::max(0.0, gradient_norm - slope_threshold);
  return std::clamp(p, 0.0, 1.0);
}

SensorModel SensorModel::defaults() {
  SensorModel m;
  from_json(default_section("sensor"), m);
  m.drop = RayDropParams::defaults();
  return m;
}

void SensorModel::validate() const {
  if (azimuth_samples <= 0 || elevation_samples <= 0) {
    throw ValidationError("rays_per_scan must be positive");
  }
  if (!(min_range >= 0.0) || !(min_range < max_range)) {
    throw ValidationError("sensor requires 0 <= min_range < max_range");
  }
  if (!(azimuth_fov > 0.0 && azimuth_fov <= 2.0 * std::numbers::pi)) {
    throw ValidationError("azimuth fov must lie in (0, 2*pi]");
  }
  if (!(elevation_fov > 0.0) || elevation_min < -std::numbers::pi / 2.0 ||
      elevation_max() > std::numbers::pi / 2.0) {
    throw ValidationError("elevation fov must lie within [-pi/2, pi/2]");
  }
  if (!(range_noise_std >= 0.0) || !(march_step > 0.0)) {
    throw ValidationError("range noise must be >= 0 and march step > 0");
  }
  drop.validate();
}

void to_json(nlohmann::json& j, const RayDropParams& p) {
  j = nlohmann::json{{"base_drop_prob", p.base_drop_prob},
                     {"slope_gain", p.slope_gain},
                     {"slope_threshold", p.slope_threshold},
                     {"gradient_half_width", p.gradient_half_width}};
}

void from_json(const nlohmann::json& j, RayDropParams& p) {
  p.base_drop_prob = j.at("base_drop_prob").get<double>();
  p.slope_gain = j.at("slope_gain").get<double>();
  p.slope_threshold = j.at("slope_threshold").get<double>();
  p.gradient_half_width = j.at("gradient_half_width").get<double>();
}

void to_json(nlohmann::json& j, const SensorModel& m) {
  j = nlohmann::json{{"azimuth_fov_deg", m.azimuth_fov / kDegToRad},
                     {"elevation_min_deg", m.elevation_min / kDegToRad},
                     {"elevation_fov_deg", m.elevation_fov / kDegToRad},
                     {"azimuth_samples", m.azimuth_samples},
                     {"elevation_samples", m.elevation_samples},
                     {"min_range", m.min_range},
                     {"max_range", m.max_range},
                     {"range_noise_std", m.range_noise_std},
                     {"march_step", m.march_step},
                     {"ray_drop", m.drop}};
}

void from_json(const nlohmann::json& j, SensorModel& m) {
  m.azimuth_fov = j.value("azimuth_fov_deg", 360.0) * kDegToRad;
  m.elevation_min = j.at("elevation_min_deg").get<double>() * kDegToRad;
  m.elevation_fov = j.at("elevation_fov_deg").get<double>() * kDegToRad;
  m.azimuth_samples = j.at("azimuth_samples").get<int>();
  m.elevation_samples = j.at("elevation_samples").get<int>();
  m.min_range = j.at("min_range").get<double>();
  m.max_range = j.at("max_range").get<double>();
  m.range_noise_std = j.at("range_noise_std").get<double>();
  m.march_step = j.at("march_step").get<double>();
  if (j.contains("ray_drop")) m.drop = j["ray_drop"].get<RayDropParams>();
}

std::optional<double> raycast(const HeightField& field, const Vec3& origin, const Vec3& direction,
                              double t_min, double t_max, double step) {
  auto clearance = [&](double t) {
    const Vec3 p = origin + t * direction;
    return p.z() - field.height_at(p.x(), p.y());
  };
  auto inside = [&](double t) {
    const Vec3 p = origin + t * direction;
    return field.contains(p.x(), p.y());
  };

  double t = t_min;
  if (!inside(t) || clearance(t) <= 0.0) return std::nullopt;
  double prev = t;
  const double top = field.max_height();

  while (t < t_max) {
    // Nothing above the highest point of the field can be hit.
    const double z = origin.z() + t * direction.z();
    if (z > top) {
      if (direction.z() >= 0.0) return std::nullopt;
      t = std::max(t, t + (z - top) / -direction.z() - step);
      if (t >= t_max) return std::nullopt;
    }
    prev = t;
    t = std::min(t + step, t_max);
    if (!inside(t)) return std::nullopt;
    if (clearance(t) <= 0.0) {
      double lo = prev;
      double hi = t;
      while (hi - lo > kBisectionTolerance) {
        const double mid = 0.5 * (lo + hi);
        if (clearance(mid) > 0.0) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      return 0.5 * (lo + hi);
    }
  }
  return std::nullopt;
}

StampedCloud scan(const HeightField& field, const Pose& sensor_pose, const SensorModel& model,
                  std::uint64_t seed, double stamp) {
  model.validate();
  sensor_pose.validate();
  const Vec3& origin = sensor_pose.position;
  if (field.height_at(origin.x(), origin.y()) >= origin.z()) {
    throw ValidationError("sensor is not above the terrain");
  }

  std::mt19937_64 rng(seed);
  const double az_step = model.azimuth_fov / model.azimuth_samples;
  const double phase = std::uniform_real_distribution<double>(0.0, az_step)(rng);
  const double el_step =
      model.elevation_samples > 1 ? model.elevation_fov / (model.elevation_samples - 1) : 0.0;
  const double el_first =
      model.elevation_samples > 1 ? model.elevation_min : model.elevation_min + model.elevation_fov / 2.0;
  const Eigen::Matrix3d rotation = sensor_pose.orientation.toRotationMatrix();

  StampedCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(model.rays_per_scan()) / 2);
  for (int a = 0; a < model.azimuth_samples; ++a) {
    const double az = -model.azimuth_fov / 2.0 + phase + a * az_step;
    for (int e = 0; e < model.elevation_samples; ++e) {
      const double el = el_first + e * el_step;
      const Vec3 local(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      const Vec3 dir = rotation * local;
      const auto hit = raycast(field, origin, dir, model.min_range, model.max_range, model.march_step);
      if (!hit) continue;
      const double range = *hit + truncated_normal(rng, model.range_noise_std);
      if (range < model.min_range || range > model.max_range) continue;
      const Vec3 p = origin + range * dir;
      if (!field.contains(p.x(), p.y())) continue;
      cloud.points.push_back({p, 1.0, stamp});
    }
  }
  return cloud;
}

StampedCloud apply_ray_drop(const StampedCloud& cloud, const HeightField& field,
                            const RayDropParams& params, std::uint64_t seed) {
  params.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  StampedCloud kept;
  kept.frame = cloud.frame;
  kept.points.reserve(cloud.points.size());
  for (const auto& pt : cloud.points) {
    const double g =
        field.local_gradient_at(pt.position.x(), pt.position.y(), params.gradient_half_width).norm();
    const double p = params.probability(g);
    if (unit(rng) >= p) kept.points.push_back(pt);
  }
  return kept;
}

}  // namespace stairwise
