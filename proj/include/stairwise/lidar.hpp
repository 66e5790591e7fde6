#pragma once

#include "stairwise/cloud.hpp"
#include "stairwise/terrain.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>

namespace stairwise {

/// Gradient-conditioned ray drop:
/// p = clamp(base + gain * max(0, |g| - threshold), 0, 1), where g is the
/// terrain gradient at the hit, resolved over +-gradient_half_width.
struct RayDropParams {
  double base_drop_prob{};
  double slope_gain{};
  double slope_threshold{};
  double gradient_half_width{};

  static RayDropParams defaults();
  void validate() const;
  double probability(double gradient_norm) const;
};

/// Wide-FOV LiDAR on a spherical lattice: `azimuth_samples` evenly spaced
/// over the azimuth FOV times `elevation_samples` evenly spaced (inclusive)
/// over [elevation_min, elevation_min + elevation_fov].
struct SensorModel {
  double azimuth_fov{};
  double elevation_min{};
  double elevation_fov{};
  int azimuth_samples{};
  int elevation_samples{};
  double min_range{};
  double max_range{};
  double range_noise_std{};
  double march_step{};
  RayDropParams drop;

  // Numeric defaults live in config/defaults.json.

  static SensorModel defaults();
  void validate() const;

  int rays_per_scan() const noexcept { return azimuth_samples * elevation_samples; }
  double elevation_max() const noexcept { return elevation_min + elevation_fov; }
};

void to_json(nlohmann::json& j, const RayDropParams& p);
void from_json(const nlohmann::json& j, RayDropParams& p);
void to_json(nlohmann::json& j, const SensorModel& m);
void from_json(const nlohmann::json& j, SensorModel& m);

/// First crossing of the ray origin + t * direction with the height field
/// for t in [t_min, t_max]. Fixed-step marching, then bisection down to 1e-5 m.
std::optional<double> raycast(const HeightField& field, const Vec3& origin, const Vec3& direction,
                              double t_min, double t_max, double step);

/// One scan from `sensor_pose`. Points are first hits perturbed along the
/// ray by Gaussian range noise truncated at 4 sigma, in the odometry frame,
/// stamped with `stamp`. Throws ValidationError if the sensor is not above
/// the terrain.
StampedCloud scan(const HeightField& field, const Pose& sensor_pose, const SensorModel& model,
                  std::uint64_t seed, double stamp = 0.0);

/// Drops each point independently with the gradient-conditioned probability.
StampedCloud apply_ray_drop(const StampedCloud& cloud, const HeightField& field,
                            const RayDropParams& params, std::uint64_t seed);

}  // namespace stairwise
