#pragma once

#include "stairwise/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace stairwise {

struct StampedPoint {
  Vec3 position = Vec3::Zero();
  double confidence = 1.0;
  double insert_time = 0.0;
};

/// Point set in the odometry frame.
struct StampedCloud {
  std::vector<StampedPoint> points;
  std::string frame = "odom";

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
};

// Cloud files: <stem>.json declares count and frame, <stem>.bin holds
// little-endian float32 (x, y, z) triples, row-major.
void write_cloud(const StampedCloud& cloud, const std::filesystem::path& stem);
StampedCloud read_cloud(const std::filesystem::path& stem);

}  // namespace stairwise
