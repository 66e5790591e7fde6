#pragma once

#include "stairwise/cloud.hpp"
#include "stairwise/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

namespace stairwise {

/// What happens to a point's age when it leaves the protection zone.
enum class ZoneExitPolicy {
  kResetAge,          // aging restarts from the last moment inside the zone
  kResumeFromInsert,  // aging continues from the original insert time
};

struct MapParams {
  double voxel_size{};
  double roll_radius{};
  double decay_horizon{};
  double zone_radius{};
  double zone_z_extent{};
  ZoneExitPolicy zone_exit = ZoneExitPolicy::kResetAge;
  double min_confidence{};

  static MapParams defaults();
  void validate() const;
};

void to_json(nlohmann::json& j, const MapParams& p);
void from_json(const nlohmann::json& j, MapParams& p);

/// Vertical cylinder under the base in which confidences are locked at 1.
struct ProtectionZone {
  Vec2 center = Vec2::Zero();
  double top = 0.0;  // base height; the cylinder spans [top - z_extent, top]
  double radius{};
  double z_extent{};

  static ProtectionZone under(const Pose& base, double radius, double z_extent);
  bool contains(const Vec3& p) const noexcept;
};

struct MapPoint {
  Vec3 position = Vec3::Zero();
  double confidence = 1.0;
  double insert_time = 0.0;
  double age_origin = 0.0;  // time from which the point ages
};

/// Immutable view of the map published after each mutation.
struct MapSnapshot {
  std::vector<MapPoint> points;
  double time = 0.0;
  Pose base;
};

/// Spatiotemporal rolling point map with one point per voxel.
///
/// Single writer: fuse() and decay_and_prune() mutate and then publish a new
/// snapshot. snapshot() may be called from any thread at any time and always
/// returns a fully published state.
class GlobalMap {
 public:
  explicit GlobalMap(MapParams params);
  /// Not thread-safe with respect to the source; intended for factories.
  GlobalMap(GlobalMap&& other) noexcept;
  GlobalMap& operator=(GlobalMap&&) = delete;

  const MapParams& params() const noexcept { return params_; }
  std::size_t size() const noexcept { return voxels_.size(); }
  const Pose& base() const noexcept { return base_; }

  /// Inserts the cloud at confidence 1 stamped `now` (newest wins per voxel),
  /// then evicts points farther than roll_radius (planar) from the base.
  void fuse(const StampedCloud& cloud, double now, const Pose& base_pose);

  /// Applies linear confidence decay outside `zone`, locks confidence at 1
  /// inside it, and removes points whose confidence reaches 0.
  void decay_and_prune(double now, const ProtectionZone& zone);

  /// Zone under the last fused base pose, with the configured dimensions.
  ProtectionZone zone() const;

  std::shared_ptr<const MapSnapshot> snapshot() const;

  /// Points in voxel order (x, y, z keys ascending).
  std::vector<MapPoint> sorted_points() const;

  void save(const std::filesystem::path& stem) const;
  static GlobalMap load(const std::filesystem::path& stem, MapParams params);

 private:
  struct VoxelKey {
    std::int32_t x, y, z;
    bool operator==(const VoxelKey&) const = default;
    auto operator<=>(const VoxelKey&) const = default;
  };
  struct VoxelHash {
    std::size_t operator()(const VoxelKey& k) const noexcept;
  };

  VoxelKey key_of(const Vec3& p) const;
  void evict_outside_roll_radius();
  void publish();

  MapParams params_;
  Pose base_;
  double time_ = 0.0;
  std::unordered_map<VoxelKey, MapPoint, VoxelHash> voxels_;

  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const MapSnapshot> snapshot_;
};

/// Robot-centric 2.5D raster in a gravity-aligned frame with the foot's
/// heading. Row i covers x in [-0.7 + 0.05 i, -0.7 + 0.05 (i + 1)), column j
/// covers y in [-0.5 + 0.05 j, ...). Heights are relative to the frame origin.
/// Invalid cells hold NaN.
struct LocalGrid {
  Grid heights = Grid::Constant(kGridRows, kGridCols, std::numeric_limits<double>::quiet_NaN());
  Mask valid = Mask::Constant(kGridRows, kGridCols, false);
  double resolution = kGridResolution;
  Pose frame;

  static constexpr double kHalfX = 0.5 * kGridRows * kGridResolution;
  static constexpr double kHalfY = 0.5 * kGridCols * kGridResolution;

  /// Centre of cell (row, col) in the grid frame.
  static Vec2 cell_center(int row, int col);
  /// World position of the centre of cell (row, col) at the frame height.
  Vec3 cell_center_world(int row, int col) const;

  int valid_count() const { return static_cast<int>(valid.count()); }
  double coverage() const { return static_cast<double>(valid_count()) / valid.size(); }
};

/// Transforms points into the gravity-aligned frame of `foot_pose`, crops the
/// 1.4 m x 1.0 m box and bins points with confidence >= min_confidence.
/// Each cell holds the confidence-weighted mean height of its members,
/// accumulated in a canonical member order so the result does not depend on
/// the input order.
LocalGrid extract_local_grid(std::span<const MapPoint> points, const Pose& foot_pose,
                             double min_confidence);
LocalGrid extract_local_grid(const MapSnapshot& snapshot, const Pose& foot_pose,
                             double min_confidence);

}  // namespace stairwise
