#pragma once

#include "stairwise/lidar.hpp"
#include "stairwise/recon_metrics.hpp"
#include "stairwise/rolling_map.hpp"
#include "stairwise/terrain.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <vector>

namespace stairwise {

/// Deterministic 64-bit seed derivation (splitmix64 of seed and stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct RobotGeometry {
  double base_height{};             // base above the sole
  Vec3 sensor_offset = Vec3::Zero();  // sensor relative to the base, base frame

  static RobotGeometry defaults();
};

struct Schedule {
  double scan_rate{};
  double fuse_rate{};
  double extract_rate{};

  static Schedule defaults();
  void validate() const;
};

struct Waypoint {
  double time = 0.0;
  Pose base;
};

/// Base trajectory; poses between waypoints are interpolated linearly in
/// position and spherically in orientation.
struct TrajectorySpec {
  std::vector<Waypoint> waypoints;
  Schedule schedule;

  void validate() const;
  double start() const { return waypoints.front().time; }
  double end() const { return waypoints.back().time; }
  Pose pose_at(double t) const;
};

void to_json(nlohmann::json& j, const RobotGeometry& g);
void from_json(const nlohmann::json& j, RobotGeometry& g);
void to_json(nlohmann::json& j, const Schedule& s);
void from_json(const nlohmann::json& j, Schedule& s);

struct SimConfig {
  SensorModel sensor;
  MapParams map;
  RobotGeometry robot;
  bool apply_drop = true;

  static SimConfig defaults();
};

/// Frame whose local grid is extracted: base position lowered by the base
/// height, with the base heading.
Pose foot_frame(const Pose& base, const RobotGeometry& robot);

struct SimFrame {
  int index = 0;  // extraction counter
  double time = 0.0;
  Pose base;
  Pose foot;
  std::shared_ptr<const MapSnapshot> map;
  LocalGrid grid;
};

struct SimHooks {
  std::function<void(const SimFrame&)> on_frame;
  /// Called after each fusion with the cloud that was fused.
  std::function<void(double time, const StampedCloud& cloud, const GlobalMap& map)> on_fuse;
  /// Fused once at the trajectory start before any scan.
  const StampedCloud* preload = nullptr;
};

struct RunStats {
  int scans = 0;
  int fusions = 0;
  int extractions = 0;
  std::vector<double> extract_latency_ms;
  std::vector<std::size_t> extract_map_points;
};

/// Event-queue simulation on a simulated clock. Scans, fusions and
/// extractions occur at k / rate after the trajectory start, k = 1, 2, ...,
/// up to the end; simultaneous events run scan, then fuse, then extract.
/// Deterministic per seed apart from the measured latencies.
RunStats simulate_run(const HeightField& field, const TrajectorySpec& traj,
                      const SimConfig& config, std::uint64_t seed, const SimHooks& hooks = {});

// ---------------------------------------------------------------------------

struct SampleMeta {
  TerrainSpec terrain;
  Pose foot;
  std::uint64_t seed = 0;
  double time = 0.0;
};

/// One reconstruction example on the 28 x 20 local grid.
struct ReconSample {
  GridF input_heights;  // NaN where invalid
  Mask input_valid;
  GridF gt_heights;
  RegionMasks masks;  // derived from gt_heights
  SampleMeta meta;
};

/// Ground truth at every cell centre (relative to the grid frame) plus
/// masks; the input is copied from `grid`.
ReconSample make_sample(const HeightField& field, const LocalGrid& grid,
                        const MaskThresholds& thresholds, std::uint64_t seed = 0,
                        double time = 0.0);

/// Masks recomputed from the stored float ground truth.
RegionMasks masks_from_gt(const GridF& gt, const MaskThresholds& thresholds);

// ---------------------------------------------------------------------------
// Interchange format: <dir>/manifest.json + <dir>/tensors.bin. See
// docs/dataset_format.md.

inline constexpr int kDatasetVersion = 1;
inline constexpr const char* kDatasetFormat = "stairwise-recon";

struct DatasetInfo {
  MaskThresholds thresholds;
  LossWeights loss;
  std::vector<std::uint64_t> seeds;
  nlohmann::json config = nlohmann::json::object();
};

struct Dataset {
  DatasetInfo info;
  std::vector<ReconSample> samples;
};

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Throws VersionError, TruncationError (with the first incomplete record)
/// or ChecksumError; nothing is returned on failure.
Dataset read_dataset(const std::filesystem::path& dir);

/// Bytes of one record in tensors.bin.
std::size_t dataset_record_bytes();

/// Prediction blob: N x 28 x 20 float32, little endian, row-major, in
/// dataset record order. An optional sidecar `<blob>.json` may declare
/// {"count", "rows", "cols"}.
void write_prediction_blob(const std::vector<GridF>& grids, const std::filesystem::path& path);

/// Throws ShapeError when the blob (or its sidecar) does not hold exactly
/// `expected_count` 28 x 20 grids.
std::vector<GridF> read_prediction_blob(const std::filesystem::path& path,
                                        std::size_t expected_count);

// ---------------------------------------------------------------------------
// Corpus generation

struct CorpusSpec {
  int count = 0;
  std::uint64_t seed = 0;
  int min_level = 3;
  int max_level = 9;
  std::vector<TerrainKind> kinds{TerrainKind::kStairsUp, TerrainKind::kStairsDown,
                                 TerrainKind::kSlopeUp, TerrainKind::kSlopeDown,
                                 TerrainKind::kFlat};
  double walk_time = 4.0;
  double dwell_time = 1.0;
  double warmup = 2.0;
  int sample_stride = 25;  // extractions between samples
  int samples_per_run = 4;

  void validate() const;
};

void to_json(nlohmann::json& j, const CorpusSpec& c);

/// Constant-velocity pass from `start` along unit `motion` with the base at
/// `heading`, waypoints every 0.1 s following the ground, then a stationary
/// dwell.
TrajectorySpec straight_trajectory(const HeightField& field, const RobotGeometry& robot,
                                   const Schedule& schedule, const Vec2& start,
                                   const Vec2& motion, double heading, double speed,
                                   double walk_time, double dwell_time);

/// Random straight, diagonal or lateral pass over the terrain origin
/// followed by a stationary dwell.
TrajectorySpec random_trajectory(const HeightField& field, const RobotGeometry& robot,
                                 const Schedule& schedule, double walk_time, double dwell_time,
                                 std::mt19937_64& rng);

std::vector<ReconSample> generate_corpus(const CorpusSpec& spec, const SimConfig& config,
                                         const Schedule& schedule,
                                         const MaskThresholds& thresholds);

}  // namespace stairwise
