#include "stairwise/rolling_map.hpp"

#include "stairwise/config.hpp"
#include "stairwise/io.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace stairwise {

MapParams MapParams::defaults() {
  MapParams p;
  from_json(default_section("map"), p);
  return p;
}

void MapParams::validate() const {
  if (!(voxel_size > 0.0) || !(roll_radius > 0.0) || !(decay_horizon > 0.0)) {
    throw ValidationError("voxel size, roll radius and decay horizon must be positive");
  }
  if (!(zone_radius > 0.0) || !(zone_z_extent > 0.0)) {
    throw ValidationError("protection zone radius and z extent must be positive");
  }
  if (!(min_confidence >= 0.0 && min_confidence <= 1.0)) {
    throw ValidationError("min_confidence must lie in [0, 1]");
  }
}

void to_json(nlohmann::json& j, const MapParams& p) {
  j = nlohmann::json{
      {"voxel_size", p.voxel_size},
      {"roll_radius", p.roll_radius},
      {"decay_horizon", p.decay_horizon},
      {"zone_radius", p.zone_radius},
      {"zone_z_extent", p.zone_z_extent},
      {"zone_exit_policy",
       p.zone_exit == ZoneExitPolicy::kResetAge ? "reset_age" : "resume_from_insert"},
      {"min_confidence", p.min_confidence}};
}

void from_json(const nlohmann::json& j, MapParams& p) {
  p.voxel_size = j.at("voxel_size").get<double>();
  p.roll_radius = j.at("roll_radius").get<double>();
  p.decay_horizon = j.at("decay_horizon").get<double>();
  p.zone_radius = j.at("zone_radius").get<double>();
  p.zone_z_extent = j.at("zone_z_extent").get<double>();
  const auto policy = j.value("zone_exit_policy", std::string("reset_age"));
  if (policy == "reset_age") {
    p.zone_exit = ZoneExitPolicy::kResetAge;
  } else if (policy == "resume_from_insert") {
    p.zone_exit = ZoneExitPolicy::kResumeFromInsert;
  } else {
    throw ValidationError("unknown zone_exit_policy '" + policy + "'");
  }
  p.min_confidence = j.value("min_confidence", 0.0);
}

ProtectionZone ProtectionZone::under(const Pose& base, double radius, double z_extent) {
  if (!(radius > 0.0)) throw ValidationError("protection zone radius must be positive");
  return {base.position.head<2>(), base.position.z(), radius, z_extent};
}

bool ProtectionZone::contains(const Vec3& p) const noexcept {
  return (p.head<2>() - center).norm() <= radius && p.z() <= top && p.z() >= top - z_extent;
}

// ---------------------------------------------------------------------------

std::size_t GlobalMap::VoxelHash::operator()(const VoxelKey& k) const noexcept {
  // Classic spatial hash (Teschner et al. primes).
  return static_cast<std::size_t>(
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.x)) * 73856093u) ^
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.y)) * 19349663u) ^
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.z)) * 83492791u));
}

GlobalMap::GlobalMap(MapParams params) : params_(params) {
  params_.validate();
  snapshot_ = std::make_shared<const MapSnapshot>();
}

GlobalMap::VoxelKey GlobalMap::key_of(const Vec3& p) const {
  const Eigen::Vector3d k = (p / params_.voxel_size).array().floor();
  return {static_cast<std::int32_t>(k.x()), static_cast<std::int32_t>(k.y()),
          static_cast<std::int32_t>(k.z())};
}

void GlobalMap::fuse(const StampedCloud& cloud, double now, const Pose& base_pose) {
  for (const auto& pt : cloud.points) {
    const MapPoint fresh{pt.position, 1.0, now, now};
    auto [it, inserted] = voxels_.try_emplace(key_of(pt.position), fresh);
    if (!inserted && it->second.insert_time <= now) it->second = fresh;
  }
  base_ = base_pose;
  time_ = now;
  evict_outside_roll_radius();
  publish();
}

void GlobalMap::evict_outside_roll_radius() {
  const Vec2 center = base_.position.head<2>();
  std::erase_if(voxels_, [&](const auto& kv) {
    return (kv.second.position.template head<2>() - center).norm() > params_.roll_radius;
  });
}

void GlobalMap::decay_and_prune(double now, const ProtectionZone& zone) {
  std::erase_if(voxels_, [&](auto& kv) {
    MapPoint& p = kv.second;
    if (zone.contains(p.position)) {
      p.confidence = 1.0;
      if (params_.zone_exit == ZoneExitPolicy::kResetAge) p.age_origin = now;
      return false;
    }
    const double age = now - p.age_origin;
    p.confidence = std::max(0.0, 1.0 - age / params_.decay_horizon);
    return p.confidence <= 0.0;
  });
  time_ = now;
  publish();
}

ProtectionZone GlobalMap::zone() const {
  return ProtectionZone::under(base_, params_.zone_radius, params_.zone_z_extent);
}

void GlobalMap::publish() {
  auto snap = std::make_shared<MapSnapshot>();
  snap->points.reserve(voxels_.size());
  for (const auto& kv : voxels_) snap->points.push_back(kv.second);
  snap->time = time_;
  snap->base = base_;
  std::lock_guard lock(snapshot_mutex_);
  snapshot_ = std::move(snap);
}

std::shared_ptr<const MapSnapshot> GlobalMap::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

std::vector<MapPoint> GlobalMap::sorted_points() const {
  std::vector<std::pair<VoxelKey, MapPoint>> entries(voxels_.begin(), voxels_.end());
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<MapPoint> out;
  out.reserve(entries.size());
  for (auto& e : entries) out.push_back(e.second);
  return out;
}

void GlobalMap::save(const std::filesystem::path& stem) const {
  const auto points = sorted_points();
  io::Bytes blob;
  blob.reserve(points.size() * 5 * sizeof(float));
  for (const auto& p : points) {
    io::append(blob, static_cast<float>(p.position.x()));
    io::append(blob, static_cast<float>(p.position.y()));
    io::append(blob, static_cast<float>(p.position.z()));
    io::append(blob, static_cast<float>(p.confidence));
    io::append(blob, static_cast<float>(p.insert_time));
  }
  auto bin = stem;
  bin += ".bin";
  auto manifest = stem;
  manifest += ".json";
  io::write_bytes(bin, blob);
  const auto& q = base_.orientation;
  io::write_json(manifest,
                 {{"kind", "global_map"},
                  {"version", 1},
                  {"frame", "odom"},
                  {"count", points.size()},
                  {"time", time_},
                  {"base", {{"position", {base_.position.x(), base_.position.y(), base_.position.z()}},
                            {"orientation", {q.w(), q.x(), q.y(), q.z()}}}},
                  {"params", params_},
                  {"layout", "float32 x,y,z,confidence,insert_time little-endian"},
                  {"crc32", io::crc32(blob)},
                  {"payload", bin.filename().string()}});
}

GlobalMap::GlobalMap(GlobalMap&& other) noexcept
    : params_(other.params_),
      base_(other.base_),
      time_(other.time_),
      voxels_(std::move(other.voxels_)),
      snapshot_(std::move(other.snapshot_)) {}

GlobalMap GlobalMap::load(const std::filesystem::path& stem, MapParams params) {
  auto manifest_path = stem;
  manifest_path += ".json";
  const auto manifest = io::read_json(manifest_path);
  if (manifest.value("version", 0) != 1) throw VersionError("unsupported map checkpoint version");
  const auto count = manifest.at("count").get<std::size_t>();
  const auto bytes = io::read_bytes(stem.parent_path() / manifest.at("payload").get<std::string>());
  constexpr std::size_t kRecord = 5 * sizeof(float);
  if (bytes.size() < count * kRecord) {
    throw TruncationError("map checkpoint payload is truncated", bytes.size() / kRecord);
  }
  if (io::crc32(bytes) != manifest.at("crc32").get<std::uint32_t>()) {
    throw ChecksumError("map checkpoint checksum mismatch");
  }
  GlobalMap map(params);
  map.time_ = manifest.at("time").get<double>();
  const auto& b = manifest.at("base");
  map.base_.position = Vec3(b["position"][0], b["position"][1], b["position"][2]);
  map.base_.orientation =
      Eigen::Quaterniond(b["orientation"][0], b["orientation"][1], b["orientation"][2],
                         b["orientation"][3]);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = i * kRecord;
    MapPoint p;
    p.position = Vec3(io::load<float>(bytes, off), io::load<float>(bytes, off + 4),
                      io::load<float>(bytes, off + 8));
    p.confidence = io::load<float>(bytes, off + 12);
    p.insert_time = io::load<float>(bytes, off + 16);
    // Age origin consistent with the linear decay law at checkpoint time.
    p.age_origin = map.time_ - (1.0 - p.confidence) * params.decay_horizon;
    map.voxels_[map.key_of(p.position)] = p;
  }
  map.publish();
  return map;
}

// ---------------------------------------------------------------------------

Vec2 LocalGrid::cell_center(int row, int col) {
  return {-kHalfX + (row + 0.5) * kGridResolution, -kHalfY + (col + 0.5) * kGridResolution};
}

Vec3 LocalGrid::cell_center_world(int row, int col) const {
  const Vec2 c = cell_center(row, col);
  return frame.to_world(Vec3(c.x(), c.y(), 0.0));
}

namespace {

struct CellSample {
  int cell;
  double z;
  double w;
  auto operator<=>(const CellSample&) const = default;
};

}  // namespace

LocalGrid extract_local_grid(std::span<const MapPoint> points, const Pose& foot_pose,
                             double min_confidence) {
  LocalGrid grid;
  grid.frame = foot_pose.level();
  const double yaw = grid.frame.yaw();
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const Vec3& o = grid.frame.position;

  std::vector<CellSample> samples;
  for (const auto& p : points) {
    if (!(p.confidence >= min_confidence)) continue;
    const double dx = p.position.x() - o.x();
    const double dy = p.position.y() - o.y();
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    const double row = std::floor((lx + LocalGrid::kHalfX) / kGridResolution);
    const double col = std::floor((ly + LocalGrid::kHalfY) / kGridResolution);
    if (row < 0 || row >= kGridRows || col < 0 || col >= kGridCols) continue;
    samples.push_back({static_cast<int>(row) * kGridCols + static_cast<int>(col),
                       p.position.z() - o.z(), p.confidence});
  }
  std::sort(samples.begin(), samples.end());

  for (std::size_t i = 0; i < samples.size();) {
    const int cell = samples[i].cell;
    double weighted = 0.0;
    double weight = 0.0;
    for (; i < samples.size() && samples[i].cell == cell; ++i) {
      weighted += samples[i].w * samples[i].z;
      weight += samples[i].w;
    }
    if (weight > 0.0) {
      grid.heights(cell / kGridCols, cell % kGridCols) = weighted / weight;
      grid.valid(cell / kGridCols, cell % kGridCols) = true;
    }
  }
  return grid;
}

LocalGrid extract_local_grid(const MapSnapshot& snapshot, const Pose& foot_pose,
                             double min_confidence) {
  return extract_local_grid(std::span<const MapPoint>(snapshot.points), foot_pose, min_confidence);
}

}  // namespace stairwise
