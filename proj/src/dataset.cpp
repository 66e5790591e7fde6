#include "stairwise/dataset.hpp"

#include "stairwise/config.hpp"
#include "stairwise/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <queue>
#include <tuple>

namespace stairwise {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

RobotGeometry RobotGeometry::defaults() {
  RobotGeometry g;
  g.base_height = default_section("robot").at("base_height").get<double>();
  const auto& off = default_section("sensor").at("mount_offset");
  g.sensor_offset = Vec3(off.at(0).get<double>(), off.at(1).get<double>(), off.at(2).get<double>());
  return g;
}

void to_json(nlohmann::json& j, const RobotGeometry& g) {
  j = nlohmann::json{{"base_height", g.base_height},
                     {"sensor_offset", {g.sensor_offset.x(), g.sensor_offset.y(), g.sensor_offset.z()}}};
}

void from_json(const nlohmann::json& j, RobotGeometry& g) {
  g.base_height = j.at("base_height").get<double>();
  const auto& off = j.at("sensor_offset");
  g.sensor_offset = Vec3(off.at(0).get<double>(), off.at(1).get<double>(), off.at(2).get<double>());
}

Schedule Schedule::defaults() {
  Schedule s;
  from_json(default_section("schedule"), s);
  return s;
}

void Schedule::validate() const {
  if (!(scan_rate > 0.0) || !(fuse_rate > 0.0) || !(extract_rate > 0.0)) {
    throw ValidationError("scan, fuse and extract rates must be positive");
  }
}

void to_json(nlohmann::json& j, const Schedule& s) {
  j = nlohmann::json{{"scan_rate", s.scan_rate}, {"fuse_rate", s.fuse_rate},
                     {"extract_rate", s.extract_rate}};
}

void from_json(const nlohmann::json& j, Schedule& s) {
  s.scan_rate = j.at("scan_rate").get<double>();
  s.fuse_rate = j.at("fuse_rate").get<double>();
  s.extract_rate = j.at("extract_rate").get<double>();
}

void TrajectorySpec::validate() const {
  if (waypoints.empty()) throw ValidationError("trajectory has no waypoints");
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if (!(waypoints[i].time > waypoints[i - 1].time)) {
      throw ValidationError("trajectory times must be strictly increasing");
    }
  }
  for (const auto& w : waypoints) w.base.validate();
  schedule.validate();
}

Pose TrajectorySpec::pose_at(double t) const {
  if (t <= waypoints.front().time) return waypoints.front().base;
  if (t >= waypoints.back().time) return waypoints.back().base;
  const auto it = std::upper_bound(waypoints.begin(), waypoints.end(), t,
                                   [](double value, const Waypoint& w) { return value < w.time; });
  const Waypoint& b = *it;
  const Waypoint& a = *(it - 1);
  const double s = (t - a.time) / (b.time - a.time);
  Pose p;
  p.position = (1.0 - s) * a.base.position + s * b.base.position;
  p.orientation = a.base.orientation.slerp(s, b.base.orientation).normalized();
  return p;
}

SimConfig SimConfig::defaults() {
  return {SensorModel::defaults(), MapParams::defaults(), RobotGeometry::defaults(), true};
}

Pose foot_frame(const Pose& base, const RobotGeometry& robot) {
  return Pose::from_yaw(base.position - Vec3(0.0, 0.0, robot.base_height), base.yaw());
}

// ---------------------------------------------------------------------------

namespace {

enum class EventKind { kScan = 0, kFuse = 1, kExtract = 2 };

struct Event {
  double time;
  EventKind kind;
  int index;
  // Min-heap on (time, kind, index).
  bool operator>(const Event& o) const {
    return std::tie(time, kind, index) > std::tie(o.time, o.kind, o.index);
  }
};

int event_count(double duration, double rate) {
  return static_cast<int>(std::floor(duration * rate + 1e-9));
}

}  // namespace

RunStats simulate_run(const HeightField& field, const TrajectorySpec& traj,
                      const SimConfig& config, std::uint64_t seed, const SimHooks& hooks) {
  traj.validate();
  config.sensor.validate();
  for (const auto& w : traj.waypoints) {
    if (!field.contains(w.base.position.x(), w.base.position.y())) {
      throw OutOfExtentError("trajectory leaves the terrain extent");
    }
  }

  const double t0 = traj.start();
  const double duration = traj.end() - t0;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue;
  auto schedule = [&](double rate, EventKind kind) {
    const int n = event_count(duration, rate);
    for (int k = 1; k <= n; ++k) queue.push({t0 + k / rate, kind, k});
  };
  schedule(traj.schedule.scan_rate, EventKind::kScan);
  schedule(traj.schedule.fuse_rate, EventKind::kFuse);
  schedule(traj.schedule.extract_rate, EventKind::kExtract);

  GlobalMap map(config.map);
  if (hooks.preload) map.fuse(*hooks.preload, t0, traj.pose_at(t0));

  RunStats stats;
  StampedCloud pending;
  while (!queue.empty()) {
    const Event ev = queue.top();
    queue.pop();
    const Pose base = traj.pose_at(ev.time);
    switch (ev.kind) {
      case EventKind::kScan: {
        const Pose sensor{base.to_world(config.robot.sensor_offset), base.orientation};
        const auto scan_seed = derive_seed(seed, 2 * static_cast<std::uint64_t>(stats.scans));
        StampedCloud cloud = scan(field, sensor, config.sensor, scan_seed, ev.time);
        if (config.apply_drop) {
          cloud = apply_ray_drop(cloud, field, config.sensor.drop,
                                 derive_seed(seed, 2 * static_cast<std::uint64_t>(stats.scans) + 1));
        }
        pending.points.insert(pending.points.end(), cloud.points.begin(), cloud.points.end());
        ++stats.scans;
        break;
      }
      case EventKind::kFuse: {
        map.fuse(pending, ev.time, base);
        map.decay_and_prune(ev.time, map.zone());
        if (hooks.on_fuse) hooks.on_fuse(ev.time, pending, map);
        pending.points.clear();
        ++stats.fusions;
        break;
      }
      case EventKind::kExtract: {
        SimFrame frame;
        frame.index = stats.extractions;
        frame.time = ev.time;
        frame.base = base;
        frame.foot = foot_frame(base, config.robot);
        frame.map = map.snapshot();
        const auto start = std::chrono::steady_clock::now();
        frame.grid = extract_local_grid(*frame.map, frame.foot, config.map.min_confidence);
        const auto stop = std::chrono::steady_clock::now();
        stats.extract_latency_ms.push_back(
            std::chrono::duration<double, std::milli>(stop - start).count());
        stats.extract_map_points.push_back(frame.map->points.size());
        ++stats.extractions;
        if (hooks.on_frame) hooks.on_frame(frame);
        break;
      }
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------

RegionMasks masks_from_gt(const GridF& gt, const MaskThresholds& thresholds) {
  return region_masks(gt.cast<double>(), thresholds, kGridResolution);
}

ReconSample make_sample(const HeightField& field, const LocalGrid& grid,
                        const MaskThresholds& thresholds, std::uint64_t seed, double time) {
  ReconSample sample;
  sample.input_heights = grid.heights.cast<float>();
  sample.input_valid = grid.valid;
  sample.gt_heights.resize(kGridRows, kGridCols);
  for (int r = 0; r < kGridRows; ++r) {
    for (int c = 0; c < kGridCols; ++c) {
      const Vec3 w = grid.cell_center_world(r, c);
      sample.gt_heights(r, c) =
          static_cast<float>(field.height_at(w.x(), w.y()) - grid.frame.position.z());
    }
  }
  sample.masks = masks_from_gt(sample.gt_heights, thresholds);
  sample.meta = {field.spec(), grid.frame, seed, time};
  return sample;
}

// ---------------------------------------------------------------------------
// Interchange format

namespace {

constexpr std::size_t kCells = static_cast<std::size_t>(kGridRows) * kGridCols;

struct TensorField {
  const char* name;
  const char* dtype;
  std::size_t bytes;
};

constexpr std::array<TensorField, 6> kRecordLayout{{
    {"input_heights", "float32", kCells * 4},
    {"input_valid", "uint8", kCells},
    {"gt_heights", "float32", kCells * 4},
    {"m_gt", "float32", kCells * 4},
    {"m_edge", "uint8", kCells},
    {"m_flat", "uint8", kCells},
}};

nlohmann::json pose_json(const Pose& p) {
  const auto& q = p.orientation;
  return {{"position", {p.position.x(), p.position.y(), p.position.z()}},
          {"orientation", {q.w(), q.x(), q.y(), q.z()}}};
}

Pose pose_from_json(const nlohmann::json& j) {
  Pose p;
  const auto& pos = j.at("position");
  const auto& q = j.at("orientation");
  p.position = Vec3(pos[0].get<double>(), pos[1].get<double>(), pos[2].get<double>());
  p.orientation = Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                                     q[3].get<double>());
  return p;
}

bool same_mask(const Mask& a, const Mask& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a == b).all();
}

}  // namespace

std::size_t dataset_record_bytes() {
  std::size_t total = 0;
  for (const auto& f : kRecordLayout) total += f.bytes;
  return total;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t record_bytes = dataset_record_bytes();
  io::Bytes blob;
  blob.reserve(record_bytes * dataset.samples.size());
  nlohmann::json records = nlohmann::json::array();
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    if (s.input_heights.rows() != kGridRows || s.input_heights.cols() != kGridCols ||
        s.gt_heights.rows() != kGridRows || s.gt_heights.cols() != kGridCols) {
      throw ShapeError("sample " + std::to_string(i) + " is not 28x20");
    }
    const std::size_t offset = blob.size();
    io::append_f32(blob, s.input_heights);
    io::append_u8(blob, s.input_valid);
    io::append_f32(blob, s.gt_heights);
    io::append_f32(blob, s.masks.m_gt);
    io::append_u8(blob, s.masks.m_edge);
    io::append_u8(blob, s.masks.m_flat);
    records.push_back({{"index", i},
                       {"offset", offset},
                       {"terrain", s.meta.terrain},
                       {"foot", pose_json(s.meta.foot)},
                       {"seed", s.meta.seed},
                       {"time", s.meta.time}});
  }

  nlohmann::json layout = nlohmann::json::array();
  std::size_t field_offset = 0;
  for (const auto& f : kRecordLayout) {
    layout.push_back({{"name", f.name},
                      {"dtype", f.dtype},
                      {"offset", field_offset},
                      {"shape", {kGridRows, kGridCols}}});
    field_offset += f.bytes;
  }

  const nlohmann::json manifest{
      {"format", kDatasetFormat},
      {"version", kDatasetVersion},
      {"grid", {{"rows", kGridRows}, {"cols", kGridCols}, {"resolution", kGridResolution}}},
      {"byte_order", "little"},
      {"layout", "row-major"},
      {"invalid_sentinel", "quiet NaN in input_heights; input_valid is authoritative"},
      {"thresholds", dataset.info.thresholds},
      {"loss_weights", dataset.info.loss},
      {"seeds", dataset.info.seeds},
      {"config", dataset.info.config},
      {"record_bytes", record_bytes},
      {"tensors", layout},
      {"count", dataset.samples.size()},
      {"records", records},
      {"payload", "tensors.bin"},
      {"payload_bytes", blob.size()},
      {"checksum", {{"algorithm", "crc32"}, {"value", io::crc32(blob)}}}};

  io::write_bytes(dir / "tensors.bin", blob);
  io::write_json(dir / "manifest.json", manifest);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto manifest = io::read_json(dir / "manifest.json");
  if (manifest.value("format", std::string()) != kDatasetFormat) {
    throw FormatError("not a " + std::string(kDatasetFormat) + " dataset: " + dir.string());
  }
  const int version = manifest.value("version", -1);
  if (version != kDatasetVersion) {
    throw VersionError("dataset version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kDatasetVersion) + ")");
  }
  const auto& grid = manifest.at("grid");
  if (grid.at("rows").get<int>() != kGridRows || grid.at("cols").get<int>() != kGridCols) {
    throw ShapeError("dataset grid shape differs from 28x20");
  }
  const std::size_t record_bytes = manifest.at("record_bytes").get<std::size_t>();
  if (record_bytes != dataset_record_bytes()) throw FormatError("unexpected record size");

  const auto count = manifest.at("count").get<std::size_t>();
  const auto& records = manifest.at("records");
  if (records.size() != count) throw FormatError("record table does not match count");

  const auto bytes = io::read_bytes(dir / manifest.at("payload").get<std::string>());
  const std::size_t expected = manifest.at("payload_bytes").get<std::size_t>();
  if (expected != count * record_bytes) throw FormatError("payload_bytes does not match count");
  if (bytes.size() < expected) {
    const std::size_t bad = bytes.size() / record_bytes;
    throw TruncationError("tensors.bin truncated: record " + std::to_string(bad) + " of " +
                              std::to_string(count) + " is incomplete (" +
                              std::to_string(bytes.size()) + " of " + std::to_string(expected) +
                              " bytes)",
                          bad);
  }
  if (bytes.size() > expected) throw FormatError("tensors.bin has trailing bytes");
  const auto& checksum = manifest.at("checksum");
  if (checksum.at("algorithm").get<std::string>() != "crc32" ||
      checksum.at("value").get<std::uint32_t>() != io::crc32(bytes)) {
    throw ChecksumError("tensors.bin checksum mismatch");
  }

  Dataset out;
  out.info.thresholds = manifest.at("thresholds").get<MaskThresholds>();
  out.info.loss = manifest.at("loss_weights").get<LossWeights>();
  out.info.seeds = manifest.at("seeds").get<std::vector<std::uint64_t>>();
  out.info.config = manifest.at("config");
  out.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& rec = records[i];
    std::size_t off = rec.at("offset").get<std::size_t>();
    if (off != i * record_bytes) throw FormatError("record " + std::to_string(i) + " is misplaced");
    ReconSample s;
    s.input_heights = io::load_f32(bytes, off, kGridRows, kGridCols);
    off += kCells * 4;
    s.input_valid = io::load_u8(bytes, off, kGridRows, kGridCols);
    off += kCells;
    s.gt_heights = io::load_f32(bytes, off, kGridRows, kGridCols);
    off += kCells * 4;
    off += kCells * 4;  // m_gt is recomputed below
    const Mask m_edge = io::load_u8(bytes, off, kGridRows, kGridCols);
    off += kCells;
    const Mask m_flat = io::load_u8(bytes, off, kGridRows, kGridCols);

    if (!(s.input_valid == s.input_heights.isFinite()).all()) {
      throw FormatError("record " + std::to_string(i) + ": sentinel and validity mask disagree");
    }
    s.masks = masks_from_gt(s.gt_heights, out.info.thresholds);
    if (!same_mask(s.masks.m_edge, m_edge) || !same_mask(s.masks.m_flat, m_flat)) {
      throw FormatError("record " + std::to_string(i) + ": stored masks do not match ground truth");
    }
    s.meta.terrain = rec.at("terrain").get<TerrainSpec>();
    s.meta.foot = pose_from_json(rec.at("foot"));
    s.meta.seed = rec.at("seed").get<std::uint64_t>();
    s.meta.time = rec.at("time").get<double>();
    out.samples.push_back(std::move(s));
  }
  return out;
}

void write_prediction_blob(const std::vector<GridF>& grids, const std::filesystem::path& path) {
  io::Bytes blob;
  blob.reserve(grids.size() * kCells * 4);
  for (const auto& g : grids) {
    if (g.rows() != kGridRows || g.cols() != kGridCols) throw ShapeError("prediction is not 28x20");
    io::append_f32(blob, g);
  }
  io::write_bytes(path, blob);
  auto sidecar = path;
  sidecar += ".json";
  io::write_json(sidecar, {{"count", grids.size()}, {"rows", kGridRows}, {"cols", kGridCols},
                           {"dtype", "float32"}});
}

std::vector<GridF> read_prediction_blob(const std::filesystem::path& path,
                                        std::size_t expected_count) {
  auto sidecar = path;
  sidecar += ".json";
  if (std::filesystem::exists(sidecar)) {
    const auto meta = io::read_json(sidecar);
    const int rows = meta.value("rows", kGridRows);
    const int cols = meta.value("cols", kGridCols);
    if (rows != kGridRows || cols != kGridCols) {
      throw ShapeError("prediction grids are " + std::to_string(rows) + "x" +
                       std::to_string(cols) + ", expected 28x20");
    }
    const auto count = meta.value("count", expected_count);
    if (count != expected_count) {
      throw ShapeError("prediction blob holds " + std::to_string(count) + " grids, dataset has " +
                       std::to_string(expected_count));
    }
  }
  const auto bytes = io::read_bytes(path);
  const std::size_t grid_bytes = kCells * 4;
  if (bytes.size() != expected_count * grid_bytes) {
    throw ShapeError("prediction blob has " + std::to_string(bytes.size()) + " bytes, expected " +
                     std::to_string(expected_count) + " x 28 x 20 float32 (" +
                     std::to_string(expected_count * grid_bytes) + ")");
  }
  std::vector<GridF> out;
  out.reserve(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    out.push_back(io::load_f32(bytes, i * grid_bytes, kGridRows, kGridCols));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus generation

void CorpusSpec::validate() const {
  if (count <= 0) throw ValidationError("corpus count must be positive");
  if (min_level < 0 || max_level > TerrainRanges::kMaxLevel || min_level > max_level) {
    throw ValidationError("corpus levels must satisfy 0 <= min <= max <= 9");
  }
  if (kinds.empty()) throw ValidationError("corpus needs at least one terrain kind");
  if (!(walk_time > 0.0) || !(dwell_time >= 0.0) || !(warmup >= 0.0) || sample_stride <= 0 ||
      samples_per_run <= 0) {
    throw ValidationError("corpus timing parameters are invalid");
  }
}

void to_json(nlohmann::json& j, const CorpusSpec& c) {
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : c.kinds) kinds.push_back(std::string(to_string(k)));
  j = nlohmann::json{{"count", c.count},
                     {"seed", c.seed},
                     {"min_level", c.min_level},
                     {"max_level", c.max_level},
                     {"kinds", kinds},
                     {"walk_time", c.walk_time},
                     {"dwell_time", c.dwell_time},
                     {"warmup", c.warmup},
                     {"sample_stride", c.sample_stride},
                     {"samples_per_run", c.samples_per_run}};
}

TrajectorySpec random_trajectory(const HeightField& field, const RobotGeometry& robot,
                                 const Schedule& schedule, double walk_time, double dwell_time,
                                 std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick_mode(0, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int mode = pick_mode(rng);  // 0 straight, 1 diagonal, 2 lateral
  const double direction = unit(rng) < 0.5 ? 1.0 : -1.0;
  const double side = unit(rng) < 0.5 ? 1.0 : -1.0;
  const double speed = 0.25 + 0.25 * unit(rng);
  const double offset = -1.0 + 2.0 * unit(rng);
  const double lead = 0.3 + 0.4 * unit(rng);

  const double yaw = field.spec().yaw;
  const Vec2 axis(std::cos(yaw), std::sin(yaw));
  const Vec2 normal(-axis.y(), axis.x());
  Vec2 motion = direction * axis;
  if (mode == 1) motion = (direction * axis + side * normal).normalized();
  double heading = std::atan2(motion.y(), motion.x());
  if (mode == 2) heading += side * std::numbers::pi / 2.0;

  const double length = speed * walk_time;
  const Vec2 start = field.spec().origin + offset * normal - lead * length * motion;
  return straight_trajectory(field, robot, schedule, start, motion, heading, speed, walk_time,
                             dwell_time);
}

TrajectorySpec straight_trajectory(const HeightField& field, const RobotGeometry& robot,
                                   const Schedule& schedule, const Vec2& start,
                                   const Vec2& motion, double heading, double speed,
                                   double walk_time, double dwell_time) {
  if (!(walk_time > 0.0) || !(dwell_time >= 0.0) || !(speed >= 0.0)) {
    throw ValidationError("walk time must be positive, dwell time and speed non-negative");
  }
  TrajectorySpec traj;
  traj.schedule = schedule;
  constexpr double kWaypointStep = 0.1;
  const int walk_steps = static_cast<int>(std::ceil(walk_time / kWaypointStep - 1e-9));
  auto base_at = [&](const Vec2& xy) {
    const double ground = field.height_at(xy.x(), xy.y());
    return Pose::from_yaw(Vec3(xy.x(), xy.y(), ground + robot.base_height), heading);
  };
  for (int k = 0; k <= walk_steps; ++k) {
    const double t = std::min(k * kWaypointStep, walk_time);
    traj.waypoints.push_back({t, base_at(start + speed * t * motion)});
  }
  if (dwell_time > 0.0) {
    const Pose last = traj.waypoints.back().base;
    traj.waypoints.push_back({walk_time + dwell_time, last});
  }
  return traj;
}

std::vector<ReconSample> generate_corpus(const CorpusSpec& spec, const SimConfig& config,
                                         const Schedule& schedule,
                                         const MaskThresholds& thresholds) {
  spec.validate();
  std::vector<ReconSample> samples;
  samples.reserve(static_cast<std::size_t>(spec.count));
  for (std::uint64_t run = 0; static_cast<int>(samples.size()) < spec.count; ++run) {
    const std::uint64_t run_seed = derive_seed(spec.seed, run);
    std::mt19937_64 rng(run_seed);
    std::uniform_int_distribution<int> pick_level(spec.min_level, spec.max_level);
    std::uniform_int_distribution<std::size_t> pick_kind(0, spec.kinds.size() - 1);
    const int level = pick_level(rng);
    const TerrainKind kind = spec.kinds[pick_kind(rng)];
    TerrainSpec terrain_spec = sample_curriculum(level, derive_seed(run_seed, 1), kind);
    const HeightField field = make_terrain(terrain_spec);
    const TrajectorySpec traj =
        random_trajectory(field, config.robot, schedule, spec.walk_time, spec.dwell_time, rng);

    int taken = 0;
    SimHooks hooks;
    hooks.on_frame = [&](const SimFrame& frame) {
      if (taken >= spec.samples_per_run || static_cast<int>(samples.size()) >= spec.count) return;
      if (frame.time - traj.start() < spec.warmup) return;
      if ((frame.index + 1) % spec.sample_stride != 0) return;
      samples.push_back(make_sample(field, frame.grid, thresholds, run_seed, frame.time));
      ++taken;
    };
    simulate_run(field, traj, config, derive_seed(run_seed, 2), hooks);
  }
  return samples;
}

}  // namespace stairwise
