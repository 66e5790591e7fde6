#include "cli.hpp"

#include "stairwise/config.hpp"
#include "stairwise/dataset.hpp"
#include "stairwise/foothold_penalty.hpp"
#include "stairwise/io.hpp"
#include "stairwise/recon_metrics.hpp"
#include "stairwise/rolling_map.hpp"
#include "stairwise/settings.hpp"
#include "stairwise/terrain.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <tuple>

namespace stairwise::cli {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path resolve_output_dir(const fs::path& dir) {
  const char* root = std::getenv(kOutputRootEnv);
  if (dir.is_relative() && root != nullptr && *root != '\0') return fs::path(root) / dir;
  return dir;
}

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

struct CommonArgs {
  std::string out;
  std::optional<std::string> config_file;
  std::vector<std::string> assignments;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonArgs& a, const std::string& default_out) {
  a.out = default_out;
  cmd->add_option("-o,--out", a.out, "Output directory (relative paths honour $" +
                                         std::string(kOutputRootEnv) + ")");
  cmd->add_option("--config", a.config_file, "JSON file overriding the defaults");
  cmd->add_option("--set", a.assignments, "Override one value: section.key=value");
  cmd->add_option("--seed", a.seed, "Random seed");
}

struct TerrainArgs {
  std::optional<std::string> file;
  std::optional<std::string> kind;
  std::optional<double> rise;
  std::optional<double> tread;
  std::optional<double> slope;
  std::optional<int> level;
  double yaw_deg = 0.0;
};

void add_terrain(CLI::App* cmd, TerrainArgs& t) {
  cmd->add_option("--terrain", t.file, "Terrain spec JSON (as written by `terrain`)");
  cmd->add_option("--kind", t.kind, "flat | stairs_up | stairs_down | slope_up | slope_down");
  cmd->add_option("--rise", t.rise, "Step height, m");
  cmd->add_option("--tread", t.tread, "Tread depth, m");
  cmd->add_option("--slope", t.slope, "Slope angle, rad");
  cmd->add_option("--level", t.level, "Curriculum level 0..9 (samples the parameters)");
  cmd->add_option("--yaw", t.yaw_deg, "Terrain axis heading, deg");
}

bool is_stairs(TerrainKind k) { return k == TerrainKind::kStairsUp || k == TerrainKind::kStairsDown; }
bool is_slope(TerrainKind k) { return k == TerrainKind::kSlopeUp || k == TerrainKind::kSlopeDown; }

TerrainSpec build_terrain(const TerrainArgs& t, const Settings& settings, std::uint64_t seed) {
  TerrainSpec spec;
  if (t.file) {
    spec = io::read_json(*t.file).get<TerrainSpec>();
    spec.validate();
    return spec;
  }
  std::optional<TerrainKind> kind;
  if (t.kind) kind = terrain_kind_from_string(*t.kind);
  if (t.level) {
    if (*t.level < 0 || *t.level > TerrainRanges::kMaxLevel) {
      throw ValidationError("level must lie in [0, 9]");
    }
    spec = sample_curriculum(*t.level, seed, kind);
  } else {
    spec.kind = kind.value_or(TerrainKind::kStairsUp);
    spec.tread_depth = 0.30;
    spec.step_height = is_stairs(spec.kind) ? 0.15 : 0.0;
    spec.slope_angle = is_slope(spec.kind) ? 0.2 : 0.0;
  }
  if (t.rise) spec.step_height = *t.rise;
  if (t.tread) spec.tread_depth = *t.tread;
  if (t.slope) spec.slope_angle = *t.slope;
  spec.yaw = t.yaw_deg * kDegToRad;
  spec.extent_x = settings.terrain_extent_x();
  spec.extent_y = settings.terrain_extent_y();
  spec.validate();
  return spec;
}

json manifest_for(const std::string& command, const CommonArgs& common, const Settings& settings,
                  json options) {
  return json{{"tool", "stairwise"},
              {"command", command},
              {"seed", common.seed},
              {"config_version", default_config_version()},
              {"config", settings.doc()},
              {"options", std::move(options)}};
}

fs::path prepare_out(const std::string& out) {
  const fs::path dir = resolve_output_dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Nearest-rank percentile of an unsorted sample.
double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

// ---------------------------------------------------------------------------
// terrain

struct TerrainCmd {
  CommonArgs common;
  TerrainArgs terrain;
  double preview_half = 2.0;
  double preview_res = 0.05;
};

int cmd_terrain(const TerrainCmd& a, std::ostream& out) {
  const Settings settings = Settings::resolve(a.common.config_file, a.common.assignments);
  const TerrainSpec spec = build_terrain(a.terrain, settings, a.common.seed);
  if (!(a.preview_half > 0.0) || !(a.preview_res > 0.0)) {
    throw ValidationError("preview size and resolution must be positive");
  }
  const HeightField field = make_terrain(spec);
  const int n = static_cast<int>(std::floor(a.preview_half / a.preview_res + 1e-9));
  Grid heights(2 * n + 1, 2 * n + 1);
  for (int r = 0; r <= 2 * n; ++r) {
    for (int c = 0; c <= 2 * n; ++c) {
      const double x = spec.origin.x() + (r - n) * a.preview_res;
      const double y = spec.origin.y() + (c - n) * a.preview_res;
      heights(r, c) = field.contains(x, y) ? field.height_at(x, y)
                                           : std::numeric_limits<double>::quiet_NaN();
    }
  }
  const fs::path dir = prepare_out(a.common.out);
  io::write_json(dir / "terrain.json", spec);
  double lo = field.min_height();
  double hi = field.max_height();
  if (heights.isFinite().any()) {
    lo = heights.isFinite().select(heights, std::numeric_limits<double>::infinity()).minCoeff();
    hi = heights.isFinite().select(heights, -std::numeric_limits<double>::infinity()).maxCoeff();
  }
  if (!(hi > lo)) hi = lo + 1.0;
  io::write_pgm(dir / "heightfield.pgm", heights, lo, hi);
  io::write_json(dir / "manifest.json",
                 manifest_for("terrain", a.common, settings,
                              {{"terrain", spec},
                               {"preview", {{"half_size", a.preview_half},
                                            {"resolution", a.preview_res},
                                            {"rows", heights.rows()},
                                            {"cols", heights.cols()},
                                            {"pgm_low", lo},
                                            {"pgm_high", hi}}}}));
  out << "terrain " << to_string(spec.kind) << " -> " << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateCmd {
  CommonArgs common;
  TerrainArgs terrain;
  std::string scenario = "walk";
  std::optional<double> duration;
  double approach = 4.0;
  double speed = 0.3;
  double heading_deg = 0.0;
  double start_offset = -1.0;
  double lateral_offset = 0.0;
  std::size_t preload_points = 0;
  bool no_drop = false;
  int checkpoint_every = 0;
  bool no_grids = false;
};

/// Distinct-voxel random points filling the roll-radius cylinder around the
/// base, used to load the map for the latency budget.
StampedCloud preload_cloud(std::size_t count, const HeightField& field, const Pose& base,
                           const MapParams& map, double base_height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double radius = 0.95 * map.roll_radius;
  const auto span = static_cast<int>(std::floor(radius / map.voxel_size));
  std::uniform_int_distribution<int> pick_xy(-span, span);
  const int layers = static_cast<int>(std::ceil(1.5 / map.voxel_size));
  std::uniform_int_distribution<int> pick_z(0, layers - 1);
  const double ground = base.position.z() - base_height;

  const auto columns = static_cast<double>(std::numbers::pi * span * span);
  if (static_cast<double>(count) > 0.9 * columns * layers) {
    throw ValidationError("too many preload points for the roll radius");
  }
  std::set<std::tuple<int, int, int>> used;
  StampedCloud cloud;
  cloud.points.reserve(count);
  const auto cx = static_cast<int>(std::floor(base.position.x() / map.voxel_size));
  const auto cy = static_cast<int>(std::floor(base.position.y() / map.voxel_size));
  const auto cz = static_cast<int>(std::floor((ground - 0.5) / map.voxel_size));
  while (cloud.points.size() < count) {
    const int dx = pick_xy(rng);
    const int dy = pick_xy(rng);
    const int dz = pick_z(rng);
    if (dx * dx + dy * dy > span * span) continue;
    if (!used.emplace(cx + dx, cy + dy, cz + dz).second) continue;
    const Vec3 p((cx + dx + 0.5) * map.voxel_size, (cy + dy + 0.5) * map.voxel_size,
                 (cz + dz + 0.5) * map.voxel_size);
    if (!field.contains(p.x(), p.y())) continue;
    cloud.points.push_back({p, 1.0, 0.0});
  }
  return cloud;
}

struct ZoneTracker {
  double dwell_start = 0.0;
  std::optional<LocalGrid> initial;
  Mask covered = Mask::Constant(kGridRows, kGridCols, false);
  std::shared_ptr<const MapSnapshot> last_map;

  void mark(const StampedCloud& cloud) {
    const Pose& f = initial->frame;
    const double c = std::cos(f.yaw());
    const double s = std::sin(f.yaw());
    for (const auto& p : cloud.points) {
      const double dx = p.position.x() - f.position.x();
      const double dy = p.position.y() - f.position.y();
      const double lx = c * dx + s * dy;
      const double ly = -s * dx + c * dy;
      const auto r = static_cast<int>(std::floor((lx + LocalGrid::kHalfX) / kGridResolution));
      const auto col = static_cast<int>(std::floor((ly + LocalGrid::kHalfY) / kGridResolution));
      if (r >= 0 && r < kGridRows && col >= 0 && col < kGridCols) covered(r, col) = true;
    }
  }
};

json zone_report(const ZoneTracker& z, const MapParams& map) {
  const LocalGrid final_grid =
      extract_local_grid(*z.last_map, z.initial->frame, map.min_confidence);
  int under = 0, under_valid = 0, under_retained = 0;
  int outside = 0, outside_uncovered_valid = 0, outside_expired = 0, outside_covered = 0;
  for (int r = 0; r < kGridRows; ++r) {
    for (int c = 0; c < kGridCols; ++c) {
      const double x0 = -LocalGrid::kHalfX + r * kGridResolution;
      const double y0 = -LocalGrid::kHalfY + c * kGridResolution;
      const double x1 = x0 + kGridResolution;
      const double y1 = y0 + kGridResolution;
      const double far = std::hypot(std::max(std::abs(x0), std::abs(x1)),
                                    std::max(std::abs(y0), std::abs(y1)));
      const double near = std::hypot(std::clamp(0.0, x0, x1), std::clamp(0.0, y0, y1));
      const bool was_valid = z.initial->valid(r, c);
      if (far <= map.zone_radius) {
        ++under;
        if (was_valid) {
          ++under_valid;
          if (final_grid.valid(r, c)) ++under_retained;
        }
      } else if (near > map.zone_radius) {
        ++outside;
        if (z.covered(r, c)) {
          ++outside_covered;
        } else if (was_valid) {
          ++outside_uncovered_valid;
          if (!final_grid.valid(r, c)) ++outside_expired;
        }
      }
    }
  }
  auto ratio = [](int a, int b) { return b > 0 ? json(static_cast<double>(a) / b) : json(nullptr); };
  return json{{"dwell_start", z.dwell_start},
              {"dwell_end", z.last_map->time},
              {"under_base", {{"cells", under},
                              {"initially_valid", under_valid},
                              {"retained", under_retained},
                              {"retention", ratio(under_retained, under_valid)}}},
              {"outside_zone", {{"cells", outside},
                                {"covered_during_dwell", outside_covered},
                                {"uncovered_initially_valid", outside_uncovered_valid},
                                {"uncovered_expired", outside_expired},
                                {"expiry", ratio(outside_expired, outside_uncovered_valid)}}}};
}

int cmd_simulate(const SimulateCmd& a, std::ostream& out) {
  const Settings settings = Settings::resolve(a.common.config_file, a.common.assignments);
  const TerrainSpec spec = build_terrain(a.terrain, settings, a.common.seed);
  const HeightField field = make_terrain(spec);
  SimConfig config = settings.sim();
  config.apply_drop = !a.no_drop;
  const Schedule schedule = settings.schedule();

  const bool dwell = a.scenario == "dwell";
  if (!dwell && a.scenario != "walk") throw ValidationError("scenario must be walk or dwell");
  const double duration = a.duration.value_or(dwell ? 5.0 * config.map.decay_horizon : 1.0);
  if (!(duration > 0.0)) throw ValidationError("duration must be positive");
  if (a.checkpoint_every < 0) throw ValidationError("checkpoint interval must be >= 0");
  const double walk_time = dwell ? a.approach : duration;
  const double dwell_time = dwell ? duration : 0.0;

  const Vec2 axis(std::cos(spec.yaw), std::sin(spec.yaw));
  const Vec2 normal(-axis.y(), axis.x());
  const double heading = spec.yaw + a.heading_deg * kDegToRad;
  const Vec2 motion(std::cos(heading), std::sin(heading));
  const Vec2 start = spec.origin + a.start_offset * axis + a.lateral_offset * normal;
  const TrajectorySpec traj = straight_trajectory(field, config.robot, schedule, start, motion,
                                                  heading, a.speed, walk_time, dwell_time);

  const fs::path dir = prepare_out(a.common.out);
  const int expected_fusions =
      static_cast<int>(std::floor((traj.end() - traj.start()) * schedule.fuse_rate + 1e-9));

  std::optional<StampedCloud> preload;
  SimHooks hooks;
  if (a.preload_points > 0) {
    preload = preload_cloud(a.preload_points, field, traj.pose_at(traj.start()), config.map,
                            config.robot.base_height, derive_seed(a.common.seed, 0xC0FFEE));
    hooks.preload = &*preload;
  }

  io::Bytes grids;
  json frames = json::array();
  ZoneTracker zone;
  zone.dwell_start = traj.start() + walk_time;
  int fusions = 0;
  std::vector<std::string> checkpoints;

  hooks.on_fuse = [&](double time, const StampedCloud& cloud, const GlobalMap& map) {
    ++fusions;
    if (dwell && zone.initial && time > zone.dwell_start + 1e-9) zone.mark(cloud);
    const bool periodic = a.checkpoint_every > 0 && fusions % a.checkpoint_every == 0;
    if (periodic || fusions == expected_fusions) {
      char name[32];
      std::snprintf(name, sizeof name, "map_%04d", fusions);
      map.save(dir / name);
      checkpoints.emplace_back(name);
    }
  };
  hooks.on_frame = [&](const SimFrame& f) {
    if (!a.no_grids) {
      io::append_f32(grids, f.grid.heights);
      const auto& q = f.foot.orientation;
      frames.push_back({{"index", f.index},
                        {"time", f.time},
                        {"foot", {{"position", {f.foot.position.x(), f.foot.position.y(),
                                                f.foot.position.z()}},
                                  {"orientation", {q.w(), q.x(), q.y(), q.z()}}}},
                        {"valid_cells", f.grid.valid_count()}});
    }
    if (dwell && !zone.initial && f.time >= zone.dwell_start - 1e-9) zone.initial = f.grid;
    zone.last_map = f.map;
  };

  const RunStats stats = simulate_run(field, traj, config, derive_seed(a.common.seed, 1), hooks);

  json report{{"scans", stats.scans},
              {"fusions", stats.fusions},
              {"extractions", stats.extractions},
              {"rays_per_scan", config.sensor.rays_per_scan()},
              {"preload_points", a.preload_points},
              {"final_map_points",
               stats.extract_map_points.empty() ? 0 : stats.extract_map_points.back()},
              {"checkpoints", checkpoints}};
  if (dwell && zone.initial && zone.last_map) report["protection_zone"] = zone_report(zone, config.map);

  std::vector<double> lat = stats.extract_latency_ms;
  double mean = 0.0;
  for (double v : lat) mean += v;
  if (!lat.empty()) mean /= static_cast<double>(lat.size());
  std::size_t map_min = 0, map_max = 0;
  if (!stats.extract_map_points.empty()) {
    map_min = *std::min_element(stats.extract_map_points.begin(), stats.extract_map_points.end());
    map_max = *std::max_element(stats.extract_map_points.begin(), stats.extract_map_points.end());
  }
  const json timing{{"extractions", stats.extractions},
                    {"extract_latency_ms",
                     {{"mean", mean},
                      {"p50", percentile(lat, 50.0)},
                      {"p99", percentile(lat, 99.0)},
                      {"max", lat.empty() ? 0.0 : *std::max_element(lat.begin(), lat.end())}}},
                    {"map_points", {{"min", map_min}, {"max", map_max}}},
                    {"budget_ms", 1000.0 / schedule.extract_rate}};

  io::write_json(dir / "report.json", report);
  io::write_json(dir / "timing.json", timing);
  if (!a.no_grids) {
    io::write_bytes(dir / "grids.bin", grids);
    io::write_json(dir / "grids.json", {{"count", frames.size()},
                                        {"rows", kGridRows},
                                        {"cols", kGridCols},
                                        {"resolution", kGridResolution},
                                        {"dtype", "float32"},
                                        {"invalid", "NaN"},
                                        {"frames", frames}});
  }
  io::write_json(dir / "manifest.json",
                 manifest_for("simulate", a.common, settings,
                              {{"terrain", spec},
                               {"scenario", a.scenario},
                               {"duration", duration},
                               {"approach", dwell ? a.approach : 0.0},
                               {"speed", a.speed},
                               {"heading_deg", a.heading_deg},
                               {"start_offset", a.start_offset},
                               {"lateral_offset", a.lateral_offset},
                               {"preload_points", a.preload_points},
                               {"ray_drop", config.apply_drop},
                               {"checkpoint_every", a.checkpoint_every},
                               {"grids", !a.no_grids}}));
  out << "simulate: " << stats.scans << " scans, " << stats.fusions << " fusions, "
      << stats.extractions << " extractions -> " << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// dataset

struct DatasetCmd {
  CommonArgs common;
  CorpusSpec corpus;
  std::vector<std::string> kinds;
  bool no_drop = false;
};

int cmd_dataset(DatasetCmd a, std::ostream& out) {
  const Settings settings = Settings::resolve(a.common.config_file, a.common.assignments);
  if (!a.kinds.empty()) {
    a.corpus.kinds.clear();
    for (const auto& k : a.kinds) a.corpus.kinds.push_back(terrain_kind_from_string(k));
  }
  a.corpus.seed = a.common.seed;
  a.corpus.validate();
  SimConfig config = settings.sim();
  config.apply_drop = !a.no_drop;
  const MaskThresholds thresholds = settings.masks();

  Dataset dataset;
  dataset.samples = generate_corpus(a.corpus, config, settings.schedule(), thresholds);
  dataset.info.thresholds = thresholds;
  dataset.info.loss = settings.loss();
  dataset.info.seeds = {a.common.seed};
  json corpus = a.corpus;
  dataset.info.config = {{"resolved", settings.doc()},
                         {"corpus", corpus},
                         {"ray_drop", config.apply_drop},
                         {"config_version", default_config_version()}};
  const fs::path dir = prepare_out(a.common.out);
  write_dataset(dataset, dir);
  out << "dataset: " << dataset.samples.size() << " samples -> " << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// penalty

struct PenaltyCmd {
  CommonArgs common;
  TerrainArgs terrain;
  double vx = 0.5;
  double vy = 0.0;
  std::optional<double> foot_speed;
  double clearance = 0.05;
  std::optional<double> heading_deg;
  std::optional<double> x0;
  std::optional<double> y0;
  int rows = 41;
  int cols = 21;
  double step = 0.05;
};

int cmd_penalty(const PenaltyCmd& a, std::ostream& out) {
  const Settings settings = Settings::resolve(a.common.config_file, a.common.assignments);
  const TerrainSpec spec = build_terrain(a.terrain, settings, a.common.seed);
  const HeightField field = make_terrain(spec);
  const PenaltyParams params = settings.penalty();
  if (a.rows <= 0 || a.cols <= 0 || !(a.step > 0.0)) {
    throw ValidationError("sweep needs positive rows, cols and step");
  }
  const Vec2 v_cmd(a.vx, a.vy);
  if (!(v_cmd.norm() > 0.0)) throw ValidationError("command velocity must be non-zero");
  const Vec2 dir = v_cmd.normalized();

  FootState foot;
  foot.velocity = a.foot_speed.value_or(v_cmd.norm()) * dir;
  foot.clearance = a.clearance;
  foot.sole_extent = params.default_sole;
  foot.heading = a.heading_deg ? *a.heading_deg * kDegToRad : std::atan2(dir.y(), dir.x());

  SweepGrid sweep;
  sweep.rows = a.rows;
  sweep.cols = a.cols;
  sweep.step = a.step;
  sweep.origin = Vec2(a.x0.value_or(spec.origin.x() - 0.5 * (a.rows - 1) * a.step),
                      a.y0.value_or(spec.origin.y() - 0.5 * (a.cols - 1) * a.step));
  const auto samples = penalty_field(field, v_cmd, foot, params, sweep);

  const fs::path out_dir = prepare_out(a.common.out);
  std::ofstream csv(out_dir / "penalty.csv");
  if (!csv) throw IoError("cannot write " + (out_dir / "penalty.csv").string());
  csv << "x,y,r_colli,r_edge,r_safe\n";
  Grid values(a.rows, a.cols);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    csv << format_number(s.x) << ',' << format_number(s.y) << ',' << format_number(s.r_colli)
        << ',' << format_number(s.r_edge) << ',' << format_number(s.r_safe) << '\n';
    values(static_cast<Eigen::Index>(i) / a.cols, static_cast<Eigen::Index>(i) % a.cols) = s.r_safe;
  }
  csv.close();
  if (!csv) throw IoError("failed writing penalty.csv");
  double lo = std::min(values.minCoeff(), 0.0);
  const double hi = 0.0;
  if (!(lo < hi)) lo = -1.0;
  io::write_pgm(out_dir / "penalty.pgm", values, lo, hi);
  io::write_json(out_dir / "manifest.json",
                 manifest_for("penalty", a.common, settings,
                              {{"terrain", spec},
                               {"command", {a.vx, a.vy}},
                               {"foot_velocity", {foot.velocity.x(), foot.velocity.y()}},
                               {"clearance", foot.clearance},
                               {"heading", foot.heading},
                               {"sweep", {{"origin", {sweep.origin.x(), sweep.origin.y()}},
                                          {"step", sweep.step},
                                          {"rows", sweep.rows},
                                          {"cols", sweep.cols}}},
                               {"pgm_low", lo},
                               {"pgm_high", hi}}));
  out << "penalty: " << samples.size() << " foot positions -> " << out_dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalCmd {
  CommonArgs common;
  std::string dataset;
  std::string pred;
  std::optional<std::string> logits;
};

int cmd_eval(const EvalCmd& a, std::ostream& out) {
  const Settings settings = Settings::resolve(a.common.config_file, a.common.assignments);
  const Dataset dataset = read_dataset(a.dataset);
  const auto preds = read_prediction_blob(a.pred, dataset.samples.size());
  std::optional<std::vector<GridF>> logits;
  if (a.logits) logits = read_prediction_blob(*a.logits, dataset.samples.size());

  const fs::path dir = prepare_out(a.common.out);
  std::ofstream lines(dir / "metrics.jsonl");
  if (!lines) throw IoError("cannot write " + (dir / "metrics.jsonl").string());

  double g_sum = 0.0;
  double sums[3] = {0.0, 0.0, 0.0};
  int counts[3] = {0, 0, 0};
  double edge_abs = 0.0, flat_abs = 0.0;
  std::size_t edge_cells = 0, flat_cells = 0;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    const Grid pred = preds[i].cast<double>();
    const Grid gt = s.gt_heights.cast<double>();
    const MetricReport m = metrics(pred, gt, s.masks);
    json rec = m;
    rec["index"] = i;
    if (logits) {
      rec["loss"] = hybrid_loss(pred, (*logits)[i].cast<double>(), gt, s.masks, dataset.info.loss);
    }
    lines << rec.dump() << '\n';
    g_sum += m.g_mse;
    const std::optional<double>* opt[3] = {&m.e_mae, &m.f_mae, &m.f_rgh};
    for (int k = 0; k < 3; ++k) {
      if (*opt[k]) {
        sums[k] += **opt[k];
        ++counts[k];
      }
    }
    const Grid err = (pred - gt).abs();
    edge_abs += s.masks.m_edge.select(err, 0.0).sum();
    flat_abs += s.masks.m_flat.select(err, 0.0).sum();
    edge_cells += static_cast<std::size_t>(s.masks.m_edge.count());
    flat_cells += static_cast<std::size_t>(s.masks.m_flat.count());
  }
  lines.close();
  if (!lines) throw IoError("failed writing metrics.jsonl");

  const auto n = dataset.samples.size();
  auto mean = [](double sum, std::size_t count) {
    return count > 0 ? json(sum / static_cast<double>(count)) : json(nullptr);
  };
  const json summary{
      {"count", n},
      {"g_mse", mean(g_sum, n)},
      {"e_mae", mean(sums[0], static_cast<std::size_t>(counts[0]))},
      {"f_mae", mean(sums[1], static_cast<std::size_t>(counts[1]))},
      {"f_rgh", mean(sums[2], static_cast<std::size_t>(counts[2]))},
      {"samples_with_edges", counts[0]},
      {"samples_with_flat", counts[1]},
      {"pooled", {{"e_mae", mean(edge_abs, edge_cells)}, {"f_mae", mean(flat_abs, flat_cells)}}}};
  io::write_json(dir / "summary.json", summary);
  io::write_json(dir / "manifest.json",
                 manifest_for("eval", a.common, settings,
                              {{"dataset", fs::path(a.dataset).filename().string()},
                               {"samples", n},
                               {"logits", a.logits.has_value()}}));
  out << "eval: " << n << " samples -> " << dir.string() << "\n";
  return kOk;
}

}  // namespace

// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stair-aware terrain perception and foothold safety toolkit", "stairwise"};
  app.require_subcommand(1);

  TerrainCmd terrain;
  auto* t = app.add_subcommand("terrain", "Generate a terrain spec and heightfield preview");
  add_common(t, terrain.common, "terrain");
  add_terrain(t, terrain.terrain);
  t->add_option("--preview-half", terrain.preview_half, "Preview half size, m");
  t->add_option("--preview-res", terrain.preview_res, "Preview resolution, m");

  SimulateCmd sim;
  auto* s = app.add_subcommand("simulate", "Scan, fuse and extract local grids along a pass");
  add_common(s, sim.common, "simulate");
  add_terrain(s, sim.terrain);
  s->add_option("--scenario", sim.scenario, "walk | dwell");
  s->add_option("--duration", sim.duration, "Walk length, or dwell length for the dwell scenario, s");
  s->add_option("--approach", sim.approach, "Walk before the dwell, s");
  s->add_option("--speed", sim.speed, "Base speed, m/s");
  s->add_option("--heading", sim.heading_deg, "Walking direction relative to the terrain axis, deg");
  s->add_option("--start-offset", sim.start_offset, "Start along the terrain axis from its origin, m");
  s->add_option("--lateral-offset", sim.lateral_offset, "Start across the terrain axis, m");
  s->add_option("--preload-points", sim.preload_points, "Random points fused before the run");
  s->add_flag("--no-drop", sim.no_drop, "Disable ray drop");
  s->add_option("--checkpoint-every", sim.checkpoint_every, "Map checkpoint every N fusions");
  s->add_flag("--no-grids", sim.no_grids, "Skip writing the local grid sequence");

  DatasetCmd data;
  auto* d = app.add_subcommand("dataset", "Generate a reconstruction corpus");
  add_common(d, data.common, "dataset");
  d->add_option("--count", data.corpus.count, "Number of samples")->required();
  d->add_option("--min-level", data.corpus.min_level, "Lowest curriculum level");
  d->add_option("--max-level", data.corpus.max_level, "Highest curriculum level");
  d->add_option("--kinds", data.kinds, "Terrain kinds to draw from");
  d->add_option("--walk-time", data.corpus.walk_time, "Walk per run, s");
  d->add_option("--dwell-time", data.corpus.dwell_time, "Dwell per run, s");
  d->add_option("--warmup", data.corpus.warmup, "No samples before this, s");
  d->add_option("--stride", data.corpus.sample_stride, "Extractions between samples");
  d->add_option("--per-run", data.corpus.samples_per_run, "Samples per run");
  d->add_flag("--no-drop", data.no_drop, "Disable ray drop");

  PenaltyCmd pen;
  auto* p = app.add_subcommand("penalty", "Sweep the foothold penalty over foot positions");
  add_common(p, pen.common, "penalty");
  add_terrain(p, pen.terrain);
  p->add_option("--vx", pen.vx, "Command velocity x, m/s");
  p->add_option("--vy", pen.vy, "Command velocity y, m/s");
  p->add_option("--foot-speed", pen.foot_speed, "Foot speed along the command, m/s");
  p->add_option("--clearance", pen.clearance, "Sole height above ground, m");
  p->add_option("--foot-heading", pen.heading_deg, "Foot heading, deg (default: command)");
  p->add_option("--x0", pen.x0, "First sweep x, m");
  p->add_option("--y0", pen.y0, "First sweep y, m");
  p->add_option("--rows", pen.rows, "Sweep samples along x");
  p->add_option("--cols", pen.cols, "Sweep samples along y");
  p->add_option("--step", pen.step, "Sweep spacing, m");

  EvalCmd ev;
  auto* e = app.add_subcommand("eval", "Score a prediction blob against a dataset");
  add_common(e, ev.common, "eval");
  e->add_option("--dataset", ev.dataset, "Dataset directory")->required();
  e->add_option("--pred", ev.pred, "Prediction blob (N x 28 x 20 float32)")->required();
  e->add_option("--logits", ev.logits, "Optional edge-logit blob; adds hybrid loss records");

  std::vector<const char*> argv{"stairwise"};
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return kValidation;
  }

  try {
    if (app.got_subcommand(t)) return cmd_terrain(terrain, out);
    if (app.got_subcommand(s)) return cmd_simulate(sim, out);
    if (app.got_subcommand(d)) return cmd_dataset(data, out);
    if (app.got_subcommand(p)) return cmd_penalty(pen, out);
    if (app.got_subcommand(e)) return cmd_eval(ev, out);
  } catch (const ShapeError& ex) {
    err << "shape error: " << ex.what() << "\n";
    return kShape;
  } catch (const TruncationError& ex) {
    err << "truncated: " << ex.what() << "\n";
    return kTruncated;
  } catch (const VersionError& ex) {
    err << "version error: " << ex.what() << "\n";
    return kVersion;
  } catch (const ChecksumError& ex) {
    err << "checksum error: " << ex.what() << "\n";
    return kChecksum;
  } catch (const FormatError& ex) {
    err << "format error: " << ex.what() << "\n";
    return kFormat;
  } catch (const nlohmann::json::exception& ex) {
    err << "format error: " << ex.what() << "\n";
    return kFormat;
  } catch (const IoError& ex) {
    err << "i/o error: " << ex.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& ex) {
    err << "i/o error: " << ex.what() << "\n";
    return kIo;
  } catch (const ValidationError& ex) {
    err << "invalid argument: " << ex.what() << "\n";
    return kValidation;
  } catch (const OutOfExtentError& ex) {
    err << "invalid argument: " << ex.what() << "\n";
    return kValidation;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kUnexpected;
  }
  return kUnexpected;
}

}  // namespace stairwise::cli
