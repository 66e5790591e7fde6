#include "stairwise/foothold_penalty.hpp"

#include "stairwise/config.hpp"
#include "stairwise/grid_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <tuple>

namespace stairwise {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kDegToRad = std::numbers::pi / 180.0;

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Height of the ground under the foot centre: the cell nearest to f_c, or
/// the nearest valid cell when that one is a hole.
std::optional<double> ground_under(const HeightPatch& patch, const Vec2& center) {
  const Vec2 cells = patch.to_cells(center);
  const auto r = static_cast<Eigen::Index>(std::lround(cells.x()));
  const auto c = static_cast<Eigen::Index>(std::lround(cells.y()));
  if (r >= 0 && r < patch.rows() && c >= 0 && c < patch.cols() && patch.valid(r, c)) {
    return patch.heights(r, c);
  }
  std::optional<double> best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < patch.rows(); ++i) {
    for (Eigen::Index j = 0; j < patch.cols(); ++j) {
      if (!patch.valid(i, j)) continue;
      const double d2 = (patch.cell_center(i, j) - center).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best = patch.heights(i, j);
      }
    }
  }
  return best;
}

}  // namespace

void FootState::validate() const {
  if (!(clearance >= 0.0)) throw ValidationError("foot clearance d_z must be >= 0");
  if (!(sole_extent.x() > 0.0 && sole_extent.y() > 0.0)) {
    throw ValidationError("foot sole extent must be positive");
  }
  if (!center.allFinite() || !velocity.allFinite() || !std::isfinite(heading)) {
    throw ValidationError("foot state must be finite");
  }
}

PenaltyParams PenaltyParams::defaults() {
  PenaltyParams p;
  from_json(default_section("penalty"), p);
  return p;
}

void PenaltyParams::validate() const {
  if (!(d_unsafe > 0.0) || !(eps_slope > 0.0) || !(d_min > 0.0) ||
      !(edge_grad_threshold > 0.0) || !(riser_margin > 0.0) || !(search_radius > 0.0)) {
    throw ValidationError("penalty thresholds must be positive");
  }
  if (!(cone_apex_angle > 0.0 && cone_apex_angle < std::numbers::pi)) {
    throw ValidationError("cone apex angle must lie in (0, pi)");
  }
  if (!(w1 >= 0.0) || !(w2 >= 0.0) || !(window_margin >= 0.0)) {
    throw ValidationError("penalty weights and window margin must be non-negative");
  }
}

void to_json(nlohmann::json& j, const PenaltyParams& p) {
  j = nlohmann::json{{"d_unsafe", p.d_unsafe},
                     {"eps_slope", p.eps_slope},
                     {"d_min", p.d_min},
                     {"w1", p.w1},
                     {"w2", p.w2},
                     {"cone_apex_deg", p.cone_apex_angle / kDegToRad},
                     {"edge_grad_threshold", p.edge_grad_threshold},
                     {"riser_margin", p.riser_margin},
                     {"window_margin", p.window_margin},
                     {"search_radius", p.search_radius},
                     {"sole_length", p.default_sole.x()},
                     {"sole_width", p.default_sole.y()},
                     {"typeset_sign_placement", p.typeset_sign_placement}};
}

void from_json(const nlohmann::json& j, PenaltyParams& p) {
  p.d_unsafe = j.at("d_unsafe").get<double>();
  p.eps_slope = j.at("eps_slope").get<double>();
  p.d_min = j.at("d_min").get<double>();
  p.w1 = j.at("w1").get<double>();
  p.w2 = j.at("w2").get<double>();
  p.cone_apex_angle = j.at("cone_apex_deg").get<double>() * kDegToRad;
  p.edge_grad_threshold = j.at("edge_grad_threshold").get<double>();
  p.riser_margin = j.at("riser_margin").get<double>();
  p.window_margin = j.at("window_margin").get<double>();
  p.search_radius = j.at("search_radius").get<double>();
  p.default_sole = Vec2(j.at("sole_length").get<double>(), j.at("sole_width").get<double>());
  p.typeset_sign_placement = j.value("typeset_sign_placement", false);
}

// ---------------------------------------------------------------------------
// Patches

Vec2 HeightPatch::cell_center(Eigen::Index r, Eigen::Index c) const {
  return origin + planar_rotation(yaw) * Vec2(static_cast<double>(r) * resolution,
                                              static_cast<double>(c) * resolution);
}

Vec2 HeightPatch::to_cells(const Vec2& world) const {
  return planar_rotation(yaw).transpose() * (world - origin) / resolution;
}

namespace {

HeightPatch sample_rect(const HeightField& field, const Vec2& center, double yaw, int n_rows,
                        int n_cols, double resolution) {
  HeightPatch patch;
  patch.resolution = resolution;
  patch.yaw = yaw;
  patch.origin = center + planar_rotation(yaw) * Vec2(-n_rows * resolution, -n_cols * resolution);
  patch.heights.resize(2 * n_rows + 1, 2 * n_cols + 1);
  patch.valid.resize(2 * n_rows + 1, 2 * n_cols + 1);
  for (Eigen::Index r = 0; r < patch.rows(); ++r) {
    for (Eigen::Index c = 0; c < patch.cols(); ++c) {
      const Vec2 p = patch.cell_center(r, c);
      const bool inside = field.contains(p.x(), p.y());
      patch.valid(r, c) = inside;
      patch.heights(r, c) = inside ? field.height_at(p.x(), p.y()) : kNaN;
    }
  }
  return patch;
}

int cells_within(double half_extent, double resolution) {
  return static_cast<int>(std::floor(half_extent / resolution + 1e-9));
}

Vec2 window_half_extent(const FootState& foot, const PenaltyParams& params) {
  return foot.sole_extent / 2.0 + Vec2::Constant(params.window_margin);
}

}  // namespace

HeightPatch sample_patch(const HeightField& field, const Vec2& center, double half_size,
                         double resolution) {
  const int n = static_cast<int>(std::ceil(half_size / resolution - 1e-9));
  return sample_rect(field, center, 0.0, n, n, resolution);
}

HeightPatch sample_foot_window(const HeightField& field, const FootState& foot,
                               const PenaltyParams& params, double resolution) {
  const Vec2 half = window_half_extent(foot, params);
  return sample_rect(field, foot.center, foot.heading, cells_within(half.x(), resolution),
                     cells_within(half.y(), resolution), resolution);
}

HeightPatch as_patch(const LocalGrid& grid) {
  HeightPatch patch;
  patch.heights = grid.heights;
  patch.valid = grid.valid;
  patch.resolution = grid.resolution;
  patch.yaw = grid.frame.yaw();
  patch.origin = grid.cell_center_world(0, 0).head<2>();
  return patch;
}

HeightPatch foot_window_of(const HeightPatch& patch, const FootState& foot,
                           const PenaltyParams& params) {
  const Vec2 half = window_half_extent(foot, params) / patch.resolution;
  const Vec2 f = patch.to_cells(foot.center);
  const auto r0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::ceil(f.x() - half.x() - 1e-9)));
  const auto r1 = std::min<Eigen::Index>(patch.rows() - 1,
                                         static_cast<Eigen::Index>(std::floor(f.x() + half.x() + 1e-9)));
  const auto c0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::ceil(f.y() - half.y() - 1e-9)));
  const auto c1 = std::min<Eigen::Index>(patch.cols() - 1,
                                         static_cast<Eigen::Index>(std::floor(f.y() + half.y() + 1e-9)));
  HeightPatch window;
  window.resolution = patch.resolution;
  window.yaw = patch.yaw;
  if (r1 < r0 || c1 < c0) {
    window.heights.resize(0, 0);
    window.valid.resize(0, 0);
    return window;
  }
  window.origin = patch.cell_center(r0, c0);
  window.heights = patch.heights.block(r0, c0, r1 - r0 + 1, c1 - c0 + 1);
  window.valid = patch.valid.block(r0, c0, r1 - r0 + 1, c1 - c0 + 1);
  return window;
}

HeightPatch collision_patch(const HeightField& field, const FootState& foot,
                            const PenaltyParams& params) {
  return sample_patch(field, foot.center, params.search_radius + 2.0 * kGridResolution);
}

// ---------------------------------------------------------------------------
// Foot collision

std::optional<ObstacleHit> nearest_obstacle_in_cone(const HeightPatch& patch,
                                                    const FootState& foot,
                                                    const PenaltyParams& params) {
  const double speed = foot.velocity.norm();
  if (speed == 0.0 || patch.rows() == 0) return std::nullopt;
  const auto ground = ground_under(patch, foot.center);
  if (!ground) return std::nullopt;
  const double obstacle_floor = *ground + foot.clearance + params.riser_margin;
  const double cos_half = std::cos(params.cone_apex_angle / 2.0);

  const Vec2 f = patch.to_cells(foot.center);
  const auto r0 = static_cast<Eigen::Index>(std::lround(f.x()));
  const auto c0 = static_cast<Eigen::Index>(std::lround(f.y()));
  const Eigen::Index max_ring =
      std::max({std::abs(r0), std::abs(patch.rows() - 1 - r0), std::abs(c0),
                std::abs(patch.cols() - 1 - c0)});

  std::optional<std::tuple<double, Eigen::Index, Eigen::Index>> best;
  auto consider = [&](Eigen::Index r, Eigen::Index c) {
    if (r < 0 || r >= patch.rows() || c < 0 || c >= patch.cols()) return;
    if (!patch.valid(r, c) || !(patch.heights(r, c) > obstacle_floor)) return;
    const Vec2 d = patch.cell_center(r, c) - foot.center;
    const double d2 = d.squaredNorm();
    if (d2 == 0.0 || d2 > params.search_radius * params.search_radius) return;
    const double dist = std::sqrt(d2);
    if (d.dot(foot.velocity) < dist * speed * cos_half) return;
    const auto key = std::make_tuple(d.squaredNorm(), r, c);
    if (!best || key < *best) best = key;
  };

  // Chebyshev rings around the foot cell. Every cell of ring k lies at least
  // (k - 1/2) cells from f_c, so the scan stops once that bound exceeds the
  // best distance found.
  for (Eigen::Index k = 0; k <= max_ring; ++k) {
    if (best) {
      const double bound = std::max(0.0, (static_cast<double>(k) - 0.5) * patch.resolution);
      if (bound * bound > std::get<0>(*best)) break;
    }
    if (k == 0) {
      consider(r0, c0);
      continue;
    }
    for (Eigen::Index t = -k; t <= k; ++t) {
      consider(r0 - k, c0 + t);
      consider(r0 + k, c0 + t);
    }
    for (Eigen::Index t = -k + 1; t <= k - 1; ++t) {
      consider(r0 + t, c0 - k);
      consider(r0 + t, c0 + k);
    }
  }
  if (!best) return std::nullopt;

  const auto [d2, r, c] = *best;
  const Grid magnitude = sobel_magnitude(patch.heights, patch.resolution);
  ObstacleHit hit;
  hit.offset = patch.cell_center(r, c) - foot.center;
  hit.slope = magnitude(r, c);
  hit.row = r;
  hit.col = c;
  return hit;
}

CollisionTerm collision_penalty(const HeightPatch& patch, const FootState& foot,
                                const PenaltyParams& params) {
  CollisionTerm term;
  term.obstacle = nearest_obstacle_in_cone(patch, foot, params);
  if (!term.obstacle) return term;
  const Vec2& d = term.obstacle->offset;
  const double dist = d.norm();
  term.p_colli = std::max(0.0, foot.velocity.dot(d) / dist);
  term.d_colli = std::max(0.0, 1.0 - dist / params.d_unsafe);
  term.slope = term.obstacle->slope;
  term.r_colli = term.slope > params.eps_slope ? -(term.p_colli * term.d_colli) : 0.0;
  return term;
}

// ---------------------------------------------------------------------------
// Edge stepping

std::optional<EdgeSet> edge_points_under_foot(const HeightPatch& window,
                                              const PenaltyParams& params) {
  if (window.rows() < 3 || window.cols() < 3) return std::nullopt;
  const auto [d_row, d_col] = sobel(window.heights, window.resolution);
  const Eigen::Matrix2d rot = planar_rotation(window.yaw);

  EdgeSet edges;
  Vec2 gradient_sum = Vec2::Zero();
  int gradient_count = 0;
  Vec2 point_sum = Vec2::Zero();
  for (Eigen::Index r = 0; r < window.rows(); ++r) {
    for (Eigen::Index c = 0; c < window.cols(); ++c) {
      const Vec2 g(d_row(r, c), d_col(r, c));
      if (!g.allFinite()) continue;
      gradient_sum += rot * g;
      ++gradient_count;
      if (window.valid(r, c) && g.norm() > params.edge_grad_threshold) {
        edges.points.push_back(window.cell_center(r, c));
        point_sum += edges.points.back();
      }
    }
  }
  if (edges.points.empty()) return std::nullopt;
  edges.centroid = point_sum / static_cast<double>(edges.points.size());
  edges.mean_gradient = gradient_sum / static_cast<double>(gradient_count);
  return edges;
}

EdgeTerm edge_penalty(const HeightPatch& window, const FootState& foot, const Vec2& v_cmd,
                      const PenaltyParams& params) {
  const double cmd_speed = v_cmd.norm();
  if (!(cmd_speed > 0.0)) {
    throw ValidationError("edge penalty needs a non-zero velocity command");
  }
  EdgeTerm term;
  term.edges = edge_points_under_foot(window, params);
  if (!term.edges) return term;

  term.e_xy = term.edges->centroid - foot.center;
  const double along = term.e_xy.dot(v_cmd / cmd_speed);
  const double sf = -sign_of(term.edges->mean_gradient.dot(v_cmd));
  term.sign = static_cast<int>(sf);
  term.p_edge = params.typeset_sign_placement ? sf * std::min(0.0, along)
                                              : std::min(0.0, sf * along);
  term.d_edge = std::max(0.0, 1.0 - foot.clearance / params.d_min);
  term.r_edge = term.p_edge * term.d_edge;
  return term;
}

// ---------------------------------------------------------------------------

PenaltyBreakdown evaluate_foot(const HeightPatch& patch, const HeightPatch& window,
                               const FootState& foot, const Vec2& v_cmd,
                               const PenaltyParams& params) {
  PenaltyBreakdown out;
  if (foot.velocity.norm() > 0.0) out.collision = collision_penalty(patch, foot, params);
  if (v_cmd.norm() > 0.0) out.edge = edge_penalty(window, foot, v_cmd, params);
  out.r_safe = params.w1 * out.collision.r_colli + params.w2 * out.edge.r_edge;
  return out;
}

namespace {

template <typename MakePatches>
SteppingPenalty sum_over_feet(std::span<const FootState> feet, const Vec2& v_cmd,
                              const PenaltyParams& params, MakePatches&& make) {
  if (feet.empty()) throw ValidationError("unsafe_stepping needs at least one foot");
  params.validate();
  SteppingPenalty total;
  for (const auto& foot : feet) {
    foot.validate();
    const auto [patch, window] = make(foot);
    total.feet.push_back(evaluate_foot(patch, window, foot, v_cmd, params));
    total.r_safe += total.feet.back().r_safe;
  }
  return total;
}

}  // namespace

SteppingPenalty unsafe_stepping(const HeightField& field, std::span<const FootState> feet,
                                const Vec2& v_cmd, const PenaltyParams& params) {
  return sum_over_feet(feet, v_cmd, params, [&](const FootState& foot) {
    return std::make_pair(collision_patch(field, foot, params),
                          sample_foot_window(field, foot, params));
  });
}

SteppingPenalty unsafe_stepping(const LocalGrid& grid, std::span<const FootState> feet,
                                const Vec2& v_cmd, const PenaltyParams& params) {
  const HeightPatch patch = as_patch(grid);
  return sum_over_feet(feet, v_cmd, params, [&](const FootState& foot) {
    return std::make_pair(patch, foot_window_of(patch, foot, params));
  });
}

std::optional<ObstacleHit> nearest_obstacle_in_cone(const HeightField& field,
                                                    const FootState& foot,
                                                    const PenaltyParams& params) {
  return nearest_obstacle_in_cone(collision_patch(field, foot, params), foot, params);
}

CollisionTerm collision_penalty(const HeightField& field, const FootState& foot,
                                const PenaltyParams& params) {
  return collision_penalty(collision_patch(field, foot, params), foot, params);
}

std::optional<EdgeSet> edge_points_under_foot(const HeightField& field, const FootState& foot,
                                              const PenaltyParams& params) {
  return edge_points_under_foot(sample_foot_window(field, foot, params), params);
}

EdgeTerm edge_penalty(const HeightField& field, const FootState& foot, const Vec2& v_cmd,
                      const PenaltyParams& params) {
  return edge_penalty(sample_foot_window(field, foot, params), foot, v_cmd, params);
}

std::vector<PenaltySample> penalty_field(const HeightField& field, const Vec2& v_cmd,
                                         const FootState& foot_template,
                                         const PenaltyParams& params, const SweepGrid& sweep) {
  if (sweep.rows <= 0 || sweep.cols <= 0 || !(sweep.step > 0.0)) {
    throw ValidationError("penalty sweep grid must be non-empty with a positive step");
  }
  std::vector<PenaltySample> out;
  out.reserve(static_cast<std::size_t>(sweep.rows) * sweep.cols);
  for (int r = 0; r < sweep.rows; ++r) {
    for (int c = 0; c < sweep.cols; ++c) {
      FootState foot = foot_template;
      foot.center = sweep.origin + Vec2(r * sweep.step, c * sweep.step);
      const auto result = unsafe_stepping(field, std::span<const FootState>(&foot, 1), v_cmd, params);
      const auto& b = result.feet.front();
      out.push_back({foot.center.x(), foot.center.y(), b.collision.r_colli, b.edge.r_edge,
                     result.r_safe});
    }
  }
  return out;
}

}  // namespace stairwise
