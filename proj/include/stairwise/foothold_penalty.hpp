#pragma once

#include "stairwise/rolling_map.hpp"
#include "stairwise/terrain.hpp"
#include "stairwise/types.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <vector>

namespace stairwise {

/// Planar state of one foot.
struct FootState {
  Vec2 center = Vec2::Zero();    // f_c, m
  Vec2 velocity = Vec2::Zero();  // v_xy, m/s
  double clearance = 0.0;        // d_z, sole height above ground, m
  Vec2 sole_extent = Vec2::Zero();  // length (along heading) x width, m
  double heading = 0.0;          // rad

  void validate() const;
};

struct PenaltyParams {
  double d_unsafe{};             // distance below which the collision term acts
  double eps_slope{};            // slope above which an obstacle counts as a riser
  double d_min{};                // clearance below which the edge term acts
  double w1{};
  double w2{};
  double cone_apex_angle{};      // full apex angle, rad
  double edge_grad_threshold{};  // Sobel magnitude marking edge points
  double riser_margin{};         // obstacle cells rise this far above the sole
  double window_margin{};        // foot window = sole inflated by this on each side
  double search_radius{};        // obstacle search range around the foot
  Vec2 default_sole = Vec2::Zero();
  // Applies the sign factor outside the min. The default
  // places it inside, which yields a penalty for ascent with the edge under
  // the front half of the foot and none for the rear half.
  bool typeset_sign_placement = false;

  static PenaltyParams defaults();
  void validate() const;
};

void to_json(nlohmann::json& j, const PenaltyParams& p);
void from_json(const nlohmann::json& j, PenaltyParams& p);

/// Rectangular height raster with arbitrary planar placement.
///
/// Cell (r, c) has its centre at origin + R(yaw) * (r, c) * resolution in the
/// odometry frame. Invalid cells must hold NaN.
struct HeightPatch {
  Grid heights;
  Mask valid;
  Vec2 origin = Vec2::Zero();
  double yaw = 0.0;
  double resolution = kGridResolution;

  Eigen::Index rows() const { return heights.rows(); }
  Eigen::Index cols() const { return heights.cols(); }
  Vec2 cell_center(Eigen::Index r, Eigen::Index c) const;
  /// Grid-frame coordinates of a world point, in cells.
  Vec2 to_cells(const Vec2& world) const;
};

/// World-aligned patch sampled from `field`, centred on `center` with
/// cells at `center + (i, j) * resolution` for |i|, |j| <= n,
/// n = ceil(half_size / resolution). Samples outside the field are invalid.
HeightPatch sample_patch(const HeightField& field, const Vec2& center, double half_size,
                         double resolution = kGridResolution);

/// Heading-aligned foot window H_fl sampled from `field` around the foot.
HeightPatch sample_foot_window(const HeightField& field, const FootState& foot,
                               const PenaltyParams& params, double resolution = kGridResolution);

/// The local grid viewed as a patch in the odometry frame.
HeightPatch as_patch(const LocalGrid& grid);

/// Sub-block of `patch` whose cell centres fall inside the foot window,
/// the window axes taken as the patch axes.
HeightPatch foot_window_of(const HeightPatch& patch, const FootState& foot,
                           const PenaltyParams& params);

// ---------------------------------------------------------------------------

struct ObstacleHit {
  Vec2 offset = Vec2::Zero();  // d_xy
  double slope = 0.0;          // s at the endpoint
  Eigen::Index row = 0;
  Eigen::Index col = 0;
};

/// Nearest obstacle cell whose bearing from f_c lies within half the cone
/// apex angle of v_xy. Obstacles rise more than riser_margin above the sole.
/// Ties on distance break on (row, col). Empty for zero velocity.
std::optional<ObstacleHit> nearest_obstacle_in_cone(const HeightPatch& patch,
                                                    const FootState& foot,
                                                    const PenaltyParams& params);

struct CollisionTerm {
  std::optional<ObstacleHit> obstacle;
  double p_colli = 0.0;
  double d_colli = 0.0;
  double slope = 0.0;
  double r_colli = 0.0;
};

CollisionTerm collision_penalty(const HeightPatch& patch, const FootState& foot,
                                const PenaltyParams& params);

struct EdgeSet {
  std::vector<Vec2> points;  // e_i, world
  Vec2 centroid = Vec2::Zero();       // e_c
  Vec2 mean_gradient = Vec2::Zero();  // g, world axes
};

/// Sobel over the foot window; cells above edge_grad_threshold are edge
/// points. Empty when there are none.
std::optional<EdgeSet> edge_points_under_foot(const HeightPatch& window,
                                              const PenaltyParams& params);

struct EdgeTerm {
  std::optional<EdgeSet> edges;
  Vec2 e_xy = Vec2::Zero();
  int sign = 0;  // s_f
  double p_edge = 0.0;
  double d_edge = 0.0;
  double r_edge = 0.0;
};

/// Throws ValidationError for a zero command.
EdgeTerm edge_penalty(const HeightPatch& window, const FootState& foot, const Vec2& v_cmd,
                      const PenaltyParams& params);

struct PenaltyBreakdown {
  CollisionTerm collision;
  EdgeTerm edge;
  double r_safe = 0.0;
};

struct SteppingPenalty {
  std::vector<PenaltyBreakdown> feet;
  double r_safe = 0.0;
};

/// Both terms for one foot. Zero velocity disables the collision term and a
/// zero command disables the edge term.
PenaltyBreakdown evaluate_foot(const HeightPatch& patch, const HeightPatch& window,
                               const FootState& foot, const Vec2& v_cmd,
                               const PenaltyParams& params);

SteppingPenalty unsafe_stepping(const HeightField& field, std::span<const FootState> feet,
                                const Vec2& v_cmd, const PenaltyParams& params);
SteppingPenalty unsafe_stepping(const LocalGrid& grid, std::span<const FootState> feet,
                                const Vec2& v_cmd, const PenaltyParams& params);

// Convenience overloads sampling the ground truth field around the foot.
std::optional<ObstacleHit> nearest_obstacle_in_cone(const HeightField& field,
                                                    const FootState& foot,
                                                    const PenaltyParams& params);
CollisionTerm collision_penalty(const HeightField& field, const FootState& foot,
                                const PenaltyParams& params);
std::optional<EdgeSet> edge_points_under_foot(const HeightField& field, const FootState& foot,
                                              const PenaltyParams& params);
EdgeTerm edge_penalty(const HeightField& field, const FootState& foot, const Vec2& v_cmd,
                      const PenaltyParams& params);

/// Patch used for the collision term around one foot.
HeightPatch collision_patch(const HeightField& field, const FootState& foot,
                            const PenaltyParams& params);

struct PenaltySample {
  double x = 0.0;
  double y = 0.0;
  double r_colli = 0.0;
  double r_edge = 0.0;
  double r_safe = 0.0;
};

/// Sample grid for penalty sweeps: `rows` x `cols` foot positions starting
/// at `origin` with spacing `step` along world x (rows) and y (cols).
struct SweepGrid {
  Vec2 origin = Vec2::Zero();
  double step = kGridResolution;
  int rows = 0;
  int cols = 0;
};

/// r_safe for a single foot (the template) swept over `sweep`.
std::vector<PenaltySample> penalty_field(const HeightField& field, const Vec2& v_cmd,
                                         const FootState& foot_template,
                                         const PenaltyParams& params, const SweepGrid& sweep);

}  // namespace stairwise
