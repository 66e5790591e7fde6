#pragma once

#include "stairwise/grid_ops.hpp"
#include "stairwise/types.hpp"

#include <json.hpp>

#include <optional>

namespace stairwise {

struct MaskThresholds {
  double edge_thresh{};
  double flat_thresh{};

  static MaskThresholds defaults();
  void validate() const;
};

struct RegionMasks {
  Grid m_gt;    // Sobel magnitude of the ground truth
  Mask m_edge;  // m_gt > edge_thresh
  Mask m_flat;  // m_gt < flat_thresh
};

struct LossWeights {
  double lambda_e{};
  double lambda_r{};
  double lambda_s{};
  double lambda_g{};
  double alpha{};

  static LossWeights defaults();
  void validate() const;
};

struct LossBreakdown {
  double l_h = 0.0;
  double l_e = 0.0;
  double l_r = 0.0;
  double l_s = 0.0;
  double l_g = 0.0;
  double l_total = 0.0;
  Grid m_pred;
};

struct MetricReport {
  double g_mse = 0.0;
  std::optional<double> e_mae;
  std::optional<double> f_mae;
  std::optional<double> f_rgh;
};

void to_json(nlohmann::json& j, const MaskThresholds& t);
void from_json(const nlohmann::json& j, MaskThresholds& t);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
// JSON-lines records; absent metrics serialise as null.
void to_json(nlohmann::json& j, const MetricReport& m);
void to_json(nlohmann::json& j, const LossBreakdown& l);

/// Logits are clamped to +-kLogitClamp before the sigmoid cross-entropy.
inline constexpr double kLogitClamp = 15.0;

RegionMasks region_masks(const Grid& gt, const MaskThresholds& thresholds,
                         double resolution = kGridResolution);

/// Throws ShapeError when pred and gt differ in shape.
MetricReport metrics(const Grid& pred, const Grid& gt, const RegionMasks& masks,
                     double resolution = kGridResolution);

/// Region-decoupled hybrid loss:
///   l_h  mean squared height error over all cells
///   l_e  mean binary cross-entropy of edge logits against m_edge
///   l_r  mean |pred - gt| over m_edge
///   l_s  mean over m_flat of |d| + d^2 summed over the forward differences
///        d along rows and along columns that stay inside the grid
///   l_g  (1/N) sum (1 + alpha m_gt) |m_pred - m_gt|, N = all cells
/// Empty masks contribute 0.
LossBreakdown hybrid_loss(const Grid& pred, const Grid& edge_logits, const Grid& gt,
                          const RegionMasks& masks, const LossWeights& weights,
                          double resolution = kGridResolution);

}  // namespace stairwise
