#include "stairwise/recon_metrics.hpp"

#include "stairwise/config.hpp"

#include <cmath>

namespace stairwise {

namespace {

void require_same_shape(const Grid& a, const Grid& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

void require_mask_shape(const Grid& g, const Mask& m) {
  if (g.rows() != m.rows() || g.cols() != m.cols()) throw ShapeError("mask shape mismatch");
}

std::optional<double> masked_mean(const Grid& values, const Mask& mask) {
  const auto n = mask.count();
  if (n == 0) return std::nullopt;
  return mask.select(values, 0.0).sum() / static_cast<double>(n);
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

MaskThresholds MaskThresholds::defaults() {
  MaskThresholds t;
  from_json(default_section("masks"), t);
  return t;
}

void MaskThresholds::validate() const {
  if (!(flat_thresh > 0.0) || !(edge_thresh > 0.0) || !(flat_thresh < edge_thresh)) {
    throw ValidationError("mask thresholds need 0 < flat_thresh < edge_thresh");
  }
}

LossWeights LossWeights::defaults() {
  LossWeights w;
  from_json(default_section("loss"), w);
  return w;
}

void LossWeights::validate() const {
  if (!(lambda_e >= 0.0) || !(lambda_r >= 0.0) || !(lambda_s >= 0.0) || !(lambda_g >= 0.0) ||
      !(alpha >= 0.0)) {
    throw ValidationError("loss weights must be non-negative");
  }
}

void to_json(nlohmann::json& j, const MaskThresholds& t) {
  j = nlohmann::json{{"edge_thresh", t.edge_thresh}, {"flat_thresh", t.flat_thresh}};
}

void from_json(const nlohmann::json& j, MaskThresholds& t) {
  t.edge_thresh = j.at("edge_thresh").get<double>();
  t.flat_thresh = j.at("flat_thresh").get<double>();
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"lambda_e", w.lambda_e}, {"lambda_r", w.lambda_r},
                     {"lambda_s", w.lambda_s}, {"lambda_g", w.lambda_g},
                     {"alpha", w.alpha}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  w.lambda_e = j.at("lambda_e").get<double>();
  w.lambda_r = j.at("lambda_r").get<double>();
  w.lambda_s = j.at("lambda_s").get<double>();
  w.lambda_g = j.at("lambda_g").get<double>();
  w.alpha = j.at("alpha").get<double>();
}

void to_json(nlohmann::json& j, const MetricReport& m) {
  j = nlohmann::json{{"g_mse", m.g_mse},
                     {"e_mae", optional_json(m.e_mae)},
                     {"f_mae", optional_json(m.f_mae)},
                     {"f_rgh", optional_json(m.f_rgh)}};
}

void to_json(nlohmann::json& j, const LossBreakdown& l) {
  j = nlohmann::json{{"l_h", l.l_h}, {"l_e", l.l_e}, {"l_r", l.l_r},
                     {"l_s", l.l_s}, {"l_g", l.l_g}, {"l_total", l.l_total}};
}

RegionMasks region_masks(const Grid& gt, const MaskThresholds& thresholds, double resolution) {
  thresholds.validate();
  RegionMasks masks;
  masks.m_gt = sobel_magnitude(gt, resolution);
  masks.m_edge = masks.m_gt > thresholds.edge_thresh;
  masks.m_flat = masks.m_gt < thresholds.flat_thresh;
  return masks;
}

MetricReport metrics(const Grid& pred, const Grid& gt, const RegionMasks& masks,
                     double resolution) {
  require_same_shape(pred, gt, "metrics");
  require_mask_shape(gt, masks.m_edge);
  require_mask_shape(gt, masks.m_flat);
  const Grid err = pred - gt;
  MetricReport report;
  report.g_mse = err.square().mean();
  report.e_mae = masked_mean(err.abs(), masks.m_edge);
  report.f_mae = masked_mean(err.abs(), masks.m_flat);
  report.f_rgh = masked_mean(sobel_magnitude(pred, resolution), masks.m_flat);
  return report;
}

LossBreakdown hybrid_loss(const Grid& pred, const Grid& edge_logits, const Grid& gt,
                          const RegionMasks& masks, const LossWeights& weights,
                          double resolution) {
  require_same_shape(pred, gt, "hybrid_loss");
  require_same_shape(edge_logits, gt, "hybrid_loss logits");
  require_same_shape(masks.m_gt, gt, "hybrid_loss m_gt");
  require_mask_shape(gt, masks.m_edge);
  require_mask_shape(gt, masks.m_flat);
  weights.validate();
  if (edge_logits.isNaN().any()) {
    throw ValidationError("edge logits must not be NaN");
  }

  LossBreakdown out;
  const Grid err = pred - gt;
  out.l_h = err.square().mean();

  // Stable sigmoid cross-entropy: softplus(z) - y z.
  const Grid z = edge_logits.max(-kLogitClamp).min(kLogitClamp);
  const Grid y = masks.m_edge.cast<double>();
  const Grid softplus = z.max(0.0) + (-z.abs()).exp().log1p();
  out.l_e = (softplus - y * z).mean();

  out.l_r = masked_mean(err.abs(), masks.m_edge).value_or(0.0);

  const auto rows = pred.rows();
  const auto cols = pred.cols();
  Grid smooth = Grid::Zero(rows, cols);
  if (rows > 1) {
    const Grid d = pred.bottomRows(rows - 1) - pred.topRows(rows - 1);
    smooth.topRows(rows - 1) += d.abs() + d.square();
  }
  if (cols > 1) {
    const Grid d = pred.rightCols(cols - 1) - pred.leftCols(cols - 1);
    smooth.leftCols(cols - 1) += d.abs() + d.square();
  }
  out.l_s = masked_mean(smooth, masks.m_flat).value_or(0.0);

  out.m_pred = sobel_magnitude(pred, resolution);
  out.l_g = ((1.0 + weights.alpha * masks.m_gt) * (out.m_pred - masks.m_gt).abs()).sum() /
            static_cast<double>(pred.size());

  out.l_total = out.l_h + weights.lambda_e * out.l_e + weights.lambda_r * out.l_r +
                weights.lambda_s * out.l_s + weights.lambda_g * out.l_g;
  return out;
}

}  // namespace stairwise
