#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <tuple>
#include <vector>

namespace oracle {

using stairwise::FootState;
using stairwise::HeightPatch;
using stairwise::PenaltyParams;

std::pair<Grid, Grid> naive_sobel(const Grid& h, double resolution) {
  const long rows = h.rows();
  const long cols = h.cols();
  auto at = [&](long r, long c) {
    return h(std::clamp(r, 0L, rows - 1), std::clamp(c, 0L, cols - 1));
  };
  static const int kx[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};  // along rows
  static const int ky[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};  // along cols
  Grid gr(rows, cols), gc(rows, cols);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      double sr = 0.0, sc = 0.0;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          const double v = at(r + i - 1, c + j - 1);
          sr += kx[i][j] * v;
          sc += ky[i][j] * v;
        }
      }
      gr(r, c) = sr / (4.0 * resolution);
      gc(r, c) = sc / (4.0 * resolution);
    }
  }
  return {gr, gc};
}

Grid naive_sobel_magnitude(const Grid& h, double resolution) {
  const auto [gr, gc] = naive_sobel(h, resolution);
  Grid m(h.rows(), h.cols());
  for (long r = 0; r < h.rows(); ++r) {
    for (long c = 0; c < h.cols(); ++c) m(r, c) = std::sqrt(gr(r, c) * gr(r, c) + gc(r, c) * gc(r, c));
  }
  return m;
}

namespace {

Vec2 centre(const HeightPatch& p, long r, long c) {
  const double cy = std::cos(p.yaw), sy = std::sin(p.yaw);
  const double a = r * p.resolution, b = c * p.resolution;
  return {p.origin.x() + cy * a - sy * b, p.origin.y() + sy * a + cy * b};
}

std::optional<double> nearest_valid_height(const HeightPatch& p, const Vec2& f) {
  std::optional<double> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (long r = 0; r < p.rows(); ++r) {
    for (long c = 0; c < p.cols(); ++c) {
      if (!p.valid(r, c)) continue;
      const double d = (centre(p, r, c) - f).norm();
      if (d < best_d) {
        best_d = d;
        best = p.heights(r, c);
      }
    }
  }
  return best;
}

}  // namespace

std::optional<Obstacle> exhaustive_cone(const HeightPatch& patch, const FootState& foot,
                                        const PenaltyParams& params) {
  if (foot.velocity.norm() == 0.0) return std::nullopt;
  const auto ground = nearest_valid_height(patch, foot.center);
  if (!ground) return std::nullopt;
  const double heading = std::atan2(foot.velocity.y(), foot.velocity.x());
  std::optional<std::tuple<double, long, long>> best;
  for (long r = 0; r < patch.rows(); ++r) {
    for (long c = 0; c < patch.cols(); ++c) {
      if (!patch.valid(r, c)) continue;
      if (!(patch.heights(r, c) - *ground - foot.clearance > params.riser_margin)) continue;
      const Vec2 d = centre(patch, r, c) - foot.center;
      const double d2 = d.x() * d.x() + d.y() * d.y();
      if (d2 == 0.0 || d2 > params.search_radius * params.search_radius) continue;
      double off = std::atan2(d.y(), d.x()) - heading;
      while (off > std::numbers::pi) off -= 2.0 * std::numbers::pi;
      while (off < -std::numbers::pi) off += 2.0 * std::numbers::pi;
      if (std::abs(off) > params.cone_apex_angle / 2.0) continue;
      const auto key = std::make_tuple(d2, r, c);
      if (!best || key < *best) best = key;
    }
  }
  if (!best) return std::nullopt;
  const auto [d2, r, c] = *best;
  const Grid mag = naive_sobel_magnitude(patch.heights, patch.resolution);
  return Obstacle{centre(patch, r, c) - foot.center, mag(r, c)};
}

Collision collision(const HeightPatch& patch, const FootState& foot, const PenaltyParams& params) {
  Collision out;
  const auto hit = exhaustive_cone(patch, foot, params);
  if (!hit) return out;
  out.found = true;
  const double dist = std::hypot(hit->offset.x(), hit->offset.y());
  const double along = (foot.velocity.x() * hit->offset.x() + foot.velocity.y() * hit->offset.y()) / dist;
  out.p_colli = along > 0.0 ? along : 0.0;
  out.d_colli = 1.0 - dist / params.d_unsafe;
  if (out.d_colli < 0.0) out.d_colli = 0.0;
  out.slope = hit->slope;
  out.r_colli = out.slope > params.eps_slope ? -out.p_colli * out.d_colli : 0.0;
  return out;
}

Edge edge(const HeightPatch& w, const FootState& foot, const Vec2& v_cmd,
          const PenaltyParams& params) {
  Edge out;
  if (w.rows() < 3 || w.cols() < 3) return out;
  const auto [gr, gc] = naive_sobel(w.heights, w.resolution);
  const double cy = std::cos(w.yaw), sy = std::sin(w.yaw);
  double gx = 0.0, gy = 0.0, px = 0.0, py = 0.0;
  int ng = 0, np = 0;
  for (long r = 0; r < w.rows(); ++r) {
    for (long c = 0; c < w.cols(); ++c) {
      const double a = gr(r, c), b = gc(r, c);
      if (!std::isfinite(a) || !std::isfinite(b)) continue;
      gx += cy * a - sy * b;
      gy += sy * a + cy * b;
      ++ng;
      if (w.valid(r, c) && std::sqrt(a * a + b * b) > params.edge_grad_threshold) {
        const Vec2 p = centre(w, r, c);
        px += p.x();
        py += p.y();
        ++np;
      }
    }
  }
  if (np == 0) return out;
  out.found = true;
  out.centroid = Vec2(px / np, py / np);
  out.mean_gradient = Vec2(gx / ng, gy / ng);
  out.e_xy = out.centroid - foot.center;
  const double speed = std::hypot(v_cmd.x(), v_cmd.y());
  const double along = (out.e_xy.x() * v_cmd.x() + out.e_xy.y() * v_cmd.y()) / speed;
  const double gv = out.mean_gradient.x() * v_cmd.x() + out.mean_gradient.y() * v_cmd.y();
  out.sign = gv > 0.0 ? -1 : (gv < 0.0 ? 1 : 0);
  if (params.typeset_sign_placement) {
    out.p_edge = out.sign * std::min(0.0, along);
  } else {
    out.p_edge = std::min(0.0, out.sign * along);
  }
  out.d_edge = std::max(0.0, 1.0 - foot.clearance / params.d_min);
  out.r_edge = out.p_edge * out.d_edge;
  return out;
}

stairwise::LocalGrid naive_rasterize(std::span<const stairwise::MapPoint> points,
                                     const stairwise::Pose& foot_pose, double min_confidence) {
  using stairwise::LocalGrid;
  LocalGrid grid;
  grid.frame = foot_pose.level();
  const double yaw = grid.frame.yaw();
  const double c = std::cos(yaw), s = std::sin(yaw);
  const auto& o = grid.frame.position;
  for (int row = 0; row < stairwise::kGridRows; ++row) {
    for (int col = 0; col < stairwise::kGridCols; ++col) {
      std::vector<std::pair<double, double>> members;
      for (const auto& p : points) {
        if (p.confidence < min_confidence) continue;
        const double dx = p.position.x() - o.x();
        const double dy = p.position.y() - o.y();
        const double lx = c * dx + s * dy;
        const double ly = -s * dx + c * dy;
        if (std::floor((lx + 0.7) / 0.05) != row) continue;
        if (std::floor((ly + 0.5) / 0.05) != col) continue;
        members.emplace_back(p.position.z() - o.z(), p.confidence);
      }
      std::sort(members.begin(), members.end());
      double num = 0.0, den = 0.0;
      for (const auto& [z, w] : members) {
        num += w * z;
        den += w;
      }
      if (den > 0.0) {
        grid.heights(row, col) = num / den;
        grid.valid(row, col) = true;
      }
    }
  }
  return grid;
}

Metrics metrics(const Grid& pred, const Grid& gt, const Mask& m_edge, const Mask& m_flat,
                double resolution) {
  Metrics m;
  const Grid mag = naive_sobel_magnitude(pred, resolution);
  double se = 0.0, ee = 0.0, fe = 0.0, fr = 0.0;
  int n = 0, ne = 0, nf = 0;
  for (long r = 0; r < gt.rows(); ++r) {
    for (long c = 0; c < gt.cols(); ++c) {
      const double d = pred(r, c) - gt(r, c);
      se += d * d;
      ++n;
      if (m_edge(r, c)) {
        ee += std::abs(d);
        ++ne;
      }
      if (m_flat(r, c)) {
        fe += std::abs(d);
        fr += mag(r, c);
        ++nf;
      }
    }
  }
  m.g_mse = se / n;
  if (ne > 0) m.e_mae = ee / ne;
  if (nf > 0) {
    m.f_mae = fe / nf;
    m.f_rgh = fr / nf;
  }
  return m;
}

Loss hybrid_loss(const Grid& pred, const Grid& logits, const Grid& gt, const Grid& m_gt,
                 const Mask& m_edge, const Mask& m_flat, const stairwise::LossWeights& w,
                 double resolution) {
  Loss out;
  const long rows = gt.rows(), cols = gt.cols();
  const Grid m_pred = naive_sobel_magnitude(pred, resolution);
  double sh = 0.0, se = 0.0, sr = 0.0, ss = 0.0, sg = 0.0;
  int nr = 0, ns = 0;
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      const double d = pred(r, c) - gt(r, c);
      sh += d * d;
      const double z = std::clamp(logits(r, c), -15.0, 15.0);
      se += m_edge(r, c) ? std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      if (m_edge(r, c)) {
        sr += std::abs(d);
        ++nr;
      }
      if (m_flat(r, c)) {
        double t = 0.0;
        if (r + 1 < rows) {
          const double dr = pred(r + 1, c) - pred(r, c);
          t += std::abs(dr) + dr * dr;
        }
        if (c + 1 < cols) {
          const double dc = pred(r, c + 1) - pred(r, c);
          t += std::abs(dc) + dc * dc;
        }
        ss += t;
        ++ns;
      }
      sg += (1.0 + w.alpha * m_gt(r, c)) * std::abs(m_pred(r, c) - m_gt(r, c));
    }
  }
  const double n = static_cast<double>(rows * cols);
  out.l_h = sh / n;
  out.l_e = se / n;
  out.l_r = nr > 0 ? sr / nr : 0.0;
  out.l_s = ns > 0 ? ss / ns : 0.0;
  out.l_g = sg / n;
  out.l_total = out.l_h + w.lambda_e * out.l_e + w.lambda_r * out.l_r + w.lambda_s * out.l_s +
                w.lambda_g * out.l_g;
  return out;
}

}  // namespace oracle
