#include "stairwise/recon_metrics.hpp"
#include "stairwise/terrain.hpp"

#include "../oracles/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace stairwise;

namespace {

Grid random_grid(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Grid g(kGridRows, kGridCols);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
  return g;
}

Grid stair_grid(double first_riser, double rise) {
  Grid g(kGridRows, kGridCols);
  for (int r = 0; r < kGridRows; ++r)
    for (int c = 0; c < kGridCols; ++c) g(r, c) = r >= first_riser ? rise : 0.0;
  return g;
}

RegionMasks masks_of(const Grid& gt) { return region_masks(gt, MaskThresholds::defaults()); }

bool close(const std::optional<double>& a, const std::optional<double>& b, double tol) {
  if (a.has_value() != b.has_value()) return false;
  return !a || std::abs(*a - *b) <= tol;
}

}  // namespace

TEST_SUITE("recon_metrics") {
  TEST_CASE("masks on a flat grid") {
    const auto m = masks_of(Grid::Zero(kGridRows, kGridCols));
    CHECK(m.m_edge.count() == 0);
    CHECK(m.m_flat.all());
  }

  TEST_CASE("one riser forms an edge band on both sides of the riser line") {
    const auto m = masks_of(stair_grid(12, 0.15));
    for (int r = 0; r < kGridRows; ++r)
      for (int c = 0; c < kGridCols; ++c) {
        const bool band = r == 11 || r == 12;
        CHECK(m.m_edge(r, c) == band);
        CHECK(m.m_flat(r, c) == !band);
      }
  }

  TEST_CASE("ramp gradient between the thresholds lies in neither mask") {
    Grid g(kGridRows, kGridCols);
    for (int r = 0; r < kGridRows; ++r) g.row(r).setConstant(0.3 * 0.05 * r);  // reads 0.6
    const auto m = masks_of(g);
    for (int r = 1; r < kGridRows - 1; ++r)
      for (int c = 0; c < kGridCols; ++c) {
        CHECK_FALSE(m.m_edge(r, c));
        CHECK_FALSE(m.m_flat(r, c));
      }
    const auto lo = region_masks(g, MaskThresholds{0.7, 0.65});
    for (int r = 1; r < kGridRows - 1; ++r) CHECK(lo.m_flat.row(r).all());
  }

  TEST_CASE("threshold validation") {
    CHECK_THROWS_AS(MaskThresholds({0.3, 1.0}).validate(), ValidationError);
    CHECK_THROWS_AS(MaskThresholds({1.0, 0.0}).validate(), ValidationError);
  }

  TEST_CASE("perfect prediction") {
    const Grid gt = stair_grid(10, 0.15);
    const auto r = metrics(gt, gt, masks_of(gt));
    CHECK(r.g_mse == 0.0);
    CHECK(*r.e_mae == 0.0);
    CHECK(*r.f_mae == 0.0);
  }

  TEST_CASE("uniform offset") {
    const Grid gt = stair_grid(10, 0.15);
    const auto masks = masks_of(gt);
    const auto r = metrics(gt + 0.01, gt, masks);
    CHECK(r.g_mse == doctest::Approx(1e-4).epsilon(1e-9));
    CHECK(*r.e_mae == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(*r.f_mae == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(*r.f_rgh == doctest::Approx(*metrics(gt, gt, masks).f_rgh).epsilon(1e-9));
  }

  TEST_CASE("empty masks leave region metrics absent") {
    const Grid gt = Grid::Zero(kGridRows, kGridCols);
    const auto r = metrics(gt, gt, masks_of(gt));
    CHECK_FALSE(r.e_mae);
    CHECK(r.f_mae);
    nlohmann::json j = r;
    CHECK(j["e_mae"].is_null());
  }

  TEST_CASE("metrics and loss match the scalar oracle") {
    std::mt19937_64 rng(4);
    const auto w = LossWeights::defaults();
    for (int i = 0; i < 100; ++i) {
      const Grid gt = stair_grid(5 + i % 15, 0.05 + 0.002 * i) + random_grid(rng, 0.005);
      const Grid pred = gt + random_grid(rng, 0.02);
      const Grid logits = random_grid(rng, 5.0);
      const auto masks = masks_of(gt);
      const auto m = metrics(pred, gt, masks);
      const auto om = oracle::metrics(pred, gt, masks.m_edge, masks.m_flat, kGridResolution);
      CHECK(std::abs(m.g_mse - om.g_mse) <= 1e-12);
      CHECK(close(m.e_mae, om.e_mae, 1e-12));
      CHECK(close(m.f_mae, om.f_mae, 1e-12));
      CHECK(close(m.f_rgh, om.f_rgh, 1e-12));
      const auto l = hybrid_loss(pred, logits, gt, masks, w);
      const auto ol = oracle::hybrid_loss(pred, logits, gt, masks.m_gt, masks.m_edge, masks.m_flat, w,
                                          kGridResolution);
      CHECK(std::abs(l.l_h - ol.l_h) <= 1e-12);
      CHECK(std::abs(l.l_e - ol.l_e) <= 1e-12);
      CHECK(std::abs(l.l_r - ol.l_r) <= 1e-12);
      CHECK(std::abs(l.l_s - ol.l_s) <= 1e-12);
      CHECK(std::abs(l.l_g - ol.l_g) <= 1e-12);
      CHECK(std::abs(l.l_total - ol.l_total) <= 1e-12);
    }
  }

  TEST_CASE("global optimum") {
    const Grid gt = stair_grid(10, 0.15);
    const auto masks = masks_of(gt);
    Grid logits(kGridRows, kGridCols);
    for (Eigen::Index i = 0; i < logits.size(); ++i)
      logits.data()[i] = masks.m_edge.data()[i] ? 1e9 : -1e9;
    const auto l = hybrid_loss(gt, logits, gt, masks, LossWeights::defaults());
    CHECK(l.l_h == 0.0);
    CHECK(l.l_e < 1e-6);
    CHECK(l.l_r == 0.0);
    CHECK(l.l_g == 0.0);
    CHECK(l.l_total < 1e-6);
  }

  TEST_CASE("zero amplification reduces the gradient loss to a plain MAE") {
    std::mt19937_64 rng(6);
    const Grid gt = stair_grid(10, 0.15);
    const Grid pred = gt + random_grid(rng, 0.03);
    auto w = LossWeights::defaults();
    w.alpha = 0.0;
    const auto masks = masks_of(gt);
    const auto l = hybrid_loss(pred, Grid::Zero(kGridRows, kGridCols), gt, masks, w);
    const Grid m_pred = sobel_magnitude(pred, kGridResolution);
    CHECK(l.l_g == doctest::Approx((m_pred - masks.m_gt).abs().mean()).epsilon(1e-12));
  }

  TEST_CASE("zero lambdas leave only the height term") {
    std::mt19937_64 rng(7);
    const Grid gt = stair_grid(10, 0.15);
    const Grid pred = gt + random_grid(rng, 0.03);
    LossWeights w{0.0, 0.0, 0.0, 0.0, 4.0};
    const auto l = hybrid_loss(pred, random_grid(rng, 1.0), gt, masks_of(gt), w);
    CHECK(l.l_total == l.l_h);
  }

  TEST_CASE("smoothness term ignores constant offsets") {
    std::mt19937_64 rng(8);
    const Grid gt = stair_grid(10, 0.15);
    const Grid pred = gt + random_grid(rng, 0.03);
    const auto masks = masks_of(gt);
    const Grid z = Grid::Zero(kGridRows, kGridCols);
    const double a = hybrid_loss(pred, z, gt, masks, LossWeights::defaults()).l_s;
    const double b = hybrid_loss(pred + 0.37, z, gt, masks, LossWeights::defaults()).l_s;
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }

  TEST_CASE("terms are non-negative") {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 20; ++i) {
      const Grid gt = stair_grid(8 + i % 10, 0.12) + random_grid(rng, 0.01);
      const auto l = hybrid_loss(gt + random_grid(rng, 0.05), random_grid(rng, 3.0), gt, masks_of(gt),
                                 LossWeights::defaults());
      CHECK(l.l_h >= 0);
      CHECK(l.l_e >= 0);
      CHECK(l.l_r >= 0);
      CHECK(l.l_s >= 0);
      CHECK(l.l_g >= 0);
    }
  }

  TEST_CASE("shape mismatch") {
    const Grid a = Grid::Zero(kGridRows, kGridCols);
    const Grid b = Grid::Zero(kGridRows, kGridCols + 1);
    CHECK_THROWS_AS(metrics(b, a, masks_of(a)), ShapeError);
    CHECK_THROWS_AS(hybrid_loss(b, a, a, masks_of(a), LossWeights::defaults()), ShapeError);
  }
}
