#include "stairwise/foothold_penalty.hpp"

#include "../oracles/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace stairwise;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

PenaltyParams defaults() { return PenaltyParams::defaults(); }

FootState foot_at(const Vec2& c, const Vec2& v, double clearance = 0.0, double heading = 0.0) {
  FootState f;
  f.center = c;
  f.velocity = v;
  f.clearance = clearance;
  f.heading = heading;
  f.sole_extent = defaults().default_sole;
  return f;
}

HeightField stairs(double first_riser_x, double rise = 0.15, double tread = 0.30,
                   double yaw = 0.0, TerrainKind kind = TerrainKind::kStairsUp) {
  TerrainSpec s;
  s.kind = kind;
  s.step_height = rise;
  s.tread_depth = tread;
  s.yaw = yaw;
  s.origin = Vec2(first_riser_x, 0.0);
  return make_terrain(s);
}

/// Axis-aligned raster with cell (r, c) at origin + (r, c) * 0.05.
HeightPatch raster(const HeightField& f, const Vec2& origin, int rows, int cols) {
  HeightPatch p;
  p.origin = origin;
  p.heights.resize(rows, cols);
  p.valid.setConstant(rows, cols, true);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const Vec2 x = p.cell_center(r, c);
      p.heights(r, c) = f.height_at(x.x(), x.y());
    }
  return p;
}

HeightPatch flat_patch(int n) {
  HeightPatch p;
  p.origin = Vec2(-n * 0.05, -n * 0.05);
  p.heights.setZero(2 * n + 1, 2 * n + 1);
  p.valid.setConstant(2 * n + 1, 2 * n + 1, true);
  return p;
}

}  // namespace

TEST_SUITE("foothold_penalty") {
  TEST_CASE("defaults") {
    const auto p = defaults();
    CHECK(p.d_unsafe == 0.20);
    CHECK(p.d_min == 0.10);
    CHECK(p.eps_slope == 1.2);
    CHECK(p.cone_apex_angle == doctest::Approx(30.0 * kDeg));
    CHECK(p.w1 == 1.0);
    CHECK(p.w2 == 1.0);
    CHECK_FALSE(p.typeset_sign_placement);
  }

  TEST_CASE("flat ground has no obstacle") {
    const HeightField f = make_terrain(TerrainSpec{});
    CHECK_FALSE(nearest_obstacle_in_cone(f, foot_at(Vec2::Zero(), Vec2(1, 0)), defaults()));
  }

  TEST_CASE("riser 0.10 m ahead") {
    const HeightField f = stairs(0.095);
    const FootState foot = foot_at(Vec2::Zero(), Vec2(1.0, 0.0));
    const auto hit = nearest_obstacle_in_cone(f, foot, defaults());
    REQUIRE(hit);
    CHECK(hit->offset.norm() == doctest::Approx(0.10).epsilon(1e-12));
    CHECK(hit->slope > defaults().eps_slope);
    const auto o = oracle::exhaustive_cone(collision_patch(f, foot, defaults()), foot, defaults());
    REQUIRE(o);
    CHECK((o->offset - hit->offset).norm() <= 1e-12);
    CHECK(std::abs(o->slope - hit->slope) <= 1e-12);
  }

  TEST_CASE("collision worked example") {
    const HeightField f = stairs(0.095);
    const auto t = collision_penalty(f, foot_at(Vec2::Zero(), Vec2(1.0, 0.0)), defaults());
    CHECK(t.p_colli == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t.d_colli == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(t.r_colli == doctest::Approx(-0.5).epsilon(1e-12));
  }

  TEST_CASE("cone bearing") {
    auto patch_with_peak = [](int r, int c) {
      HeightPatch p = flat_patch(10);
      p.heights(10 + r, 10 + c) = 0.2;
      return p;
    };
    const HeightPatch p = patch_with_peak(4, 2);
    const double bearing = std::atan2(2.0, 4.0);
    auto at = [&](double off) {
      const double a = bearing - off;
      return nearest_obstacle_in_cone(p, foot_at(Vec2::Zero(), Vec2(std::cos(a), std::sin(a))),
                                      defaults());
    };
    CHECK_FALSE(at(40.0 * kDeg));
    CHECK_FALSE(at(-40.0 * kDeg));
    CHECK_FALSE(at(15.1 * kDeg));
    CHECK(at(14.9 * kDeg));
    CHECK(at(-14.9 * kDeg));
    CHECK(at(0.0));
    CHECK_FALSE(nearest_obstacle_in_cone(p, foot_at(Vec2::Zero(), Vec2::Zero()), defaults()));
  }

  TEST_CASE("cells at the sole height plus the margin are not obstacles") {
    HeightPatch p = flat_patch(6);
    p.heights(10, 6) = 0.03;
    const FootState foot = foot_at(Vec2::Zero(), Vec2(1, 0));
    CHECK_FALSE(nearest_obstacle_in_cone(p, foot, defaults()));
    p.heights(10, 6) = 0.0301;
    CHECK(nearest_obstacle_in_cone(p, foot, defaults()));
    FootState lifted = foot;
    lifted.clearance = 0.05;
    CHECK_FALSE(nearest_obstacle_in_cone(p, lifted, defaults()));
  }

  TEST_CASE("slope endpoints are exempt") {
    for (double angle : {0.1, 0.25, 0.4}) {
      TerrainSpec s;
      s.kind = TerrainKind::kSlopeUp;
      s.slope_angle = angle;
      const HeightField f = make_terrain(s);
      const auto t = collision_penalty(f, foot_at(Vec2(0.3, 0.0), Vec2(1.0, 0.0)), defaults());
      REQUIRE(t.obstacle);
      CHECK(t.slope <= defaults().eps_slope);
      CHECK(t.r_colli == 0.0);
    }
  }

  TEST_CASE("distance factor boundaries and monotonicity") {
    const auto p = defaults();
    double previous = -1.0;
    for (int k = 1; k <= 5; ++k) {
      const double riser = k * 0.05 - 0.005;  // obstacle cell at k * 0.05
      const auto t = collision_penalty(stairs(riser), foot_at(Vec2::Zero(), Vec2(1.0, 0.0)), p);
      REQUIRE(t.obstacle);
      CHECK(t.d_colli == doctest::Approx(std::max(0.0, 1.0 - k * 0.05 / p.d_unsafe)));
      CHECK(t.r_colli >= previous);
      previous = t.r_colli;
    }
    CHECK(previous == 0.0);  // 0.25 m is beyond d_unsafe
  }

  TEST_CASE("speed scales the projection") {
    const HeightField f = stairs(0.095);
    const auto slow = collision_penalty(f, foot_at(Vec2::Zero(), Vec2(0.4, 0.0)), defaults());
    CHECK(slow.p_colli == doctest::Approx(0.4));
    CHECK(slow.r_colli == doctest::Approx(-0.2));
  }

  TEST_CASE("edge worked example") {
    // Cells sit 5 mm off the foot, so the riser cells at +5 mm and +55 mm put
    // the edge centroid 3 cm ahead.
    const HeightField f = stairs(0.03);
    const FootState foot = foot_at(Vec2::Zero(), Vec2(0.5, 0.0), 0.02);
    const HeightPatch w = raster(f, Vec2(-0.145, -0.1), 7, 5);
    const auto t = edge_penalty(w, foot, Vec2(0.5, 0.0), defaults());
    REQUIRE(t.edges);
    CHECK(t.e_xy.x() == doctest::Approx(0.03).epsilon(1e-12));
    CHECK(std::abs(t.e_xy.y()) <= 1e-12);
    CHECK(t.sign == -1);
    CHECK(t.p_edge == doctest::Approx(-0.03).epsilon(1e-12));
    CHECK(t.d_edge == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(t.r_edge == doctest::Approx(-0.024).epsilon(1e-12));
  }

  TEST_CASE("edge truth table") {
    const Vec2 cmd(0.5, 0.0);
    const FootState foot = foot_at(Vec2::Zero(), cmd, 0.0);
    auto term = [&](TerrainKind kind, double riser, bool typeset) {
      auto p = defaults();
      p.typeset_sign_placement = typeset;
      return edge_penalty(stairs(riser, 0.15, 0.30, 0.0, kind), foot, cmd, p);
    };
    // ascent: front negative, rear zero
    CHECK(term(TerrainKind::kStairsUp, 0.06, false).r_edge < 0.0);
    CHECK(term(TerrainKind::kStairsUp, -0.04, false).r_edge == 0.0);
    // descent mirrors it
    CHECK(term(TerrainKind::kStairsDown, 0.06, false).r_edge == 0.0);
    CHECK(term(TerrainKind::kStairsDown, -0.04, false).r_edge < 0.0);
    // typeset placement swaps which half is penalised and flips the sign
    CHECK(term(TerrainKind::kStairsUp, 0.06, true).r_edge == 0.0);
    CHECK(term(TerrainKind::kStairsUp, -0.04, true).r_edge > 0.0);
  }

  TEST_CASE("symmetric risers put the centroid at the foot") {
    HeightPatch w = flat_patch(3);
    for (int c = 0; c < 7; ++c) {
      w.heights(0, c) = 0.15;
      w.heights(6, c) = 0.15;
    }
    const auto t = edge_penalty(w, foot_at(Vec2::Zero(), Vec2(1, 0)), Vec2(1, 0), defaults());
    REQUIRE(t.edges);
    CHECK(t.e_xy.norm() <= 1e-12);
    CHECK(t.r_edge == 0.0);
  }

  TEST_CASE("straddled riser puts the centroid on the riser line") {
    for (double riser : {-0.04, -0.013, 0.001, 0.021, 0.049}) {
      const HeightField f = stairs(riser);
      const FootState foot = foot_at(Vec2::Zero(), Vec2(1, 0));
      const auto e = edge_points_under_foot(f, foot, defaults());
      REQUIRE(e);
      CHECK(std::abs(e->centroid.x() - riser) <= 0.5 * kGridResolution);
    }
  }

  TEST_CASE("height weighting") {
    const HeightField f = stairs(0.06);
    for (double dz : {0.0, 0.05, 0.1, 0.2}) {
      const auto t = edge_penalty(f, foot_at(Vec2::Zero(), Vec2(1, 0), dz), Vec2(1, 0), defaults());
      CHECK(t.d_edge == doctest::Approx(std::max(0.0, 1.0 - dz / 0.1)));
    }
  }

  TEST_CASE("command reversal leaves the edge term unchanged") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (int i = 0; i < 50; ++i) {
      const HeightField f = stairs(u(rng), 0.15, 0.3, u(rng));
      const FootState foot = foot_at(Vec2::Zero(), Vec2(1, 0), 0.03);
      const Vec2 cmd(std::cos(u(rng)), std::sin(u(rng)));
      const auto a = edge_penalty(f, foot, cmd, defaults());
      const auto b = edge_penalty(f, foot, -cmd, defaults());
      CHECK(a.sign == -b.sign);
      CHECK(std::abs(a.r_edge - b.r_edge) <= 1e-12);
    }
  }

  TEST_CASE("zero command rejected") {
    CHECK_THROWS_AS(edge_penalty(flat_patch(3), foot_at(Vec2::Zero(), Vec2(1, 0)), Vec2::Zero(),
                                 defaults()),
                    ValidationError);
  }

  TEST_CASE("weights isolate terms and feet sum") {
    const HeightField f = stairs(0.095);
    const Vec2 cmd(1.0, 0.0);
    const FootState near = foot_at(Vec2::Zero(), Vec2(1, 0));
    const FootState far = foot_at(Vec2(-1.0, 0.0), Vec2(1, 0));
    auto p = defaults();
    const auto one = unsafe_stepping(f, std::span<const FootState>(&near, 1), cmd, p);
    CHECK(one.r_safe == doctest::Approx(one.feet[0].collision.r_colli + one.feet[0].edge.r_edge));
    const std::vector<FootState> both{near, far};
    const auto two = unsafe_stepping(f, both, cmd, p);
    CHECK(two.feet[1].r_safe == 0.0);
    CHECK(two.r_safe == doctest::Approx(one.r_safe));
    const std::vector<FootState> twice{near, near};
    CHECK(unsafe_stepping(f, twice, cmd, p).r_safe == doctest::Approx(2.0 * one.r_safe));
    p.w1 = 0.0;
    const auto edge_only = unsafe_stepping(f, std::span<const FootState>(&near, 1), cmd, p);
    CHECK(edge_only.r_safe == doctest::Approx(p.w2 * edge_only.feet[0].edge.r_edge));
    CHECK(one.feet[0].collision.r_colli == doctest::Approx(-0.5));
  }

  TEST_CASE("matches the oracle on random scenes") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto p = defaults();
    for (int i = 0; i < 200; ++i) {
      const HeightField f = stairs(-0.3 + 0.6 * u(rng), 0.05 + 0.18 * u(rng), 0.25 + 0.35 * u(rng),
                                   (u(rng) - 0.5) * 1.0,
                                   u(rng) < 0.5 ? TerrainKind::kStairsUp : TerrainKind::kStairsDown);
      const double a = 2 * std::numbers::pi * u(rng);
      const FootState foot = foot_at(Vec2(0.1 * u(rng), 0.1 * u(rng)), Vec2(std::cos(a), std::sin(a)),
                                     0.12 * u(rng), (u(rng) - 0.5));
      const Vec2 cmd(std::cos(a + 0.3), std::sin(a + 0.3));
      const HeightPatch patch = collision_patch(f, foot, p);
      const HeightPatch window = sample_foot_window(f, foot, p);
      const auto c = collision_penalty(patch, foot, p);
      const auto oc = oracle::collision(patch, foot, p);
      CHECK(c.obstacle.has_value() == oc.found);
      CHECK(std::abs(c.r_colli - oc.r_colli) <= 1e-9);
      CHECK(std::abs(c.p_colli - oc.p_colli) <= 1e-9);
      CHECK(std::abs(c.d_colli - oc.d_colli) <= 1e-9);
      const auto e = edge_penalty(window, foot, cmd, p);
      const auto oe = oracle::edge(window, foot, cmd, p);
      CHECK(e.edges.has_value() == oe.found);
      CHECK(std::abs(e.r_edge - oe.r_edge) <= 1e-9);
      CHECK(e.sign == oe.sign);
    }
  }

  TEST_CASE("penalty field") {
    const auto p = defaults();
    const SweepGrid sweep{Vec2(-1.0, -0.5), 0.05, 41, 21};
    FootState tmpl = foot_at(Vec2::Zero(), Vec2(0.5, 0.0), 0.05);
    const auto flat = penalty_field(make_terrain(TerrainSpec{}), Vec2(0.5, 0.0), tmpl, p, sweep);
    REQUIRE(flat.size() == 41u * 21u);
    for (const auto& s : flat) CHECK(s.r_safe == 0.0);

    const double tread = 0.30;
    const HeightField f = stairs(0.0, 0.15, tread);
    const auto field = penalty_field(f, Vec2(0.5, 0.0), tmpl, p, sweep);
    int negatives = 0;
    for (const auto& s : field) {
      CHECK(s.r_safe <= 0.0);
      CHECK(s.r_safe >= -(p.w1 * 0.5 + p.w2 * (tmpl.sole_extent.x() / 2 + p.window_margin)));
      if (s.r_safe < 0.0) {
        ++negatives;
        // Distance to the nearest riser line (x = k * tread, k >= 0).
        double dist = std::abs(s.x);
        for (int k = 1; k < 10; ++k) dist = std::min(dist, std::abs(s.x - k * tread));
        CHECK(dist <= std::max(p.d_unsafe, tmpl.sole_extent.x() / 2 + p.window_margin) +
                          kGridResolution);
      }
    }
    CHECK(negatives > 0);
    CHECK_THROWS_AS(penalty_field(f, Vec2(0.5, 0.0), tmpl, p, SweepGrid{}), ValidationError);
  }

  TEST_CASE("local grid path agrees with the field path on a clean grid") {
    const HeightField f = stairs(0.095);
    LocalGrid g;
    g.frame = Pose::from_yaw(Vec3::Zero(), 0.0);
    for (int r = 0; r < kGridRows; ++r)
      for (int c = 0; c < kGridCols; ++c) {
        const Vec3 w = g.cell_center_world(r, c);
        g.heights(r, c) = f.height_at(w.x(), w.y());
        g.valid(r, c) = true;
      }
    const FootState foot = foot_at(Vec2(-0.025, 0.025), Vec2(1, 0));
    const auto s = unsafe_stepping(g, std::span<const FootState>(&foot, 1), Vec2(1, 0), defaults());
    REQUIRE(s.feet[0].collision.obstacle);
    CHECK(s.feet[0].collision.r_colli < 0.0);
  }

  TEST_CASE("validation") {
    auto p = defaults();
    p.cone_apex_angle = 0.0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    FootState f = foot_at(Vec2::Zero(), Vec2(1, 0));
    f.clearance = -0.1;
    CHECK_THROWS_AS(f.validate(), ValidationError);
    CHECK_THROWS_AS(unsafe_stepping(make_terrain(TerrainSpec{}), std::span<const FootState>(), Vec2(1, 0),
                                    defaults()),
                    ValidationError);
  }
}
