#include "doctest.h"

#include <cmath>

#include "evtrack/event_flow.hpp"
#include "evtrack/scene_sim.hpp"
#include "oracles.hpp"

using namespace evtrack;
using namespace evtrack::testing;

namespace {

CameraIntrinsics small_sensor(int w, int h) {
  CameraIntrinsics k;
  k.width = w;
  k.height = h;
  k.cx = w / 2.0;
  k.cy = h / 2.0;
  return k;
}

bool same_batches(const std::vector<FlowBatch>& a, const std::vector<FlowBatch>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t n = 0; n < a.size(); ++n) {
    if (a[n].t_end != b[n].t_end || a[n].measurements.size() != b[n].measurements.size()) return false;
    for (std::size_t m = 0; m < a[n].measurements.size(); ++m) {
      const auto& x = a[n].measurements[m];
      const auto& y = b[n].measurements[m];
      if (x.u != y.u || x.v != y.v || x.t != y.t || x.flow != y.flow || x.n_support != y.n_support) {
        return false;
      }
    }
  }
  return true;
}

// Vertical straight edge at depth z translating along +x.
Scene vertical_edge_scene(double px_per_s, double z, double duration) {
  const CameraIntrinsics k;
  ObjectModel m;
  m.name = "vertical_edge";
  for (int n = 0; n < 12; ++n) {
    FeaturePoint fp;
    fp.p = Vector3d(0.0, (n - 5.5) * 0.02, 0.0);  // ~10 px apart at 1 m
    fp.edge_dir = Vector3d::UnitY();
    m.points.push_back(fp);
  }
  Trajectory traj({Vector3d(-0.1, 0.0, z), UnitQuaternion::identity()});
  traj.append(duration, {Vector3d(px_per_s * z / k.fx, 0.0, 0.0), Vector3d::Zero()});
  return {ScenePreset::aperture, m, traj};
}

}  // namespace

TEST_SUITE("event_flow") {

TEST_CASE("params validation") {
  TripletConstraintParams p;
  CHECK_NOTHROW(p.validate());
  p.xi = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.spatial_radius = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.temporal_window = -1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  FlowEngineConfig c;
  c.roi_cell_size = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.batch_interval = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("collinear triplet") {
  const std::vector<Event> ev = {{0.00, 10, 10, 1}, {0.01, 11, 10, 1}, {0.02, 12, 10, 1}};
  const auto c = search_triplets(ev, {}, small_sensor(32, 32));
  REQUIRE(c.size() == 1);
  CHECK(c[0].flow.x() == doctest::Approx(100.0));
  CHECK(c[0].flow.y() == 0.0);
  CHECK(c[0].u_i == 10);
  CHECK(c[0].v_i == 10);
  CHECK(c[0].i == 0);
  CHECK(c[0].k == 2);
}

TEST_CASE("degenerate inputs give no candidates") {
  const auto k = small_sensor(32, 32);
  const std::vector<Event> two = {{0.00, 10, 10, 1}, {0.01, 11, 10, 1}};
  CHECK(search_triplets(two, {}, k).empty());
  // Equal timestamps are skipped.
  const std::vector<Event> tie = {{0.01, 10, 10, 1}, {0.01, 11, 10, 1}, {0.02, 12, 10, 1}};
  CHECK(search_triplets(tie, {}, k).empty());
  // Unequal hops.
  const std::vector<Event> bent = {{0.00, 10, 10, 1}, {0.01, 11, 10, 1}, {0.02, 12, 11, 1}};
  CHECK(search_triplets(bent, {}, k).empty());
  // Hop durations differing by more than xi.
  const std::vector<Event> slow = {{0.00, 10, 10, 1}, {0.01, 11, 10, 1}, {0.0215, 12, 10, 1}};
  CHECK(search_triplets(slow, {}, k).empty());
  // Span over the temporal window.
  const std::vector<Event> old = {{0.00, 10, 10, 1}, {0.02, 11, 10, 1}, {0.04, 12, 10, 1}};
  CHECK(search_triplets(old, {}, k).empty());
  // Hop beyond the spatial radius.
  const std::vector<Event> far = {{0.00, 10, 10, 1}, {0.01, 14, 10, 1}, {0.02, 18, 10, 1}};
  CHECK(search_triplets(far, {}, k).empty());
}

TEST_CASE("polarity is ignored unless requested") {
  const std::vector<Event> ev = {{0.00, 10, 10, 1}, {0.01, 11, 10, -1}, {0.02, 12, 10, 1}};
  const auto k = small_sensor(32, 32);
  CHECK(search_triplets(ev, {}, k).size() == 1);
  TripletConstraintParams p;
  p.same_polarity = true;
  CHECK(search_triplets(ev, p, k).empty());
}

TEST_CASE("ring buffer keeps the latest events per pixel") {
  std::vector<Event> ev = {{0.000, 10, 10, 1}};
  for (int n = 1; n <= 4; ++n) ev.push_back({0.0001 * n, 10, 10, 1});  // pushes the first one out
  ev.push_back({0.010, 11, 10, 1});
  ev.push_back({0.020, 12, 10, 1});
  TripletConstraintParams p;
  p.pixel_depth = 4;
  const auto c = search_triplets(ev, p, small_sensor(32, 32));
  CHECK(keys_of(c) == brute_force_triplets(ev, p));
  for (const auto& x : c) CHECK(x.i != 0);
  p.pixel_depth = 5;
  const auto c5 = search_triplets(ev, p, small_sensor(32, 32));
  CHECK(c5.size() == c.size() + 1);
}

TEST_CASE("out-of-order and out-of-sensor streams are rejected") {
  const auto k = small_sensor(32, 32);
  const std::vector<Event> bad = {{0.02, 10, 10, 1}, {0.01, 11, 10, 1}};
  CHECK_THROWS_AS(search_triplets(bad, {}, k), DataError);
  CHECK_THROWS_AS(run_flow_engine(bad, {}, k), DataError);
  const std::vector<Event> outside = {{0.01, 32, 10, 1}};
  CHECK_THROWS_AS(search_triplets(outside, {}, k), DataError);
  CHECK_THROWS_AS(run_flow_engine(outside, {}, k), DataError);
  const std::vector<Event> negative = {{-0.01, 1, 1, 1}};
  CHECK_THROWS_AS(run_flow_engine(negative, {}, k), DataError);
}

TEST_CASE("triplet search equals exhaustive enumeration") {
  Gen g(101);
  const auto k = small_sensor(24, 20);
  std::size_t total = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const auto ev = random_stream(g, k.width, k.height, 400);
    const auto p = random_params(g);
    const auto c = search_triplets(ev, p, k);
    const auto keys = keys_of(c);
    CHECK(keys.size() == c.size());  // no duplicates
    CHECK(keys == brute_force_triplets(ev, p));
    total += c.size();
  }
  CHECK(total > 100);  // the generator must exercise matches
}

TEST_CASE("aggregation examples") {
  RoiGrid grid(64, 64, 16);
  CHECK(aggregate_roi_flow(grid, 0.01).empty());

  for (std::size_t e = 0; e < 5; ++e) grid.add({e, 3, 4, 0.001 * e, Vector2d(5, 0)});
  auto out = aggregate_roi_flow(grid, 0.01);
  REQUIRE(out.size() == 1);
  CHECK(out[0].flow == Vector2d(5, 0));
  CHECK(roi_flow_cost(grid.cell(grid.active_cells()[0]), out[0].flow) == 0.0);
  CHECK(out[0].t == 0.01);
  CHECK(out[0].u == 3);
  CHECK(out[0].v == 4);

  grid.clear();
  for (std::size_t e = 0; e < 9; ++e) grid.add({e, 20, 20, 0.001, Vector2d(5, 0)});
  grid.add({9, 20, 20, 0.0, Vector2d(50, 50)});
  out = aggregate_roi_flow(grid, 0.01);
  REQUIRE(out.size() == 1);
  CHECK(out[0].flow == Vector2d(5, 0));
  // By hand: 9 * 0 + |(5,0)-(50,50)| for (5,0) against 9 * |(50,50)-(5,0)| for the outlier.
  const double d = std::hypot(45.0, 50.0);
  const auto& cell = grid.cell(grid.active_cells()[0]);
  CHECK(roi_flow_cost(cell, Vector2d(5, 0)) == doctest::Approx(d));
  CHECK(roi_flow_cost(cell, Vector2d(50, 50)) == doctest::Approx(9 * d));
}

TEST_CASE("aggregation tie goes to the earliest candidate") {
  RoiGrid grid(64, 64, 16);
  grid.add({0, 1, 1, 0.002, Vector2d(10, 0)});
  grid.add({1, 1, 1, 0.001, Vector2d(-10, 0)});
  const auto out = aggregate_roi_flow(grid, 0.01);
  REQUIRE(out.size() == 1);
  CHECK(out[0].flow == Vector2d(-10, 0));
}

TEST_CASE("aggregation anchor and per-event minimum") {
  RoiGrid grid(64, 64, 16);
  // Event 0 has two candidates; only the closer one counts.
  grid.add({0, 16, 16, 0.0, Vector2d(100, 0)});
  grid.add({0, 16, 16, 0.0, Vector2d(0, 100)});
  grid.add({1, 19, 17, 0.0, Vector2d(0, 90)});
  const auto& cell = grid.cell(grid.active_cells()[0]);
  CHECK(roi_flow_cost(cell, Vector2d(0, 100)) == doctest::Approx(10.0));
  const auto out = aggregate_roi_flow(grid, 0.01);
  REQUIRE(out.size() == 1);
  CHECK(out[0].flow == Vector2d(0, 100));
  CHECK(out[0].u == 17);  // round(51 / 3)
  CHECK(out[0].v == 16);  // round(49 / 3)
  CHECK(out[0].n_support == 3);
}

TEST_CASE("aggregation is optimal on random cells") {
  Gen g(102);
  for (int trial = 0; trial < 200; ++trial) {
    RoiGrid grid(64, 48, g.integer(2, 20));
    const int n = g.integer(1, 60);
    for (int e = 0; e < n; ++e) {
      const int reps = g.integer(1, 3);
      const int u = g.integer(0, 63), v = g.integer(0, 47);
      for (int r = 0; r < reps; ++r) {
        Vector2d f(g.normal(50), g.normal(50));
        if (g.integer(0, 3) == 0) f = Vector2d(std::round(f.x() / 25) * 25, std::round(f.y() / 25) * 25);
        grid.add({static_cast<std::size_t>(e), u, v, g.uniform(0, 0.01), f});
      }
    }
    const auto out = aggregate_roi_flow(grid, 0.01);
    CHECK(aggregation_is_optimal(grid, out));
  }
}

TEST_CASE("roi grid layout") {
  RoiGrid grid(50, 33, 16);
  CHECK(grid.cols() == 4);
  CHECK(grid.rows() == 3);
  CHECK_THROWS_AS(grid.add({0, 50, 0, 0.0, Vector2d::Zero()}), std::out_of_range);
  grid.add({0, 49, 32, 0.0, Vector2d::Zero()});
  grid.add({1, 0, 0, 0.0, Vector2d::Zero()});
  CHECK(grid.active_cells() == std::vector<int>{0, 11});
  CHECK_THROWS_AS(RoiGrid(10, 10, 1), std::invalid_argument);
}

TEST_CASE("engine on an empty stream") {
  CHECK(run_flow_engine({}, {}, CameraIntrinsics{}).empty());
  const auto b = run_flow_engine({}, {}, CameraIntrinsics{}, 0.05);
  REQUIRE(b.size() == 5);
  for (const auto& x : b) CHECK(x.measurements.empty());
  CHECK(b.back().t_end == doctest::Approx(0.05));
}

TEST_CASE("engine batches attribute candidates to the closing event") {
  const std::vector<Event> ev = {{0.004, 10, 10, 1}, {0.008, 11, 10, 1}, {0.012, 12, 10, 1}};
  const auto b = run_flow_engine(ev, {}, small_sensor(32, 32));
  REQUIRE(b.size() == 2);
  CHECK(b[0].measurements.empty());
  REQUIRE(b[1].measurements.size() == 1);
  CHECK(b[1].t_end == doctest::Approx(0.02));
  CHECK(b[1].measurements[0].flow.x() == doctest::Approx(250.0));
}

TEST_CASE("engine matches search plus per-batch aggregation") {
  Gen g(103);
  const auto k = small_sensor(48, 32);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ev = random_stream(g, k.width, k.height, 500);
    FlowEngineConfig cfg;
    cfg.triplet = random_params(g);
    cfg.roi_cell_size = g.integer(4, 16);
    cfg.batch_interval = g.uniform(0.005, 0.03);
    const auto batches = run_flow_engine(ev, cfg, k);
    const auto cands = search_triplets(ev, cfg.triplet, k);
    std::vector<FlowBatch> expected;
    std::size_t next = 0;
    for (std::int64_t m = 0; !ev.empty() && static_cast<double>(m) * cfg.batch_interval <= ev.back().t; ++m) {
      RoiGrid grid(k.width, k.height, cfg.roi_cell_size);
      while (next < cands.size() &&
             std::floor(ev[cands[next].k].t / cfg.batch_interval) == static_cast<double>(m)) {
        const auto& c = cands[next++];
        grid.add({c.i, c.u_i, c.v_i, c.t_i, c.flow});
      }
      const double t_end = static_cast<double>(m + 1) * cfg.batch_interval;
      expected.push_back({t_end, aggregate_roi_flow(grid, t_end)});
      CHECK(aggregation_is_optimal(grid, expected.back().measurements));
    }
    CHECK(next == cands.size());
    CHECK(same_batches(batches, expected));
  }
}

TEST_CASE("engine is deterministic") {
  const Scene s = make_scene(ScenePreset::regular, 1.0, 5);
  SimConfig sim;
  const auto ev = generate_events(s.model, s.trajectory, sim, 5);
  const auto a = run_flow_engine(ev, {}, sim.intrinsics, 1.0);
  const auto b = run_flow_engine(ev, {}, sim.intrinsics, 1.0);
  CHECK(same_batches(a, b));
}

TEST_CASE("translating edge gives its analytic flow") {
  for (double speed : {150.0, 600.0}) {
    const Scene s = vertical_edge_scene(speed, 1.0, 0.4);
    SimConfig sim;
    const auto ev = generate_events(s.model, s.trajectory, sim, 1);
    REQUIRE(!ev.empty());
    const auto batches = run_flow_engine(ev, {}, sim.intrinsics);
    int n = 0;
    for (const auto& b : batches) {
      for (const auto& m : b.measurements) {
        CHECK((m.flow - Vector2d(speed, 0.0)).norm() <= 0.05 * speed);
        ++n;
      }
    }
    CHECK(n > 20);
  }
}

TEST_CASE("translation covariance") {
  Gen g(104);
  const auto k = small_sensor(64, 64);
  for (int trial = 0; trial < 20; ++trial) {
    auto ev = random_stream(g, 32, 32, 400);
    FlowEngineConfig cfg;
    cfg.roi_cell_size = 8;
    const int su = 8 * g.integer(0, 4), sv = 8 * g.integer(0, 4);
    auto shifted = ev;
    for (auto& e : shifted) {
      e.u += su;
      e.v += sv;
    }
    const auto a = run_flow_engine(ev, cfg, k);
    const auto b = run_flow_engine(shifted, cfg, k);
    REQUIRE(a.size() == b.size());
    for (std::size_t n = 0; n < a.size(); ++n) {
      REQUIRE(a[n].measurements.size() == b[n].measurements.size());
      for (std::size_t m = 0; m < a[n].measurements.size(); ++m) {
        CHECK(b[n].measurements[m].u == a[n].measurements[m].u + su);
        CHECK(b[n].measurements[m].v == a[n].measurements[m].v + sv);
        CHECK(b[n].measurements[m].flow == a[n].measurements[m].flow);
      }
    }
  }
}

TEST_CASE("time scaling divides flow") {
  Gen g(105);
  const auto k = small_sensor(32, 32);
  for (double s : {2.0, 0.5, 4.0}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto ev = random_stream(g, 32, 32, 400);
      FlowEngineConfig cfg;
      cfg.triplet = random_params(g);
      auto scaled_cfg = cfg;
      scaled_cfg.triplet.xi *= s;
      scaled_cfg.triplet.temporal_window *= s;
      scaled_cfg.batch_interval *= s;
      auto scaled = ev;
      for (auto& e : scaled) e.t *= s;
      const auto a = run_flow_engine(ev, cfg, k);
      const auto b = run_flow_engine(scaled, scaled_cfg, k);
      REQUIRE(a.size() == b.size());
      for (std::size_t n = 0; n < a.size(); ++n) {
        REQUIRE(a[n].measurements.size() == b[n].measurements.size());
        for (std::size_t m = 0; m < a[n].measurements.size(); ++m) {
          CHECK((b[n].measurements[m].flow - a[n].measurements[m].flow / s).norm() <=
                1e-12 * a[n].measurements[m].flow.norm());
        }
      }
    }
  }
}

}  // TEST_SUITE
