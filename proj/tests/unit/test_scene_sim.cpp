#include "doctest.h"

#include <cmath>

#include "evtrack/event_flow.hpp"
#include "evtrack/scene_sim.hpp"
#include "support.hpp"

using namespace evtrack;
using namespace evtrack::testing;

namespace {

ObjectModel single_point() {
  ObjectModel m;
  m.name = "point";
  m.points.push_back({Vector3d::Zero(), true, std::nullopt, {}});
  return m;
}

// Object at depth 1 m on the optical axis moving sideways at `px_per_s`.
Trajectory sideways(double px_per_s, double duration, double x0 = 0.0) {
  Trajectory t({Vector3d(x0, 0.0, 1.0), UnitQuaternion{}});
  t.append(duration, {Vector3d(px_per_s / 480.0, 0.0, 0.0), Vector3d::Zero()});
  return t;
}

// A loose grid of textured points in the object xy plane.
ObjectModel texture(Gen& g, int n) {
  ObjectModel m;
  m.name = "texture";
  for (int i = 0; i < n; ++i) m.points.push_back({Vector3d(g.uniform(-0.1, 0.1), g.uniform(-0.15, 0.15), 0.0), true, std::nullopt, {}});
  return m;
}

}  // namespace

TEST_SUITE("scene_sim") {

TEST_CASE("config and model validation") {
  SimConfig c;
  CHECK_NOTHROW(c.validate());
  c.event_threshold = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.dropout_probability = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK_THROWS_AS(ObjectModel::box(Vector3d(0, 1, 1), 1, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(ObjectModel::cylinder(0.1, 0.2, -1, 1, 1), std::invalid_argument);
  ObjectModel m;
  m.points.push_back({Vector3d::Zero(), true, Vector3d::Zero(), {}});
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  CHECK_THROWS_AS(Trajectory{}.append(0.0, {}), std::invalid_argument);
}

TEST_CASE("models") {
  const auto box = ObjectModel::box(Vector3d(0.3, 0.2, 0.1), 10, 5, 3);
  CHECK(box.points.size() == 6 * 10 + 12 * 5);
  for (const auto& p : box.points) {
    CHECK((p.p.cwiseAbs().array() <= Vector3d(0.15, 0.1, 0.05).array() + 1e-12).all());
    CHECK(!p.normals.empty());
  }
  const auto again = ObjectModel::box(Vector3d(0.3, 0.2, 0.1), 10, 5, 3);
  for (std::size_t i = 0; i < box.points.size(); ++i) CHECK(box.points[i].p == again.points[i].p);
  const auto cyl = ObjectModel::cylinder(0.1, 0.3, 20, 10, 4);
  for (const auto& p : cyl.points) CHECK(std::hypot(p.p.x(), p.p.y()) == doctest::Approx(0.1));
  const auto bar = ObjectModel::edge_bar(0.4, 30, 4, 5);
  int edges = 0;
  for (const auto& p : bar.points) edges += p.edge_dir.has_value();
  CHECK(edges == 30);
}

TEST_CASE("a static scene emits nothing") {
  Gen g(501);
  Trajectory t({Vector3d(0.0, 0.0, 0.6), g.rotation()});
  t.append(1.0, {});
  CHECK(generate_events(ObjectModel::box(Vector3d(0.3, 0.3, 0.3), 30, 10, 1), t, SimConfig{}, 1).empty());
}

TEST_CASE("a point at 100 px/s fires every 10 ms") {
  const auto ev = generate_events(single_point(), sideways(100.0, 1.0), SimConfig{}, 1);
  CHECK(ev.size() >= 99);
  CHECK(ev.size() <= 100);
  for (std::size_t i = 0; i < ev.size(); ++i) {
    CHECK(ev[i].t == doctest::Approx(0.01 * static_cast<double>(i + 1)).epsilon(1e-6));
    CHECK(ev[i].u == 321 + static_cast<int>(i));
    CHECK(ev[i].v == 240);
    CHECK(ev[i].polarity == 1);
  }
  const auto fast = generate_events(single_point(), sideways(200.0, 1.0), SimConfig{}, 1);
  CHECK(fast.size() >= 199);
  CHECK(fast.size() <= 200);
  const auto back = generate_events(single_point(), sideways(-100.0, 1.0), SimConfig{}, 1);
  REQUIRE(!back.empty());
  CHECK(back.front().u == 319);
  CHECK(back.front().polarity == -1);
}

TEST_CASE("event streams are ordered, on the sensor and on a 1 ns grid") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const Scene s = make_scene(ScenePreset::faster, 0.5, seed);
    SimConfig c;
    c.time_jitter = seed == 3 ? 1e-4 : 0.0;
    const auto ev = generate_events(s.model, s.trajectory, c, seed);
    REQUIRE(ev.size() > 1000);
    for (std::size_t i = 0; i < ev.size(); ++i) {
      CHECK(c.intrinsics.contains(ev[i].u, ev[i].v));
      CHECK(std::abs(ev[i].t * 1e9 - std::round(ev[i].t * 1e9)) < 1e-3);
      CHECK(ev[i].t >= 0.0);
      CHECK(ev[i].t <= s.trajectory.duration() + 1e-6);
      if (i > 0 && !(ev[i].t > ev[i - 1].t)) FAIL("not strictly increasing at " << i);
    }
  }
}

TEST_CASE("one trace moves one threshold between events") {
  Gen g(502);
  for (int trial = 0; trial < 20; ++trial) {
    Trajectory t({Vector3d(g.uniform(-0.05, 0.05), g.uniform(-0.05, 0.05), g.uniform(0.6, 1.0)), UnitQuaternion{}});
    for (int k = 0; k < 4; ++k) {
      const Vector6d x = g.twist(0.1, 0.4);
      t.append(0.25, {x.head<3>(), x.tail<3>()});
    }
    SimConfig c;
    c.event_threshold = g.uniform(1.0, 2.5);
    const auto ev = generate_events(single_point(), t, c, 1);
    // Rounded pixels of successive events sit within threshold + one pixel diagonal.
    for (std::size_t i = 1; i < ev.size(); ++i) {
      const double d = std::hypot(ev[i].u - ev[i - 1].u, ev[i].v - ev[i - 1].v);
      CHECK(d <= c.event_threshold + std::sqrt(2.0) + 1e-9);
    }
    // Dense replay of the threshold rule.
    Vector2d last = c.intrinsics.project(t.pose_at(0.0).t);
    int expected = 0;
    for (int k = 1; k <= 200000; ++k) {
      const Vector2d p = c.intrinsics.project(t.pose_at(k * t.duration() / 200000.0).t);
      if ((p - last).norm() >= c.event_threshold) {
        ++expected;
        last = p;
      }
    }
    CHECK(std::abs(static_cast<int>(ev.size()) - expected) <= 1);
  }
}

TEST_CASE("depth rendering") {
  Gen g(503);
  const CameraIntrinsics k;
  for (int trial = 0; trial < 50; ++trial) {
    const RigidPose pose{Vector3d(g.uniform(-0.1, 0.1), g.uniform(-0.1, 0.1), g.uniform(0.4, 1.5)), g.rotation()};
    Trajectory t(pose);
    t.append(1.0, {});
    ObjectModel m;
    const Vector3d p = g.vec3(-0.05, 0.05);
    m.points.push_back({p, false, std::nullopt, {}});
    const DepthMap d = render_depth(m, t, 0.3, k);
    const Vector3d pc = pose.q.to_rotation_matrix() * p + pose.t;
    const int u = static_cast<int>(std::lround(k.fx * pc.x() / pc.z() + k.cx));
    const int v = static_cast<int>(std::lround(k.fy * pc.y() / pc.z() + k.cy));
    CHECK(d.valid_count() == 9);
    for (int dv = -1; dv <= 1; ++dv)
      for (int du = -1; du <= 1; ++du) CHECK(std::abs(d.at(u + du, v + dv) - pc.z()) <= 1e-6);
  }

  // The nearer of two overlapping points wins.
  ObjectModel two;
  two.points.push_back({Vector3d(0, 0, 0.2), false, std::nullopt, {}});
  two.points.push_back({Vector3d(0, 0, 0.0), false, std::nullopt, {}});
  Trajectory t({Vector3d(0, 0, 1.0), UnitQuaternion{}});
  t.append(1.0, {});
  CHECK(render_depth(two, t, 0.0, k).at(320, 240) == doctest::Approx(1.0));

  // Back faces and points behind the camera are not drawn.
  ObjectModel faced;
  faced.points.push_back({Vector3d::Zero(), true, std::nullopt, {Vector3d(0, 0, 1)}});
  CHECK(render_depth(faced, t, 0.0, k).valid_count() == 0);
  faced.points[0].normals = {Vector3d(0, 0, -1)};
  CHECK(render_depth(faced, t, 0.0, k).valid_count() == 9);
  Trajectory behind({Vector3d(0, 0, -1.0), UnitQuaternion{}});
  behind.append(1.0, {Vector3d(0.2, 0, 0), Vector3d::Zero()});
  CHECK(render_depth(single_point(), behind, 0.5, k).valid_count() == 0);
  CHECK(generate_events(single_point(), behind, SimConfig{}, 1).empty());

  const auto seq = render_depth_sequence(single_point(), sideways(100.0, 1.0), k, 10.0);
  CHECK(seq.size() == 11);
  CHECK(seq.lookup(0.55, 370, 240, 0) == doctest::Approx(1.0));
}

TEST_CASE("mock pose estimator") {
  const Trajectory traj = random_trajectory(MotionPreset::regular, 200.0, 7);
  SimConfig c;
  c.pose_noise_pos = 0.0;
  c.pose_noise_deg = 0.0;
  const auto exact = mock_pose_estimator(traj, c, 1);
  REQUIRE(exact.size() == 1001);
  for (const auto& o : exact) {
    const RigidPose p = traj.pose_at(o.stamp);
    CHECK((o.t - p.t).norm() == 0.0);
    CHECK(rotation_vector_error(o.q, p.q) <= 1e-9);
  }

  c = {};
  const auto noisy = mock_pose_estimator(traj, c, 2);
  double s_pos = 0.0, s_rot = 0.0;
  for (const auto& o : noisy) {
    const RigidPose p = traj.pose_at(o.stamp);
    s_pos += (o.t - p.t).squaredNorm();
    s_rot += (p.q.inverse() * o.q).to_rotation_vector().squaredNorm();
  }
  const double n = 3.0 * static_cast<double>(noisy.size());
  CHECK(std::sqrt(s_pos / n) == doctest::Approx(0.02).epsilon(0.1));
  CHECK(std::sqrt(s_rot / n) * 180.0 / Gen::kPi == doctest::Approx(5.0).epsilon(0.1));

  // Same seed, same stream.
  const auto again = mock_pose_estimator(traj, c, 2);
  for (std::size_t i = 0; i < noisy.size(); ++i) CHECK(noisy[i].t == again[i].t);

  c.dropout_probability = 1.0;
  c.dropout_speed = 0.0;
  CHECK(mock_pose_estimator(traj, c, 3).empty());
  c.dropout_speed = 1e9;
  CHECK(mock_pose_estimator(traj, c, 3).size() == 1001);
}

TEST_CASE("ground truth of a constant rotation") {
  const double w = 0.8;
  const RigidPose start{Vector3d(0.1, 0.0, 0.6), UnitQuaternion::from_axis_angle(Vector3d::UnitX(), 0.3)};
  Trajectory t(start);
  t.append(2.0, {Vector3d::Zero(), Vector3d(0, 0, w)});
  const GroundTruth gt = export_ground_truth(t, 50.0);
  CHECK(gt.poses.size() == 101);
  for (const auto& p : gt.poses) {
    const Eigen::AngleAxisd rz(w * p.t, Vector3d::UnitZ());
    CHECK((p.position - rz * start.t).norm() <= 1e-9);
    const Eigen::Quaterniond expected = Eigen::Quaterniond(rz) * start.q.eigen();
    CHECK(rotation_vector_error(p.q, UnitQuaternion(expected.w(), expected.x(), expected.y(), expected.z())) <= 1e-7);
  }
  for (const auto& v : gt.velocities) CHECK(v.velocity.omega == Vector3d(0, 0, w));
  CHECK_THROWS_AS(export_ground_truth(t, 0.0), std::invalid_argument);
}

TEST_CASE("trajectories are continuous across segments") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (auto preset : {MotionPreset::regular, MotionPreset::faster}) {
      const Trajectory t = random_trajectory(preset, 5.0, seed);
      CHECK(t.duration() == doctest::Approx(5.0));
      for (std::size_t i = 1; i < t.segments().size(); ++i) {
        const double b = t.segments()[i].t_start;
        const RigidPose a = t.pose_at(b - 1e-9), c = t.pose_at(b);
        CHECK((a.t - c.t).norm() <= 1e-7);
        CHECK(rotation_vector_error(a.q, c.q) <= 1e-5);
      }
      for (double s = 0.0; s <= 5.0; s += 0.05) {
        const Vector3d p = t.pose_at(s).t;
        CHECK(p.z() > 0.4);
        CHECK(std::abs(p.x()) < 0.25);
      }
    }
  }
}

TEST_CASE("faster trajectories move faster on the image") {
  double slow = 0.0, fast = 0.0;
  const CameraIntrinsics k;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Trajectory r = random_trajectory(MotionPreset::regular, 5.0, seed);
    const Trajectory f = random_trajectory(MotionPreset::faster, 5.0, seed);
    for (double s = 0.0; s < 5.0; s += 0.01) {
      slow += projected_origin_speed(r, k, s);
      fast += projected_origin_speed(f, k, s);
    }
  }
  slow /= 2500.0;
  fast /= 2500.0;
  CHECK(slow > 50.0);
  CHECK(slow < 400.0);
  CHECK(fast > 5.0 * slow);
}

TEST_CASE("measured flow tracks the simulated speed") {
  Gen g(504);
  for (double speed : {20.0, 50.0, 150.0, 500.0, 1000.0, 2000.0}) {
    const double duration = std::min(1.0, 300.0 / speed);
    const auto ev = generate_events(texture(g, 40), sideways(speed, duration, -0.25), SimConfig{}, 1);
    FlowEngineConfig fc;
    // Three hops must fit in the window.
    fc.triplet.temporal_window = std::max(0.03, 3.5 / speed);
    double sum = 0.0;
    int n = 0;
    for (const auto& b : run_flow_engine(ev, fc, CameraIntrinsics{})) {
      for (const auto& m : b.measurements) {
        sum += m.flow.x();
        ++n;
      }
    }
    REQUIRE(n > 20);
    CHECK(sum / n == doctest::Approx(speed).epsilon(0.05));
  }
}

TEST_CASE("scene presets") {
  CHECK(parse_scene_preset("aperture") == ScenePreset::aperture);
  CHECK(!parse_scene_preset("bogus"));
  for (auto p : {ScenePreset::regular, ScenePreset::faster, ScenePreset::aperture, ScenePreset::outlier}) {
    CHECK(parse_scene_preset(to_string(p)) == p);
    const Scene a = make_scene(p, 1.0, 9), b = make_scene(p, 1.0, 9);
    CHECK(a.model.points.size() == b.model.points.size());
    CHECK(a.trajectory.segments().size() == b.trajectory.segments().size());
    CHECK(a.trajectory.pose_at(0.7).t == b.trajectory.pose_at(0.7).t);
  }
  int edge = 0;
  const Scene ap = make_scene(ScenePreset::aperture, 1.0, 1);
  for (const auto& p : ap.model.points) edge += p.edge_dir.has_value();
  CHECK(edge > 4 * static_cast<int>(ap.model.points.size()) / 5);
}

}  // TEST_SUITE
