#include "evtrack/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace evtrack {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kNearPlane = 0.05;

// Left Jacobian of SO(3).
Matrix3d left_jacobian(const Vector3d& phi) {
  const double theta = phi.norm();
  const Matrix3d S = skew(phi);
  if (theta < 1e-6) return Matrix3d::Identity() + 0.5 * S + (1.0 / 6.0) * S * S;
  const double t2 = theta * theta;
  return Matrix3d::Identity() + (1.0 - std::cos(theta)) / t2 * S +
         (theta - std::sin(theta)) / (t2 * theta) * S * S;
}

Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    Vector3d v(n(rng), n(rng), n(rng));
    if (v.norm() > 1e-9) return v.normalized();
  }
}

UnitQuaternion random_orientation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const double w = n(rng), x = n(rng), y = n(rng), z = n(rng);
    if (w * w + x * x + y * y + z * z > 1e-12) return {w, x, y, z};
  }
}

bool visible(const FeaturePoint& fp, const Matrix3d& R, const Vector3d& p_cam) {
  if (p_cam.z() <= kNearPlane) return false;
  if (fp.normals.empty()) return true;
  for (const auto& n : fp.normals) {
    if ((R * n).dot(p_cam) < 0.0) return true;
  }
  return false;
}

// Image-plane direction of an edge through camera-frame point p.
Vector2d image_tangent(const Vector3d& p, const Vector3d& dir_cam, const CameraIntrinsics& k) {
  const double iz = 1.0 / p.z();
  const Vector2d d(k.fx * (dir_cam.x() - p.x() * iz * dir_cam.z()) * iz,
                   k.fy * (dir_cam.y() - p.y() * iz * dir_cam.z()) * iz);
  return d;
}

struct TimedEvent {
  std::int64_t ns;
  std::uint32_t source;
  std::uint32_t seq;
  Event e;
};

}  // namespace

Trajectory::Trajectory(const RigidPose& initial) : initial_(initial) {}

void Trajectory::append(double duration, const Twist& twist) {
  if (!(duration > 0.0)) throw std::invalid_argument("segment duration must be positive");
  TrajectorySegment seg;
  seg.twist = twist;
  if (segments_.empty()) {
    seg.t_start = 0.0;
    seg.start = initial_;
  } else {
    const auto& last = segments_.back();
    seg.t_start = last.t_end;
    seg.start = screw_motion(last.start, last.twist, last.t_end - last.t_start);
  }
  seg.t_end = seg.t_start + duration;
  segments_.push_back(seg);
}

double Trajectory::duration() const { return segments_.empty() ? 0.0 : segments_.back().t_end; }

const TrajectorySegment* Trajectory::find(double t) const {
  if (segments_.empty()) return nullptr;
  auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                             [](double x, const TrajectorySegment& s) { return x < s.t_start; });
  if (it == segments_.begin()) return &segments_.front();
  return &*(it - 1);
}

RigidPose Trajectory::pose_at(double t) const {
  const TrajectorySegment* s = find(t);
  if (s == nullptr) return initial_;
  return screw_motion(s->start, s->twist, t - s->t_start);
}

Twist Trajectory::twist_at(double t) const {
  const TrajectorySegment* s = find(t);
  return s == nullptr ? Twist{} : s->twist;
}

RigidPose screw_motion(const RigidPose& start, const Twist& twist, double tau) {
  const Vector3d phi = twist.omega * tau;
  const UnitQuaternion rot = UnitQuaternion::from_rotation_vector(phi);
  RigidPose out;
  out.q = rot * start.q;
  out.t = rot.rotate(start.t) + tau * (left_jacobian(phi) * twist.v_o);
  return out;
}

ObjectModel ObjectModel::box(const Vector3d& dims, int points_per_face, int points_per_edge,
                             std::uint64_t seed) {
  if (!(dims.minCoeff() > 0.0)) throw std::invalid_argument("box dimensions must be positive");
  if (points_per_face < 0 || points_per_edge < 0) {
    throw std::invalid_argument("point counts must be non-negative");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  const Vector3d h = 0.5 * dims;
  ObjectModel m;
  m.name = "box";

  for (int axis = 0; axis < 3; ++axis) {
    for (int sign : {-1, 1}) {
      Vector3d n = Vector3d::Zero();
      n[axis] = sign;
      for (int i = 0; i < points_per_face; ++i) {
        FeaturePoint fp;
        for (int a = 0; a < 3; ++a) fp.p[a] = a == axis ? sign * h[a] : uni(rng) * dims[a];
        fp.normals = {n};
        m.points.push_back(fp);
      }
    }
  }

  // Edge along `axis` at the corner given by the signs on the other two axes.
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = (axis + 1) % 3;
    const int a2 = (axis + 2) % 3;
    for (int s1 : {-1, 1}) {
      for (int s2 : {-1, 1}) {
        Vector3d dir = Vector3d::Zero();
        dir[axis] = 1.0;
        Vector3d n1 = Vector3d::Zero();
        n1[a1] = s1;
        Vector3d n2 = Vector3d::Zero();
        n2[a2] = s2;
        for (int i = 0; i < points_per_edge; ++i) {
          FeaturePoint fp;
          fp.p[axis] = ((i + 0.5) / points_per_edge - 0.5) * dims[axis];
          fp.p[a1] = s1 * h[a1];
          fp.p[a2] = s2 * h[a2];
          fp.edge_dir = dir;
          fp.normals = {n1, n2};
          m.points.push_back(fp);
        }
      }
    }
  }
  return m;
}

ObjectModel ObjectModel::cylinder(double radius, double height, int side_points, int rim_points,
                                  std::uint64_t seed) {
  if (!(radius > 0.0 && height > 0.0)) {
    throw std::invalid_argument("cylinder dimensions must be positive");
  }
  if (side_points < 0 || rim_points < 0) throw std::invalid_argument("point counts must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * kPi);
  std::uniform_real_distribution<double> hz(-0.5 * height, 0.5 * height);
  ObjectModel m;
  m.name = "cylinder";
  for (int i = 0; i < side_points; ++i) {
    const double a = ang(rng);
    FeaturePoint fp;
    fp.p = Vector3d(radius * std::cos(a), radius * std::sin(a), hz(rng));
    fp.normals = {Vector3d(std::cos(a), std::sin(a), 0.0)};
    m.points.push_back(fp);
  }
  for (int sign : {-1, 1}) {
    for (int i = 0; i < rim_points; ++i) {
      const double a = 2.0 * kPi * (i + 0.5) / rim_points;
      FeaturePoint fp;
      fp.p = Vector3d(radius * std::cos(a), radius * std::sin(a), 0.5 * sign * height);
      fp.edge_dir = Vector3d(-std::sin(a), std::cos(a), 0.0);
      fp.normals = {Vector3d(std::cos(a), std::sin(a), 0.0), Vector3d(0.0, 0.0, sign)};
      m.points.push_back(fp);
    }
  }
  return m;
}

ObjectModel ObjectModel::edge_bar(double length, int edge_points, int corner_points,
                                  std::uint64_t seed) {
  if (!(length > 0.0)) throw std::invalid_argument("bar length must be positive");
  if (edge_points < 0 || corner_points < 0) throw std::invalid_argument("point counts must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-0.5 * length, 0.5 * length);
  std::uniform_real_distribution<double> uy(0.02, 0.06);
  ObjectModel m;
  m.name = "edge_bar";
  for (int i = 0; i < edge_points; ++i) {
    FeaturePoint fp;
    fp.p = Vector3d(((i + 0.5) / edge_points - 0.5) * length, 0.0, 0.0);
    fp.edge_dir = Vector3d::UnitX();
    m.points.push_back(fp);
  }
  for (int i = 0; i < corner_points; ++i) {
    FeaturePoint fp;
    fp.p = Vector3d(ux(rng), (i % 2 == 0 ? 1.0 : -1.0) * uy(rng), 0.0);
    m.points.push_back(fp);
  }
  return m;
}

void ObjectModel::validate() const {
  for (const auto& fp : points) {
    if (!fp.p.allFinite()) throw std::invalid_argument("feature point must be finite");
    if (fp.edge_dir && !(fp.edge_dir->norm() > 0.0)) {
      throw std::invalid_argument("edge direction must be non-zero");
    }
  }
}

void SimConfig::validate() const {
  intrinsics.validate();
  if (!(event_threshold > 0.0)) throw std::invalid_argument("event_threshold must be positive");
  if (!(time_jitter >= 0.0)) throw std::invalid_argument("time_jitter must be non-negative");
  if (!(pose_rate > 0.0)) throw std::invalid_argument("pose_rate must be positive");
  if (!(pose_noise_pos >= 0.0 && pose_noise_deg >= 0.0)) {
    throw std::invalid_argument("pose noise must be non-negative");
  }
  if (!(dropout_probability >= 0.0 && dropout_probability <= 1.0)) {
    throw std::invalid_argument("dropout_probability must be in [0, 1]");
  }
  if (!(dropout_speed >= 0.0)) throw std::invalid_argument("dropout_speed must be non-negative");
  if (!(depth_rate > 0.0)) throw std::invalid_argument("depth_rate must be positive");
  if (!(step > 0.0)) throw std::invalid_argument("step must be positive");
  if (!(edge_extent > 0.0)) throw std::invalid_argument("edge_extent must be positive");
}

std::vector<Event> generate_events(const ObjectModel& model, const Trajectory& traj,
                                   const SimConfig& config, std::uint64_t seed) {
  config.validate();
  model.validate();
  const auto& K = config.intrinsics;
  const double duration = traj.duration();
  const double thr = config.event_threshold;
  const double thr2 = thr * thr;

  struct Trace {
    bool active = false;
    Vector2d q = Vector2d::Zero();     // current trace position
    Vector2d last = Vector2d::Zero();  // position of the previous event
    Vector2d anchor = Vector2d::Zero();
  };
  std::vector<Trace> traces(model.points.size());
  std::vector<TimedEvent> raw;
  std::uint32_t seq = 0;

  const auto n_steps = static_cast<std::int64_t>(std::ceil(duration / config.step - 1e-9));
  for (std::int64_t n = -1; n < n_steps; ++n) {
    const double t_a = std::max(0.0, static_cast<double>(n) * config.step);
    const double t_b = std::min(duration, static_cast<double>(n + 1) * config.step);
    const double h = t_b - t_a;
    const RigidPose pose = traj.pose_at(t_b);
    const Matrix3d R = pose.q.to_rotation_matrix();

    for (std::size_t i = 0; i < model.points.size(); ++i) {
      const FeaturePoint& fp = model.points[i];
      Trace& tr = traces[i];
      if (!fp.contrast) continue;
      const Vector3d pc = R * fp.p + pose.t;
      if (!visible(fp, R, pc)) {
        tr.active = false;
        continue;
      }
      const Vector2d p = K.project(pc);
      if (!tr.active || n < 0) {
        tr = {true, p, p, p};
        continue;
      }

      Vector2d q_new = p;
      if (fp.edge_dir) {
        const Vector2d tan = image_tangent(pc, R * *fp.edge_dir, K);
        if (tan.norm() > 1e-9) {
          const Vector2d t_hat = tan.normalized();
          const Vector2d n_hat(-t_hat.y(), t_hat.x());
          q_new = tr.q + (p - tr.q).dot(n_hat) * n_hat;
          if (std::abs((q_new - p).dot(t_hat)) > config.edge_extent) {
            // Slid too far along the edge: jump back to the material point.
            const Vector2d shift = p - q_new;
            tr.q = p;
            tr.last += shift;
            continue;
          }
        }
      }

      const Vector2d a = q_new - tr.q;
      const double aa = a.squaredNorm();
      double s_prev = 0.0;
      while (aa > 0.0) {
        const Vector2d b = tr.q - tr.last;
        const double ab = a.dot(b);
        const double c = b.squaredNorm() - thr2;
        double s = 0.0;
        if (c >= 0.0 && s_prev == 0.0) {
          // The crossing fell on the end of the previous step.
        } else {
          const double disc = ab * ab - aa * c;
          if (disc < 0.0) break;
          s = (-ab + std::sqrt(disc)) / aa;
          if (!(s > s_prev) || s > 1.0) break;
        }
        const Vector2d qe = tr.q + s * a;
        const Vector2d move = qe - tr.last;
        tr.last = qe;
        s_prev = s;
        const long pu = std::lround(qe.x());
        const long pv = std::lround(qe.y());
        if (!K.contains(static_cast<int>(pu), static_cast<int>(pv))) continue;
        TimedEvent te;
        te.source = static_cast<std::uint32_t>(i);
        te.seq = seq++;
        te.e.t = t_a + s * h;
        te.e.u = static_cast<std::int32_t>(pu);
        te.e.v = static_cast<std::int32_t>(pv);
        te.e.polarity = move.x() >= 0.0 ? 1 : -1;
        raw.push_back(te);
      }
      tr.q = q_new;
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, config.time_jitter);
  for (auto& te : raw) {
    double t = te.e.t;
    if (config.time_jitter > 0.0) t = std::clamp(t + jitter(rng), 0.0, duration);
    te.ns = std::llround(t * 1e9);
  }
  std::sort(raw.begin(), raw.end(), [](const TimedEvent& x, const TimedEvent& y) {
    if (x.ns != y.ns) return x.ns < y.ns;
    if (x.source != y.source) return x.source < y.source;
    return x.seq < y.seq;
  });

  std::vector<Event> out;
  out.reserve(raw.size());
  std::int64_t prev = -1;
  for (auto& te : raw) {
    const std::int64_t ns = std::max(te.ns, prev + 1);
    prev = ns;
    Event e = te.e;
    e.t = static_cast<double>(ns) * 1e-9;
    out.push_back(e);
  }
  return out;
}

DepthMap render_depth(const ObjectModel& model, const Trajectory& traj, double stamp,
                      const CameraIntrinsics& K) {
  DepthMap map(K.width, K.height);
  const RigidPose pose = traj.pose_at(stamp);
  const Matrix3d R = pose.q.to_rotation_matrix();
  for (const auto& fp : model.points) {
    const Vector3d pc = R * fp.p + pose.t;
    if (!visible(fp, R, pc)) continue;
    const Vector2d px = K.project(pc);
    const long u0 = std::lround(px.x());
    const long v0 = std::lround(px.y());
    for (long dv = -1; dv <= 1; ++dv) {
      for (long du = -1; du <= 1; ++du) {
        const int u = static_cast<int>(u0 + du);
        const int v = static_cast<int>(v0 + dv);
        if (!K.contains(u, v)) continue;
        if (!map.valid(u, v) || pc.z() < map.at(u, v)) map.set(u, v, pc.z());
      }
    }
  }
  return map;
}

DepthSequence render_depth_sequence(const ObjectModel& model, const Trajectory& traj,
                                    const CameraIntrinsics& K, double rate) {
  if (!(rate > 0.0)) throw std::invalid_argument("depth rate must be positive");
  DepthSequence seq(K.width, K.height);
  const auto count = static_cast<std::int64_t>(std::floor(traj.duration() * rate + 1e-9));
  for (std::int64_t k = 0; k <= count; ++k) {
    const double stamp = static_cast<double>(k) / rate;
    seq.add_frame(stamp, render_depth(model, traj, stamp, K));
  }
  return seq;
}

double projected_origin_speed(const Trajectory& traj, const CameraIntrinsics& K, double t) {
  const RigidPose pose = traj.pose_at(t);
  const Twist tw = traj.twist_at(t);
  const Vector3d P = pose.t;
  const Vector3d dP = tw.v_o + tw.omega.cross(P);
  const double iz = 1.0 / P.z();
  const Vector2d vel(K.fx * (dP.x() - P.x() * iz * dP.z()) * iz,
                     K.fy * (dP.y() - P.y() * iz * dP.z()) * iz);
  return vel.norm();
}

std::vector<PoseObservation> mock_pose_estimator(const Trajectory& traj, const SimConfig& config,
                                                 std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double sigma_rot = config.pose_noise_deg * kPi / 180.0;
  const auto count = static_cast<std::int64_t>(std::floor(traj.duration() * config.pose_rate + 1e-9));

  std::vector<PoseObservation> out;
  for (std::int64_t k = 0; k <= count; ++k) {
    const double stamp = static_cast<double>(k) / config.pose_rate;
    const Vector3d dp(n01(rng), n01(rng), n01(rng));
    const Vector3d dr(n01(rng), n01(rng), n01(rng));
    const double drop = u01(rng);
    if (config.dropout_probability > 0.0 &&
        projected_origin_speed(traj, config.intrinsics, stamp) >= config.dropout_speed &&
        drop < config.dropout_probability) {
      continue;
    }
    const RigidPose gt = traj.pose_at(stamp);
    PoseObservation obs;
    obs.stamp = stamp;
    obs.t = gt.t + config.pose_noise_pos * dp;
    obs.q = gt.q * UnitQuaternion::from_rotation_vector(sigma_rot * dr);
    out.push_back(obs);
  }
  return out;
}

GroundTruth export_ground_truth(const Trajectory& traj, double rate) {
  if (!(rate > 0.0)) throw std::invalid_argument("ground-truth rate must be positive");
  GroundTruth gt;
  const auto count = static_cast<std::int64_t>(std::floor(traj.duration() * rate + 1e-9));
  for (std::int64_t k = 0; k <= count; ++k) {
    const double t = static_cast<double>(k) / rate;
    const RigidPose p = traj.pose_at(t);
    const Twist tw = traj.twist_at(t);
    gt.poses.push_back({t, p.t, p.q});
    VelocitySample vs;
    vs.t = t;
    vs.velocity.v_o = tw.v_o;
    vs.velocity.omega = tw.omega;
    vs.velocity.P.setZero();
    gt.velocities.push_back(vs);
  }
  return gt;
}

Trajectory random_trajectory(MotionPreset preset, double duration, std::uint64_t seed) {
  if (!(duration > 0.0)) throw std::invalid_argument("trajectory duration must be positive");
  struct Ranges {
    double speed_lo, speed_hi;
    double omega_lo, omega_hi;
    double seg_lo, seg_hi;
  };
  const Ranges r = preset == MotionPreset::regular ? Ranges{0.10, 0.20, 0.2, 0.6, 0.6, 1.2}
                                                   : Ranges{1.2, 2.0, 2.0, 5.0, 0.12, 0.25};
  const Vector3d lo(-0.15, -0.10, 0.50);
  const Vector3d hi(0.15, 0.10, 0.70);
  const Vector3d centre = 0.5 * (lo + hi);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * u01(rng); };
  auto random_point = [&] {
    return Vector3d(uniform(lo.x(), hi.x()), uniform(lo.y(), hi.y()), uniform(lo.z(), hi.z()));
  };
  auto inside = [&](const Vector3d& p, double margin) {
    return (p.array() >= lo.array() - margin).all() && (p.array() <= hi.array() + margin).all();
  };

  RigidPose start;
  start.t = random_point();
  start.q = random_orientation(rng);
  Trajectory traj(start);
  RigidPose cur = start;
  double t = 0.0;
  while (t < duration - 1e-12) {
    const Vector3d target = random_point();
    Vector3d dir = target - cur.t;
    dir = dir.norm() > 1e-6 ? dir.normalized() : random_unit(rng);
    const double speed = uniform(r.speed_lo, r.speed_hi);
    const Vector3d omega = uniform(r.omega_lo, r.omega_hi) * random_unit(rng);
    double seg = std::min(uniform(r.seg_lo, r.seg_hi), duration - t);

    // Shorten until the object origin stays near the working volume; fall back
    // to heading for the centre.
    Twist tw;
    for (int attempt = 0;; ++attempt) {
      const Vector3d d = attempt < 4 ? dir : (centre - cur.t).normalized();
      tw.omega = omega;
      tw.v_o = speed * d - omega.cross(cur.t);
      bool ok = true;
      for (int s = 1; s <= 8 && ok; ++s) {
        ok = inside(screw_motion(cur, tw, seg * s / 8.0).t, 0.05);
      }
      if (ok || attempt >= 8) break;
      if (attempt < 4) seg = std::max(0.5 * seg, std::min(0.05, duration - t));
    }
    traj.append(seg, tw);
    cur = screw_motion(cur, tw, seg);
    t += seg;
  }
  return traj;
}

std::optional<ScenePreset> parse_scene_preset(const std::string& name) {
  if (name == "regular") return ScenePreset::regular;
  if (name == "faster") return ScenePreset::faster;
  if (name == "aperture") return ScenePreset::aperture;
  if (name == "outlier") return ScenePreset::outlier;
  return std::nullopt;
}

std::string to_string(ScenePreset preset) {
  switch (preset) {
    case ScenePreset::regular: return "regular";
    case ScenePreset::faster: return "faster";
    case ScenePreset::aperture: return "aperture";
    case ScenePreset::outlier: return "outlier";
  }
  return "regular";
}

Scene make_scene(ScenePreset preset, double duration, std::uint64_t seed) {
  Scene s;
  s.preset = preset;
  const std::uint64_t motion_seed = seed * 0x9E3779B97F4A7C15ULL + 1;
  switch (preset) {
    case ScenePreset::regular:
    case ScenePreset::outlier:
      s.model = ObjectModel::box(Vector3d(0.3, 0.3, 0.3), 60, 10, seed);
      s.trajectory = random_trajectory(MotionPreset::regular, duration, motion_seed);
      break;
    case ScenePreset::faster:
      s.model = ObjectModel::box(Vector3d(0.3, 0.3, 0.3), 60, 10, seed);
      s.trajectory = random_trajectory(MotionPreset::faster, duration, motion_seed);
      break;
    case ScenePreset::aperture:
      // Mostly straight edges, so most flows only carry their normal component.
      s.model = ObjectModel::box(Vector3d(0.3, 0.3, 0.3), 4, 40, seed);
      s.trajectory = random_trajectory(MotionPreset::faster, duration, motion_seed);
      break;
  }
  return s;
}

}  // namespace evtrack
