#include "evtrack/pipeline.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace evtrack {

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

CameraIntrinsics make_intrinsics(const Config& c) {
  CameraIntrinsics k;
  k.fx = c.real("camera.fx");
  k.fy = c.real("camera.fy");
  k.cx = c.real("camera.cx");
  k.cy = c.real("camera.cy");
  k.width = static_cast<int>(c.integer("camera.width"));
  k.height = static_cast<int>(c.integer("camera.height"));
  k.validate();
  return k;
}

}  // namespace

std::optional<TrackMode> parse_track_mode(const std::string& name) {
  if (name == "fused") return TrackMode::fused;
  if (name == "pose-only") return TrackMode::pose_only;
  if (name == "velocity-only") return TrackMode::velocity_only;
  return std::nullopt;
}

std::string to_string(TrackMode mode) {
  switch (mode) {
    case TrackMode::fused: return "fused";
    case TrackMode::pose_only: return "pose-only";
    case TrackMode::velocity_only: return "velocity-only";
  }
  return "fused";
}

void RunConfig::validate() const {
  intrinsics.validate();
  flow.validate();
  velocity.validate();
  ukf.validate();
  if (!(velocity_p0 > 0.0)) throw std::invalid_argument("initial velocity covariance must be positive");
  if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0)) {
    throw std::invalid_argument("outlier_fraction must be in [0, 1]");
  }
  if (!(outlier_speed >= 0.0)) throw std::invalid_argument("outlier_speed must be non-negative");
  if (depth_radius < 0) throw std::invalid_argument("depth_radius must be non-negative");
}

RunConfig make_run_config(const Config& c) {
  RunConfig r;
  r.intrinsics = make_intrinsics(c);

  r.flow.triplet.xi = c.real("flow.xi");
  r.flow.triplet.spatial_radius = static_cast<int>(c.integer("flow.spatial_radius"));
  r.flow.triplet.temporal_window = c.real("flow.temporal_window");
  r.flow.triplet.pixel_depth = static_cast<int>(c.integer("flow.pixel_depth"));
  r.flow.triplet.same_polarity = c.boolean("flow.same_polarity");
  r.flow.roi_cell_size = static_cast<int>(c.integer("flow.roi_cell_size"));
  r.flow.batch_interval = c.real("flow.batch_interval");
  r.outlier_fraction = c.real("flow.outlier_fraction");
  r.outlier_speed = c.real("flow.outlier_speed");
  r.depth_radius = static_cast<int>(c.integer("flow.depth_radius"));

  auto& v = r.velocity;
  v.alpha = c.real("vel.alpha");
  const double qv = c.real("vel.q_v");
  const double qw = c.real("vel.q_w");
  v.Q_v = Matrix3d::Identity() * qv * qv;
  v.Q_w = Matrix3d::Identity() * qw * qw;
  const double rf = c.real("vel.r_f");
  v.R_F = rf * rf;
  v.laplace_b = c.real("vel.laplace_b");
  v.weight_floor = c.real("vel.weight_floor");
  v.min_flow = c.real("vel.min_flow");
  v.max_flow = c.real("vel.max_flow");
  v.normal_flow = c.boolean("vel.normal_flow");
  v.weighting = c.boolean("vel.weighting");
  v.displacement_mode = c.boolean("vel.displacement_mode");
  r.velocity_p0 = c.real("vel.p0");

  auto& u = r.ukf;
  const double qt = c.real("pose.q_t");
  const double qq = c.real("pose.q_q_deg") * kDeg;
  const double rt = c.real("pose.r_t");
  const double rq = c.real("pose.r_q_deg") * kDeg;
  u.Q_t = Matrix3d::Identity() * qt * qt;
  u.Q_q = Matrix3d::Identity() * qq * qq;
  u.R_t = Matrix3d::Identity() * rt * rt;
  u.R_q = Matrix3d::Identity() * rq * rq;
  u.spread = c.real("pose.spread");
  u.secondary = c.real("pose.secondary");
  u.prior_weight = c.real("pose.prior_weight");
  u.fold_velocity_covariance = c.boolean("pose.fold_velocity_covariance");

  const auto mode = parse_track_mode(c.text("run.mode"));
  if (!mode) throw ConfigError(fmt::format("unknown run.mode '{}'", c.text("run.mode")));
  r.mode = *mode;
  r.seed = c.unsigned_integer("sim.seed");
  r.validate();
  return r;
}

SimConfig make_sim_config(const Config& c) {
  SimConfig s;
  s.intrinsics = make_intrinsics(c);
  s.event_threshold = c.real("sim.event_threshold");
  s.time_jitter = c.real("sim.time_jitter");
  s.step = c.real("sim.step");
  s.pose_rate = c.real("sim.pose_rate");
  s.pose_noise_pos = c.real("sim.pose_noise_pos");
  s.pose_noise_deg = c.real("sim.pose_noise_deg");
  s.dropout_probability = c.real("sim.dropout_probability");
  s.dropout_speed = c.real("sim.dropout_speed");
  s.depth_rate = c.real("sim.depth_rate");
  s.validate();
  return s;
}

PipelineResult run_pipeline(std::span<const Event> events, const DepthSequence& depth,
                            std::span<const PoseObservation> observations, double duration,
                            const RunConfig& config) {
  config.validate();
  if (observations.empty()) {
    throw std::invalid_argument("the pose filter needs at least one pose observation");
  }
  if (depth.empty()) throw std::invalid_argument("no depth snapshots available");

  PipelineResult out;
  out.flows = run_flow_engine(events, config.flow, config.intrinsics, duration);

  std::mt19937_64 rng(mix(config.seed, 7));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> wild(-config.outlier_speed, config.outlier_speed);

  VelocityState v0;
  v0.P = Matrix6d::Identity() * config.velocity_p0;
  VelocityTracker tracker(config.intrinsics, config.velocity, v0);
  out.velocities.reserve(out.flows.size());
  for (auto& batch : out.flows) {
    FlowObservationBatch obs;
    obs.delta_T = config.flow.batch_interval;
    for (auto& m : batch.measurements) {
      if (config.outlier_fraction > 0.0 && u01(rng) < config.outlier_fraction) {
        m.flow = Vector2d(wild(rng), wild(rng));
      }
      const double d = depth.lookup(m.t, m.u, m.v, config.depth_radius);
      if (!is_valid_depth(d)) continue;
      obs.observations.push_back({m, d});
    }
    out.velocities.push_back({batch.t_end, tracker.step(obs)});
  }

  const PoseObservation& first = observations.front();
  PoseState init;
  init.t = first.t;
  init.q = first.q;
  init.P.setZero();
  init.P.topLeftCorner<3, 3>() = config.ukf.R_t;
  init.P.bottomRightCorner<3, 3>() = config.ukf.R_q;
  const double t0 = first.stamp;

  std::vector<VelocitySample> input;
  for (const auto& s : out.velocities) {
    if (s.t <= t0 + 1e-12) continue;
    input.push_back(s);
    if (config.mode == TrackMode::pose_only) {
      input.back().velocity.v_o.setZero();
      input.back().velocity.omega.setZero();
      input.back().velocity.P.setZero();
    }
  }
  if (input.empty()) return out;

  const std::span<const PoseObservation> corrections =
      config.mode == TrackMode::velocity_only ? std::span<const PoseObservation>{} : observations;
  out.poses = run_fusion(input, corrections, init, t0, config.ukf);
  return out;
}

Dataset generate_dataset(const Config& c) {
  const SimConfig sim = make_sim_config(c);
  const auto preset = parse_scene_preset(c.text("sim.preset"));
  if (!preset) throw ConfigError(fmt::format("unknown sim.preset '{}'", c.text("sim.preset")));
  const double duration = c.real("sim.duration");
  if (!(duration > 0.0)) throw ConfigError("sim.duration must be positive");
  const std::uint64_t seed = c.unsigned_integer("sim.seed");
  const double gt_rate = c.real("sim.gt_rate");

  const Scene scene = make_scene(*preset, duration, seed);
  Dataset d;
  d.intrinsics = sim.intrinsics;
  d.duration = scene.trajectory.duration();
  d.seed = seed;
  d.events = generate_events(scene.model, scene.trajectory, sim, mix(seed, 1));
  d.depth = render_depth_sequence(scene.model, scene.trajectory, sim.intrinsics, sim.depth_rate);
  d.observations = mock_pose_estimator(scene.trajectory, sim, mix(seed, 2));
  d.ground_truth = export_ground_truth(scene.trajectory, gt_rate);
  return d;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& d, const Config& config) {
  std::filesystem::create_directories(dir);
  write_events(dir / "events.txt", d.events, d.intrinsics.width, d.intrinsics.height);
  write_depth(dir / "depth.txt", d.depth);
  write_pose_csv(dir / "gt_pose.csv", d.ground_truth.poses);
  write_velocity_csv(dir / "gt_velocity.csv", d.ground_truth.velocities);
  write_observations_csv(dir / "pose_obs.csv", d.observations);

  Manifest m;
  m.seed = d.seed;
  for (const auto& [k, v] : config.entries()) {
    if (k.rfind("run.", 0) != 0) m.config[k] = v;
  }
  m.config["sim.duration"] = fmt::format("{}", d.duration);
  m.artifacts = {{"events", "events.txt"},
                 {"depth", "depth.txt"},
                 {"gt_pose", "gt_pose.csv"},
                 {"gt_velocity", "gt_velocity.csv"},
                 {"pose_observations", "pose_obs.csv"}};
  write_manifest(dir / "manifest.json", m);
}

Dataset load_dataset(const std::filesystem::path& dir, Manifest* manifest) {
  const Manifest m = read_manifest(dir / "manifest.json");
  Config c;
  try {
    c.merge(m.config);
  } catch (const ConfigError& e) {
    throw DataError(fmt::format("{}: {}", (dir / "manifest.json").string(), e.what()));
  }
  auto artifact = [&](const std::string& key, const std::string& fallback) {
    const auto it = m.artifacts.find(key);
    return dir / (it == m.artifacts.end() ? fallback : it->second);
  };

  Dataset d;
  d.intrinsics = make_intrinsics(c);
  d.duration = c.real("sim.duration");
  d.seed = m.seed;
  EventFile ev = read_events(artifact("events", "events.txt"));
  if (ev.width != d.intrinsics.width || ev.height != d.intrinsics.height) {
    throw DataError(fmt::format("{}:1: sensor size {}x{} does not match the manifest camera",
                                artifact("events", "events.txt").string(), ev.width, ev.height));
  }
  d.events = std::move(ev.events);
  d.depth = read_depth(artifact("depth", "depth.txt"), d.intrinsics.width, d.intrinsics.height);
  d.observations = read_observations_csv(artifact("pose_observations", "pose_obs.csv"));
  d.ground_truth.poses = read_pose_csv(artifact("gt_pose", "gt_pose.csv"));
  d.ground_truth.velocities = read_velocity_csv(artifact("gt_velocity", "gt_velocity.csv"));
  if (manifest != nullptr) *manifest = m;
  return d;
}

}  // namespace evtrack
