#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evtrack/core_types.hpp"
#include "evtrack/pose_tracker.hpp"

namespace evtrack {

struct RigidPose {
  Vector3d t = Vector3d::Zero();
  UnitQuaternion q;
};

/// Camera-frame twist: `v_o` is the velocity of the object point at the
/// camera origin, so the object origin moves with v_o + omega x t.
struct Twist {
  Vector3d v_o = Vector3d::Zero();
  Vector3d omega = Vector3d::Zero();
};

struct TrajectorySegment {
  double t_start = 0.0;
  double t_end = 0.0;
  Twist twist;
  RigidPose start;
};

/// Piecewise constant-twist rigid motion starting at t = 0. Poses are exact
/// (screw motion) and continuous across segment boundaries.
class Trajectory {
 public:
  explicit Trajectory(const RigidPose& initial = {});

  void append(double duration, const Twist& twist);

  double duration() const;
  const std::vector<TrajectorySegment>& segments() const { return segments_; }
  const RigidPose& initial() const { return initial_; }

  RigidPose pose_at(double t) const;
  /// Twist of the segment containing t; boundaries belong to the later segment.
  Twist twist_at(double t) const;

 private:
  const TrajectorySegment* find(double t) const;

  RigidPose initial_;
  std::vector<TrajectorySegment> segments_;
};

/// Pose reached after moving with `twist` for `tau` seconds from `start`.
RigidPose screw_motion(const RigidPose& start, const Twist& twist, double tau);

struct FeaturePoint {
  Vector3d p = Vector3d::Zero();  // object frame, meters
  bool contrast = true;            // generates events
  /// Set for points on a straight edge: only motion normal to the edge is
  /// visible in the events they produce.
  std::optional<Vector3d> edge_dir;
  /// Outward normals (object frame) of the faces the point lies on. The point
  /// is visible when any of them faces the camera; an empty list means always.
  std::vector<Vector3d> normals;
};

struct ObjectModel {
  std::string name;
  std::vector<FeaturePoint> points;

  /// Box centred at the origin: textured points on each face plus points on
  /// the twelve edges.
  static ObjectModel box(const Vector3d& dims, int points_per_face, int points_per_edge,
                         std::uint64_t seed);
  /// Cylinder along the object z axis: textured side points plus rim edges.
  static ObjectModel cylinder(double radius, double height, int side_points, int rim_points,
                              std::uint64_t seed);
  /// One long straight edge along the object x axis plus a few textured points
  /// placed off the edge.
  static ObjectModel edge_bar(double length, int edge_points, int corner_points,
                              std::uint64_t seed);

  void validate() const;
};

struct SimConfig {
  CameraIntrinsics intrinsics;
  double event_threshold = 1.0;   // px
  double time_jitter = 0.0;       // s, std dev
  double pose_rate = 5.0;         // Hz
  double pose_noise_pos = 0.02;   // m, per-axis std dev
  double pose_noise_deg = 5.0;    // deg, per-axis std dev of the rotation vector
  /// Probability of dropping a pose observation while the projected object
  /// centre moves faster than `dropout_speed` (px/s).
  double dropout_probability = 0.0;
  double dropout_speed = 1000.0;
  double depth_rate = 60.0;       // Hz
  double step = 2.5e-4;           // s, event integration step
  double edge_extent = 4.0;       // px an edge trace may slide before re-anchoring

  void validate() const;
};

/// Ideal events from every contrast feature point. Each point's image trace
/// emits an event whenever it has moved `event_threshold` pixels since its
/// previous event. Output is strictly time-ordered, on a 1 ns grid, and inside
/// the sensor.
std::vector<Event> generate_events(const ObjectModel& model, const Trajectory& traj,
                                   const SimConfig& config, std::uint64_t seed);

/// Sparse depth: each visible feature point writes its camera-frame depth into
/// the 3x3 neighbourhood of its pixel (nearest surface wins).
DepthMap render_depth(const ObjectModel& model, const Trajectory& traj, double stamp,
                      const CameraIntrinsics& intrinsics);

/// Depth snapshots at `rate` Hz over the trajectory span.
DepthSequence render_depth_sequence(const ObjectModel& model, const Trajectory& traj,
                                    const CameraIntrinsics& intrinsics, double rate);

/// Ground-truth poses sampled at `pose_rate`, corrupted by Gaussian noise, with
/// optional speed-dependent dropout.
std::vector<PoseObservation> mock_pose_estimator(const Trajectory& traj, const SimConfig& config,
                                                 std::uint64_t seed);

/// Pixel speed (px/s) of the projected object origin at time t.
double projected_origin_speed(const Trajectory& traj, const CameraIntrinsics& intrinsics,
                              double t);

struct GroundTruth {
  std::vector<PoseSample> poses;
  std::vector<VelocitySample> velocities;  // covariance zero
};
GroundTruth export_ground_truth(const Trajectory& traj, double rate);

enum class MotionPreset { regular, faster };

/// Random piecewise-constant motion that keeps the object in a working volume
/// in front of the camera. "regular" keeps pixel speeds around 100-200 px/s;
/// "faster" reaches 1000-2000 px/s.
Trajectory random_trajectory(MotionPreset preset, double duration, std::uint64_t seed);

enum class ScenePreset { regular, faster, aperture, outlier };

std::optional<ScenePreset> parse_scene_preset(const std::string& name);
std::string to_string(ScenePreset preset);

struct Scene {
  ScenePreset preset = ScenePreset::regular;
  ObjectModel model;
  Trajectory trajectory;
};

/// Bundled scenarios: a textured box at regular or fast speeds, a box seen
/// almost only through its straight edges (moving at the fast speeds) for
/// aperture tests, and the regular scene reused for outlier tests.
Scene make_scene(ScenePreset preset, double duration, std::uint64_t seed);

}  // namespace evtrack
