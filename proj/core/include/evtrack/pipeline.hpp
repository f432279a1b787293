#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evtrack/config.hpp"
#include "evtrack/dataset_io.hpp"
#include "evtrack/event_flow.hpp"
#include "evtrack/pose_tracker.hpp"
#include "evtrack/scene_sim.hpp"
#include "evtrack/velocity_tracker.hpp"

namespace evtrack {

/// fused: flow velocity plus pose observations. pose_only: observations with a
/// zero velocity input. velocity_only: integration of the flow velocity from
/// the first observation.
enum class TrackMode { fused, pose_only, velocity_only };

std::optional<TrackMode> parse_track_mode(const std::string& name);
std::string to_string(TrackMode mode);

struct RunConfig {
  CameraIntrinsics intrinsics;
  FlowEngineConfig flow;
  VelocityFilterConfig velocity;
  double velocity_p0 = 10.0;
  UkfConfig ukf;
  TrackMode mode = TrackMode::fused;
  /// Fraction of flow measurements replaced by uniform random flows in
  /// [-outlier_speed, outlier_speed]^2, seeded by `seed`.
  double outlier_fraction = 0.0;
  double outlier_speed = 1500.0;
  std::uint64_t seed = 1;
  int depth_radius = 8;

  void validate() const;
};

RunConfig make_run_config(const Config& config);
SimConfig make_sim_config(const Config& config);

struct PipelineResult {
  std::vector<PoseSample> poses;
  std::vector<VelocitySample> velocities;  // one per flow batch
  std::vector<FlowBatch> flows;
};

/// Flow engine -> velocity filter -> pose filter. The pose filter starts at the
/// first observation, which is required in every mode. Flow batches cover
/// [0, duration].
PipelineResult run_pipeline(std::span<const Event> events, const DepthSequence& depth,
                            std::span<const PoseObservation> observations, double duration,
                            const RunConfig& config);

struct Dataset {
  CameraIntrinsics intrinsics;
  double duration = 0.0;
  std::uint64_t seed = 0;
  std::vector<Event> events;
  DepthSequence depth;
  std::vector<PoseObservation> observations;
  GroundTruth ground_truth;
};

/// Simulates a bundled scene with the sim.* and camera.* settings of `config`.
Dataset generate_dataset(const Config& config);

/// Writes events.txt, depth.txt, gt_pose.csv, gt_velocity.csv, pose_obs.csv
/// and manifest.json into `dir`.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset, const Config& config);

/// Reads a dataset written by save_dataset. The manifest's config entries are
/// returned in `manifest`.
Dataset load_dataset(const std::filesystem::path& dir, Manifest* manifest = nullptr);

}  // namespace evtrack
