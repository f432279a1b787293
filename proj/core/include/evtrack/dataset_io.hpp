#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "evtrack/core_types.hpp"
#include "evtrack/event_flow.hpp"
#include "evtrack/pose_tracker.hpp"

namespace evtrack {

// Text formats. Parse failures raise DataError naming the file and the line.
// Apart from event times, reals are written in shortest round-trip form.
//   events:      "# width height" header, then "t u v p" per line (t with 9 decimals)
//   depth:       "stamp u v d" per line, grouped by stamp
//   pose csv:    t,tx,ty,tz,qw,qx,qy,qz
//   velocity csv: t,vx,vy,vz,wx,wy,wz
//   flow dump:   t,u,v,fx,fy,n_support

struct EventFile {
  int width = 0;
  int height = 0;
  std::vector<Event> events;
};

void write_events(const std::filesystem::path& path, std::span<const Event> events, int width,
                  int height);
/// Checks the header, that every event lies inside the sensor, and that
/// timestamps never decrease.
EventFile read_events(const std::filesystem::path& path);

void write_depth(const std::filesystem::path& path, const DepthSequence& depth);
DepthSequence read_depth(const std::filesystem::path& path, int width, int height);

void write_pose_csv(const std::filesystem::path& path, std::span<const PoseSample> poses);
std::vector<PoseSample> read_pose_csv(const std::filesystem::path& path);

void write_observations_csv(const std::filesystem::path& path,
                            std::span<const PoseObservation> observations);
std::vector<PoseObservation> read_observations_csv(const std::filesystem::path& path);

void write_velocity_csv(const std::filesystem::path& path,
                        std::span<const VelocitySample> velocities);
std::vector<VelocitySample> read_velocity_csv(const std::filesystem::path& path);

void write_flow_dump(const std::filesystem::path& path, std::span<const FlowBatch> batches);

/// Dataset manifest: generating seed, flat config entries and artifact names.
struct Manifest {
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;
  std::map<std::string, std::string> artifacts;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace evtrack
