#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evtrack/event_flow.hpp"
#include "evtrack/pose_tracker.hpp"

namespace evtrack {

struct ErrorSample {
  double t = 0.0;
  double position_cm = 0.0;
  double rotation_deg = 0.0;
};

struct MetricsReport {
  double position_rmse_cm = 0.0;
  double position_std_cm = 0.0;
  double rotation_rmse_deg = 0.0;
  double rotation_std_deg = 0.0;
  std::vector<ErrorSample> series;
  std::map<std::string, std::string> metadata;
};

/// Aligns each trace sample with the nearest ground-truth stamp. The standard
/// deviations are population stds of the per-sample error magnitudes.
/// Throws std::invalid_argument when either trace is empty or they do not
/// overlap in time.
MetricsReport evaluate(std::span<const PoseSample> trace, std::span<const PoseSample> gt);

std::string to_json(const MetricsReport& report, bool include_series = true);

/// Sorted speeds (px/s) paired with the cumulative fraction in percent; the
/// last entry is 100.
std::vector<std::pair<double, double>> pixel_speed_cdf(std::span<const FlowBatch> batches);

/// Writes trajectory.csv (per-axis position and rotation vector, estimate and
/// ground truth, at the trace stamps), errors.csv and pixel_velocity_cdf.csv.
void emit_plot_data(const std::filesystem::path& dir, const MetricsReport& report,
                    std::span<const PoseSample> trace, std::span<const PoseSample> gt,
                    std::span<const FlowBatch> batches);

}  // namespace evtrack
