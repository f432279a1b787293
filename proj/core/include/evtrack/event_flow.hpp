#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "evtrack/core_types.hpp"

namespace evtrack {

/// Search bounds and tolerance for spatio-temporal triplet matching.
///
/// Three events (i, j, k) with t_i < t_j < t_k form a triplet when both hops
/// have the same non-zero integer pixel offset, that offset is within
/// `spatial_radius` (Chebyshev), the hop durations differ by at most `xi`, and
/// the triplet spans at most `temporal_window`. Every pixel keeps only its
/// `pixel_depth` most recent events.
struct TripletConstraintParams {
  double xi = 1e-3;
  int spatial_radius = 3;
  double temporal_window = 0.03;
  int pixel_depth = 4;
  bool same_polarity = false;

  void validate() const;
};

/// One matched triplet. Indices refer to positions in the searched stream and
/// `flow` = (x_k - x_i) / (t_k - t_i) is the candidate flow of event i in px/s.
struct FlowCandidate {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;
  Vector2d flow = Vector2d::Zero();
  // Pixel and time of event i.
  int u_i = 0;
  int v_i = 0;
  double t_i = 0.0;
};

/// Per-RoI aggregated flow.
struct FlowMeasurement {
  int u = 0;
  int v = 0;
  double t = 0.0;
  Vector2d flow = Vector2d::Zero();
  int n_support = 0;
};

/// Per-pixel ring buffers over the sensor, used to find triplets incrementally.
class TripletSearcher {
 public:
  TripletSearcher(const CameraIntrinsics& intrinsics, const TripletConstraintParams& params);

  /// Finds every triplet closed by `e` (as the last event), appends them to
  /// `out`, then buffers `e`. `index` is the caller's identifier for `e`.
  /// Events must arrive in non-decreasing time order and inside the sensor.
  void push(const Event& e, std::size_t index, std::vector<FlowCandidate>& out);

  void reset();

  const TripletConstraintParams& params() const { return params_; }

 private:
  struct Slot {
    double t;
    std::size_t id;
    std::int8_t polarity;
  };

  std::size_t pixel(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(u);
  }

  TripletConstraintParams params_;
  int width_;
  int height_;
  int depth_;
  std::vector<Slot> slots_;            // width * height * depth
  std::vector<std::uint8_t> count_;    // filled slots per pixel
  std::vector<std::uint8_t> head_;     // next write position per pixel
  std::vector<double> latest_;         // newest timestamp per pixel, -inf if empty
};

/// Batch form of the triplet search over a whole time-ordered stream.
/// Candidates are returned in discovery order (by closing event k).
std::vector<FlowCandidate> search_triplets(std::span<const Event> stream,
                                           const TripletConstraintParams& params,
                                           const CameraIntrinsics& intrinsics);

/// Partition of the image plane into square RoI cells holding the candidate
/// flows gathered during one aggregation window.
class RoiGrid {
 public:
  struct Entry {
    std::size_t event_id;  // identifies the event the candidate belongs to
    int u;
    int v;
    double t;              // timestamp of that event
    Vector2d flow;
  };

  RoiGrid(int width, int height, int cell_size);

  int cell_size() const { return cell_size_; }
  int cols() const { return cols_; }
  int rows() const { return rows_; }

  void add(const Entry& entry);
  void clear();
  bool empty() const { return active_.empty(); }

  /// Non-empty cells in (row, col) order.
  std::vector<int> active_cells() const;
  const std::vector<Entry>& cell(int id) const { return cells_[static_cast<std::size_t>(id)]; }

 private:
  int width_;
  int height_;
  int cell_size_;
  int cols_;
  int rows_;
  std::vector<std::vector<Entry>> cells_;
  std::vector<int> active_;
};

/// Robust cost of a candidate flow over a cell: the sum over events of the
/// distance to that event's closest candidate.
double roi_flow_cost(std::span<const RoiGrid::Entry> entries, const Vector2d& flow);

/// Selects, for every non-empty cell, the candidate flow with minimal robust
/// cost. Ties go to the candidate of the earliest event. Output is ordered by
/// (cell row, cell col).
std::vector<FlowMeasurement> aggregate_roi_flow(const RoiGrid& grid, double window_end);

struct FlowEngineConfig {
  TripletConstraintParams triplet;
  int roi_cell_size = 16;
  double batch_interval = 0.01;

  void validate() const;
};

struct FlowBatch {
  double t_end = 0.0;
  std::vector<FlowMeasurement> measurements;
};

/// Streaming flow estimator: triplet search per event, RoI aggregation once
/// per batch interval. Batch m covers [m * dt, (m + 1) * dt) and is stamped at
/// its end. Candidates are attributed to the batch of the event that closes
/// the triplet.
class FlowEngine {
 public:
  FlowEngine(const CameraIntrinsics& intrinsics, const FlowEngineConfig& config);

  /// Consumes one event; completed batches are appended to `out`.
  /// Throws DataError on out-of-order or out-of-bounds events.
  void push(const Event& e, std::vector<FlowBatch>& out);

  /// Flushes batches up to and including the one containing `t_end`.
  void finish(double t_end, std::vector<FlowBatch>& out);

  std::size_t events_seen() const { return next_id_; }

 private:
  void flush_until(std::int64_t batch, std::vector<FlowBatch>& out);
  double batch_end(std::int64_t batch) const {
    return static_cast<double>(batch + 1) * config_.batch_interval;
  }

  CameraIntrinsics intrinsics_;
  FlowEngineConfig config_;
  TripletSearcher searcher_;
  RoiGrid grid_;
  std::vector<FlowCandidate> scratch_;
  std::size_t next_id_ = 0;
  std::int64_t current_batch_ = 0;
  double last_t_ = 0.0;
};

/// Runs the engine over a whole stream. When `t_end` is negative, batches are
/// produced up to the batch containing the last event (none for an empty
/// stream); otherwise up to the batch containing `t_end`.
std::vector<FlowBatch> run_flow_engine(std::span<const Event> stream,
                                       const FlowEngineConfig& config,
                                       const CameraIntrinsics& intrinsics,
                                       double t_end = -1.0);

}  // namespace evtrack
