#include "evtrack/event_flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace evtrack {

void TripletConstraintParams::validate() const {
  if (!(xi > 0.0)) throw std::invalid_argument("triplet tolerance xi must be positive");
  if (spatial_radius < 1) throw std::invalid_argument("spatial_radius must be >= 1");
  if (!(temporal_window > 0.0)) throw std::invalid_argument("temporal_window must be positive");
  if (pixel_depth < 1 || pixel_depth > 255) {
    throw std::invalid_argument("pixel_depth must be in [1, 255]");
  }
}

void FlowEngineConfig::validate() const {
  triplet.validate();
  if (roi_cell_size < 2) throw std::invalid_argument("roi_cell_size must be >= 2");
  if (!(batch_interval > 0.0)) throw std::invalid_argument("batch_interval must be positive");
}

// ---------------------------------------------------------------------------
// Triplet search

TripletSearcher::TripletSearcher(const CameraIntrinsics& intrinsics,
                                 const TripletConstraintParams& params)
    : params_(params),
      width_(intrinsics.width),
      height_(intrinsics.height),
      depth_(params.pixel_depth) {
  params_.validate();
  const auto pixels = static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  slots_.resize(pixels * static_cast<std::size_t>(depth_));
  count_.assign(pixels, 0);
  head_.assign(pixels, 0);
  latest_.assign(pixels, -std::numeric_limits<double>::infinity());
}

void TripletSearcher::reset() {
  std::fill(count_.begin(), count_.end(), 0);
  std::fill(head_.begin(), head_.end(), 0);
  std::fill(latest_.begin(), latest_.end(), -std::numeric_limits<double>::infinity());
}

void TripletSearcher::push(const Event& e, std::size_t index, std::vector<FlowCandidate>& out) {
  if (e.u < 0 || e.v < 0 || e.u >= width_ || e.v >= height_) {
    throw DataError("event at (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                    ") lies outside the sensor");
  }
  const double tk = e.t;
  const double window = params_.temporal_window;
  const double xi = params_.xi;
  const int r = params_.spatial_radius;
  const bool same_polarity = params_.same_polarity;
  const auto depth = static_cast<std::size_t>(depth_);

  for (int dv = -r; dv <= r; ++dv) {
    const int vj = e.v - dv;
    const int vi = e.v - 2 * dv;
    if (vi < 0 || vi >= height_) continue;
    for (int du = -r; du <= r; ++du) {
      if (du == 0 && dv == 0) continue;
      const int ui = e.u - 2 * du;
      if (ui < 0 || ui >= width_) continue;
      const int uj = e.u - du;

      const std::size_t pj = pixel(uj, vj);
      const std::size_t pi = pixel(ui, vi);
      // Everything buffered at a pixel is at least as old as latest_, so a
      // stale latest_ rules the whole pixel out.
      if (count_[pj] == 0 || tk - latest_[pj] > window) continue;
      if (count_[pi] == 0 || tk - latest_[pi] > window) continue;

      const Slot* sj_base = &slots_[pj * depth];
      const Slot* si_base = &slots_[pi * depth];
      const int nj = count_[pj];
      const int ni = count_[pi];
      const Vector2d offset(2.0 * du, 2.0 * dv);

      for (int a = 0; a < nj; ++a) {
        const Slot& sj = sj_base[a];
        const double tj = sj.t;
        if (!(tj < tk)) continue;
        if (same_polarity && sj.polarity != e.polarity) continue;
        const double hop_kj = tk - tj;
        for (int b = 0; b < ni; ++b) {
          const Slot& si = si_base[b];
          const double ti = si.t;
          if (!(ti < tj)) continue;
          const double span = tk - ti;
          if (span > window) continue;
          if (std::abs(hop_kj - (tj - ti)) > xi) continue;
          if (same_polarity && si.polarity != e.polarity) continue;
          FlowCandidate c;
          c.i = si.id;
          c.j = sj.id;
          c.k = index;
          c.flow = offset / span;
          c.u_i = ui;
          c.v_i = vi;
          c.t_i = ti;
          out.push_back(c);
        }
      }
    }
  }

  const std::size_t p = pixel(e.u, e.v);
  Slot& s = slots_[p * depth + head_[p]];
  s.t = tk;
  s.id = index;
  s.polarity = e.polarity;
  head_[p] = static_cast<std::uint8_t>((head_[p] + 1) % depth_);
  if (count_[p] < depth_) ++count_[p];
  latest_[p] = tk;
}

std::vector<FlowCandidate> search_triplets(std::span<const Event> stream,
                                           const TripletConstraintParams& params,
                                           const CameraIntrinsics& intrinsics) {
  TripletSearcher searcher(intrinsics, params);
  std::vector<FlowCandidate> out;
  double last_t = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < stream.size(); ++k) {
    if (stream[k].t < last_t) {
      throw DataError("event stream out of order at event " + std::to_string(k));
    }
    last_t = stream[k].t;
    searcher.push(stream[k], k, out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// RoI aggregation

RoiGrid::RoiGrid(int width, int height, int cell_size)
    : width_(width), height_(height), cell_size_(cell_size) {
  if (cell_size < 2) throw std::invalid_argument("RoI cell size must be >= 2");
  if (width <= 0 || height <= 0) throw std::invalid_argument("RoI grid needs a positive size");
  cols_ = (width + cell_size - 1) / cell_size;
  rows_ = (height + cell_size - 1) / cell_size;
  cells_.resize(static_cast<std::size_t>(cols_) * static_cast<std::size_t>(rows_));
}

void RoiGrid::add(const Entry& entry) {
  const int col = entry.u / cell_size_;
  const int row = entry.v / cell_size_;
  if (entry.u < 0 || entry.v < 0 || entry.u >= width_ || entry.v >= height_) {
    throw std::out_of_range("RoI entry outside the grid");
  }
  const int id = row * cols_ + col;
  auto& cell = cells_[static_cast<std::size_t>(id)];
  if (cell.empty()) active_.push_back(id);
  cell.push_back(entry);
}

void RoiGrid::clear() {
  for (int id : active_) cells_[static_cast<std::size_t>(id)].clear();
  active_.clear();
}

std::vector<int> RoiGrid::active_cells() const {
  std::vector<int> ids = active_;
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

// Entry flows grouped by event: `flows` holds them ordered by event id and
// `starts` marks group boundaries.
struct EventGroups {
  std::vector<Vector2d> flows;
  std::vector<std::size_t> starts;
};

EventGroups group_by_event(std::span<const RoiGrid::Entry> entries) {
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return entries[a].event_id < entries[b].event_id;
  });
  EventGroups g;
  g.flows.reserve(order.size());
  for (std::size_t n = 0; n < order.size(); ++n) {
    if (n == 0 || entries[order[n]].event_id != entries[order[n - 1]].event_id) {
      g.starts.push_back(n);
    }
    g.flows.push_back(entries[order[n]].flow);
  }
  g.starts.push_back(order.size());
  return g;
}

// Stops once the running total exceeds `bound`; the partial sum is returned.
double grouped_cost(const EventGroups& g, const Vector2d& flow,
                    double bound = std::numeric_limits<double>::infinity()) {
  double total = 0.0;
  for (std::size_t s = 0; s + 1 < g.starts.size(); ++s) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t n = g.starts[s]; n < g.starts[s + 1]; ++n) {
      best = std::min(best, (flow - g.flows[n]).squaredNorm());
    }
    total += std::sqrt(best);
    if (total > bound) break;
  }
  return total;
}

}  // namespace

double roi_flow_cost(std::span<const RoiGrid::Entry> entries, const Vector2d& flow) {
  return grouped_cost(group_by_event(entries), flow);
}

std::vector<FlowMeasurement> aggregate_roi_flow(const RoiGrid& grid, double window_end) {
  std::vector<FlowMeasurement> out;
  for (int id : grid.active_cells()) {
    const auto& entries = grid.cell(id);
    if (entries.empty()) continue;
    const EventGroups groups = group_by_event(entries);

    // Identical candidate vectors share a cost; evaluate each distinct one
    // once, represented by its earliest (then first inserted) entry.
    std::vector<std::size_t> cand(entries.size());
    std::iota(cand.begin(), cand.end(), std::size_t{0});
    std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
      const auto& ea = entries[a];
      const auto& eb = entries[b];
      if (ea.flow.x() != eb.flow.x()) return ea.flow.x() < eb.flow.x();
      if (ea.flow.y() != eb.flow.y()) return ea.flow.y() < eb.flow.y();
      if (ea.t != eb.t) return ea.t < eb.t;
      return a < b;
    });
    cand.erase(std::unique(cand.begin(), cand.end(),
                           [&](std::size_t a, std::size_t b) {
                             return entries[a].flow == entries[b].flow;
                           }),
               cand.end());

    std::size_t best = cand.front();
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t c : cand) {
      const double cost = grouped_cost(groups, entries[c].flow, best_cost);
      const bool better =
          cost < best_cost ||
          (cost == best_cost &&
           (entries[c].t < entries[best].t || (entries[c].t == entries[best].t && c < best)));
      if (better) {
        best = c;
        best_cost = cost;
      }
    }

    double su = 0.0;
    double sv = 0.0;
    for (const auto& e : entries) {
      su += e.u;
      sv += e.v;
    }
    const double n = static_cast<double>(entries.size());
    FlowMeasurement m;
    m.u = static_cast<int>(std::lround(su / n));
    m.v = static_cast<int>(std::lround(sv / n));
    m.t = window_end;
    m.flow = entries[best].flow;
    m.n_support = static_cast<int>(entries.size());
    out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Streaming engine

FlowEngine::FlowEngine(const CameraIntrinsics& intrinsics, const FlowEngineConfig& config)
    : intrinsics_(intrinsics),
      config_(config),
      searcher_(intrinsics, config.triplet),
      grid_(intrinsics.width, intrinsics.height, config.roi_cell_size) {
  config_.validate();
}

void FlowEngine::flush_until(std::int64_t batch, std::vector<FlowBatch>& out) {
  while (current_batch_ <= batch) {
    FlowBatch fb;
    fb.t_end = batch_end(current_batch_);
    if (!grid_.empty()) {
      fb.measurements = aggregate_roi_flow(grid_, fb.t_end);
      grid_.clear();
    }
    out.push_back(std::move(fb));
    ++current_batch_;
  }
}

void FlowEngine::push(const Event& e, std::vector<FlowBatch>& out) {
  if (!(e.t >= 0.0) || !std::isfinite(e.t)) {
    throw DataError("event " + std::to_string(next_id_) + " has an invalid timestamp");
  }
  if (e.t < last_t_) {
    throw DataError("event stream out of order at event " + std::to_string(next_id_));
  }
  if (!intrinsics_.contains(e.u, e.v)) {
    throw DataError("event " + std::to_string(next_id_) + " lies outside the sensor");
  }
  last_t_ = e.t;
  const auto batch = static_cast<std::int64_t>(std::floor(e.t / config_.batch_interval));
  if (batch > current_batch_) flush_until(batch - 1, out);

  scratch_.clear();
  searcher_.push(e, next_id_++, scratch_);
  for (const auto& c : scratch_) {
    grid_.add({c.i, c.u_i, c.v_i, c.t_i, c.flow});
  }
}

void FlowEngine::finish(double t_end, std::vector<FlowBatch>& out) {
  const auto last = std::max<std::int64_t>(
      current_batch_,
      static_cast<std::int64_t>(std::ceil(t_end / config_.batch_interval - 1e-9)) - 1);
  flush_until(last, out);
}

std::vector<FlowBatch> run_flow_engine(std::span<const Event> stream,
                                       const FlowEngineConfig& config,
                                       const CameraIntrinsics& intrinsics, double t_end) {
  std::vector<FlowBatch> out;
  if (stream.empty() && t_end < 0.0) return out;
  FlowEngine engine(intrinsics, config);
  for (const auto& e : stream) engine.push(e, out);
  engine.finish(t_end < 0.0 ? stream.back().t : t_end, out);
  return out;
}

}  // namespace evtrack
