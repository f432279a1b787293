#include "evtrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>
#include "json.hpp"

namespace evtrack {

namespace {

void write_text(const std::filesystem::path& path, const fmt::memory_buffer& buf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("{}: cannot open for writing", path.string()));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::size_t nearest(std::span<const PoseSample> gt, double t) {
  const auto it = std::lower_bound(gt.begin(), gt.end(), t,
                                   [](const PoseSample& s, double x) { return s.t < x; });
  if (it == gt.begin()) return 0;
  if (it == gt.end()) return gt.size() - 1;
  const auto i = static_cast<std::size_t>(it - gt.begin());
  return (t - gt[i - 1].t) <= (gt[i].t - t) ? i - 1 : i;
}

}  // namespace

MetricsReport evaluate(std::span<const PoseSample> trace, std::span<const PoseSample> gt) {
  if (trace.empty() || gt.empty()) throw std::invalid_argument("evaluation needs non-empty traces");
  constexpr double kSlack = 1e-9;
  MetricsReport r;
  double sp = 0.0, sp2 = 0.0, sr = 0.0, sr2 = 0.0;
  for (const auto& s : trace) {
    if (s.t < gt.front().t - kSlack || s.t > gt.back().t + kSlack) continue;
    const PoseSample& g = gt[nearest(gt, s.t)];
    ErrorSample e;
    e.t = s.t;
    e.position_cm = 100.0 * (s.position - g.position).norm();
    e.rotation_deg = rotation_vector_error(s.q, g.q);
    sp += e.position_cm;
    sp2 += e.position_cm * e.position_cm;
    sr += e.rotation_deg;
    sr2 += e.rotation_deg * e.rotation_deg;
    r.series.push_back(e);
  }
  if (r.series.empty()) throw std::invalid_argument("trace and ground truth do not overlap in time");
  const double n = static_cast<double>(r.series.size());
  r.position_rmse_cm = std::sqrt(sp2 / n);
  r.rotation_rmse_deg = std::sqrt(sr2 / n);
  r.position_std_cm = std::sqrt(std::max(0.0, sp2 / n - (sp / n) * (sp / n)));
  r.rotation_std_deg = std::sqrt(std::max(0.0, sr2 / n - (sr / n) * (sr / n)));
  return r;
}

std::string to_json(const MetricsReport& report, bool include_series) {
  nlohmann::ordered_json j;
  j["position_rmse_cm"] = report.position_rmse_cm;
  j["position_std_cm"] = report.position_std_cm;
  j["rotation_rmse_deg"] = report.rotation_rmse_deg;
  j["rotation_std_deg"] = report.rotation_std_deg;
  j["samples"] = report.series.size();
  j["metadata"] = report.metadata;
  if (include_series) {
    auto& s = j["series"];
    s = nlohmann::ordered_json::array();
    for (const auto& e : report.series) s.push_back({e.t, e.position_cm, e.rotation_deg});
  }
  return j.dump(2);
}

std::vector<std::pair<double, double>> pixel_speed_cdf(std::span<const FlowBatch> batches) {
  std::vector<double> speeds;
  for (const auto& b : batches) {
    for (const auto& m : b.measurements) speeds.push_back(m.flow.norm());
  }
  std::sort(speeds.begin(), speeds.end());
  std::vector<std::pair<double, double>> cdf;
  cdf.reserve(speeds.size());
  const double n = static_cast<double>(speeds.size());
  for (std::size_t i = 0; i < speeds.size(); ++i) {
    cdf.emplace_back(speeds[i], 100.0 * static_cast<double>(i + 1) / n);
  }
  return cdf;
}

void emit_plot_data(const std::filesystem::path& dir, const MetricsReport& report,
                    std::span<const PoseSample> trace, std::span<const PoseSample> gt,
                    std::span<const FlowBatch> batches) {
  std::filesystem::create_directories(dir);

  fmt::memory_buffer traj;
  fmt::format_to(std::back_inserter(traj),
                 "t,x,y,z,rx,ry,rz,gt_x,gt_y,gt_z,gt_rx,gt_ry,gt_rz\n");
  if (!gt.empty()) {
    for (const auto& s : trace) {
      const PoseSample& g = gt[nearest(gt, s.t)];
      const Vector3d r = s.q.to_rotation_vector();
      const Vector3d rg = g.q.to_rotation_vector();
      fmt::format_to(std::back_inserter(traj),
                     "{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},"
                     "{:.6f},{:.6f}\n",
                     s.t, s.position.x(), s.position.y(), s.position.z(), r.x(), r.y(), r.z(),
                     g.position.x(), g.position.y(), g.position.z(), rg.x(), rg.y(), rg.z());
    }
  }
  write_text(dir / "trajectory.csv", traj);

  fmt::memory_buffer err;
  fmt::format_to(std::back_inserter(err), "t,position_cm,rotation_deg\n");
  for (const auto& e : report.series) {
    fmt::format_to(std::back_inserter(err), "{:.6f},{:.6f},{:.6f}\n", e.t, e.position_cm,
                   e.rotation_deg);
  }
  write_text(dir / "errors.csv", err);

  fmt::memory_buffer cdf;
  fmt::format_to(std::back_inserter(cdf), "speed_px_s,cumulative_percent\n");
  for (const auto& [s, p] : pixel_speed_cdf(batches)) {
    fmt::format_to(std::back_inserter(cdf), "{:.6f},{:.6f}\n", s, p);
  }
  write_text(dir / "pixel_velocity_cdf.csv", cdf);
}

}  // namespace evtrack
