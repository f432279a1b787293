#include "evtrack/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include "json.hpp"

namespace evtrack {

namespace {

namespace fs = std::filesystem;

constexpr const char* kPoseHeader = "t,tx,ty,tz,qw,qx,qy,qz";
constexpr const char* kVelocityHeader = "t,vx,vy,vz,wx,wy,wz";
constexpr const char* kFlowHeader = "t,u,v,fx,fy,n_support";

[[noreturn]] void fail(const fs::path& path, std::size_t line, const std::string& what) {
  throw DataError(fmt::format("{}:{}: {}", path.string(), line, what));
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("{}: cannot open for reading", path.string()));
  return in;
}

void write_file(const fs::path& path, const fmt::memory_buffer& buf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("{}: cannot open for writing", path.string()));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error(fmt::format("{}: write failed", path.string()));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

// Splits on `sep` (or any whitespace when sep == ' ') and parses doubles.
std::vector<double> parse_numbers(std::string_view line, char sep, std::size_t expected,
                                  const fs::path& path, std::size_t lineno) {
  std::vector<double> out;
  out.reserve(expected);
  std::size_t pos = 0;
  while (pos <= line.size()) {
    if (sep == ' ') {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
      if (pos == line.size()) break;
    }
    std::size_t end = pos;
    while (end < line.size() && line[end] != sep && !(sep == ' ' && line[end] == '\t')) ++end;
    std::string_view tok = trim(line.substr(pos, end - pos));
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      fail(path, lineno, fmt::format("cannot parse field {} ('{}')", out.size() + 1, tok));
    }
    out.push_back(v);
    pos = end + 1;
  }
  if (out.size() != expected) {
    fail(path, lineno, fmt::format("expected {} fields, found {}", expected, out.size()));
  }
  return out;
}

int as_int(double v, const fs::path& path, std::size_t lineno) {
  if (v != static_cast<double>(static_cast<long>(v))) fail(path, lineno, "expected an integer");
  return static_cast<int>(v);
}

// Reads a CSV with a fixed header and `n` numeric columns.
template <typename F>
void read_csv(const fs::path& path, const char* header, std::size_t n, F&& on_row) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view s = trim(line);
    if (s.empty()) continue;
    if (!seen_header) {
      if (s != header) fail(path, lineno, fmt::format("expected header '{}'", header));
      seen_header = true;
      continue;
    }
    on_row(parse_numbers(s, ',', n, path, lineno), lineno);
  }
  if (!seen_header) fail(path, lineno, fmt::format("missing header '{}'", header));
}

void check_time(double t, double prev, const fs::path& path, std::size_t lineno) {
  if (!std::isfinite(t)) fail(path, lineno, "timestamp is not finite");
  if (t < prev) fail(path, lineno, "timestamps out of order");
}

}  // namespace

void write_events(const fs::path& path, std::span<const Event> events, int width, int height) {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "# {} {}\n", width, height);
  for (const auto& e : events) {
    fmt::format_to(std::back_inserter(buf), "{:.9f} {} {} {}\n", e.t, e.u, e.v,
                   e.polarity > 0 ? "+1" : "-1");
  }
  write_file(path, buf);
}

EventFile read_events(const fs::path& path) {
  std::ifstream in = open_in(path);
  EventFile f;
  std::string line;
  std::size_t lineno = 0;
  bool seen_header = false;
  double prev = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = trim(line);
    if (s.empty()) continue;
    if (!seen_header) {
      if (s.front() != '#') fail(path, lineno, "expected header '# width height'");
      s.remove_prefix(1);
      const auto wh = parse_numbers(trim(s), ' ', 2, path, lineno);
      f.width = as_int(wh[0], path, lineno);
      f.height = as_int(wh[1], path, lineno);
      if (f.width <= 0 || f.height <= 0) fail(path, lineno, "sensor size must be positive");
      seen_header = true;
      continue;
    }
    if (s.front() == '#') continue;
    const auto x = parse_numbers(s, ' ', 4, path, lineno);
    Event e;
    // Timestamps carry nanoseconds; snap to the grid the simulator uses.
    e.t = std::isfinite(x[0]) ? static_cast<double>(std::llround(x[0] * 1e9)) * 1e-9 : x[0];
    e.u = as_int(x[1], path, lineno);
    e.v = as_int(x[2], path, lineno);
    const int p = as_int(x[3], path, lineno);
    if (p != 1 && p != -1) fail(path, lineno, "polarity must be +1 or -1");
    e.polarity = static_cast<std::int8_t>(p);
    if (!(e.t >= 0.0)) fail(path, lineno, "timestamp must be non-negative");
    check_time(e.t, prev, path, lineno);
    if (e.u < 0 || e.v < 0 || e.u >= f.width || e.v >= f.height) {
      fail(path, lineno, fmt::format("event ({}, {}) outside the {}x{} sensor", e.u, e.v, f.width,
                                     f.height));
    }
    prev = e.t;
    f.events.push_back(e);
  }
  if (!seen_header) fail(path, lineno, "missing header '# width height'");
  return f;
}

void write_depth(const fs::path& path, const DepthSequence& depth) {
  fmt::memory_buffer buf;
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double stamp = depth.stamp(i);
    fmt::format_to(std::back_inserter(buf), "# frame {}\n", stamp);
    for (const auto& s : depth.samples(i)) {
      fmt::format_to(std::back_inserter(buf), "{} {} {} {}\n", stamp, s.u, s.v, s.depth);
    }
  }
  write_file(path, buf);
}

DepthSequence read_depth(const fs::path& path, int width, int height) {
  std::ifstream in = open_in(path);
  DepthSequence seq(width, height);
  std::string line;
  std::size_t lineno = 0;
  bool open = false;
  double stamp = 0.0;
  std::vector<DepthSample> samples;
  auto flush = [&] {
    if (open) seq.add_frame(stamp, std::move(samples));
    samples.clear();
    open = false;
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = trim(line);
    if (s.empty()) continue;
    try {
      if (s.front() == '#') {
        s.remove_prefix(1);
        s = trim(s);
        if (s.substr(0, 5) != "frame") continue;
        const double st = parse_numbers(trim(s.substr(5)), ' ', 1, path, lineno)[0];
        flush();
        check_time(st, seq.empty() ? -std::numeric_limits<double>::infinity()
                                   : seq.stamp(seq.size() - 1), path, lineno);
        stamp = st;
        open = true;
        continue;
      }
      const auto x = parse_numbers(s, ' ', 4, path, lineno);
      if (!open || x[0] != stamp) {
        flush();
        check_time(x[0], seq.empty() ? -std::numeric_limits<double>::infinity()
                                     : seq.stamp(seq.size() - 1), path, lineno);
        stamp = x[0];
        open = true;
      }
      const DepthSample d{as_int(x[1], path, lineno), as_int(x[2], path, lineno), x[3]};
      if (d.u < 0 || d.v < 0 || d.u >= width || d.v >= height) {
        fail(path, lineno, "depth sample outside the sensor");
      }
      if (!is_valid_depth(d.depth)) fail(path, lineno, "depth must be finite and positive");
      samples.push_back(d);
    } catch (const DataError& e) {
      const std::string msg = e.what();
      if (msg.rfind(path.string(), 0) == 0) throw;
      fail(path, lineno, msg);
    }
  }
  flush();
  return seq;
}

void write_pose_csv(const fs::path& path, std::span<const PoseSample> poses) {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "{}\n", kPoseHeader);
  for (const auto& p : poses) {
    fmt::format_to(std::back_inserter(buf), "{},{},{},{},{},{},{},{}\n",
                   p.t, p.position.x(), p.position.y(), p.position.z(), p.q.w(), p.q.x(), p.q.y(),
                   p.q.z());
  }
  write_file(path, buf);
}

std::vector<PoseSample> read_pose_csv(const fs::path& path) {
  std::vector<PoseSample> out;
  double prev = -std::numeric_limits<double>::infinity();
  read_csv(path, kPoseHeader, 8, [&](const std::vector<double>& x, std::size_t lineno) {
    check_time(x[0], prev, path, lineno);
    prev = x[0];
    PoseSample p;
    p.t = x[0];
    p.position = Vector3d(x[1], x[2], x[3]);
    try {
      p.q = UnitQuaternion(x[4], x[5], x[6], x[7]);
    } catch (const std::exception& e) {
      fail(path, lineno, e.what());
    }
    out.push_back(p);
  });
  return out;
}

void write_observations_csv(const fs::path& path, std::span<const PoseObservation> observations) {
  std::vector<PoseSample> rows;
  rows.reserve(observations.size());
  for (const auto& o : observations) rows.push_back({o.stamp, o.t, o.q});
  write_pose_csv(path, rows);
}

std::vector<PoseObservation> read_observations_csv(const fs::path& path) {
  std::vector<PoseObservation> out;
  for (const auto& p : read_pose_csv(path)) out.push_back({p.t, p.position, p.q});
  return out;
}

void write_velocity_csv(const fs::path& path, std::span<const VelocitySample> velocities) {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "{}\n", kVelocityHeader);
  for (const auto& s : velocities) {
    const auto& v = s.velocity;
    fmt::format_to(std::back_inserter(buf), "{},{},{},{},{},{},{}\n",
                   s.t, v.v_o.x(), v.v_o.y(), v.v_o.z(), v.omega.x(), v.omega.y(), v.omega.z());
  }
  write_file(path, buf);
}

std::vector<VelocitySample> read_velocity_csv(const fs::path& path) {
  std::vector<VelocitySample> out;
  double prev = -std::numeric_limits<double>::infinity();
  read_csv(path, kVelocityHeader, 7, [&](const std::vector<double>& x, std::size_t lineno) {
    check_time(x[0], prev, path, lineno);
    prev = x[0];
    VelocitySample s;
    s.t = x[0];
    s.velocity.v_o = Vector3d(x[1], x[2], x[3]);
    s.velocity.omega = Vector3d(x[4], x[5], x[6]);
    s.velocity.P.setZero();
    out.push_back(s);
  });
  return out;
}

void write_flow_dump(const fs::path& path, std::span<const FlowBatch> batches) {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "{}\n", kFlowHeader);
  for (const auto& b : batches) {
    for (const auto& m : b.measurements) {
      fmt::format_to(std::back_inserter(buf), "{:.9f},{},{},{:.6f},{:.6f},{}\n", m.t, m.u, m.v,
                     m.flow.x(), m.flow.y(), m.n_support);
    }
  }
  write_file(path, buf);
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  nlohmann::ordered_json j;
  j["seed"] = manifest.seed;
  j["config"] = manifest.config;
  j["artifacts"] = manifest.artifacts;
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "{}\n", j.dump(2));
  write_file(path, buf);
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in = open_in(path);
  Manifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    if (j.contains("artifacts")) {
      m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: invalid manifest: {}", path.string(), e.what()));
  }
  return m;
}

}  // namespace evtrack
