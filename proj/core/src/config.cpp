#include "evtrack/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "evtrack/core_types.hpp"

namespace evtrack {

namespace {

using K = ValueKind;

std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && ws(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

bool parse_real(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (b != e && *b == '+') ++b;
  const auto r = std::from_chars(b, e, out);
  return b != e && r.ec == std::errc() && r.ptr == e && std::isfinite(out);
}

bool parse_int(const std::string& s, std::int64_t& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (b != e && *b == '+') ++b;
  const auto r = std::from_chars(b, e, out);
  return b != e && r.ec == std::errc() && r.ptr == e;
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") {
    out = true;
    return true;
  }
  if (s == "false" || s == "0" || s == "off" || s == "no") {
    out = false;
    return true;
  }
  return false;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"camera.fx", K::real, "480", "focal length x (px)"},
      {"camera.fy", K::real, "480", "focal length y (px)"},
      {"camera.cx", K::real, "320", "principal point x (px)"},
      {"camera.cy", K::real, "240", "principal point y (px)"},
      {"camera.width", K::integer, "640", "sensor width (px)"},
      {"camera.height", K::integer, "480", "sensor height (px)"},

      {"sim.preset", K::text, "regular", "scene preset: regular, faster, aperture, outlier"},
      {"sim.seed", K::integer, "1", "generator seed"},
      {"sim.duration", K::real, "10", "trajectory length (s)"},
      {"sim.event_threshold", K::real, "1", "pixel distance between events of one point (px)"},
      {"sim.time_jitter", K::real, "0", "event timestamp jitter std (s)"},
      {"sim.step", K::real, "0.00025", "event integration step (s)"},
      {"sim.pose_rate", K::real, "5", "pose observation rate (Hz)"},
      {"sim.pose_noise_pos", K::real, "0.02", "pose observation position noise std (m)"},
      {"sim.pose_noise_deg", K::real, "5", "pose observation rotation noise std (deg)"},
      {"sim.dropout_probability", K::real, "0", "pose dropout probability above dropout_speed"},
      {"sim.dropout_speed", K::real, "1000", "object pixel speed that enables dropout (px/s)"},
      {"sim.depth_rate", K::real, "60", "depth snapshot rate (Hz)"},
      {"sim.gt_rate", K::real, "200", "ground-truth export rate (Hz)"},

      {"flow.xi", K::real, "0.001", "triplet timing tolerance (s)"},
      {"flow.spatial_radius", K::integer, "3", "largest triplet hop (px, Chebyshev)"},
      {"flow.temporal_window", K::real, "0.03", "largest triplet span (s)"},
      {"flow.pixel_depth", K::integer, "4", "events kept per pixel"},
      {"flow.same_polarity", K::boolean, "false", "require equal polarity within a triplet"},
      {"flow.roi_cell_size", K::integer, "16", "RoI cell side (px)"},
      {"flow.batch_interval", K::real, "0.01", "flow batch length (s)"},
      {"flow.outlier_fraction", K::real, "0", "fraction of flows replaced by uniform random ones"},
      {"flow.outlier_speed", K::real, "1500", "half-width of the outlier flow box (px/s)"},
      {"flow.depth_radius", K::integer, "8", "search radius for depth at an anchor (px)"},

      {"vel.alpha", K::real, "0.5", "velocity decay per batch"},
      {"vel.q_v", K::real, "0.1", "linear process noise std (m/s)"},
      {"vel.q_w", K::real, "0.5", "angular process noise std (rad/s)"},
      {"vel.r_f", K::real, "2", "flow noise std (px/s, px in displacement mode)"},
      {"vel.laplace_b", K::real, "1", "Laplacian weighting scale (px/s, px in displacement mode)"},
      {"vel.weight_floor", K::real, "1e-6", "smallest measurement weight"},
      {"vel.min_flow", K::real, "1", "smallest usable flow magnitude (px/s)"},
      {"vel.max_flow", K::real, "10000", "largest usable flow magnitude (px/s)"},
      {"vel.p0", K::real, "10", "initial covariance diagonal"},
      {"vel.normal_flow", K::boolean, "true", "use the normal-flow constraint"},
      {"vel.weighting", K::boolean, "true", "use Laplacian measurement weighting"},
      {"vel.displacement_mode", K::boolean, "false", "compare displacements instead of rates"},

      {"pose.q_t", K::real, "0.1", "translation process noise std (m per sqrt s)"},
      {"pose.q_q_deg", K::real, "5", "rotation process noise std (deg per sqrt s)"},
      {"pose.r_t", K::real, "0.02", "observation position noise std (m)"},
      {"pose.r_q_deg", K::real, "5", "observation rotation noise std (deg)"},
      {"pose.spread", K::real, "0.001", "sigma-point spread"},
      {"pose.secondary", K::real, "2", "sigma-point secondary scale"},
      {"pose.prior_weight", K::real, "0", "sigma-point prior weight"},
      {"pose.fold_velocity_covariance", K::boolean, "false", "add velocity covariance to Q"},

      {"run.mode", K::text, "fused", "tracking mode: fused, pose-only, velocity-only"},
      {"run.dataset", K::text, "dataset", "dataset directory"},
      {"run.out", K::text, "out", "output directory"},
      {"run.flow_dump", K::boolean, "false", "write per-batch flow measurements"},
  };
  return schema;
}

Config::Config() {
  for (const auto& k : config_schema()) values_[k.name] = k.default_value;
}

const ConfigKey& Config::key_info(const std::string& key) const {
  const auto& s = config_schema();
  const auto it = std::find_if(s.begin(), s.end(), [&](const ConfigKey& k) { return k.name == key; });
  if (it == s.end()) throw ConfigError(fmt::format("unknown config key '{}'", key));
  return *it;
}

bool Config::has(const std::string& key) const { return values_.count(key) != 0; }

void Config::set(const std::string& key, const std::string& raw) {
  const ConfigKey& info = key_info(key);
  const std::string value = trim(raw);
  bool ok = true;
  switch (info.kind) {
    case K::real: {
      double d;
      ok = parse_real(value, d);
      break;
    }
    case K::integer: {
      std::int64_t i;
      ok = parse_int(value, i);
      break;
    }
    case K::boolean: {
      bool b;
      ok = parse_bool(value, b);
      break;
    }
    case K::text:
      ok = !value.empty();
      break;
  }
  if (!ok) throw ConfigError(fmt::format("invalid value '{}' for '{}'", value, key));
  values_[key] = value;
}

void Config::merge(const std::map<std::string, std::string>& entries) {
  for (const auto& [k, v] : entries) set(k, v);
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("{}: cannot open for reading", path.string()));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(fmt::format("{}:{}: expected key=value", path.string(), lineno));
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
}

const std::string& Config::text(const std::string& key) const {
  key_info(key);
  return values_.at(key);
}

double Config::real(const std::string& key) const {
  double d = 0.0;
  if (!parse_real(text(key), d)) throw ConfigError(fmt::format("'{}' is not a number", key));
  return d;
}

std::int64_t Config::integer(const std::string& key) const {
  std::int64_t i = 0;
  if (!parse_int(text(key), i)) throw ConfigError(fmt::format("'{}' is not an integer", key));
  return i;
}

std::uint64_t Config::unsigned_integer(const std::string& key) const {
  const std::int64_t i = integer(key);
  if (i < 0) throw ConfigError(fmt::format("'{}' must be non-negative", key));
  return static_cast<std::uint64_t>(i);
}

bool Config::boolean(const std::string& key) const {
  bool b = false;
  if (!parse_bool(text(key), b)) throw ConfigError(fmt::format("'{}' is not a boolean", key));
  return b;
}

std::map<std::string, std::string> Config::group(const std::string& prefix) const {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : values_) {
    if (k.rfind(prefix, 0) == 0) out[k] = v;
  }
  return out;
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += fmt::format("{}={}\n", k, v);
  return out;
}

}  // namespace evtrack
