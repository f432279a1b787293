#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "evtrack/config.hpp"
#include "evtrack/dataset_io.hpp"
#include "evtrack/metrics.hpp"
#include "evtrack/pipeline.hpp"

namespace fs = std::filesystem;
using namespace evtrack;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_file;
  std::map<std::string, std::string> flags;
};

// Defaults, then the dataset manifest (when `with_manifest`), the config file
// and finally command-line flags.
Config resolve(const Options& opt, bool with_manifest) {
  Config c;
  if (!opt.config_file.empty()) c.load_file(opt.config_file);
  for (const auto& [k, v] : opt.flags) c.set(k, v);
  if (with_manifest) {
    const fs::path manifest = fs::path(c.text("run.dataset")) / "manifest.json";
    if (fs::exists(manifest)) {
      Config merged;
      auto entries = read_manifest(manifest).config;
      entries.erase("sim.duration");
      merged.merge(entries);
      if (!opt.config_file.empty()) merged.load_file(opt.config_file);
      for (const auto& [k, v] : opt.flags) merged.set(k, v);
      return merged;
    }
  }
  return c;
}

std::string summary_line(const std::string& label, const MetricsReport& r) {
  return fmt::format("{:<16} position {:8.3f} cm (std {:7.3f})  rotation {:8.3f} deg (std {:7.3f})",
                     label, r.position_rmse_cm, r.position_std_cm, r.rotation_rmse_deg,
                     r.rotation_std_deg);
}

void write_string(const fs::path& path, const std::string& s) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (f == nullptr) throw std::runtime_error(fmt::format("{}: cannot open for writing", path.string()));
  std::fwrite(s.data(), 1, s.size(), f);
  std::fclose(f);
}

int cmd_generate(const Options& opt) {
  Config c = resolve(opt, false);
  if (c.text("sim.preset") == "outlier" && opt.flags.count("flow.outlier_fraction") == 0) {
    Config file_only;
    if (!opt.config_file.empty()) file_only.load_file(opt.config_file);
    if (file_only.text("flow.outlier_fraction") == Config().text("flow.outlier_fraction")) {
      c.set("flow.outlier_fraction", "0.1");
    }
  }
  const Dataset d = generate_dataset(c);
  const fs::path dir = c.text("run.dataset");
  save_dataset(dir, d, c);
  fmt::print("wrote {} events, {} depth snapshots, {} pose observations to {}\n", d.events.size(),
             d.depth.size(), d.observations.size(), dir.string());
  return kExitOk;
}

int cmd_track(const Options& opt) {
  const Config c = resolve(opt, true);
  const RunConfig rc = make_run_config(c);
  const Dataset d = load_dataset(c.text("run.dataset"));
  if (!(d.intrinsics == rc.intrinsics)) {
    throw UsageError("camera.* settings differ from the dataset camera");
  }
  const PipelineResult r = run_pipeline(d.events, d.depth, d.observations, d.duration, rc);
  const fs::path out = c.text("run.out");
  fs::create_directories(out);
  write_pose_csv(out / "pose_trace.csv", r.poses);
  write_velocity_csv(out / "velocity_trace.csv", r.velocities);
  if (c.boolean("run.flow_dump")) write_flow_dump(out / "flow.csv", r.flows);
  write_string(out / "run_config.txt", c.to_text());
  fmt::print("mode {}: {} poses, {} velocity samples written to {}\n", to_string(rc.mode),
             r.poses.size(), r.velocities.size(), out.string());
  return kExitOk;
}

int cmd_eval(const Options& opt, const std::string& trace_path, const std::string& gt_path,
             bool plots) {
  const Config c = resolve(opt, true);
  const fs::path out = c.text("run.out");
  const fs::path dataset = c.text("run.dataset");
  const auto trace = read_pose_csv(trace_path.empty() ? out / "pose_trace.csv" : fs::path(trace_path));
  const auto gt = read_pose_csv(gt_path.empty() ? dataset / "gt_pose.csv" : fs::path(gt_path));
  MetricsReport report = evaluate(trace, gt);
  report.metadata = {{"mode", c.text("run.mode")},
                     {"seed", c.text("sim.seed")},
                     {"preset", c.text("sim.preset")},
                     {"dataset", dataset.string()}};
  fs::create_directories(out);
  write_string(out / "metrics.json", to_json(report) + "\n");
  if (plots) {
    std::vector<FlowBatch> flows;
    if (fs::exists(dataset / "events.txt")) {
      const Dataset d = load_dataset(dataset);
      flows = run_flow_engine(d.events, make_run_config(c).flow, d.intrinsics, d.duration);
    }
    emit_plot_data(out / "plots", report, trace, gt, flows);
  }
  fmt::print("{}\n", summary_line(c.text("run.mode"), report));
  return kExitOk;
}

int cmd_ablate(const Options& opt) {
  const Config base = resolve(opt, true);
  const Dataset d = load_dataset(base.text("run.dataset"));
  struct Arm {
    const char* name;
    bool normal_flow;
    bool weighting;
  };
  const Arm arms[] = {{"full", true, true},
                      {"no-normal-flow", false, true},
                      {"no-weighting", true, false}};
  nlohmann::ordered_json j;
  j["dataset"] = base.text("run.dataset");
  j["mode"] = base.text("run.mode");
  for (const Arm& arm : arms) {
    RunConfig rc = make_run_config(base);
    rc.velocity.normal_flow = arm.normal_flow;
    rc.velocity.weighting = arm.weighting;
    const PipelineResult r = run_pipeline(d.events, d.depth, d.observations, d.duration, rc);
    const MetricsReport m = evaluate(r.poses, d.ground_truth.poses);
    j["arms"][arm.name] = {{"normal_flow", arm.normal_flow},
                           {"weighting", arm.weighting},
                           {"position_rmse_cm", m.position_rmse_cm},
                           {"position_std_cm", m.position_std_cm},
                           {"rotation_rmse_deg", m.rotation_rmse_deg},
                           {"rotation_std_deg", m.rotation_std_deg}};
    fmt::print("{}\n", summary_line(arm.name, m));
  }
  const fs::path out = base.text("run.out");
  fs::create_directories(out);
  write_string(out / "ablation.json", j.dump(2) + "\n");
  return kExitOk;
}

int cmd_bench(const Options& opt, int repeat) {
  Config c = resolve(opt, true);
  const fs::path dataset = c.text("run.dataset");
  Dataset d;
  if (fs::exists(dataset / "manifest.json")) {
    d = load_dataset(dataset);
  } else {
    if (opt.flags.count("sim.preset") == 0) c.set("sim.preset", "faster");
    d = generate_dataset(c);
  }
  const RunConfig rc = make_run_config(c);
  double best = 0.0;
  std::size_t measurements = 0;
  for (int i = 0; i < repeat; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batches = run_flow_engine(d.events, rc.flow, d.intrinsics, d.duration);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    measurements = 0;
    for (const auto& b : batches) measurements += b.measurements.size();
    const double rate = static_cast<double>(d.events.size()) / dt.count();
    if (rate > best) best = rate;
  }
  fmt::print("{} events, {} flow measurements, best of {}: {:.3e} events/s\n", d.events.size(),
             measurements, repeat, best);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-based 6-DoF object tracking: simulation, tracking and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  Options opt;
  app.add_option("--config", opt.config_file, "flat key=value config file")->check(CLI::ExistingFile);
  std::map<std::string, std::string> raw;
  for (const auto& key : config_schema()) {
    app.add_option("--" + key.name, raw[key.name],
                   fmt::format("{} (default {})", key.help, key.default_value));
  }

  auto* generate = app.add_subcommand("generate", "simulate a dataset from sim.preset and sim.seed");
  auto* track = app.add_subcommand("track", "run the tracking pipeline on run.dataset");

  auto* eval = app.add_subcommand("eval", "compute RMSE metrics of a pose trace");
  std::string trace_path, gt_path;
  bool plots = true;
  eval->add_option("--trace", trace_path, "pose trace CSV (default run.out/pose_trace.csv)");
  eval->add_option("--gt", gt_path, "ground-truth CSV (default run.dataset/gt_pose.csv)");
  eval->add_flag("!--no-plots", plots, "skip plot data");

  auto* ablate = app.add_subcommand("ablate", "normal-flow and weighting ablation arms");
  auto* bench = app.add_subcommand("bench", "flow-engine throughput");
  int repeat = 3;
  bench->add_option("--repeat", repeat, "timed repetitions")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }
  for (const auto& key : config_schema()) {
    if (app.count("--" + key.name) > 0) opt.flags[key.name] = raw[key.name];
  }

  try {
    if (*generate) return cmd_generate(opt);
    if (*track) return cmd_track(opt);
    if (*eval) return cmd_eval(opt, trace_path, gt_path, plots);
    if (*ablate) return cmd_ablate(opt);
    if (*bench) return cmd_bench(opt, repeat);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return kExitUsage;
  } catch (const UsageError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kExitData;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
