#include <benchmark/benchmark.h>

#include "evtrack/pipeline.hpp"

using namespace evtrack;

namespace {

const Dataset& faster_dataset() {
  static const Dataset d = [] {
    Config c;
    c.set("sim.preset", "faster");
    c.set("sim.duration", "2");
    return generate_dataset(c);
  }();
  return d;
}

void BM_TripletSearch(benchmark::State& state) {
  const Dataset& d = faster_dataset();
  const RunConfig rc = make_run_config(Config{});
  for (auto _ : state) {
    auto c = search_triplets(d.events, rc.flow.triplet, d.intrinsics);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.events.size()));
}
BENCHMARK(BM_TripletSearch)->Unit(benchmark::kMillisecond);

void BM_FlowEngine(benchmark::State& state) {
  const Dataset& d = faster_dataset();
  const RunConfig rc = make_run_config(Config{});
  for (auto _ : state) {
    auto b = run_flow_engine(d.events, rc.flow, d.intrinsics, d.duration);
    benchmark::DoNotOptimize(b.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.events.size()));
}
BENCHMARK(BM_FlowEngine)->Unit(benchmark::kMillisecond);

void BM_VelocityStep(benchmark::State& state) {
  const CameraIntrinsics k;
  FlowObservationBatch batch;
  for (int n = 0; n < state.range(0); ++n) {
    FlowMeasurement m;
    m.u = 40 + (n * 37) % 560;
    m.v = 40 + (n * 53) % 400;
    m.flow = Vector2d(300.0 + n, -120.0 + 2.0 * n);
    m.n_support = 10;
    batch.observations.push_back({m, 0.6});
  }
  VelocityTracker tracker(k, VelocityFilterConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(tracker.step(batch));
}
BENCHMARK(BM_VelocityStep)->Arg(8)->Arg(64)->Arg(512);

void BM_PosePropagate(benchmark::State& state) {
  const UkfConfig c;
  PoseState s;
  s.t = Vector3d(0, 0, 0.6);
  VelocityState v;
  v.set_mean((Vector6d() << 0.2, -0.1, 0.05, 0.3, 0.2, -0.4).finished());
  v.P = Matrix6d::Identity() * 1e-3;
  for (auto _ : state) {
    s = propagate(s, v, 0.01, c);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_PosePropagate);

}  // namespace

BENCHMARK_MAIN();
