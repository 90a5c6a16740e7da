// Microbenchmarks for the hot paths the trainer alternates between:
// neighborhood construction, schedule batching, corpus pruning, and the two
// forward passes. One in-memory workload (a small sum-regression database,
// batch of 64 targets) is shared by every benchmark.

#include <benchmark/benchmark.h>

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include <spare/baseline.hpp>
#include <spare/graph.hpp>
#include <spare/model.hpp>
#include <spare/pruner.hpp>
#include <spare/schedule.hpp>
#include <spare/store.hpp>
#include <spare/synthetic.hpp>
#include <spare/tensor.hpp>

namespace {

struct Workload {
  spare::Schema schema;
  spare::Store store;
  std::vector<spare::TupleRef> targets;
  spare::GraphConfig gcfg;
  spare::OccurrenceMap occ;
  std::vector<spare::TupleGraph> graphs;  // batch of 64
  std::vector<spare::TupleDag> dags;
  spare::BatchSchedule schedule;
  spare::BaselinePlan plan;
  spare::FeatureStats stats;
  std::vector<spare::FeatureVector> slot_features;
  std::vector<spare::FeatureVector> plan_features;
};

Workload build_workload() {
  namespace fs = std::filesystem;
  const fs::path dir =
      fs::temp_directory_path() / ("spare-bench-" + std::to_string(::getpid()));
  fs::create_directories(dir);

  spare::SyntheticSpec spec;
  spec.family = "sum-regression";
  spec.parents = 100;
  spec.targets = 800;
  spare::gen_synthetic(spec, 5, dir.string());

  Workload w;
  w.schema = spare::load_schema((dir / "schema.json").string());
  w.store = spare::ingest(w.schema, dir.string());
  fs::remove_all(dir);  // everything lives in memory from here on

  const int children = w.schema.table_index("children");
  for (int64_t row = 0; row < w.store.row_count(children); ++row)
    w.targets.push_back({children, static_cast<int32_t>(row)});

  w.gcfg.max_depth = 2;
  w.gcfg.fanout_cap = 8;
  w.gcfg.sample_seed = 1;
  w.occ = spare::count_occurrences(w.store, w.targets, w.gcfg);

  for (size_t i = 0; i < 64; ++i) {
    w.graphs.push_back(spare::build_undirected(w.store, w.targets[i], w.gcfg));
    w.dags.push_back(spare::to_dag(w.graphs.back()));
  }
  w.schedule = spare::build_schedule(w.dags);
  w.plan = spare::build_baseline_plan(w.graphs);

  w.stats = spare::compute_feature_stats(w.store, w.targets);
  spare::FeatureEncoder encoder(w.store, w.stats);
  for (const spare::NodeSlot& slot : w.schedule.nodes)
    w.slot_features.push_back(slot.is_embedding ? spare::FeatureVector{}
                                                : encoder.encode(slot.key.tuple, true));
  for (const spare::BaselinePlan::VertexSlot& slot : w.plan.vertices)
    w.plan_features.push_back(encoder.encode(slot.ref, true));
  return w;
}

const Workload& workload() {
  static Workload w = build_workload();
  return w;
}

void bm_build_dag(benchmark::State& state) {
  const Workload& w = workload();
  size_t i = 0;
  for (auto _ : state) {
    spare::TupleDag dag = spare::build_dag(w.store, w.targets[i], w.gcfg);
    benchmark::DoNotOptimize(dag.edges.data());
    i = (i + 1) % w.targets.size();
  }
}

void bm_build_schedule(benchmark::State& state) {
  const Workload& w = workload();
  for (auto _ : state) {
    spare::BatchSchedule schedule = spare::build_schedule(w.dags);
    benchmark::DoNotOptimize(schedule.nodes.data());
  }
}

void bm_prune_batch(benchmark::State& state) {
  const Workload& w = workload();
  spare::PruneConfig cfg;
  for (auto _ : state) {
    for (const spare::TupleDag& dag : w.dags) {
      spare::TupleDag pruned = spare::prune(dag, w.occ, w.store, cfg);
      benchmark::DoNotOptimize(pruned.vertices.data());
    }
  }
}

void bm_spare_forward(benchmark::State& state) {
  const Workload& w = workload();
  spare::ModelConfig cfg;
  spare::SpareModel model(w.schema, w.stats, cfg, {}, 1);
  for (auto _ : state) {
    spare::Tape tape;
    spare::Tape::Id pred = model.forward(tape, w.schedule, w.slot_features);
    benchmark::DoNotOptimize(tape.value(pred).at(0, 0));
  }
}

void bm_baseline_forward(benchmark::State& state) {
  const Workload& w = workload();
  spare::GnnConfig cfg;
  cfg.rounds = 2;
  spare::GnnBaseline model(w.schema, w.stats, cfg, 1);
  for (auto _ : state) {
    spare::Tape tape;
    spare::Tape::Id pred = model.forward(tape, w.plan, w.plan_features);
    benchmark::DoNotOptimize(tape.value(pred).at(0, 0));
  }
}

}  // namespace

BENCHMARK(bm_build_dag)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_build_schedule)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_prune_batch)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_spare_forward)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_baseline_forward)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
