#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spare/checkpoint.hpp"
#include "spare/config.hpp"
#include "spare/model.hpp"
#include "spare/pruner.hpp"

namespace spare {

/// Outcome of a training run or an evaluation pass. Metrics appear under the
/// split names that were actually computed. epoch_seconds is wall clock and
/// deliberately left out of the canonical serialization so reports stay
/// byte-stable across runs.
struct MetricsReport {
  std::string task;         // regression | binary_classification
  std::string model;
  std::string metric_name;  // nrmse | auroc
  std::map<std::string, double> metrics;        // split -> metric
  std::map<std::string, int64_t> target_counts; // split -> #targets
  std::vector<double> loss_curve;               // per-epoch mean training loss
  int best_epoch = -1;                          // -1 when no validation split
  MessageCounter counter;  // one inference pass over the reported split(s)
  ReductionStats reduction;
  std::vector<double> epoch_seconds;
};

/// JSON text; include_timing adds epoch_seconds (non-deterministic).
std::string serialize_report(const MetricsReport& report, bool include_timing);

struct TrainResult {
  Checkpoint checkpoint;
  MetricsReport report;
};

/// Full pipeline: ingest, split, stats, occurrence counting, DAG build and
/// prune (materialized once), minibatch epochs under the per-epoch target
/// cap, best-validation parameters kept. Deterministic given the config.
TrainResult train(const TrainConfig& config, const std::string& data_dir);

/// Metric on one split ("train", "val" or "test") using the stored stats and
/// parameters; no updates. Reproduces train-time metrics bit-exactly on the
/// same dataset.
MetricsReport evaluate(const Checkpoint& ckpt, const std::string& data_dir,
                       const std::string& split);

struct BenchSide {
  std::string model;
  int64_t messages = 0;
  int64_t state_updates = 0;
  double train_epoch_seconds = 0.0;  // median of 5
  double inference_seconds = 0.0;    // median of 5
};

struct BenchResult {
  BenchSide spare;
  BenchSide baseline;
  ReductionStats reduction;               // SPARE-side DAGs
  std::map<int64_t, int64_t> level_slots; // schedule level -> total slots
  int64_t targets = 0;
  int batch_size = 0;
  int hidden_width = 0;
  int threads = 1;

  double message_ratio() const {
    return baseline.messages == 0 ? 0.0
                                  : static_cast<double>(spare.messages) /
                                        static_cast<double>(baseline.messages);
  }
};

/// Runs a SPARE variant and the T-round baseline on identical targets and
/// sizes; counts messages/updates and times training and inference epochs.
BenchResult bench_run(const TrainConfig& config, const std::string& data_dir);
std::string format_bench(const BenchResult& result);

/// Occurrence histogram, reduction ratios and the embedding-reuse diagnostic
/// for the training split, as printable text.
std::string stats_report(const TrainConfig& config, const std::string& data_dir);

}  // namespace spare
