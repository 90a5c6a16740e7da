#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spare/config.hpp"
#include "spare/pruner.hpp"
#include "spare/store.hpp"
#include "spare/tensor.hpp"

namespace spare {

struct SchemaMismatch : std::runtime_error {
  explicit SchemaMismatch(const std::string& what) : std::runtime_error("checkpoint: " + what) {}
};
struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& what) : std::runtime_error("checkpoint: " + what) {}
};

/// What pruning did to the training corpus, kept for reporting.
struct PruneSummary {
  int64_t train_dags = 0;
  int64_t marked_vertices = 0;  // embedding leaves across all training DAGs
  ReductionStats reduction;
};

/// Self-contained training artifact: everything evaluate() needs to rebuild
/// the model and reproduce predictions bit-exactly.
struct Checkpoint {
  TrainConfig config;
  Schema schema;
  FeatureStats stats;
  double target_mean = 0.0;  // training-split label statistics
  double target_std = 0.0;   // population convention
  OccurrenceMap occurrences;
  std::vector<EmbeddingKey> registry_keys;  // row order of registry.E
  PruneSummary prune_summary;
  // Name + tensor in parameter creation order.
  std::vector<std::pair<std::string, Tensor>> parameters;
};

/// Single JSON document; floats print in the shortest form that parses back
/// to the identical 64-bit value, so save/load round-trips bit-exactly.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Throws SchemaMismatch unless the dataset schema equals the trained one.
void check_schema(const Checkpoint& ckpt, const Schema& data_schema);

}  // namespace spare
