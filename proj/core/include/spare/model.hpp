#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "spare/pruner.hpp"
#include "spare/schedule.hpp"
#include "spare/store.hpp"
#include "spare/tensor.hpp"

namespace spare {

struct UnknownEmbeddingKey : std::runtime_error {
  explicit UnknownEmbeddingKey(const std::string& what)
      : std::runtime_error("registry: " + what) {}
};

inline constexpr int kCatEmbedDim = 8;
inline constexpr int kRelEmbedDim = 8;

enum class AggVariant { Gcn, DeepSets };

struct ModelConfig {
  AggVariant variant = AggVariant::Gcn;
  int hidden_width = 32;
  int encoder_layers = 2;
  int head_layers = 2;
};

/// One message per DAG edge, one state update per vertex (the grain the
/// efficiency comparison is stated in).
struct MessageCounter {
  int64_t messages = 0;
  int64_t state_updates = 0;
};

/// Feature geometry of one table as the encoders see it.
struct TableLayout {
  std::string name;
  int numeric_count = 0;
  std::vector<std::string> cat_names;
  std::vector<int64_t> vocab_sizes;
};

/// Bottom-up model over a BatchSchedule: per-table encoders produce h⁰,
/// embedding slots read h_e from the registry, one pass of child
/// aggregation per level, head applied to the root states.
class SpareModel {
 public:
  /// Creates and seeds every parameter. registry_keys become the rows of
  /// `registry.E` in the given (sorted) order.
  SpareModel(const Schema& schema, const FeatureStats& stats, const ModelConfig& config,
             std::vector<EmbeddingKey> registry_keys, uint64_t seed);

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const std::vector<EmbeddingKey>& registry_keys() const { return registry_keys_; }
  const ModelConfig& config() const { return config_; }

  /// Predictions [n_dags × 1] on the tape. slot_features must align with
  /// schedule.nodes (embedding slots may carry empty features). Throws
  /// UnknownEmbeddingKey for a marked slot whose key has no registry row.
  /// Non-const because backward through the tape writes parameter grads.
  Tape::Id forward(Tape& tape, const BatchSchedule& schedule,
                   const std::vector<FeatureVector>& slot_features,
                   MessageCounter* counter = nullptr);

  int encoder_input_dim(int table) const;
  int hidden_width() const { return config_.hidden_width; }

 private:
  ModelConfig config_;
  int n_relations_ = 0;
  std::vector<TableLayout> tables_;
  std::vector<EmbeddingKey> registry_keys_;
  std::map<EmbeddingKey, int64_t> registry_rows_;
  ParameterSet params_;
};

}  // namespace spare
