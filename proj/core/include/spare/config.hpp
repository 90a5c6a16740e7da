#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "spare/baseline.hpp"
#include "spare/graph.hpp"
#include "spare/model.hpp"
#include "spare/pruner.hpp"
#include "spare/tensor.hpp"

namespace spare {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error("config: " + what) {}
};

/// Everything a training run depends on. Every field has a default, so an
/// empty JSON object is a valid config. -1 stands for "unlimited"/"never"
/// (JSON null) on fanout_cap and prune threshold.
struct TrainConfig {
  std::string model = "spare_gcn";  // spare_gcn | spare_deepsets | gnn_baseline | root_only

  int max_depth = 2;
  int64_t fanout_cap = 8;

  bool prune_enabled = true;
  int64_t prune_threshold = 2;
  int64_t small_table_rows = 0;

  int hidden_width = 32;
  int encoder_layers = 2;
  int head_layers = 2;

  std::string optimizer = "adam";  // adam | sgd
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  int epochs = 10;
  int64_t epoch_target_cap = 100000;
  int batch_size = 64;
  uint64_t seed = 1;
  std::array<double, 3> split = {0.65, 0.15, 0.20};

  int gnn_rounds = 2;  // T for the gnn_baseline

  // With strict keys on, inference refuses embedding keys outside the trained
  // registry instead of expanding them in place.
  bool strict_embedding_keys = false;
  bool lenient_ingest = false;

  void validate() const;  // throws ConfigError

  bool is_spare() const { return model != "gnn_baseline"; }

  /// root_only collapses the neighborhood to the target tuple itself.
  GraphConfig graph_config() const {
    GraphConfig g;
    g.max_depth = model == "root_only" ? 0 : max_depth;
    g.fanout_cap = fanout_cap;
    g.sample_seed = seed;
    return g;
  }
  PruneConfig prune_config() const {
    PruneConfig p;
    p.enabled = prune_enabled && model != "root_only";
    p.threshold = prune_threshold;
    p.small_table_rows = small_table_rows;
    return p;
  }
  ModelConfig model_config() const {
    ModelConfig m;
    m.variant = model == "spare_deepsets" ? AggVariant::DeepSets : AggVariant::Gcn;
    m.hidden_width = hidden_width;
    m.encoder_layers = encoder_layers;
    m.head_layers = head_layers;
    return m;
  }
  GnnConfig gnn_config() const {
    GnnConfig g;
    g.rounds = gnn_rounds;
    g.hidden_width = hidden_width;
    g.encoder_layers = encoder_layers;
    g.head_layers = head_layers;
    return g;
  }
  AdamConfig adam_config() const { return {lr, beta1, beta2, eps}; }
  Optimizer make_optimizer() const {
    return optimizer == "sgd" ? Optimizer::sgd(lr) : Optimizer::adam(adam_config());
  }
};

/// Strict JSON: unknown keys at any level are errors, values are validated.
TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::string& path);

/// Full canonical echo with every field present; stable across runs.
std::string serialize_train_config(const TrainConfig& config);

}  // namespace spare
