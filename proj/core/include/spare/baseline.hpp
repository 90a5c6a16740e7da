#pragma once

#include <cstdint>
#include <vector>

#include "spare/graph.hpp"
#include "spare/model.hpp"
#include "spare/store.hpp"
#include "spare/tensor.hpp"

namespace spare {

struct GnnConfig {
  int rounds = 2;  // T
  int hidden_width = 32;
  int encoder_layers = 2;
  int head_layers = 2;
};

/// Canonical execution plan for a batch of undirected tuple graphs.
/// Vertices are sorted by (graph, table, row); each undirected edge
/// contributes two directed messages, grouped by receiver and sorted by
/// (sender tuple, relation) inside each segment.
struct BaselinePlan {
  struct VertexSlot {
    int32_t graph = -1;
    int32_t vertex = -1;  // index within that graph
    int32_t table = -1;
    TupleRef ref;
  };
  std::vector<VertexSlot> vertices;
  std::vector<int64_t> senders;          // message list, vertex-slot indices
  std::vector<int32_t> relations;        // aligned with senders
  std::vector<uint8_t> sender_holds_fk;  // aligned with senders
  std::vector<int64_t> recv_offsets;     // per-vertex segments over the list
  std::vector<int64_t> graph_offsets;    // per-graph vertex ranges (readout)
  int64_t undirected_edges = 0;
};

BaselinePlan build_baseline_plan(const std::vector<TupleGraph>& graphs);

/// T rounds of undirected message passing over G_t followed by a mean
/// readout of all vertex states and the output head. Counting contract:
/// 2·T·|E| messages (one per edge direction per round), T·|V| updates.
class GnnBaseline {
 public:
  GnnBaseline(const Schema& schema, const FeatureStats& stats, const GnnConfig& config,
              uint64_t seed);

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const GnnConfig& config() const { return config_; }

  /// Predictions [n_graphs × 1]; vertex_features align with plan.vertices.
  Tape::Id forward(Tape& tape, const BaselinePlan& plan,
                   const std::vector<FeatureVector>& vertex_features,
                   MessageCounter* counter = nullptr);

 private:
  GnnConfig config_;
  int n_relations_ = 0;
  std::vector<TableLayout> tables_;
  ParameterSet params_;
};

}  // namespace spare
