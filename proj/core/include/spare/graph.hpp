#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "spare/store.hpp"

namespace spare {

struct InvalidDag : std::runtime_error {
  explicit InvalidDag(const std::string& what) : std::runtime_error("dag: " + what) {}
};

struct GraphConfig {
  int max_depth = 2;
  int64_t fanout_cap = -1;  // per (tuple, relation) reverse-link cap; -1 = unlimited
  uint64_t sample_seed = 0;
};

struct GraphVertex {
  TupleRef ref;
  int32_t depth = 0;
};

/// Undirected edge between vertex indices; u is the vertex whose expansion
/// discovered the edge. along_fk tells whether u holds the foreign key.
struct GraphEdge {
  int32_t u = -1;
  int32_t v = -1;
  int32_t relation = -1;
  bool along_fk = true;
};

/// Breadth-first neighborhood of one target tuple. vertices[0] is the target.
struct TupleGraph {
  std::vector<GraphVertex> vertices;
  std::vector<GraphEdge> edges;
};

struct DagEdge {
  int32_t src = -1;
  int32_t dst = -1;
  int32_t relation = -1;
  bool along_fk = true;    // src is the foreign-key holder
  bool same_depth = false;
};

/// Directed acyclic view of a TupleGraph; information flows along edges
/// toward the root at vertex 0. The pruner may mark vertices as embedding
/// leaves; `embedding` is either empty (nothing marked) or one flag per
/// vertex.
struct TupleDag {
  std::vector<GraphVertex> vertices;
  std::vector<DagEdge> edges;
  std::vector<uint8_t> embedding;

  bool is_embedding(int32_t v) const {
    return !embedding.empty() && embedding[static_cast<size_t>(v)] != 0;
  }
};

/// Expands the target's neighborhood breadth-first up to max_depth hops.
/// Reverse links are capped per (tuple, relation) with a deterministic sample
/// keyed by the linked tuple alone, so shared structure is sampled
/// identically for every target. Self-referencing rows add no edge.
TupleGraph build_undirected(const Store& store, TupleRef target, const GraphConfig& config);

/// Orients every edge toward the root: deeper vertex -> shallower vertex;
/// ties in depth go from the later tuple to the earlier one under the global
/// (table, row) order. Edges are sorted by (src, dst, relation).
TupleDag to_dag(const TupleGraph& graph);

TupleDag build_dag(const Store& store, TupleRef target, const GraphConfig& config);

/// Structural checks: single root at index 0, depth-0 root, edges stay in
/// range, depth drops by at most one hop, same-depth edges respect the
/// global order, no duplicate arcs, every vertex reaches the root, marked
/// embedding leaves have no incoming edges and the root is unmarked.
/// Throws InvalidDag on the first violation.
void validate_dag(const TupleDag& dag);

/// Debug listing, one line per edge:
///   edge <src_table>.<src_row> -> <dst_table>.<dst_row> rel=<id>
/// sorted lexicographically, newline-terminated.
std::string format_dag(const Store& store, const TupleDag& dag);

}  // namespace spare
