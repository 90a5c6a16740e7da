#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "spare/graph.hpp"
#include "spare/store.hpp"

namespace spare {

struct MismatchedLists : std::runtime_error {
  explicit MismatchedLists(const std::string& what) : std::runtime_error("stats: " + what) {}
};

/// A repeated (tuple, depth) occurrence; the root (depth 0) never qualifies.
struct EmbeddingKey {
  TupleRef tuple;
  int32_t depth = 0;

  friend bool operator==(const EmbeddingKey&, const EmbeddingKey&) = default;
  friend auto operator<=>(const EmbeddingKey& a, const EmbeddingKey& b) {
    return std::tie(a.tuple, a.depth) <=> std::tie(b.tuple, b.depth);
  }
};

using OccurrenceMap = std::map<EmbeddingKey, int64_t>;
using KeySet = std::set<EmbeddingKey>;

struct PruneConfig {
  bool enabled = true;
  int64_t threshold = 2;         // occurrence count needed to prune; -1 = never
  int64_t small_table_rows = 0;  // tables this small always stop traversal

  void check() const {
    if (threshold >= 0 && threshold < 2)
      throw std::invalid_argument("prune: finite threshold must be at least 2");
    if (small_table_rows < 0)
      throw std::invalid_argument("prune: small_table_rows must be non-negative");
  }
};

/// Builds each training target's DAG and tallies every non-root vertex once
/// per (tuple, depth) appearance.
OccurrenceMap count_occurrences(const Store& store, const std::vector<TupleRef>& train_targets,
                                const GraphConfig& graph_cfg);

/// Deepest-first: a non-root vertex whose occurrence count reaches the
/// threshold, or whose table has at most small_table_rows rows, becomes an
/// embedding leaf keyed by its (tuple, depth); its incoming edges disappear
/// and every vertex left unable to reach the root goes with them. When
/// `allowed` is given (inference against a trained registry), only keys in
/// the set may be marked; everything else stays expanded.
TupleDag prune(const TupleDag& dag, const OccurrenceMap& occ, const Store& store,
               const PruneConfig& cfg, const KeySet* allowed = nullptr);

EmbeddingKey key_of(const TupleDag& dag, int32_t vertex);

/// All embedding keys marked across a pruned corpus, sorted.
std::vector<EmbeddingKey> collect_keys(const std::vector<TupleDag>& dags);

struct ReductionStats {
  int64_t nodes_before = 0;
  int64_t nodes_after = 0;
  int64_t edges_before = 0;
  int64_t edges_after = 0;

  double node_ratio() const {
    return nodes_before == 0 ? 1.0
                             : static_cast<double>(nodes_after) / static_cast<double>(nodes_before);
  }
  double edge_ratio() const {
    return edges_before == 0 ? 1.0
                             : static_cast<double>(edges_after) / static_cast<double>(edges_before);
  }
};

/// Totals over target-aligned corpora; throws MismatchedLists when the lists
/// differ in length.
ReductionStats reduction_stats(const std::vector<TupleDag>& before,
                               const std::vector<TupleDag>& after);

/// Diagnostic for the sharing assumption behind embedding reuse: for every
/// (tuple, depth) seen in two or more target DAGs, hash the canonical edge
/// list feeding that vertex and report the keys whose occurrences disagree.
/// Sorted; empty means the assumption held on this workload.
std::vector<EmbeddingKey> verify_subdag_identity(const Store& store,
                                                 const std::vector<TupleRef>& targets,
                                                 const GraphConfig& graph_cfg);

}  // namespace spare
