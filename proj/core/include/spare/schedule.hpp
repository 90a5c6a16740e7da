#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "spare/graph.hpp"
#include "spare/pruner.hpp"

namespace spare {

struct CycleDetected : std::runtime_error {
  explicit CycleDetected(const std::string& what) : std::runtime_error("schedule: " + what) {}
};

/// One entry of the flattened node table.
struct NodeSlot {
  int32_t dag = -1;
  int32_t vertex = -1;
  int32_t table = -1;
  bool is_embedding = false;
  EmbeddingKey key;  // (tuple, depth) of the vertex
};

struct ChildLabel {
  int32_t relation = -1;
  uint8_t along_fk = 0;
  uint8_t same_depth = 0;
};

/// Nodes [begin, end) of the node table plus their flattened children.
/// Segment i covers child_slots[offsets[i] .. offsets[i+1]) for node
/// begin + i; child slots always sit in earlier levels.
struct ScheduleLevel {
  int32_t begin = 0;
  int32_t end = 0;
  std::vector<int32_t> child_slots;
  std::vector<int64_t> offsets;  // size end - begin + 1
  std::vector<ChildLabel> labels;
};

/// Level-by-level execution plan for a batch of DAGs. The node table is
/// level-major; each level is a sequential barrier and every slot appears in
/// exactly one level.
struct BatchSchedule {
  std::vector<NodeSlot> nodes;
  std::vector<ScheduleLevel> levels;
  std::vector<int32_t> root_slots;  // one per DAG

  int64_t total_children() const {
    int64_t n = 0;
    for (const ScheduleLevel& level : levels)
      n += static_cast<int64_t>(level.child_slots.size());
    return n;
  }
};

/// height(v) = 0 for vertices with no in-edges, else 1 + the maximum height
/// among in-neighbors. Throws CycleDetected if the edges are not acyclic.
std::vector<int32_t> height_rank(const TupleDag& dag);

/// Groups every vertex of every DAG into its exact height class. Nodes
/// within a level are ordered by (dag, vertex); children within a segment
/// follow the canonical (table, row) order so aggregation sums are
/// reproducible regardless of construction order.
BatchSchedule build_schedule(const std::vector<TupleDag>& dags);

/// Number of levels = 1 + the longest directed path (in edges) in the batch.
int sequential_depth(const BatchSchedule& schedule);

}  // namespace spare
