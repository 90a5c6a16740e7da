#include "spare/schedule.hpp"

#include <algorithm>
#include <tuple>

namespace spare {

std::vector<int32_t> height_rank(const TupleDag& dag) {
  size_t n = dag.vertices.size();
  std::vector<std::vector<int32_t>> outgoing(n);
  std::vector<int32_t> indegree(n, 0);
  for (const DagEdge& e : dag.edges) {
    outgoing[static_cast<size_t>(e.src)].push_back(e.dst);
    ++indegree[static_cast<size_t>(e.dst)];
  }
  std::vector<int32_t> height(n, 0);
  std::vector<int32_t> ready;
  for (size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push_back(static_cast<int32_t>(i));
  size_t done = 0;
  while (!ready.empty()) {
    int32_t v = ready.back();
    ready.pop_back();
    ++done;
    for (int32_t w : outgoing[static_cast<size_t>(v)]) {
      height[static_cast<size_t>(w)] =
          std::max(height[static_cast<size_t>(w)], height[static_cast<size_t>(v)] + 1);
      if (--indegree[static_cast<size_t>(w)] == 0) ready.push_back(w);
    }
  }
  if (done != n) throw CycleDetected("edges contain a cycle");
  return height;
}

BatchSchedule build_schedule(const std::vector<TupleDag>& dags) {
  BatchSchedule schedule;
  if (dags.empty()) return schedule;

  std::vector<std::vector<int32_t>> heights;
  heights.reserve(dags.size());
  int32_t max_height = 0;
  for (const TupleDag& dag : dags) {
    heights.push_back(height_rank(dag));
    for (int32_t h : heights.back()) max_height = std::max(max_height, h);
  }

  // Slot layout: level-major, (dag, vertex) order inside each level.
  std::vector<std::vector<int32_t>> slot_of(dags.size());
  for (size_t d = 0; d < dags.size(); ++d)
    slot_of[d].assign(dags[d].vertices.size(), -1);
  std::vector<std::pair<int32_t, int32_t>> level_range;
  for (int32_t h = 0; h <= max_height; ++h) {
    int32_t begin = static_cast<int32_t>(schedule.nodes.size());
    for (size_t d = 0; d < dags.size(); ++d) {
      const TupleDag& dag = dags[d];
      for (size_t v = 0; v < dag.vertices.size(); ++v) {
        if (heights[d][v] != h) continue;
        slot_of[d][v] = static_cast<int32_t>(schedule.nodes.size());
        NodeSlot slot;
        slot.dag = static_cast<int32_t>(d);
        slot.vertex = static_cast<int32_t>(v);
        slot.table = dag.vertices[v].ref.table;
        slot.is_embedding = dag.is_embedding(static_cast<int32_t>(v));
        slot.key = key_of(dag, static_cast<int32_t>(v));
        schedule.nodes.push_back(slot);
      }
    }
    level_range.emplace_back(begin, static_cast<int32_t>(schedule.nodes.size()));
  }

  // Children = in-edges, sorted canonically inside each segment.
  struct Child {
    TupleRef ref;
    int32_t relation;
    uint8_t along_fk;
    uint8_t same_depth;
    int32_t slot;
  };
  std::vector<std::vector<std::vector<Child>>> children(dags.size());
  for (size_t d = 0; d < dags.size(); ++d) {
    children[d].resize(dags[d].vertices.size());
    for (const DagEdge& e : dags[d].edges) {
      children[d][static_cast<size_t>(e.dst)].push_back(
          {dags[d].vertices[static_cast<size_t>(e.src)].ref, e.relation,
           static_cast<uint8_t>(e.along_fk), static_cast<uint8_t>(e.same_depth),
           slot_of[d][static_cast<size_t>(e.src)]});
    }
    for (std::vector<Child>& list : children[d])
      std::sort(list.begin(), list.end(), [](const Child& a, const Child& b) {
        return std::tie(a.ref, a.relation, a.along_fk) < std::tie(b.ref, b.relation, b.along_fk);
      });
  }

  for (auto [begin, end] : level_range) {
    ScheduleLevel level;
    level.begin = begin;
    level.end = end;
    level.offsets.push_back(0);
    for (int32_t s = begin; s < end; ++s) {
      const NodeSlot& slot = schedule.nodes[static_cast<size_t>(s)];
      for (const Child& c :
           children[static_cast<size_t>(slot.dag)][static_cast<size_t>(slot.vertex)]) {
        level.child_slots.push_back(c.slot);
        level.labels.push_back({c.relation, c.along_fk, c.same_depth});
      }
      level.offsets.push_back(static_cast<int64_t>(level.child_slots.size()));
    }
    schedule.levels.push_back(std::move(level));
  }

  schedule.root_slots.reserve(dags.size());
  for (size_t d = 0; d < dags.size(); ++d) schedule.root_slots.push_back(slot_of[d][0]);
  return schedule;
}

int sequential_depth(const BatchSchedule& schedule) {
  return static_cast<int>(schedule.levels.size());
}

}  // namespace spare
