#include "spare/pruner.hpp"

#include <algorithm>

#include "spare/rng.hpp"

namespace spare {

EmbeddingKey key_of(const TupleDag& dag, int32_t vertex) {
  const GraphVertex& v = dag.vertices[static_cast<size_t>(vertex)];
  return {v.ref, v.depth};
}

OccurrenceMap count_occurrences(const Store& store, const std::vector<TupleRef>& train_targets,
                                const GraphConfig& graph_cfg) {
  OccurrenceMap occ;
  for (TupleRef target : train_targets) {
    TupleDag dag = build_dag(store, target, graph_cfg);
    for (size_t i = 1; i < dag.vertices.size(); ++i)
      if (dag.vertices[i].depth >= 1) ++occ[key_of(dag, static_cast<int32_t>(i))];
  }
  return occ;
}

namespace {

// Marks unreachable-from-root vertices dead, kills their edges, and clears
// any embedding marks they carried. Root reachability walks incoming arcs.
void sweep_unreachable(const TupleDag& dag, std::vector<uint8_t>& vertex_alive,
                       std::vector<uint8_t>& edge_alive, std::vector<uint8_t>& marked) {
  size_t n = dag.vertices.size();
  std::vector<std::vector<int32_t>> incoming(n);
  for (size_t e = 0; e < dag.edges.size(); ++e) {
    if (!edge_alive[e]) continue;
    incoming[static_cast<size_t>(dag.edges[e].dst)].push_back(dag.edges[e].src);
  }
  std::vector<uint8_t> reached(n, 0);
  std::vector<int32_t> stack{0};
  reached[0] = 1;
  while (!stack.empty()) {
    int32_t v = stack.back();
    stack.pop_back();
    for (int32_t s : incoming[static_cast<size_t>(v)]) {
      if (reached[static_cast<size_t>(s)]) continue;
      reached[static_cast<size_t>(s)] = 1;
      stack.push_back(s);
    }
  }
  for (size_t i = 0; i < n; ++i) {
    if (reached[i] || !vertex_alive[i]) continue;
    vertex_alive[i] = 0;
    marked[i] = 0;
  }
  for (size_t e = 0; e < dag.edges.size(); ++e) {
    if (!edge_alive[e]) continue;
    if (!vertex_alive[static_cast<size_t>(dag.edges[e].src)] ||
        !vertex_alive[static_cast<size_t>(dag.edges[e].dst)])
      edge_alive[e] = 0;
  }
}

}  // namespace

TupleDag prune(const TupleDag& dag, const OccurrenceMap& occ, const Store& store,
               const PruneConfig& cfg, const KeySet* allowed) {
  cfg.check();
  if (!cfg.enabled) return dag;

  size_t n = dag.vertices.size();
  std::vector<int32_t> candidates;
  for (size_t i = 1; i < n; ++i) {
    const GraphVertex& v = dag.vertices[i];
    if (v.depth < 1) continue;
    EmbeddingKey key{v.ref, v.depth};
    bool frequent = false;
    if (cfg.threshold >= 0) {
      auto it = occ.find(key);
      frequent = it != occ.end() && it->second >= cfg.threshold;
    }
    bool small = store.row_count(v.ref.table) <= cfg.small_table_rows;
    if (!frequent && !small) continue;
    if (allowed != nullptr && allowed->find(key) == allowed->end()) continue;
    candidates.push_back(static_cast<int32_t>(i));
  }
  std::sort(candidates.begin(), candidates.end(), [&](int32_t a, int32_t b) {
    const GraphVertex& va = dag.vertices[static_cast<size_t>(a)];
    const GraphVertex& vb = dag.vertices[static_cast<size_t>(b)];
    if (va.depth != vb.depth) return va.depth > vb.depth;  // deepest first
    return vb.ref < va.ref;
  });

  std::vector<uint8_t> vertex_alive(n, 1);
  std::vector<uint8_t> edge_alive(dag.edges.size(), 1);
  std::vector<uint8_t> marked(n, 0);
  for (int32_t c : candidates) {
    if (!vertex_alive[static_cast<size_t>(c)]) continue;  // a deeper mark took it out
    marked[static_cast<size_t>(c)] = 1;
    for (size_t e = 0; e < dag.edges.size(); ++e)
      if (edge_alive[e] && dag.edges[e].dst == c) edge_alive[e] = 0;
    sweep_unreachable(dag, vertex_alive, edge_alive, marked);
  }

  TupleDag out;
  std::vector<int32_t> remap(n, -1);
  for (size_t i = 0; i < n; ++i) {
    if (!vertex_alive[i]) continue;
    remap[i] = static_cast<int32_t>(out.vertices.size());
    out.vertices.push_back(dag.vertices[i]);
    out.embedding.push_back(marked[i]);
  }
  for (size_t e = 0; e < dag.edges.size(); ++e) {
    if (!edge_alive[e]) continue;
    DagEdge edge = dag.edges[e];
    edge.src = remap[static_cast<size_t>(edge.src)];
    edge.dst = remap[static_cast<size_t>(edge.dst)];
    out.edges.push_back(edge);
  }
  std::sort(out.edges.begin(), out.edges.end(), [](const DagEdge& x, const DagEdge& y) {
    return std::tie(x.src, x.dst, x.relation) < std::tie(y.src, y.dst, y.relation);
  });
  return out;
}

std::vector<EmbeddingKey> collect_keys(const std::vector<TupleDag>& dags) {
  KeySet keys;
  for (const TupleDag& dag : dags)
    for (size_t i = 0; i < dag.vertices.size(); ++i)
      if (dag.is_embedding(static_cast<int32_t>(i)))
        keys.insert(key_of(dag, static_cast<int32_t>(i)));
  return {keys.begin(), keys.end()};
}

ReductionStats reduction_stats(const std::vector<TupleDag>& before,
                               const std::vector<TupleDag>& after) {
  if (before.size() != after.size())
    throw MismatchedLists("before/after dag lists differ in length (" +
                          std::to_string(before.size()) + " vs " + std::to_string(after.size()) +
                          ")");
  ReductionStats stats;
  for (const TupleDag& dag : before) {
    stats.nodes_before += static_cast<int64_t>(dag.vertices.size());
    stats.edges_before += static_cast<int64_t>(dag.edges.size());
  }
  for (const TupleDag& dag : after) {
    stats.nodes_after += static_cast<int64_t>(dag.vertices.size());
    stats.edges_after += static_cast<int64_t>(dag.edges.size());
  }
  return stats;
}

namespace {

uint64_t subdag_hash(const TupleDag& dag, int32_t vertex) {
  size_t n = dag.vertices.size();
  std::vector<uint8_t> in_flow(n, 0);
  in_flow[static_cast<size_t>(vertex)] = 1;
  std::vector<std::vector<int32_t>> incoming(n);
  for (const DagEdge& e : dag.edges) incoming[static_cast<size_t>(e.dst)].push_back(e.src);
  std::vector<int32_t> stack{vertex};
  while (!stack.empty()) {
    int32_t v = stack.back();
    stack.pop_back();
    for (int32_t s : incoming[static_cast<size_t>(v)]) {
      if (in_flow[static_cast<size_t>(s)]) continue;
      in_flow[static_cast<size_t>(s)] = 1;
      stack.push_back(s);
    }
  }
  struct Arc {
    TupleRef src, dst;
    int32_t relation;
    uint8_t along_fk, same_depth;
    auto key() const { return std::tie(src, dst, relation, along_fk, same_depth); }
  };
  std::vector<Arc> arcs;
  for (const DagEdge& e : dag.edges) {
    if (!in_flow[static_cast<size_t>(e.dst)]) continue;
    arcs.push_back({dag.vertices[static_cast<size_t>(e.src)].ref,
                    dag.vertices[static_cast<size_t>(e.dst)].ref, e.relation,
                    static_cast<uint8_t>(e.along_fk), static_cast<uint8_t>(e.same_depth)});
  }
  std::sort(arcs.begin(), arcs.end(), [](const Arc& a, const Arc& b) { return a.key() < b.key(); });
  uint64_t h = fnv1a_init();
  for (const Arc& a : arcs) {
    h = fnv1a_u64(h, static_cast<uint64_t>(a.src.table));
    h = fnv1a_u64(h, static_cast<uint64_t>(a.src.row));
    h = fnv1a_u64(h, static_cast<uint64_t>(a.dst.table));
    h = fnv1a_u64(h, static_cast<uint64_t>(a.dst.row));
    h = fnv1a_u64(h, static_cast<uint64_t>(a.relation));
    h = fnv1a_u64(h, (static_cast<uint64_t>(a.along_fk) << 1) | a.same_depth);
  }
  return h;
}

}  // namespace

std::vector<EmbeddingKey> verify_subdag_identity(const Store& store,
                                                 const std::vector<TupleRef>& targets,
                                                 const GraphConfig& graph_cfg) {
  std::map<EmbeddingKey, std::pair<uint64_t, bool>> seen;  // hash, conflict?
  std::map<EmbeddingKey, int64_t> arrivals;
  for (TupleRef target : targets) {
    TupleDag dag = build_dag(store, target, graph_cfg);
    for (size_t i = 1; i < dag.vertices.size(); ++i) {
      if (dag.vertices[i].depth < 1) continue;
      EmbeddingKey key = key_of(dag, static_cast<int32_t>(i));
      uint64_t h = subdag_hash(dag, static_cast<int32_t>(i));
      ++arrivals[key];
      auto [it, inserted] = seen.emplace(key, std::pair<uint64_t, bool>{h, false});
      if (!inserted && it->second.first != h) it->second.second = true;
    }
  }
  std::vector<EmbeddingKey> violations;
  for (const auto& [key, entry] : seen)
    if (arrivals[key] >= 2 && entry.second) violations.push_back(key);
  return violations;
}

}  // namespace spare
