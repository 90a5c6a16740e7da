#include "spare/graph.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "spare/rng.hpp"

namespace spare {

namespace {

uint64_t sample_key(uint64_t seed, TupleRef ref, int32_t relation) {
  uint64_t h = fnv1a_init();
  h = fnv1a_u64(h, seed);
  h = fnv1a_u64(h, static_cast<uint64_t>(ref.table));
  h = fnv1a_u64(h, static_cast<uint64_t>(ref.row));
  h = fnv1a_u64(h, static_cast<uint64_t>(relation));
  return h;
}

}  // namespace

TupleGraph build_undirected(const Store& store, TupleRef target, const GraphConfig& config) {
  if (!store.valid(target)) throw std::invalid_argument("build_undirected: bad target tuple");
  if (config.max_depth < 0) throw std::invalid_argument("build_undirected: negative max_depth");

  TupleGraph graph;
  std::map<TupleRef, int32_t> index;
  graph.vertices.push_back({target, 0});
  index.emplace(target, 0);
  std::set<std::pair<int32_t, int32_t>> seen_edges;  // normalized (min, max)

  size_t head = 0;
  while (head < graph.vertices.size()) {
    int32_t u = static_cast<int32_t>(head);
    GraphVertex at = graph.vertices[head++];
    if (at.depth >= config.max_depth) continue;

    auto attach = [&](TupleRef next, int32_t rid, bool along_fk) {
      if (next == at.ref) return;  // self-reference: no edge
      auto it = index.find(next);
      int32_t v;
      if (it == index.end()) {
        v = static_cast<int32_t>(graph.vertices.size());
        graph.vertices.push_back({next, at.depth + 1});
        index.emplace(next, v);
      } else {
        v = it->second;
        // Fanout caps can surface links that skip levels; keeping those
        // edges would break the one-hop depth invariant, so drop them.
        if (std::abs(graph.vertices[static_cast<size_t>(v)].depth - at.depth) > 1) return;
      }
      auto key = std::minmax(u, v);
      if (!seen_edges.insert({key.first, key.second}).second) return;
      graph.edges.push_back({u, v, rid, along_fk});
    };

    // Both directions run independently so self-relations work.
    for (size_t r = 0; r < store.schema.relations.size(); ++r) {
      const RelationDef& rel = store.schema.relations[r];
      int32_t rid = static_cast<int32_t>(r);
      if (store.schema.table_index(rel.from_table) == at.ref.table) {
        int32_t dst = store.fk_forward[r][static_cast<size_t>(at.ref.row)];
        if (dst >= 0)
          attach({static_cast<int32_t>(store.schema.table_index(rel.to_table)), dst}, rid, true);
      }
      if (store.schema.table_index(rel.to_table) == at.ref.table) {
        const std::vector<int32_t>& rows = store.fk_reverse[r][static_cast<size_t>(at.ref.row)];
        int32_t from = static_cast<int32_t>(store.schema.table_index(rel.from_table));
        if (config.fanout_cap >= 0 && static_cast<int64_t>(rows.size()) > config.fanout_cap) {
          Rng rng(sample_key(config.sample_seed, at.ref, rid));
          for (int i : rng.sample_indices(static_cast<int>(rows.size()),
                                          static_cast<int>(config.fanout_cap)))
            attach({from, rows[static_cast<size_t>(i)]}, rid, false);
        } else {
          for (int32_t row : rows) attach({from, row}, rid, false);
        }
      }
    }
  }
  return graph;
}

TupleDag to_dag(const TupleGraph& graph) {
  TupleDag dag;
  dag.vertices = graph.vertices;
  dag.edges.reserve(graph.edges.size());
  for (const GraphEdge& e : graph.edges) {
    const GraphVertex& a = graph.vertices[static_cast<size_t>(e.u)];
    const GraphVertex& b = graph.vertices[static_cast<size_t>(e.v)];
    DagEdge d;
    d.relation = e.relation;
    bool u_is_src;
    if (a.depth != b.depth) {
      u_is_src = a.depth > b.depth;  // deeper -> shallower
      d.same_depth = false;
    } else {
      u_is_src = b.ref < a.ref;  // later tuple -> earlier tuple
      d.same_depth = true;
    }
    d.src = u_is_src ? e.u : e.v;
    d.dst = u_is_src ? e.v : e.u;
    d.along_fk = u_is_src ? e.along_fk : !e.along_fk;
    dag.edges.push_back(d);
  }
  std::sort(dag.edges.begin(), dag.edges.end(), [](const DagEdge& x, const DagEdge& y) {
    return std::tie(x.src, x.dst, x.relation) < std::tie(y.src, y.dst, y.relation);
  });
  return dag;
}

TupleDag build_dag(const Store& store, TupleRef target, const GraphConfig& config) {
  return to_dag(build_undirected(store, target, config));
}

void validate_dag(const TupleDag& dag) {
  if (dag.vertices.empty()) throw InvalidDag("no vertices");
  if (dag.vertices[0].depth != 0) throw InvalidDag("vertex 0 is not at depth 0");
  int32_t n = static_cast<int32_t>(dag.vertices.size());
  for (int32_t i = 1; i < n; ++i)
    if (dag.vertices[static_cast<size_t>(i)].depth == 0)
      throw InvalidDag("vertex " + std::to_string(i) + " duplicates the root depth");

  if (!dag.embedding.empty() && dag.embedding.size() != dag.vertices.size())
    throw InvalidDag("embedding flags do not cover the vertices");
  if (dag.is_embedding(0)) throw InvalidDag("root marked as an embedding leaf");

  std::set<std::tuple<int32_t, int32_t>> arcs;
  std::vector<std::vector<int32_t>> incoming(static_cast<size_t>(n));
  for (const DagEdge& e : dag.edges) {
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n)
      throw InvalidDag("edge endpoint out of range");
    if (e.src == e.dst) throw InvalidDag("self-loop");
    const GraphVertex& s = dag.vertices[static_cast<size_t>(e.src)];
    const GraphVertex& d = dag.vertices[static_cast<size_t>(e.dst)];
    int32_t drop = s.depth - d.depth;
    if (drop != 0 && drop != 1)
      throw InvalidDag("edge spans depths " + std::to_string(s.depth) + " -> " +
                       std::to_string(d.depth));
    if (drop == 0 && !(d.ref < s.ref))
      throw InvalidDag("same-depth edge violates the global order");
    if ((drop == 0) != e.same_depth) throw InvalidDag("same_depth flag is wrong");
    if (!arcs.insert({e.src, e.dst}).second) throw InvalidDag("duplicate arc");
    if (dag.is_embedding(e.dst))
      throw InvalidDag("embedding leaf " + std::to_string(e.dst) + " has an incoming edge");
    incoming[static_cast<size_t>(e.dst)].push_back(e.src);
  }

  // Every vertex must feed the root: walk incoming arcs from vertex 0.
  std::vector<uint8_t> reached(static_cast<size_t>(n), 0);
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
  for (int32_t i = 0; i < n; ++i)
    if (!reached[static_cast<size_t>(i)])
      throw InvalidDag("vertex " + std::to_string(i) + " cannot reach the root");
}

std::string format_dag(const Store& store, const TupleDag& dag) {
  std::vector<std::string> lines;
  lines.reserve(dag.edges.size());
  for (const DagEdge& e : dag.edges) {
    const GraphVertex& s = dag.vertices[static_cast<size_t>(e.src)];
    const GraphVertex& d = dag.vertices[static_cast<size_t>(e.dst)];
    std::ostringstream line;
    line << "edge " << store.schema.tables[static_cast<size_t>(s.ref.table)].name << "."
         << s.ref.row << " -> " << store.schema.tables[static_cast<size_t>(d.ref.table)].name
         << "." << d.ref.row << " rel=" << e.relation;
    lines.push_back(line.str());
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const std::string& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

}  // namespace spare
