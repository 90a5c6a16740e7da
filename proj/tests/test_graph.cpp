#include <algorithm>
#include <cstdlib>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"

#include <spare/graph.hpp>

using namespace spare;
using namespace fixtures;

namespace {

GraphConfig depth2_uncapped() {
  GraphConfig cfg;
  cfg.max_depth = 2;
  cfg.fanout_cap = -1;
  cfg.sample_seed = 0;
  return cfg;
}

std::string thrown_dag_message(const TupleDag& dag) {
  try {
    validate_dag(dag);
  } catch (const InvalidDag& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("breadth-first expansion discovers the F1 neighborhood in order") {
  FlightsDb db = load_flights();
  TupleGraph g = build_undirected(db.store, flight(0), depth2_uncapped());

  REQUIRE(g.vertices.size() == 7);
  const std::vector<std::pair<TupleRef, int32_t>> expect = {
      {flight(0), 0},  {airline(0), 1}, {airport(0), 1}, {airport(1), 1},
      {flight(1), 2},  {flight(2), 2},  {flight(3), 2}};
  for (size_t i = 0; i < expect.size(); ++i) {
    CHECK(g.vertices[i].ref == expect[i].first);
    CHECK(g.vertices[i].depth == expect[i].second);
  }
  CHECK(g.edges.size() == 8);

  // Two relations may link the same pair of tuples; each unordered vertex
  // pair appears at most once.
  std::set<std::pair<int32_t, int32_t>> pairs;
  for (const GraphEdge& e : g.edges) {
    auto p = std::minmax(e.u, e.v);
    CHECK(pairs.insert({p.first, p.second}).second);
  }
}

TEST_CASE("max_depth 0 keeps only the target tuple") {
  FlightsDb db = load_flights();
  GraphConfig cfg = depth2_uncapped();
  cfg.max_depth = 0;
  TupleGraph g = build_undirected(db.store, flight(4), cfg);
  REQUIRE(g.vertices.size() == 1);
  CHECK(g.vertices[0].ref == flight(4));
  CHECK(g.edges.empty());

  TupleDag dag = to_dag(g);
  CHECK(dag.vertices.size() == 1);
  CHECK(dag.edges.empty());
  CHECK_NOTHROW(validate_dag(dag));
}

TEST_CASE("fanout cap samples reverse links deterministically") {
  FlightsDb db = load_flights();
  GraphConfig cfg = depth2_uncapped();
  cfg.max_depth = 1;
  cfg.fanout_cap = 1;
  cfg.sample_seed = 9;

  // A2 is referenced by F3..F7 through relation 0; a cap of one keeps one.
  TupleGraph g = build_undirected(db.store, airline(1), cfg);
  REQUIRE(g.vertices.size() == 2);
  CHECK(g.vertices[1].ref.table == kFlights);
  CHECK(g.vertices[1].ref.row >= 2);
  TupleGraph again = build_undirected(db.store, airline(1), cfg);
  CHECK(again.vertices.size() == 2);
  CHECK(again.vertices[1].ref == g.vertices[1].ref);

  // A cap at least as large as the fanout keeps everything.
  cfg.fanout_cap = 8;
  TupleGraph full = build_undirected(db.store, airline(1), cfg);
  CHECK(full.vertices.size() == 6);

  // Forward links are never sampled away.
  cfg.fanout_cap = 1;
  TupleGraph fwd = build_undirected(db.store, flight(0), cfg);
  CHECK(vertex_refs(fwd).count(airline(0)) == 1);
  CHECK(vertex_refs(fwd).count(airport(0)) == 1);
  CHECK(vertex_refs(fwd).count(airport(1)) == 1);
}

TEST_CASE("reverse sampling is keyed by the linked tuple, not the target") {
  RandomDb db = make_star_store(20);
  GraphConfig cfg;
  cfg.max_depth = 2;
  cfg.fanout_cap = 5;
  cfg.sample_seed = 123;

  // Every spoke sees the hub plus the same sampled co-spokes; two targets'
  // vertex sets may differ only in the targets themselves.
  std::vector<std::set<TupleRef>> seen;
  for (int32_t s = 0; s < 20; ++s)
    seen.push_back(vertex_refs(build_undirected(db.store, {1, s}, cfg)));
  for (int32_t a = 0; a < 20; ++a) {
    for (int32_t b = a + 1; b < 20; ++b) {
      std::set<TupleRef> diff;
      std::set_symmetric_difference(seen[static_cast<size_t>(a)].begin(),
                                    seen[static_cast<size_t>(a)].end(),
                                    seen[static_cast<size_t>(b)].begin(),
                                    seen[static_cast<size_t>(b)].end(),
                                    std::inserter(diff, diff.begin()));
      for (TupleRef ref : diff) {
        bool is_target = ref == TupleRef{1, a} || ref == TupleRef{1, b};
        CHECK(is_target);
      }
    }
  }
  // A different seed is allowed to pick a different sample; the cap holds
  // either way.
  for (uint64_t seed : {123ULL, 124ULL}) {
    cfg.sample_seed = seed;
    TupleGraph g = build_undirected(db.store, {1, 0}, cfg);
    CHECK(g.vertices.size() <= 2 + 5);
  }
}

TEST_CASE("to_dag orients edges toward the root") {
  FlightsDb db = load_flights();
  TupleDag dag = build_dag(db.store, flight(0), depth2_uncapped());

  REQUIRE(dag.vertices.size() == 7);
  CHECK(dag.vertices[0].ref == flight(0));
  CHECK(dag.edges.size() == 8);
  CHECK(dag.embedding.empty());

  const std::set<Arc> expect = {
      // depth 2 -> depth 1
      {kFlights, 1, kAirlines, 0, 0, 1, 0},  // F2 -> A1
      {kFlights, 2, kAirports, 0, 1, 1, 0},  // F3 -> P1
      {kFlights, 2, kAirports, 1, 2, 1, 0},  // F3 -> P2
      {kFlights, 3, kAirports, 0, 1, 1, 0},  // F4 -> P1
      // same depth: later tuple flows into the earlier one
      {kAirports, 0, kAirlines, 0, 3, 1, 1},  // P1 -> A1
      // depth 1 -> root; the root holds these keys, so along_fk flips off
      {kAirlines, 0, kFlights, 0, 0, 0, 0},
      {kAirports, 0, kFlights, 0, 1, 0, 0},
      {kAirports, 1, kFlights, 0, 2, 0, 0}};
  CHECK(dag_arcs(dag) == expect);

  // Edges arrive sorted by (src, dst, relation).
  for (size_t e = 1; e < dag.edges.size(); ++e) {
    auto key = [](const DagEdge& x) { return std::tuple(x.src, x.dst, x.relation); };
    CHECK(key(dag.edges[e - 1]) < key(dag.edges[e]));
  }
  CHECK_NOTHROW(validate_dag(dag));
}

TEST_CASE("the F2 neighborhood pulls in the hub link at depth 2") {
  FlightsDb db = load_flights();
  TupleGraph g = build_undirected(db.store, flight(1), depth2_uncapped());
  CHECK(g.vertices.size() == 10);
  CHECK(g.edges.size() == 12);
  std::set<TupleRef> refs = vertex_refs(g);
  CHECK(refs.count(airport(0)) == 1);  // P1 arrives through airports.hub
  CHECK(refs.count(flight(0)) == 1);
  CHECK(refs.count(airport(1)) == 0);  // P2 is nowhere near F2

  TupleDag dag = to_dag(g);
  CHECK(dag.edges.size() == 12);
  const std::set<Arc> expect = {
      {kFlights, 0, kAirlines, 0, 0, 1, 0},   // F1 -> A1
      {kAirports, 0, kAirlines, 0, 3, 1, 0},  // P1 -> A1, across depths here
      {kFlights, 4, kAirports, 2, 1, 1, 0},   // F5 -> P3
      {kFlights, 5, kAirports, 2, 1, 1, 0},   // F6 -> P3
      {kFlights, 6, kAirports, 2, 2, 1, 0},   // F7 -> P3
      {kFlights, 3, kAirports, 3, 2, 1, 0},   // F4 -> P4
      {kFlights, 4, kAirports, 3, 2, 1, 0},   // F5 -> P4
      {kFlights, 5, kAirports, 3, 2, 1, 0},   // F6 -> P4
      {kFlights, 6, kAirports, 3, 1, 1, 0},   // F7 -> P4
      {kAirlines, 0, kFlights, 1, 0, 0, 0},   // A1 -> F2
      {kAirports, 2, kFlights, 1, 1, 0, 0},   // P3 -> F2
      {kAirports, 3, kFlights, 1, 2, 0, 0}};  // P4 -> F2
  CHECK(dag_arcs(dag) == expect);
  CHECK_NOTHROW(validate_dag(dag));
}

TEST_CASE("self-referencing rows add no edge") {
  // One table, one self-relation, a row pointing at itself and one pointing
  // at its neighbor.
  RandomDb db;
  TableDef def;
  def.name = "t0";
  def.file = "t0.csv";
  def.primary_key = "id";
  def.columns.push_back({"x", ColumnKind::Numeric});
  db.schema.tables.push_back(def);
  db.schema.relations.push_back({"t0", "fk0", "t0", "id", 0});
  db.schema.target = {"t0", "x", TaskKind::Regression};
  db.store.schema = db.schema;
  db.store.tables.resize(1);
  db.store.tables[0].row_count = 2;
  db.store.tables[0].numeric.push_back({{0.5, 1.5}, {0, 0}});
  db.store.fk_forward = {{0, 0}};  // row 0 -> itself, row 1 -> row 0
  db.store.fk_reverse = {{{0, 1}, {}}};
  db.store.check_consistency();

  TupleGraph g = build_undirected(db.store, {0, 0}, depth2_uncapped());
  REQUIRE(g.vertices.size() == 2);
  CHECK(g.edges.size() == 1);  // only the row-1 link survives
  TupleDag dag = to_dag(g);
  CHECK(dag_arcs(dag) == std::set<Arc>{{0, 1, 0, 0, 0, 1, 0}});
  CHECK_NOTHROW(validate_dag(dag));
}

TEST_CASE("validate_dag rejects structural violations") {
  FlightsDb db = load_flights();
  TupleDag good = build_dag(db.store, flight(0), depth2_uncapped());
  int a1 = find_vertex(good, airline(0));
  int f1 = find_vertex(good, flight(0));
  REQUIRE(a1 >= 0);

  SUBCASE("edge running away from the root") {
    TupleDag bad = good;
    bad.edges.push_back({static_cast<int32_t>(f1), static_cast<int32_t>(a1), 0, false, false});
    CHECK(thrown_dag_message(bad).find("edge spans depths") != std::string::npos);
  }
  SUBCASE("duplicate arc") {
    TupleDag bad = good;
    bad.edges.push_back(bad.edges.front());
    CHECK(thrown_dag_message(bad).find("duplicate arc") != std::string::npos);
  }
  SUBCASE("vertex cut off from the root") {
    TupleDag bad = good;
    std::vector<DagEdge> kept;
    for (const DagEdge& e : bad.edges)
      if (!(e.src == a1 && e.dst == f1)) kept.push_back(e);
    bad.edges = kept;  // A1's only path to F1 is gone
    CHECK(thrown_dag_message(bad).find("cannot reach the root") != std::string::npos);
  }
  SUBCASE("same-depth edge against the global order") {
    TupleDag bad = good;
    for (DagEdge& e : bad.edges) {
      if (e.same_depth) std::swap(e.src, e.dst);
    }
    CHECK(thrown_dag_message(bad).find("violates the global order") != std::string::npos);
  }
  SUBCASE("mislabeled same_depth flag") {
    TupleDag bad = good;
    for (DagEdge& e : bad.edges)
      if (!e.same_depth) {
        e.same_depth = true;
        break;
      }
    CHECK(thrown_dag_message(bad).find("same_depth flag") != std::string::npos);
  }
  SUBCASE("root marked as an embedding leaf") {
    TupleDag bad = good;
    bad.embedding.assign(bad.vertices.size(), 0);
    bad.embedding[0] = 1;
    CHECK(thrown_dag_message(bad).find("root marked") != std::string::npos);
  }
  SUBCASE("embedding leaf with an incoming edge") {
    TupleDag bad = good;
    bad.embedding.assign(bad.vertices.size(), 0);
    bad.embedding[static_cast<size_t>(a1)] = 1;  // A1 still has in-edges
    CHECK(thrown_dag_message(bad).find("has an incoming edge") != std::string::npos);
  }
  SUBCASE("second vertex at depth 0") {
    TupleDag bad = good;
    bad.vertices[1].depth = 0;
    CHECK(thrown_dag_message(bad).find("duplicates the root depth") != std::string::npos);
  }
}

TEST_CASE("format_dag prints sorted edge lines") {
  FlightsDb db = load_flights();
  TupleDag dag = build_dag(db.store, flight(0), depth2_uncapped());
  CHECK(format_dag(db.store, dag) ==
        "edge airlines.0 -> flights.0 rel=0\n"
        "edge airports.0 -> airlines.0 rel=3\n"
        "edge airports.0 -> flights.0 rel=1\n"
        "edge airports.1 -> flights.0 rel=2\n"
        "edge flights.1 -> airlines.0 rel=0\n"
        "edge flights.2 -> airports.0 rel=1\n"
        "edge flights.2 -> airports.1 rel=2\n"
        "edge flights.3 -> airports.0 rel=1\n");
}

TEST_CASE("random neighborhoods build valid deterministic dags") {
  Rng rng(777);
  int built = 0;
  for (int trial = 0; trial < 200; ++trial) {
    RandomDb db = make_random_store(rng);
    TupleRef target = random_tuple(db.store, rng);
    GraphConfig cfg = random_graph_config(rng);

    TupleGraph g = build_undirected(db.store, target, cfg);
    REQUIRE(!g.vertices.empty());
    CHECK(g.vertices[0].ref == target);
    CHECK(g.vertices[0].depth == 0);

    std::set<TupleRef> refs;
    for (const GraphVertex& v : g.vertices) {
      CHECK(refs.insert(v.ref).second);  // no duplicate tuples
      CHECK(v.depth <= cfg.max_depth);
      CHECK(db.store.valid(v.ref));
    }
    for (const GraphEdge& e : g.edges) {
      int32_t du = g.vertices[static_cast<size_t>(e.u)].depth;
      int32_t dv = g.vertices[static_cast<size_t>(e.v)].depth;
      CHECK(std::abs(du - dv) <= 1);
      CHECK(e.u != e.v);
    }

    TupleDag dag = to_dag(g);
    CHECK(dag.edges.size() == g.edges.size());
    CHECK_NOTHROW(validate_dag(dag));

    // Every non-root vertex sends at least one message onward.
    std::vector<int> out_degree(dag.vertices.size(), 0);
    for (const DagEdge& e : dag.edges) ++out_degree[static_cast<size_t>(e.src)];
    for (size_t v = 1; v < dag.vertices.size(); ++v) CHECK(out_degree[v] >= 1);

    // Same store, target and config: identical result.
    TupleDag again = build_dag(db.store, target, cfg);
    CHECK(vertex_refs(again) == vertex_refs(dag));
    CHECK(dag_arcs(again) == dag_arcs(dag));
    ++built;
  }
  CHECK(built == 200);
}
