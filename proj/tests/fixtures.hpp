#pragma once

// Shared test fixtures: a scratch-directory guard, the hand-checked flights
// database used across suites, and a random store generator for property
// tests. The flights data is small enough that every expected graph, DAG,
// height and prune outcome in the tests was derived by hand from these rows.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include <spare/graph.hpp>
#include <spare/rng.hpp>
#include <spare/store.hpp>

namespace fixtures {

/// Unique scratch directory under the system temp root, removed on scope
/// exit. Safe across concurrently running test binaries.
class TempDir {
 public:
  TempDir() {
    static std::atomic<uint64_t> counter{0};
    std::random_device rd;
    std::string name = "spare-test-" + std::to_string(::getpid()) + "-" +
                       std::to_string(counter.fetch_add(1)) + "-" + std::to_string(rd());
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    if (path_.empty()) return;
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  TempDir(TempDir&& other) noexcept : path_(std::move(other.path_)) { other.path_.clear(); }
  TempDir& operator=(TempDir&&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// ---------------------------------------------------------------------------
// Flights fixture.
//
// Tables (indices follow declaration order): flights=0, airlines=1,
// airports=2. Relations: 0 flights.airline->airlines, 1 flights.dep->airports,
// 2 flights.arr->airports, 3 airports.hub->airlines.
//
// flights (row: airline, dep, arr, delay, cabin):
//   F1=row0: A1 P1 P2  10  economy      F5=row4: A2 P3 P4  15  business
//   F2=row1: A1 P3 P4  20  business     F6=row5: A2 P3 P4   -  economy
//   F3=row2: A2 P1 P2  30  economy      F7=row6: A2 P4 P3  25  first
//   F4=row3: A2 P1 P4  -5  economy
// airlines: A1..A6 (A3..A6 unreferenced). airports: P1..P5; only P1 has a
// hub (A1), P5 unreferenced. F6 has no delay, so it is unlabeled.
//
// The depth-2 neighborhood of F1 is then {F1, A1, P1, P2, F2, F3, F4} with
// eight undirected edges, and its DAG orients them as
//   F2->A1, F3->P1, F3->P2, F4->P1, P1->A1 (same depth), A1->F1, P1->F1,
//   P2->F1.
// ---------------------------------------------------------------------------

constexpr int kFlights = 0;
constexpr int kAirlines = 1;
constexpr int kAirports = 2;

inline spare::TupleRef flight(int row) { return {kFlights, row}; }
inline spare::TupleRef airline(int row) { return {kAirlines, row}; }
inline spare::TupleRef airport(int row) { return {kAirports, row}; }

inline std::string flights_schema_json() {
  return R"({
  "tables": [
    {"name": "flights", "file": "flights.csv", "primary_key": "id",
     "columns": [{"name": "delay", "type": "numeric"},
                 {"name": "cabin", "type": "categorical"}]},
    {"name": "airlines", "file": "airlines.csv", "primary_key": "id",
     "columns": [{"name": "fleet", "type": "numeric"}]},
    {"name": "airports", "file": "airports.csv", "primary_key": "id",
     "columns": [{"name": "traffic", "type": "numeric"},
                 {"name": "region", "type": "categorical"}]}
  ],
  "relations": [
    {"from_table": "flights", "from_column": "airline", "to_table": "airlines", "to_column": "id"},
    {"from_table": "flights", "from_column": "dep", "to_table": "airports", "to_column": "id"},
    {"from_table": "flights", "from_column": "arr", "to_table": "airports", "to_column": "id"},
    {"from_table": "airports", "from_column": "hub", "to_table": "airlines", "to_column": "id"}
  ],
  "target": {"table": "flights", "column": "delay", "task": "regression"}
})";
}

inline std::string flights_csv() {
  return "id,airline,dep,arr,delay,cabin\n"
         "F1,A1,P1,P2,10,economy\n"
         "F2,A1,P3,P4,20,business\n"
         "F3,A2,P1,P2,30,economy\n"
         "F4,A2,P1,P4,-5,economy\n"
         "F5,A2,P3,P4,15,business\n"
         "F6,A2,P3,P4,,economy\n"
         "F7,A2,P4,P3,25,first\n";
}

inline std::string airlines_csv() {
  return "id,fleet\n"
         "A1,100\n"
         "A2,50\n"
         "A3,10\n"
         "A4,20\n"
         "A5,30\n"
         "A6,40\n";
}

inline std::string airports_csv() {
  return "id,hub,traffic,region\n"
         "P1,A1,5,west\n"
         "P2,,3,east\n"
         "P3,,4,east\n"
         "P4,,2,south\n"
         "P5,,1,west\n";
}

inline void write_flights(const std::filesystem::path& dir) {
  write_file(dir / "schema.json", flights_schema_json());
  write_file(dir / "flights.csv", flights_csv());
  write_file(dir / "airlines.csv", airlines_csv());
  write_file(dir / "airports.csv", airports_csv());
}

struct FlightsDb {
  TempDir dir;
  spare::Schema schema;
  spare::Store store;
};

inline FlightsDb load_flights() {
  FlightsDb db;
  write_flights(db.dir.path());
  db.schema = spare::load_schema((db.dir.path() / "schema.json").string());
  db.store = spare::ingest(db.schema, db.dir.str());
  return db;
}

// ---------------------------------------------------------------------------
// Random stores, built in memory (no files) so thousands fit in seconds.
// Schemas go up to five tables with up to six relations drawn uniformly over
// table pairs, so self-relations and cyclic relation patterns occur
// naturally. Every table carries one numeric feature column.
// ---------------------------------------------------------------------------

struct RandomDb {
  spare::Schema schema;
  spare::Store store;
};

inline RandomDb make_random_store(spare::Rng& rng) {
  using namespace spare;
  RandomDb db;
  int n_tables = 1 + static_cast<int>(rng.uniform_index(5));
  for (int t = 0; t < n_tables; ++t) {
    TableDef def;
    def.name = "t" + std::to_string(t);
    def.file = def.name + ".csv";
    def.primary_key = "id";
    def.columns.push_back({"x", ColumnKind::Numeric});
    db.schema.tables.push_back(std::move(def));
  }
  int n_rel = static_cast<int>(rng.uniform_index(7));
  for (int r = 0; r < n_rel; ++r) {
    RelationDef rel;
    rel.from_table = "t" + std::to_string(rng.uniform_index(static_cast<uint64_t>(n_tables)));
    rel.to_table = "t" + std::to_string(rng.uniform_index(static_cast<uint64_t>(n_tables)));
    rel.from_column = "fk" + std::to_string(r);
    rel.to_column = "id";
    rel.relation_id = r;
    db.schema.relations.push_back(std::move(rel));
  }
  db.schema.target = {"t0", "x", TaskKind::Regression};

  db.store.schema = db.schema;
  db.store.tables.resize(static_cast<size_t>(n_tables));
  for (int t = 0; t < n_tables; ++t) {
    TableData& data = db.store.tables[static_cast<size_t>(t)];
    data.row_count = 1 + static_cast<int64_t>(rng.uniform_index(12));
    NumericColumn col;
    for (int64_t i = 0; i < data.row_count; ++i) {
      bool missing = rng.uniform() < 0.1;
      col.values.push_back(missing ? 0.0 : rng.normal());
      col.missing.push_back(missing ? 1 : 0);
    }
    data.numeric.push_back(std::move(col));
  }
  db.store.fk_forward.resize(static_cast<size_t>(n_rel));
  db.store.fk_reverse.resize(static_cast<size_t>(n_rel));
  for (int r = 0; r < n_rel; ++r) {
    const RelationDef& rel = db.schema.relations[static_cast<size_t>(r)];
    int from = db.schema.table_index(rel.from_table);
    int to = db.schema.table_index(rel.to_table);
    int64_t from_rows = db.store.row_count(from);
    int64_t to_rows = db.store.row_count(to);
    auto& forward = db.store.fk_forward[static_cast<size_t>(r)];
    auto& reverse = db.store.fk_reverse[static_cast<size_t>(r)];
    forward.assign(static_cast<size_t>(from_rows), -1);
    reverse.resize(static_cast<size_t>(to_rows));
    for (int64_t i = 0; i < from_rows; ++i) {
      if (rng.uniform() < 0.15) continue;
      int32_t dst = static_cast<int32_t>(rng.uniform_index(static_cast<uint64_t>(to_rows)));
      forward[static_cast<size_t>(i)] = dst;
      reverse[static_cast<size_t>(dst)].push_back(static_cast<int32_t>(i));
    }
  }
  db.store.check_consistency();
  return db;
}

/// Hub table t0 with one row, spoke table t1 with n_spokes rows, every spoke
/// holding a foreign key to the hub. Target column lives on the spokes.
inline RandomDb make_star_store(int n_spokes) {
  using namespace spare;
  RandomDb db;
  for (int t = 0; t < 2; ++t) {
    TableDef def;
    def.name = "t" + std::to_string(t);
    def.file = def.name + ".csv";
    def.primary_key = "id";
    def.columns.push_back({"x", ColumnKind::Numeric});
    db.schema.tables.push_back(std::move(def));
  }
  db.schema.relations.push_back({"t1", "fk0", "t0", "id", 0});
  db.schema.target = {"t1", "x", TaskKind::Regression};

  db.store.schema = db.schema;
  db.store.tables.resize(2);
  db.store.tables[0].row_count = 1;
  db.store.tables[0].numeric.push_back({{1.0}, {0}});
  NumericColumn spokes;
  for (int i = 0; i < n_spokes; ++i) {
    spokes.values.push_back(static_cast<double>(i));
    spokes.missing.push_back(0);
  }
  db.store.tables[1].row_count = n_spokes;
  db.store.tables[1].numeric.push_back(std::move(spokes));
  db.store.fk_forward.resize(1);
  db.store.fk_reverse.resize(1);
  db.store.fk_forward[0].assign(static_cast<size_t>(n_spokes), 0);
  db.store.fk_reverse[0].resize(1);
  for (int i = 0; i < n_spokes; ++i) db.store.fk_reverse[0][0].push_back(i);
  db.store.check_consistency();
  return db;
}

inline spare::TupleRef random_tuple(const spare::Store& store, spare::Rng& rng) {
  int table = static_cast<int>(rng.uniform_index(store.tables.size()));
  int64_t row = static_cast<int64_t>(rng.uniform_index(
      static_cast<uint64_t>(store.row_count(table))));
  return {static_cast<int32_t>(table), static_cast<int32_t>(row)};
}

inline spare::GraphConfig random_graph_config(spare::Rng& rng) {
  spare::GraphConfig cfg;
  cfg.max_depth = static_cast<int>(rng.uniform_index(4));
  const int64_t caps[] = {-1, 1, 2, 8};
  cfg.fanout_cap = caps[rng.uniform_index(4)];
  cfg.sample_seed = rng.next_u64();
  return cfg;
}

// ---------------------------------------------------------------------------
// Structural helpers.
// ---------------------------------------------------------------------------

/// Edge as store-level data, independent of vertex numbering:
/// (src table, src row, dst table, dst row, relation, along_fk, same_depth).
using Arc = std::tuple<int32_t, int32_t, int32_t, int32_t, int32_t, int, int>;

inline Arc arc_of(const spare::TupleDag& dag, const spare::DagEdge& e) {
  const spare::GraphVertex& s = dag.vertices[static_cast<size_t>(e.src)];
  const spare::GraphVertex& d = dag.vertices[static_cast<size_t>(e.dst)];
  return {s.ref.table, s.ref.row, d.ref.table, d.ref.row, e.relation,
          e.along_fk ? 1 : 0, e.same_depth ? 1 : 0};
}

inline std::set<Arc> dag_arcs(const spare::TupleDag& dag) {
  std::set<Arc> arcs;
  for (const spare::DagEdge& e : dag.edges) arcs.insert(arc_of(dag, e));
  return arcs;
}

inline int find_vertex(const spare::TupleDag& dag, spare::TupleRef ref) {
  for (size_t i = 0; i < dag.vertices.size(); ++i)
    if (dag.vertices[i].ref == ref) return static_cast<int>(i);
  return -1;
}

inline std::set<spare::TupleRef> vertex_refs(const spare::TupleGraph& graph) {
  std::set<spare::TupleRef> refs;
  for (const spare::GraphVertex& v : graph.vertices) refs.insert(v.ref);
  return refs;
}

inline std::set<spare::TupleRef> vertex_refs(const spare::TupleDag& dag) {
  std::set<spare::TupleRef> refs;
  for (const spare::GraphVertex& v : dag.vertices) refs.insert(v.ref);
  return refs;
}

}  // namespace fixtures
