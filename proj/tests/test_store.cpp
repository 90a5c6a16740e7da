#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"

#include <spare/csv.hpp>
#include <spare/store.hpp>

using namespace spare;
using namespace fixtures;

namespace {

template <typename Ex, typename Fn>
std::string thrown_message(Fn&& fn) {
  try {
    fn();
  } catch (const Ex& e) {
    return e.what();
  }
  return {};
}

bool fv_equal(const FeatureVector& a, const FeatureVector& b) {
  if (a.numeric.size() != b.numeric.size() || a.categorical != b.categorical) return false;
  for (size_t i = 0; i < a.numeric.size(); ++i)
    if (a.numeric[i].value != b.numeric[i].value || a.numeric[i].missing != b.numeric[i].missing)
      return false;
  return true;
}

}  // namespace

TEST_CASE("schema parses tables, relations and target in declaration order") {
  Schema s = parse_schema(flights_schema_json());
  REQUIRE(s.tables.size() == 3);
  CHECK(s.tables[0].name == "flights");
  CHECK(s.tables[0].primary_key == "id");
  CHECK(s.tables[0].columns.size() == 2);
  CHECK(s.tables[0].columns[1].kind == ColumnKind::Categorical);
  CHECK(s.table_index("airports") == 2);
  CHECK(s.table_index("nope") == -1);
  REQUIRE(s.relations.size() == 4);
  for (int r = 0; r < 4; ++r) CHECK(s.relations[static_cast<size_t>(r)].relation_id == r);
  CHECK(s.relations[3].from_table == "airports");
  CHECK(s.relations[3].from_column == "hub");
  CHECK(s.relations[3].to_table == "airlines");
  CHECK(s.target.table == "flights");
  CHECK(s.target.column == "delay");
  CHECK(s.target.task == TaskKind::Regression);
  CHECK(s.target_table_index() == 0);
}

TEST_CASE("schema serialization is a canonical round-trip") {
  Schema s = parse_schema(flights_schema_json());
  std::string text = serialize_schema(s);
  Schema again = parse_schema(text);
  CHECK(serialize_schema(again) == text);
  // Different formatting of the same schema normalizes to the same text.
  CHECK(serialize_schema(parse_schema(text)) == text);
}

TEST_CASE("schema errors name the offending entity") {
  auto broken = [](const std::string& from, const std::string& to) {
    return parse_schema(std::string() + R"({
      "tables": [{"name": "airports", "file": "a.csv", "primary_key": "id", "columns": []}],
      "relations": [{"from_table": ")" + from + R"(", "from_column": "hub",
                     "to_table": ")" + to + R"(", "to_column": "id"}],
      "target": {"table": "airports", "column": "x", "task": "regression"}
    })");
  };

  SUBCASE("misspelled relation endpoint") {
    std::string msg =
        thrown_message<SchemaInvalid>([&] { broken("airports", "airprots"); });
    CHECK(msg.find("airprots") != std::string::npos);
    CHECK(msg.find("unknown to_table") != std::string::npos);
    msg = thrown_message<SchemaInvalid>([&] { broken("airprots", "airports"); });
    CHECK(msg.find("unknown from_table") != std::string::npos);
  }
  SUBCASE("unknown key anywhere is rejected") {
    CHECK_THROWS_AS(parse_schema(R"({"tables": [], "relations": [], "target": {}, "extra": 1})"),
                    SchemaInvalid);
  }
  SUBCASE("not valid JSON") {
    CHECK_THROWS_AS(parse_schema("{"), SchemaInvalid);
  }
  SUBCASE("duplicate table name") {
    std::string msg = thrown_message<SchemaInvalid>([] {
      parse_schema(R"({
        "tables": [
          {"name": "t", "file": "t.csv", "primary_key": "id", "columns": []},
          {"name": "t", "file": "u.csv", "primary_key": "id", "columns": []}
        ],
        "relations": [],
        "target": {"table": "t", "column": "x", "task": "regression"}
      })");
    });
    CHECK(msg.find("duplicate table 't'") != std::string::npos);
  }
  SUBCASE("target column must exist and be numeric") {
    std::string base = R"({
      "tables": [{"name": "t", "file": "t.csv", "primary_key": "id",
                  "columns": [{"name": "c", "type": "categorical"}]}],
      "relations": [],
      "target": {"table": "t", "column": "COL", "task": "regression"}
    })";
    auto with_col = [&](const std::string& col) {
      std::string j = base;
      j.replace(j.find("COL"), 3, col);
      return j;
    };
    CHECK(thrown_message<SchemaInvalid>([&] { parse_schema(with_col("c")); })
              .find("must be numeric") != std::string::npos);
    CHECK(thrown_message<SchemaInvalid>([&] { parse_schema(with_col("x")); })
              .find("not declared") != std::string::npos);
  }
  SUBCASE("bad task name") {
    CHECK_THROWS_AS(parse_schema(R"({
      "tables": [{"name": "t", "file": "t.csv", "primary_key": "id",
                  "columns": [{"name": "x", "type": "numeric"}]}],
      "relations": [],
      "target": {"table": "t", "column": "x", "task": "ranking"}
    })"), SchemaInvalid);
  }
  SUBCASE("foreign keys must point at primary keys and stay out of features") {
    std::string msg = thrown_message<SchemaInvalid>([] {
      parse_schema(R"({
        "tables": [
          {"name": "a", "file": "a.csv", "primary_key": "id",
           "columns": [{"name": "x", "type": "numeric"}]},
          {"name": "b", "file": "b.csv", "primary_key": "id", "columns": []}
        ],
        "relations": [{"from_table": "a", "from_column": "ref", "to_table": "b", "to_column": "x"}],
        "target": {"table": "a", "column": "x", "task": "regression"}
      })");
    });
    CHECK(msg.find("to_column must be the primary key") != std::string::npos);
    msg = thrown_message<SchemaInvalid>([] {
      parse_schema(R"({
        "tables": [
          {"name": "a", "file": "a.csv", "primary_key": "id",
           "columns": [{"name": "x", "type": "numeric"}]},
          {"name": "b", "file": "b.csv", "primary_key": "id", "columns": []}
        ],
        "relations": [{"from_table": "a", "from_column": "x", "to_table": "b", "to_column": "id"}],
        "target": {"table": "a", "column": "x", "task": "regression"}
      })");
    });
    CHECK(msg.find("from_column is also declared") != std::string::npos);
  }
}

TEST_CASE("ingest resolves rows, keys and both link directions") {
  FlightsDb db = load_flights();
  const Store& store = db.store;

  CHECK(store.row_count(kFlights) == 7);
  CHECK(store.row_count(kAirlines) == 6);
  CHECK(store.row_count(kAirports) == 5);

  // flights.airline: A1 A1 A2 A2 A2 A2 A2.
  CHECK(store.fk_forward[0] == std::vector<int32_t>{0, 0, 1, 1, 1, 1, 1});
  // airports.hub: only P1 -> A1.
  CHECK(store.fk_forward[3] == std::vector<int32_t>{0, -1, -1, -1, -1});
  CHECK(store.fk_reverse[0][0] == std::vector<int32_t>{0, 1});
  CHECK(store.fk_reverse[0][1] == std::vector<int32_t>{2, 3, 4, 5, 6});
  CHECK(store.fk_reverse[3][0] == std::vector<int32_t>{0});
  CHECK(store.fk_reverse[3][1].empty());
  CHECK_NOTHROW(store.check_consistency());

  // delay: F6 is the one empty cell.
  const NumericColumn& delay = store.tables[kFlights].numeric[0];
  CHECK(delay.values[0] == 10.0);
  CHECK(delay.values[3] == -5.0);
  CHECK(delay.missing == std::vector<uint8_t>{0, 0, 0, 0, 0, 1, 0});
  CHECK(delay.values[5] == 0.0);

  // cabin vocabulary: reserved slot, then sorted distinct values.
  const CategoricalColumn& cabin = store.tables[kFlights].categorical[0];
  CHECK(cabin.vocab == std::vector<std::string>{"", "business", "economy", "first"});
  CHECK(cabin.codes == std::vector<int32_t>{2, 1, 2, 2, 1, 2, 3});

  CHECK(store.numeric_column_index(kFlights, "delay") == 0);
  CHECK(store.categorical_column_index(kFlights, "cabin") == 0);
  CHECK(store.numeric_column_index(kFlights, "cabin") == -1);
  CHECK(store.valid({kFlights, 6}));
  CHECK_FALSE(store.valid({kFlights, 7}));
  CHECK_FALSE(store.valid({3, 0}));
}

TEST_CASE("ingest tolerates extra CSV columns") {
  TempDir dir;
  write_flights(dir.path());
  // A column the schema never mentions is simply ignored.
  write_file(dir.path() / "airlines.csv",
             "id,country,fleet\nA1,NL,100\nA2,US,50\nA3,US,10\nA4,FR,20\nA5,DE,30\nA6,JP,40\n");
  Schema schema = load_schema((dir.path() / "schema.json").string());
  Store store = ingest(schema, dir.str());
  CHECK(store.tables[kAirlines].numeric[0].values[0] == 100.0);
  CHECK(store.fk_forward[0] == std::vector<int32_t>{0, 0, 1, 1, 1, 1, 1});
}

TEST_CASE("ingest errors carry file, row and column context") {
  TempDir dir;
  write_flights(dir.path());
  Schema schema = load_schema((dir.path() / "schema.json").string());

  SUBCASE("missing csv file") {
    std::filesystem::remove(dir.path() / "airports.csv");
    CHECK_THROWS_AS(ingest(schema, dir.str()), IngestError);
  }
  SUBCASE("duplicate header column") {
    write_file(dir.path() / "airlines.csv", "id,fleet,fleet\nA1,1,2\n");
    std::string msg = thrown_message<IngestError>([&] { ingest(schema, dir.str()); });
    CHECK(msg.find("duplicate header column 'fleet'") != std::string::npos);
  }
  SUBCASE("header missing a declared column") {
    write_file(dir.path() / "airlines.csv", "id,planes\nA1,1\n");
    std::string msg = thrown_message<IngestError>([&] { ingest(schema, dir.str()); });
    CHECK(msg.find("missing column 'fleet'") != std::string::npos);
  }
  SUBCASE("dangling key is an error in strict mode, a missing link otherwise") {
    write_file(dir.path() / "flights.csv",
               "id,airline,dep,arr,delay,cabin\n"
               "F1,A9,P1,P2,10,economy\n"
               "F2,A1,P3,P4,20,business\n");
    std::string msg = thrown_message<IngestError>([&] { ingest(schema, dir.str()); });
    CHECK(msg.find("flights.csv") != std::string::npos);
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("column 'airline'") != std::string::npos);
    CHECK(msg.find("no row 'A9' in airlines") != std::string::npos);

    Store lenient = ingest(schema, dir.str(), false);
    CHECK(lenient.fk_forward[0] == std::vector<int32_t>{-1, 0});
    CHECK(lenient.fk_reverse[0][0] == std::vector<int32_t>{1});
    CHECK_NOTHROW(lenient.check_consistency());
  }
  SUBCASE("non-numeric cell in a numeric column") {
    write_file(dir.path() / "airlines.csv", "id,fleet\nA1,many\n");
    std::string msg = thrown_message<IngestError>([&] { ingest(schema, dir.str()); });
    CHECK(msg.find("'many' is not a finite number") != std::string::npos);
  }
  SUBCASE("duplicate and empty primary keys") {
    write_file(dir.path() / "airlines.csv", "id,fleet\nA1,1\nA1,2\n");
    CHECK(thrown_message<IngestError>([&] { ingest(schema, dir.str()); })
              .find("duplicate key 'A1'") != std::string::npos);
    write_file(dir.path() / "airlines.csv", "id,fleet\nA1,1\n,2\n");
    CHECK(thrown_message<IngestError>([&] { ingest(schema, dir.str()); })
              .find("empty key") != std::string::npos);
  }
  SUBCASE("classification labels must be 0 or 1") {
    std::string text = flights_schema_json();
    text.replace(text.find("\"regression\""), 12, "\"binary_classification\"");
    write_file(dir.path() / "schema.json", text);
    Schema cls = load_schema((dir.path() / "schema.json").string());
    std::string msg = thrown_message<IngestError>([&] { ingest(cls, dir.str()); });
    CHECK(msg.find("labels must be 0 or 1") != std::string::npos);
  }
}

TEST_CASE("reverse links mirror forward links on random stores") {
  Rng rng(401);
  for (int trial = 0; trial < 50; ++trial) {
    RandomDb db = make_random_store(rng);
    for (size_t r = 0; r < db.store.fk_forward.size(); ++r) {
      const auto& forward = db.store.fk_forward[r];
      std::vector<std::vector<int32_t>> expect(db.store.fk_reverse[r].size());
      for (size_t i = 0; i < forward.size(); ++i)
        if (forward[i] >= 0) expect[static_cast<size_t>(forward[i])].push_back(static_cast<int32_t>(i));
      CHECK(expect == db.store.fk_reverse[r]);
    }
  }
}

TEST_CASE("neighbors lists forward links first, then reverse links in order") {
  FlightsDb db = load_flights();

  auto got = neighbors(db.store, flight(0));
  REQUIRE(got.size() == 3);
  CHECK(got[0].ref == airline(0));
  CHECK(got[0].relation == 0);
  CHECK(got[0].dir == LinkDir::Forward);
  CHECK(got[1].ref == airport(0));
  CHECK(got[1].relation == 1);
  CHECK(got[2].ref == airport(1));
  CHECK(got[2].relation == 2);

  // A1: referenced by F1, F2 through relation 0 and by P1 through the hub
  // relation; airlines hold no foreign keys of their own.
  got = neighbors(db.store, airline(0));
  REQUIRE(got.size() == 3);
  CHECK(got[0].ref == flight(0));
  CHECK(got[0].dir == LinkDir::Reverse);
  CHECK(got[1].ref == flight(1));
  CHECK(got[1].relation == 0);
  CHECK(got[2].ref == airport(0));
  CHECK(got[2].relation == 3);

  got = neighbors(db.store, airport(1));
  REQUIRE(got.size() == 2);
  CHECK(got[0].ref == flight(0));
  CHECK(got[0].relation == 2);
  CHECK(got[1].ref == flight(2));

  CHECK(neighbors(db.store, airline(2)).empty());
}

TEST_CASE("neighbors is symmetric on random stores") {
  Rng rng(402);
  for (int trial = 0; trial < 30; ++trial) {
    RandomDb db = make_random_store(rng);
    for (int32_t t = 0; t < static_cast<int32_t>(db.store.tables.size()); ++t) {
      for (int32_t row = 0; row < db.store.row_count(t); ++row) {
        TupleRef a{t, row};
        for (const NeighborEntry& entry : neighbors(db.store, a)) {
          if (entry.ref == a) continue;  // self links carry no counterpart
          auto back = neighbors(db.store, entry.ref);
          bool found = false;
          for (const NeighborEntry& rev : back)
            if (rev.ref == a && rev.relation == entry.relation && rev.dir != entry.dir)
              found = true;
          CHECK(found);
        }
      }
    }
  }
}

TEST_CASE("feature stats use population moments and skip missing cells") {
  FlightsDb db = load_flights();
  std::vector<TupleRef> train{flight(0)};
  FeatureStats stats = compute_feature_stats(db.store, train);

  // delay over the six labeled flights.
  std::vector<double> delays{10, 20, 30, -5, 15, 25};
  double mean = 0.0;
  for (double d : delays) mean += d;
  mean /= static_cast<double>(delays.size());
  double sq = 0.0;
  for (double d : delays) sq += (d - mean) * (d - mean);
  double stddev = std::sqrt(sq / static_cast<double>(delays.size()));
  CHECK(stats.numeric[kFlights][0].mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(stats.numeric[kFlights][0].stddev == doctest::Approx(stddev).epsilon(1e-12));
  CHECK(stats.vocab[kFlights][0] ==
        std::vector<std::string>{"", "business", "economy", "first"});

  // Stats are label-free: any non-empty train list gives the same numbers.
  FeatureStats other = compute_feature_stats(db.store, {flight(3), flight(4)});
  CHECK(other.numeric[kFlights][0].mean == stats.numeric[kFlights][0].mean);
  CHECK(other.numeric[kAirports][0].stddev == stats.numeric[kAirports][0].stddev);

  CHECK_THROWS_AS(compute_feature_stats(db.store, {}), std::invalid_argument);
}

TEST_CASE("stats handle constant and all-missing columns") {
  TempDir dir;
  write_file(dir.path() / "schema.json", R"({
    "tables": [{"name": "m", "file": "m.csv", "primary_key": "id",
                "columns": [{"name": "x", "type": "numeric"},
                            {"name": "k", "type": "numeric"},
                            {"name": "e", "type": "numeric"},
                            {"name": "c", "type": "categorical"}]}],
    "relations": [],
    "target": {"table": "m", "column": "x", "task": "regression"}
  })");
  write_file(dir.path() / "m.csv",
             "id,x,k,e,c\n"
             "r1,1,7,,b\n"
             "r2,3,7,,a\n"
             "r3,,7,,\n");
  Schema schema = load_schema((dir.path() / "schema.json").string());
  Store store = ingest(schema, dir.str());
  FeatureStats stats = compute_feature_stats(store, {{0, 0}});

  CHECK(stats.numeric[0][0].mean == 2.0);    // x over {1, 3}
  CHECK(stats.numeric[0][0].stddev == 1.0);
  CHECK(stats.numeric[0][1].mean == 7.0);    // constant column
  CHECK(stats.numeric[0][1].stddev == 0.0);
  CHECK(stats.numeric[0][2].mean == 0.0);    // all missing
  CHECK(stats.numeric[0][2].stddev == 0.0);
  CHECK(stats.vocab[0][0] == std::vector<std::string>{"", "a", "b"});
  CHECK(store.tables[0].categorical[0].codes == std::vector<int32_t>{2, 1, 0});

  // Zero-stddev columns standardize to 0, missing cells flag themselves.
  FeatureVector fv = encode_features(store, stats, {0, 0}, false);
  CHECK(fv.numeric[1].value == 0.0);
  CHECK(fv.numeric[1].missing == 0.0);
  CHECK(fv.numeric[2].value == 0.0);
  CHECK(fv.numeric[2].missing == 1.0);
}

TEST_CASE("encode standardizes, masks the target and maps unseen categories to 0") {
  FlightsDb db = load_flights();
  FeatureStats stats = compute_feature_stats(db.store, {flight(0)});
  double mean = stats.numeric[kFlights][0].mean;
  double stddev = stats.numeric[kFlights][0].stddev;

  FeatureVector plain = encode_features(db.store, stats, flight(0), false);
  REQUIRE(plain.numeric.size() == 1);
  REQUIRE(plain.categorical.size() == 1);
  CHECK(plain.numeric[0].value == doctest::Approx((10.0 - mean) / stddev).epsilon(1e-12));
  CHECK(plain.numeric[0].missing == 0.0);
  CHECK(plain.categorical[0] == 2);  // economy

  FeatureVector masked = encode_features(db.store, stats, flight(0), true);
  CHECK(masked.numeric[0].value == 0.0);
  CHECK(masked.numeric[0].missing == 1.0);
  CHECK(masked.categorical[0] == 2);  // masking only hides the target column

  // A genuinely missing target encodes the same way whether masked or not.
  FeatureVector f6 = encode_features(db.store, stats, flight(5), false);
  CHECK(f6.numeric[0].value == 0.0);
  CHECK(f6.numeric[0].missing == 1.0);

  // mask_target only acts on the target table.
  FeatureVector port = encode_features(db.store, stats, airport(0), true);
  CHECK(fv_equal(port, encode_features(db.store, stats, airport(0), false)));
  CHECK(port.numeric[0].value ==
        doctest::Approx((5.0 - stats.numeric[kAirports][0].mean) /
                        stats.numeric[kAirports][0].stddev).epsilon(1e-12));

  // Unseen category: drop "first" from the stats vocabulary and re-encode F7.
  FeatureStats trimmed = stats;
  trimmed.vocab[kFlights][0] = {"", "business", "economy"};
  FeatureVector f7 = encode_features(db.store, trimmed, flight(6), false);
  CHECK(f7.categorical[0] == 0);

  // The bulk encoder agrees with the one-off path everywhere.
  FeatureEncoder enc(db.store, stats);
  for (int32_t t = 0; t < 3; ++t)
    for (int32_t row = 0; row < db.store.row_count(t); ++row)
      for (bool mask : {false, true})
        CHECK(fv_equal(enc.encode({t, row}, mask),
                       encode_features(db.store, stats, {t, row}, mask)));
}

TEST_CASE("split floors val and test sizes and gives the remainder to train") {
  TempDir dir;
  write_file(dir.path() / "schema.json", R"({
    "tables": [{"name": "t", "file": "t.csv", "primary_key": "id",
                "columns": [{"name": "x", "type": "numeric"}]}],
    "relations": [],
    "target": {"table": "t", "column": "x", "task": "regression"}
  })");
  std::string csv = "id,x\n";
  for (int i = 0; i < 100; ++i)
    csv += "r" + std::to_string(i) + "," + std::to_string(i) + "\n";
  write_file(dir.path() / "t.csv", csv);
  Schema schema = load_schema((dir.path() / "schema.json").string());
  Store store = ingest(schema, dir.str());

  SplitRefs split = split_targets(store, 0.65, 0.15, 0.20, 7);
  CHECK(split.train.size() == 65);
  CHECK(split.val.size() == 15);
  CHECK(split.test.size() == 20);

  std::set<TupleRef> all;
  for (const auto& part : {split.train, split.val, split.test})
    for (TupleRef ref : part) CHECK(all.insert(ref).second);
  CHECK(all.size() == 100);

  SplitRefs same = split_targets(store, 0.65, 0.15, 0.20, 7);
  CHECK(same.train == split.train);
  CHECK(same.val == split.val);
  CHECK(same.test == split.test);
  SplitRefs other = split_targets(store, 0.65, 0.15, 0.20, 8);
  CHECK(other.train != split.train);

  SplitRefs uneven = split_targets(store, 0.34, 0.33, 0.33, 3);
  CHECK(uneven.val.size() == 33);
  CHECK(uneven.test.size() == 33);
  CHECK(uneven.train.size() == 34);

  CHECK_THROWS_AS(split_targets(store, -0.2, 0.6, 0.6, 1), BadRatios);
  CHECK_THROWS_AS(split_targets(store, 0.5, 0.2, 0.2, 1), BadRatios);
}

TEST_CASE("split draws only labeled target rows") {
  FlightsDb db = load_flights();
  SplitRefs split = split_targets(db.store, 0.65, 0.15, 0.20, 1);
  CHECK(split.val.size() == 0);   // floor(0.9)
  CHECK(split.test.size() == 1);  // floor(1.2)
  CHECK(split.train.size() == 5);
  std::set<TupleRef> all(split.train.begin(), split.train.end());
  all.insert(split.test.begin(), split.test.end());
  CHECK(all.size() == 6);
  CHECK(all.count(flight(5)) == 0);  // F6 has no delay
  for (TupleRef ref : all) CHECK(ref.table == kFlights);
}

TEST_CASE("csv round-trips quoted fields") {
  TempDir dir;
  CsvTable table;
  table.header = {"id", "note"};
  table.rows = {{"a", "plain"},
                {"b", "comma, inside"},
                {"c", "say \"hi\""},
                {"d", "two\nlines"},
                {"e", ""}};
  std::string path = (dir.path() / "q.csv").string();
  write_csv(path, table);
  CsvTable back = read_csv(path);
  CHECK(back.header == table.header);
  CHECK(back.rows == table.rows);

  CHECK_THROWS_AS(read_csv((dir.path() / "absent.csv").string()), std::runtime_error);
  write_file(dir.path() / "ragged.csv", "a,b\n1\n");
  CHECK_THROWS_AS(read_csv((dir.path() / "ragged.csv").string()), std::runtime_error);
  write_file(dir.path() / "open.csv", "a,b\n\"unterminated\n");
  CHECK_THROWS_AS(read_csv((dir.path() / "open.csv").string()), std::runtime_error);
}
