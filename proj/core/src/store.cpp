#include "spare/store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "spare/csv.hpp"
#include "spare/rng.hpp"

namespace spare {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw SchemaInvalid(ctx + ": unknown key '" + it.key() + "'");
  }
}

const json& require(const json& obj, const char* key, const std::string& ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaInvalid(ctx + ": missing key '" + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& ctx) {
  const json& v = require(obj, key, ctx);
  if (!v.is_string() || v.get<std::string>().empty())
    throw SchemaInvalid(ctx + ": '" + std::string(key) + "' must be a non-empty string");
  return v.get<std::string>();
}

bool parse_double_strict(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = first + s.size();
  auto [p, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && p == last && std::isfinite(out);
}

}  // namespace

int Schema::table_index(const std::string& name) const {
  for (size_t i = 0; i < tables.size(); ++i)
    if (tables[i].name == name) return static_cast<int>(i);
  return -1;
}

Schema parse_schema(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw SchemaInvalid(std::string("not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw SchemaInvalid("top level must be an object");
  check_keys(root, {"tables", "relations", "target"}, "top level");

  Schema schema;
  const json& tables = require(root, "tables", "top level");
  if (!tables.is_array() || tables.empty())
    throw SchemaInvalid("'tables' must be a non-empty array");
  for (const json& t : tables) {
    if (!t.is_object()) throw SchemaInvalid("table entries must be objects");
    TableDef def;
    def.name = require_string(t, "name", "table");
    const std::string ctx = "table '" + def.name + "'";
    check_keys(t, {"name", "file", "primary_key", "columns"}, ctx);
    def.file = require_string(t, "file", ctx);
    def.primary_key = require_string(t, "primary_key", ctx);
    const json& cols = require(t, "columns", ctx);
    if (!cols.is_array()) throw SchemaInvalid(ctx + ": 'columns' must be an array");
    for (const json& c : cols) {
      if (!c.is_object()) throw SchemaInvalid(ctx + ": column entries must be objects");
      check_keys(c, {"name", "type"}, ctx + " column");
      ColumnDef col;
      col.name = require_string(c, "name", ctx + " column");
      std::string type = require_string(c, "type", ctx + " column");
      if (type == "numeric") {
        col.kind = ColumnKind::Numeric;
      } else if (type == "categorical") {
        col.kind = ColumnKind::Categorical;
      } else {
        throw SchemaInvalid(ctx + ": column '" + col.name + "' has unknown type '" + type + "'");
      }
      if (col.name == def.primary_key)
        throw SchemaInvalid(ctx + ": primary key '" + col.name + "' also declared as a column");
      for (const ColumnDef& prev : def.columns)
        if (prev.name == col.name)
          throw SchemaInvalid(ctx + ": duplicate column '" + col.name + "'");
      def.columns.push_back(std::move(col));
    }
    if (schema.table_index(def.name) >= 0)
      throw SchemaInvalid("duplicate table '" + def.name + "'");
    schema.tables.push_back(std::move(def));
  }

  const json& relations = require(root, "relations", "top level");
  if (!relations.is_array()) throw SchemaInvalid("'relations' must be an array");
  for (const json& r : relations) {
    if (!r.is_object()) throw SchemaInvalid("relation entries must be objects");
    check_keys(r, {"from_table", "from_column", "to_table", "to_column"}, "relation");
    RelationDef rel;
    rel.from_table = require_string(r, "from_table", "relation");
    rel.from_column = require_string(r, "from_column", "relation");
    rel.to_table = require_string(r, "to_table", "relation");
    rel.to_column = require_string(r, "to_column", "relation");
    const std::string ctx =
        "relation " + rel.from_table + "." + rel.from_column + " -> " + rel.to_table;
    int from = schema.table_index(rel.from_table);
    int to = schema.table_index(rel.to_table);
    if (from < 0) throw SchemaInvalid(ctx + ": unknown from_table");
    if (to < 0) throw SchemaInvalid(ctx + ": unknown to_table");
    if (rel.to_column != schema.tables[static_cast<size_t>(to)].primary_key)
      throw SchemaInvalid(ctx + ": to_column must be the primary key of to_table");
    for (const ColumnDef& c : schema.tables[static_cast<size_t>(from)].columns)
      if (c.name == rel.from_column)
        throw SchemaInvalid(ctx + ": from_column is also declared as a feature column");
    rel.relation_id = static_cast<int>(schema.relations.size());
    schema.relations.push_back(std::move(rel));
  }

  const json& target = require(root, "target", "top level");
  if (!target.is_object()) throw SchemaInvalid("'target' must be an object");
  check_keys(target, {"table", "column", "task"}, "target");
  schema.target.table = require_string(target, "table", "target");
  schema.target.column = require_string(target, "column", "target");
  std::string task = require_string(target, "task", "target");
  if (task == "regression") {
    schema.target.task = TaskKind::Regression;
  } else if (task == "binary_classification") {
    schema.target.task = TaskKind::BinaryClassification;
  } else {
    throw SchemaInvalid("target: unknown task '" + task + "'");
  }
  int tt = schema.table_index(schema.target.table);
  if (tt < 0) throw SchemaInvalid("target: unknown table '" + schema.target.table + "'");
  bool found = false;
  for (const ColumnDef& c : schema.tables[static_cast<size_t>(tt)].columns) {
    if (c.name != schema.target.column) continue;
    if (c.kind != ColumnKind::Numeric)
      throw SchemaInvalid("target: column '" + schema.target.column + "' must be numeric");
    found = true;
  }
  if (!found)
    throw SchemaInvalid("target: column '" + schema.target.column + "' is not declared in table '" +
                        schema.target.table + "'");
  return schema;
}

std::string serialize_schema(const Schema& schema) {
  ordered_json root;
  root["tables"] = ordered_json::array();
  for (const TableDef& t : schema.tables) {
    ordered_json jt;
    jt["name"] = t.name;
    jt["file"] = t.file;
    jt["primary_key"] = t.primary_key;
    jt["columns"] = ordered_json::array();
    for (const ColumnDef& c : t.columns) {
      ordered_json jc;
      jc["name"] = c.name;
      jc["type"] = c.kind == ColumnKind::Numeric ? "numeric" : "categorical";
      jt["columns"].push_back(std::move(jc));
    }
    root["tables"].push_back(std::move(jt));
  }
  root["relations"] = ordered_json::array();
  for (const RelationDef& r : schema.relations) {
    ordered_json jr;
    jr["from_table"] = r.from_table;
    jr["from_column"] = r.from_column;
    jr["to_table"] = r.to_table;
    jr["to_column"] = r.to_column;
    root["relations"].push_back(std::move(jr));
  }
  ordered_json jt;
  jt["table"] = schema.target.table;
  jt["column"] = schema.target.column;
  jt["task"] = schema.target.task == TaskKind::Regression ? "regression" : "binary_classification";
  root["target"] = std::move(jt);
  return root.dump(2) + "\n";
}

Schema load_schema(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaInvalid("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_schema(buf.str());
}

int Store::numeric_column_index(int table, const std::string& name) const {
  int slot = 0;
  for (const ColumnDef& c : schema.tables[static_cast<size_t>(table)].columns) {
    if (c.kind != ColumnKind::Numeric) continue;
    if (c.name == name) return slot;
    ++slot;
  }
  return -1;
}

int Store::categorical_column_index(int table, const std::string& name) const {
  int slot = 0;
  for (const ColumnDef& c : schema.tables[static_cast<size_t>(table)].columns) {
    if (c.kind != ColumnKind::Categorical) continue;
    if (c.name == name) return slot;
    ++slot;
  }
  return -1;
}

void Store::check_consistency() const {
  size_t n_rel = schema.relations.size();
  if (fk_forward.size() != n_rel || fk_reverse.size() != n_rel)
    throw IngestError("relation arrays do not match the schema");
  for (size_t r = 0; r < n_rel; ++r) {
    const RelationDef& rel = schema.relations[r];
    int from = schema.table_index(rel.from_table);
    int to = schema.table_index(rel.to_table);
    if (static_cast<int64_t>(fk_forward[r].size()) != row_count(from))
      throw IngestError("forward key array has the wrong length");
    if (static_cast<int64_t>(fk_reverse[r].size()) != row_count(to))
      throw IngestError("reverse key array has the wrong length");
    std::vector<std::vector<int32_t>> rebuilt(static_cast<size_t>(row_count(to)));
    for (size_t row = 0; row < fk_forward[r].size(); ++row) {
      int32_t dst = fk_forward[r][row];
      if (dst < 0) continue;
      if (dst >= row_count(to)) throw IngestError("forward key out of range");
      rebuilt[static_cast<size_t>(dst)].push_back(static_cast<int32_t>(row));
    }
    if (rebuilt != fk_reverse[r]) throw IngestError("reverse keys do not mirror forward keys");
  }
}

Store ingest(const Schema& schema, const std::string& data_dir, bool strict) {
  Store store;
  store.schema = schema;
  store.tables.resize(schema.tables.size());

  // Pass 1: load every table, index primary keys, encode declared columns.
  std::vector<std::unordered_map<std::string, int32_t>> id_maps(schema.tables.size());
  std::vector<CsvTable> raw(schema.tables.size());
  std::vector<std::unordered_map<std::string, int>> headers(schema.tables.size());
  for (size_t t = 0; t < schema.tables.size(); ++t) {
    const TableDef& def = schema.tables[t];
    std::filesystem::path path = std::filesystem::path(data_dir) / def.file;
    try {
      raw[t] = read_csv(path.string());
    } catch (const std::exception& e) {
      throw IngestError(std::string(e.what()));
    }
    CsvTable& csv = raw[t];
    for (size_t i = 0; i < csv.header.size(); ++i) {
      auto [it, inserted] = headers[t].emplace(csv.header[i], static_cast<int>(i));
      if (!inserted)
        throw IngestError(def.file + ": duplicate header column '" + csv.header[i] + "'");
    }
    auto column_of = [&](const std::string& name) {
      auto it = headers[t].find(name);
      if (it == headers[t].end())
        throw IngestError(def.file + ": header is missing column '" + name + "'");
      return it->second;
    };

    TableData& data = store.tables[t];
    data.row_count = static_cast<int64_t>(csv.rows.size());
    int pk = column_of(def.primary_key);
    for (size_t row = 0; row < csv.rows.size(); ++row) {
      const std::string& id = csv.rows[row][static_cast<size_t>(pk)];
      if (id.empty())
        throw IngestError(def.file + ": row " + std::to_string(row + 2) + " has an empty key");
      auto [it, inserted] = id_maps[t].emplace(id, static_cast<int32_t>(row));
      if (!inserted)
        throw IngestError(def.file + ": duplicate key '" + id + "'");
    }

    bool is_target_table = def.name == schema.target.table;
    for (const ColumnDef& col : def.columns) {
      int c = column_of(col.name);
      if (col.kind == ColumnKind::Numeric) {
        NumericColumn out;
        out.values.resize(csv.rows.size(), 0.0);
        out.missing.resize(csv.rows.size(), 0);
        for (size_t row = 0; row < csv.rows.size(); ++row) {
          const std::string& cell = csv.rows[row][static_cast<size_t>(c)];
          if (cell.empty()) {
            out.missing[row] = 1;
            continue;
          }
          double v = 0.0;
          if (!parse_double_strict(cell, v))
            throw IngestError(def.file + ": row " + std::to_string(row + 2) + " column '" +
                              col.name + "': '" + cell + "' is not a finite number");
          if (is_target_table && col.name == schema.target.column &&
              schema.target.task == TaskKind::BinaryClassification && v != 0.0 && v != 1.0)
            throw IngestError(def.file + ": row " + std::to_string(row + 2) +
                              ": classification labels must be 0 or 1, got '" + cell + "'");
          out.values[row] = v;
        }
        data.numeric.push_back(std::move(out));
      } else {
        CategoricalColumn out;
        out.codes.resize(csv.rows.size(), 0);
        std::vector<std::string> distinct;
        for (size_t row = 0; row < csv.rows.size(); ++row) {
          const std::string& cell = csv.rows[row][static_cast<size_t>(c)];
          if (!cell.empty()) distinct.push_back(cell);
        }
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        out.vocab.reserve(distinct.size() + 1);
        out.vocab.emplace_back();  // index 0 = unknown/missing
        for (std::string& v : distinct) out.vocab.push_back(std::move(v));
        for (size_t row = 0; row < csv.rows.size(); ++row) {
          const std::string& cell = csv.rows[row][static_cast<size_t>(c)];
          if (cell.empty()) continue;
          auto it = std::lower_bound(out.vocab.begin() + 1, out.vocab.end(), cell);
          out.codes[row] = static_cast<int32_t>(it - out.vocab.begin());
        }
        data.categorical.push_back(std::move(out));
      }
    }
  }

  // Pass 2: resolve both foreign-key directions.
  store.fk_forward.resize(schema.relations.size());
  store.fk_reverse.resize(schema.relations.size());
  for (size_t r = 0; r < schema.relations.size(); ++r) {
    const RelationDef& rel = schema.relations[r];
    size_t from = static_cast<size_t>(schema.table_index(rel.from_table));
    size_t to = static_cast<size_t>(schema.table_index(rel.to_table));
    const CsvTable& csv = raw[from];
    auto it = headers[from].find(rel.from_column);
    if (it == headers[from].end())
      throw IngestError(schema.tables[from].file + ": header is missing column '" +
                        rel.from_column + "'");
    int c = it->second;
    std::vector<int32_t>& forward = store.fk_forward[r];
    forward.resize(csv.rows.size(), -1);
    std::vector<std::vector<int32_t>>& reverse = store.fk_reverse[r];
    reverse.resize(static_cast<size_t>(store.row_count(static_cast<int>(to))));
    for (size_t row = 0; row < csv.rows.size(); ++row) {
      const std::string& cell = csv.rows[row][static_cast<size_t>(c)];
      if (cell.empty()) continue;
      auto hit = id_maps[to].find(cell);
      if (hit == id_maps[to].end()) {
        if (strict)
          throw IngestError(schema.tables[from].file + ": row " + std::to_string(row + 2) +
                            " column '" + rel.from_column + "': no row '" + cell + "' in " +
                            rel.to_table);
        continue;  // lenient: treat as a missing link
      }
      forward[row] = hit->second;
      reverse[static_cast<size_t>(hit->second)].push_back(static_cast<int32_t>(row));
    }
  }
  return store;
}

std::vector<NeighborEntry> neighbors(const Store& store, TupleRef ref) {
  std::vector<NeighborEntry> out;
  for (size_t r = 0; r < store.schema.relations.size(); ++r) {
    const RelationDef& rel = store.schema.relations[r];
    if (store.schema.table_index(rel.from_table) != ref.table) continue;
    int32_t dst = store.fk_forward[r][static_cast<size_t>(ref.row)];
    if (dst < 0) continue;
    out.push_back({{static_cast<int32_t>(store.schema.table_index(rel.to_table)), dst},
                   static_cast<int32_t>(r), LinkDir::Forward});
  }
  for (size_t r = 0; r < store.schema.relations.size(); ++r) {
    const RelationDef& rel = store.schema.relations[r];
    if (store.schema.table_index(rel.to_table) != ref.table) continue;
    int32_t from = static_cast<int32_t>(store.schema.table_index(rel.from_table));
    for (int32_t src : store.fk_reverse[r][static_cast<size_t>(ref.row)])
      out.push_back({{from, src}, static_cast<int32_t>(r), LinkDir::Reverse});
  }
  return out;
}

FeatureStats compute_feature_stats(const Store& store,
                                   const std::vector<TupleRef>& train_targets) {
  if (train_targets.empty())
    throw std::invalid_argument("compute_feature_stats: empty training split");
  FeatureStats stats;
  stats.numeric.resize(store.tables.size());
  stats.vocab.resize(store.tables.size());
  for (size_t t = 0; t < store.tables.size(); ++t) {
    const TableData& data = store.tables[t];
    stats.numeric[t].reserve(data.numeric.size());
    for (const NumericColumn& col : data.numeric) {
      NumericStats s;
      int64_t n = 0;
      double sum = 0.0;
      for (size_t i = 0; i < col.values.size(); ++i) {
        if (col.missing[i]) continue;
        sum += col.values[i];
        ++n;
      }
      if (n > 0) {
        s.mean = sum / static_cast<double>(n);
        double sq = 0.0;
        for (size_t i = 0; i < col.values.size(); ++i) {
          if (col.missing[i]) continue;
          double d = col.values[i] - s.mean;
          sq += d * d;
        }
        s.stddev = std::sqrt(sq / static_cast<double>(n));
      }
      stats.numeric[t].push_back(s);
    }
    stats.vocab[t].reserve(data.categorical.size());
    for (const CategoricalColumn& col : data.categorical)
      stats.vocab[t].push_back(col.vocab);
  }
  return stats;
}

FeatureEncoder::FeatureEncoder(const Store& store, const FeatureStats& stats)
    : store_(&store), stats_(&stats) {
  remap_.resize(store.tables.size());
  for (size_t t = 0; t < store.tables.size(); ++t) {
    const TableData& data = store.tables[t];
    remap_[t].resize(data.categorical.size());
    for (size_t c = 0; c < data.categorical.size(); ++c) {
      const std::vector<std::string>& local = data.categorical[c].vocab;
      const std::vector<std::string>& global = stats.vocab[t][c];
      std::vector<int32_t>& map = remap_[t][c];
      map.resize(local.size(), 0);
      for (size_t code = 1; code < local.size(); ++code) {
        auto it = std::lower_bound(global.begin() + 1, global.end(), local[code]);
        if (it != global.end() && *it == local[code])
          map[code] = static_cast<int32_t>(it - global.begin());
      }
    }
  }
  target_table_ = store.schema.target_table_index();
  target_numeric_ = store.numeric_column_index(target_table_, store.schema.target.column);
  target_categorical_ = store.categorical_column_index(target_table_, store.schema.target.column);
}

FeatureVector FeatureEncoder::encode(TupleRef ref, bool mask_target) const {
  const TableData& data = store_->tables[static_cast<size_t>(ref.table)];
  size_t row = static_cast<size_t>(ref.row);
  FeatureVector out;
  out.numeric.reserve(data.numeric.size());
  for (size_t c = 0; c < data.numeric.size(); ++c) {
    NumericSlot slot;
    bool masked = mask_target && ref.table == target_table_ &&
                  static_cast<int>(c) == target_numeric_;
    if (masked || data.numeric[c].missing[row]) {
      slot.missing = 1.0;
    } else {
      const NumericStats& s = stats_->numeric[static_cast<size_t>(ref.table)][c];
      double v = data.numeric[c].values[row];
      slot.value = s.stddev > 0.0 ? (v - s.mean) / s.stddev : 0.0;
    }
    out.numeric.push_back(slot);
  }
  out.categorical.reserve(data.categorical.size());
  for (size_t c = 0; c < data.categorical.size(); ++c) {
    bool masked = mask_target && ref.table == target_table_ &&
                  static_cast<int>(c) == target_categorical_;
    int32_t code = masked ? 0 : data.categorical[c].codes[row];
    out.categorical.push_back(remap_[static_cast<size_t>(ref.table)][c][static_cast<size_t>(code)]);
  }
  return out;
}

FeatureVector encode_features(const Store& store, const FeatureStats& stats,
                              TupleRef ref, bool mask_target) {
  return FeatureEncoder(store, stats).encode(ref, mask_target);
}

SplitRefs split_targets(const Store& store, double train_ratio, double val_ratio,
                        double test_ratio, uint64_t seed) {
  if (train_ratio < 0.0 || val_ratio < 0.0 || test_ratio < 0.0)
    throw BadRatios("ratios must be non-negative");
  if (std::fabs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
    throw BadRatios("ratios must sum to 1");
  int target_table = store.schema.target_table_index();
  int col = store.numeric_column_index(target_table, store.schema.target.column);
  const NumericColumn& labels = store.tables[static_cast<size_t>(target_table)].numeric
                                    [static_cast<size_t>(col)];
  std::vector<TupleRef> labeled;
  for (size_t row = 0; row < labels.values.size(); ++row)
    if (!labels.missing[row])
      labeled.push_back({target_table, static_cast<int32_t>(row)});

  Rng rng(seed);
  rng.shuffle(labeled);
  size_t n = labeled.size();
  size_t n_val = static_cast<size_t>(val_ratio * static_cast<double>(n));
  size_t n_test = static_cast<size_t>(test_ratio * static_cast<double>(n));
  size_t n_train = n - n_val - n_test;

  SplitRefs split;
  split.train.assign(labeled.begin(), labeled.begin() + static_cast<int64_t>(n_train));
  split.val.assign(labeled.begin() + static_cast<int64_t>(n_train),
                   labeled.begin() + static_cast<int64_t>(n_train + n_val));
  split.test.assign(labeled.begin() + static_cast<int64_t>(n_train + n_val), labeled.end());
  return split;
}

}  // namespace spare
