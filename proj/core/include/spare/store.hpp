#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace spare {

struct SchemaInvalid : std::runtime_error {
  explicit SchemaInvalid(const std::string& what) : std::runtime_error("schema: " + what) {}
};
struct IngestError : std::runtime_error {
  explicit IngestError(const std::string& what) : std::runtime_error("ingest: " + what) {}
};
struct BadRatios : std::runtime_error {
  explicit BadRatios(const std::string& what) : std::runtime_error("split: " + what) {}
};

enum class ColumnKind { Numeric, Categorical };
enum class TaskKind { Regression, BinaryClassification };

struct ColumnDef {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
};

struct TableDef {
  std::string name;
  std::string file;         // CSV file name relative to the data directory
  std::string primary_key;  // header column holding the row id
  std::vector<ColumnDef> columns;  // feature columns; key columns stay out
};

struct RelationDef {
  std::string from_table;
  std::string from_column;
  std::string to_table;
  std::string to_column;  // must be the primary key of to_table
  int relation_id = -1;   // assigned in declaration order, 0..R-1
};

struct TargetDef {
  std::string table;
  std::string column;
  TaskKind task = TaskKind::Regression;
};

struct Schema {
  std::vector<TableDef> tables;
  std::vector<RelationDef> relations;
  TargetDef target;

  int table_index(const std::string& name) const;  // -1 if absent
  int target_table_index() const { return table_index(target.table); }
};

/// Identifies one tuple: (table index, row index).
struct TupleRef {
  int32_t table = -1;
  int32_t row = -1;

  friend bool operator==(const TupleRef&, const TupleRef&) = default;
  friend auto operator<=>(const TupleRef& a, const TupleRef& b) {
    return std::tie(a.table, a.row) <=> std::tie(b.table, b.row);
  }
};

enum class LinkDir : uint8_t { Forward, Reverse };

struct NeighborEntry {
  TupleRef ref;
  int32_t relation = -1;
  LinkDir dir = LinkDir::Forward;
};

struct NumericColumn {
  std::vector<double> values;
  std::vector<uint8_t> missing;  // 1 = missing; values[i] is 0 there
};

struct CategoricalColumn {
  std::vector<int32_t> codes;      // index into vocab; 0 = unknown/missing
  std::vector<std::string> vocab;  // vocab[0] reserved, then sorted values
};

struct TableData {
  std::vector<NumericColumn> numeric;          // declared numeric columns, in order
  std::vector<CategoricalColumn> categorical;  // declared categorical columns, in order
  int64_t row_count = 0;
};

/// Immutable after ingest; safe for concurrent readers.
struct Store {
  Schema schema;
  std::vector<TableData> tables;
  // fk_forward[r][row] = referenced row in to_table, or -1 for a missing link.
  std::vector<std::vector<int32_t>> fk_forward;
  // fk_reverse[r][row] = ascending rows of from_table referencing this row.
  std::vector<std::vector<std::vector<int32_t>>> fk_reverse;

  int64_t row_count(int table) const { return tables[static_cast<size_t>(table)].row_count; }
  bool valid(TupleRef ref) const {
    return ref.table >= 0 && ref.table < static_cast<int32_t>(tables.size()) &&
           ref.row >= 0 && ref.row < row_count(ref.table);
  }
  /// Position of a column inside the table's numeric (kind Numeric) or
  /// categorical (kind Categorical) arrays; -1 when not declared.
  int numeric_column_index(int table, const std::string& name) const;
  int categorical_column_index(int table, const std::string& name) const;

  /// Rebuilds fk_reverse from fk_forward and checks both directions agree.
  void check_consistency() const;
};

struct NumericStats {
  double mean = 0.0;
  double stddev = 0.0;  // population; 0 for constant or all-missing columns
};

struct FeatureStats {
  // [table][declared numeric column]
  std::vector<std::vector<NumericStats>> numeric;
  // [table][declared categorical column]: vocab with reserved index 0
  std::vector<std::vector<std::vector<std::string>>> vocab;
};

struct NumericSlot {
  double value = 0.0;
  double missing = 0.0;  // 1.0 when the raw value was absent or masked
};

/// Per-tuple model input; layout is fixed by the tuple's table.
struct FeatureVector {
  std::vector<NumericSlot> numeric;
  std::vector<int32_t> categorical;  // indices into the stats vocabularies
};

Schema load_schema(const std::string& path);
Schema parse_schema(const std::string& json_text);

/// Canonical JSON text; parse_schema(serialize_schema(s)) reproduces s, and
/// string equality doubles as schema equality.
std::string serialize_schema(const Schema& schema);

/// Reads one CSV per table and resolves both foreign-key directions.
/// strict = true (default) turns dangling keys into IngestError; otherwise
/// they become missing links.
Store ingest(const Schema& schema, const std::string& data_dir, bool strict = true);

/// All tuples linked to ref: forward links first (relation order), then
/// reverse links sorted by (relation_id, row_index). Deterministic.
std::vector<NeighborEntry> neighbors(const Store& store, TupleRef ref);

/// Numeric means/stddevs (population) and categorical vocabularies.
/// Statistics are computed over all rows of every table; they are label-free
/// and identical regardless of the split, so train_targets only gates the
/// non-empty-split precondition.
FeatureStats compute_feature_stats(const Store& store,
                                   const std::vector<TupleRef>& train_targets);

/// Standardizes numerics ((v - mean)/std, 0 when std = 0), maps categoricals
/// into the stats vocabulary (unseen -> 0). mask_target hides the target
/// column when ref lives in the target table.
FeatureVector encode_features(const Store& store, const FeatureStats& stats,
                              TupleRef ref, bool mask_target);

/// Precomputes the store-code -> stats-vocab remap once; use for bulk encoding.
class FeatureEncoder {
 public:
  FeatureEncoder(const Store& store, const FeatureStats& stats);
  FeatureVector encode(TupleRef ref, bool mask_target) const;

 private:
  const Store* store_;
  const FeatureStats* stats_;
  // [table][categorical column][store code] -> stats vocab index
  std::vector<std::vector<std::vector<int32_t>>> remap_;
  int target_table_;
  int target_numeric_;  // slot of the target column if numeric, else -1
  int target_categorical_;
};

struct SplitRefs {
  std::vector<TupleRef> train, val, test;
};

/// Seeded shuffle split over the target table's labeled rows. Sizes follow
/// floor(val), floor(test), remainder to train.
SplitRefs split_targets(const Store& store, double train_ratio, double val_ratio,
                        double test_ratio, uint64_t seed);

}  // namespace spare
