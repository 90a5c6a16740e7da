#include "spare/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace spare {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kFormatTag = "spare.checkpoint.v1";

void require_finite(double v, const char* where) {
  if (!std::isfinite(v))
    throw CheckpointError(std::string("non-finite value in ") + where + "; refusing to serialize");
}

ordered_json stats_to_json(const FeatureStats& stats) {
  ordered_json out;
  out["numeric"] = ordered_json::array();
  for (const auto& table : stats.numeric) {
    ordered_json jt = ordered_json::array();
    for (const NumericStats& s : table) {
      require_finite(s.mean, "feature stats");
      require_finite(s.stddev, "feature stats");
      jt.push_back(ordered_json{{"mean", s.mean}, {"stddev", s.stddev}});
    }
    out["numeric"].push_back(std::move(jt));
  }
  out["vocab"] = stats.vocab;
  return out;
}

FeatureStats stats_from_json(const json& j) {
  FeatureStats stats;
  for (const json& table : j.at("numeric")) {
    std::vector<NumericStats> row;
    for (const json& s : table)
      row.push_back({s.at("mean").get<double>(), s.at("stddev").get<double>()});
    stats.numeric.push_back(std::move(row));
  }
  stats.vocab = j.at("vocab").get<std::vector<std::vector<std::vector<std::string>>>>();
  if (stats.numeric.size() != stats.vocab.size())
    throw CheckpointError("stats: numeric and vocab table counts differ");
  return stats;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  ordered_json root;
  root["format"] = kFormatTag;
  root["config"] = ordered_json::parse(serialize_train_config(ckpt.config));
  root["schema"] = ordered_json::parse(serialize_schema(ckpt.schema));
  root["stats"] = stats_to_json(ckpt.stats);
  require_finite(ckpt.target_mean, "target stats");
  require_finite(ckpt.target_std, "target stats");
  root["target"] = ordered_json{{"mean", ckpt.target_mean}, {"std", ckpt.target_std}};

  ordered_json occ = ordered_json::array();
  for (const auto& [key, count] : ckpt.occurrences)
    occ.push_back({key.tuple.table, key.tuple.row, key.depth, count});
  root["occurrences"] = std::move(occ);

  ordered_json keys = ordered_json::array();
  for (const EmbeddingKey& key : ckpt.registry_keys)
    keys.push_back({key.tuple.table, key.tuple.row, key.depth});
  root["registry_keys"] = std::move(keys);

  const PruneSummary& ps = ckpt.prune_summary;
  root["prune_summary"] = ordered_json{{"train_dags", ps.train_dags},
                                       {"marked_vertices", ps.marked_vertices},
                                       {"nodes_before", ps.reduction.nodes_before},
                                       {"nodes_after", ps.reduction.nodes_after},
                                       {"edges_before", ps.reduction.edges_before},
                                       {"edges_after", ps.reduction.edges_after}};

  ordered_json params = ordered_json::array();
  for (const auto& [name, tensor] : ckpt.parameters) {
    if (static_cast<int64_t>(tensor.data.size()) != tensor.rows * tensor.cols)
      throw CheckpointError("parameter '" + name + "' has inconsistent shape");
    for (double v : tensor.data) require_finite(v, "parameters");
    ordered_json jp;
    jp["name"] = name;
    jp["rows"] = tensor.rows;
    jp["cols"] = tensor.cols;
    jp["values"] = tensor.data;
    params.push_back(std::move(jp));
  }
  root["parameters"] = std::move(params);
  return root.dump(2) + "\n";
}

Checkpoint parse_checkpoint(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("not valid JSON: ") + e.what());
  }
  try {
    if (!root.is_object() || root.value("format", "") != kFormatTag)
      throw CheckpointError("missing or unknown format tag");
    for (auto it = root.begin(); it != root.end(); ++it) {
      const std::string& k = it.key();
      if (k != "format" && k != "config" && k != "schema" && k != "stats" && k != "target" &&
          k != "occurrences" && k != "registry_keys" && k != "prune_summary" && k != "parameters")
        throw CheckpointError("unknown key '" + k + "'");
    }

    Checkpoint ckpt;
    ckpt.config = parse_train_config(root.at("config").dump());
    ckpt.schema = parse_schema(root.at("schema").dump());
    ckpt.stats = stats_from_json(root.at("stats"));
    ckpt.target_mean = root.at("target").at("mean").get<double>();
    ckpt.target_std = root.at("target").at("std").get<double>();

    for (const json& entry : root.at("occurrences")) {
      if (!entry.is_array() || entry.size() != 4)
        throw CheckpointError("occurrence entries must be [table, row, depth, count]");
      EmbeddingKey key{{entry[0].get<int32_t>(), entry[1].get<int32_t>()}, entry[2].get<int32_t>()};
      if (!ckpt.occurrences.emplace(key, entry[3].get<int64_t>()).second)
        throw CheckpointError("duplicate occurrence key");
    }
    for (const json& entry : root.at("registry_keys")) {
      if (!entry.is_array() || entry.size() != 3)
        throw CheckpointError("registry entries must be [table, row, depth]");
      EmbeddingKey key{{entry[0].get<int32_t>(), entry[1].get<int32_t>()}, entry[2].get<int32_t>()};
      if (!ckpt.registry_keys.empty() && !(ckpt.registry_keys.back() < key))
        throw CheckpointError("registry keys must be strictly ascending");
      ckpt.registry_keys.push_back(key);
    }

    const json& ps = root.at("prune_summary");
    ckpt.prune_summary.train_dags = ps.at("train_dags").get<int64_t>();
    ckpt.prune_summary.marked_vertices = ps.at("marked_vertices").get<int64_t>();
    ckpt.prune_summary.reduction.nodes_before = ps.at("nodes_before").get<int64_t>();
    ckpt.prune_summary.reduction.nodes_after = ps.at("nodes_after").get<int64_t>();
    ckpt.prune_summary.reduction.edges_before = ps.at("edges_before").get<int64_t>();
    ckpt.prune_summary.reduction.edges_after = ps.at("edges_after").get<int64_t>();

    for (const json& jp : root.at("parameters")) {
      Tensor t(jp.at("rows").get<int64_t>(), jp.at("cols").get<int64_t>());
      std::vector<double> values = jp.at("values").get<std::vector<double>>();
      if (values.size() != t.data.size())
        throw CheckpointError("parameter '" + jp.at("name").get<std::string>() +
                              "' has wrong value count");
      t.data = std::move(values);
      ckpt.parameters.emplace_back(jp.at("name").get<std::string>(), std::move(t));
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed document: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string text = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write '" + path + "'");
  out << text;
  if (!out) throw CheckpointError("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

void check_schema(const Checkpoint& ckpt, const Schema& data_schema) {
  if (serialize_schema(ckpt.schema) != serialize_schema(data_schema))
    throw SchemaMismatch("dataset schema differs from the schema the model was trained on");
}

}  // namespace spare
