#include "spare/model.hpp"

#include <algorithm>
#include <cmath>

#include "model_common.hpp"
#include "spare/rng.hpp"

namespace spare {

namespace detail {

std::vector<TableLayout> table_layouts(const Schema& schema, const FeatureStats& stats) {
  std::vector<TableLayout> out;
  for (size_t t = 0; t < schema.tables.size(); ++t) {
    TableLayout layout;
    layout.name = schema.tables[t].name;
    size_t cat_slot = 0;
    for (const ColumnDef& c : schema.tables[t].columns) {
      if (c.kind == ColumnKind::Numeric) {
        ++layout.numeric_count;
      } else {
        layout.cat_names.push_back(c.name);
        layout.vocab_sizes.push_back(static_cast<int64_t>(stats.vocab[t][cat_slot].size()));
        ++cat_slot;
      }
    }
    out.push_back(std::move(layout));
  }
  return out;
}

int encoder_input_dim(const TableLayout& layout) {
  return 2 * layout.numeric_count + kCatEmbedDim * static_cast<int>(layout.cat_names.size());
}

void create_encoder_params(ParameterSet& params, const std::vector<TableLayout>& layouts,
                           int hidden, int encoder_layers) {
  for (const TableLayout& layout : layouts) {
    std::string prefix = "enc." + layout.name;
    for (size_t c = 0; c < layout.cat_names.size(); ++c)
      params.create(prefix + ".cat." + layout.cat_names[c] + ".E", layout.vocab_sizes[c],
                    kCatEmbedDim);
    int64_t in = encoder_input_dim(layout);
    for (int k = 0; k < encoder_layers; ++k) {
      params.create(prefix + ".l" + std::to_string(k) + ".W", hidden, k == 0 ? in : hidden);
      params.create(prefix + ".l" + std::to_string(k) + ".b", 1, hidden);
    }
  }
}

void init_params(ParameterSet& params, uint64_t seed) {
  Rng rng(seed);
  for (const auto& p : params.entries()) {
    const std::string& name = p->name;
    bool weight = name.size() >= 2 && name.compare(name.size() - 2, 2, ".W") == 0;
    bool embed = name.size() >= 2 && name.compare(name.size() - 2, 2, ".E") == 0;
    if (weight && p->value.cols > 0) {
      double sigma = std::sqrt(2.0 / static_cast<double>(p->value.cols));
      for (double& v : p->value.data) v = sigma * rng.normal();
    } else if (embed && p->value.cols > 0) {
      double sigma = 1.0 / std::sqrt(static_cast<double>(p->value.cols));
      for (double& v : p->value.data) v = sigma * rng.normal();
    }
    // biases stay zero
  }
}

std::vector<MlpLayer> mlp_leaves(Tape& tape, ParameterSet& params, const std::string& prefix,
                                 int layers) {
  std::vector<MlpLayer> out;
  for (int k = 0; k < layers; ++k) {
    MlpLayer layer;
    layer.w = tape.leaf(params.at(prefix + ".l" + std::to_string(k) + ".W"));
    layer.b = tape.leaf(params.at(prefix + ".l" + std::to_string(k) + ".b"));
    layer.relu = k + 1 < layers;  // final layer stays linear
    out.push_back(layer);
  }
  return out;
}

std::vector<Tape::Id> encode_tables(Tape& tape, ParameterSet& params,
                                    const std::vector<TableLayout>& layouts, int encoder_layers,
                                    const std::vector<int32_t>& table_of,
                                    const std::vector<const FeatureVector*>& features,
                                    std::vector<std::pair<int32_t, int64_t>>& pos) {
  std::vector<std::vector<size_t>> by_table(layouts.size());
  for (size_t s = 0; s < table_of.size(); ++s) {
    if (table_of[s] < 0) continue;
    size_t t = static_cast<size_t>(table_of[s]);
    pos[s] = {static_cast<int32_t>(t), static_cast<int64_t>(by_table[t].size())};
    by_table[t].push_back(s);
  }

  std::vector<Tape::Id> sources;
  for (size_t t = 0; t < layouts.size(); ++t) {
    const TableLayout& layout = layouts[t];
    int64_t n = static_cast<int64_t>(by_table[t].size());
    Tensor numeric(n, 2 * layout.numeric_count);
    std::vector<std::vector<int64_t>> codes(layout.cat_names.size());
    for (int64_t i = 0; i < n; ++i) {
      const FeatureVector& fv = *features[by_table[t][static_cast<size_t>(i)]];
      if (static_cast<int>(fv.numeric.size()) != layout.numeric_count ||
          fv.categorical.size() != layout.cat_names.size())
        throw ShapeMismatch("encode: feature layout does not match table " + layout.name);
      for (int c = 0; c < layout.numeric_count; ++c) {
        numeric.at(i, 2 * c) = fv.numeric[static_cast<size_t>(c)].value;
        numeric.at(i, 2 * c + 1) = fv.numeric[static_cast<size_t>(c)].missing;
      }
      for (size_t c = 0; c < codes.size(); ++c) codes[c].push_back(fv.categorical[c]);
    }
    Tape::Id x = tape.constant(std::move(numeric));
    for (size_t c = 0; c < codes.size(); ++c) {
      Tape::Id embed =
          tape.leaf(params.at("enc." + layout.name + ".cat." + layout.cat_names[c] + ".E"));
      x = tape.concat_cols(x, tape.gather_rows(embed, std::move(codes[c])));
    }
    std::vector<MlpLayer> mlp = mlp_leaves(tape, params, "enc." + layout.name, encoder_layers);
    sources.push_back(apply_mlp(tape, mlp, x));
  }
  return sources;
}

}  // namespace detail

SpareModel::SpareModel(const Schema& schema, const FeatureStats& stats,
                       const ModelConfig& config, std::vector<EmbeddingKey> registry_keys,
                       uint64_t seed)
    : config_(config), registry_keys_(std::move(registry_keys)) {
  if (config_.hidden_width < 1 || config_.encoder_layers < 1 || config_.head_layers < 1)
    throw std::invalid_argument("model: width and layer counts must be positive");
  n_relations_ = static_cast<int>(schema.relations.size());
  tables_ = detail::table_layouts(schema, stats);
  for (size_t i = 0; i < registry_keys_.size(); ++i)
    registry_rows_.emplace(registry_keys_[i], static_cast<int64_t>(i));
  if (registry_rows_.size() != registry_keys_.size())
    throw std::invalid_argument("model: duplicate registry keys");

  int64_t h = config_.hidden_width;
  detail::create_encoder_params(params_, tables_, config_.hidden_width, config_.encoder_layers);
  params_.create("rel.E", 2 * n_relations_ + 1, kRelEmbedDim);
  params_.create("agg.proj.W", h, h + kRelEmbedDim);
  params_.create("agg.proj.b", 1, h);
  if (config_.variant == AggVariant::Gcn) {
    params_.create("agg.self.W", h, h);
    params_.create("agg.self.b", 1, h);
  } else {
    params_.create("agg.child.W", h, h);
    params_.create("agg.child.b", 1, h);
    params_.create("agg.combine.W", h, 2 * h);
    params_.create("agg.combine.b", 1, h);
  }
  for (int k = 0; k < config_.head_layers; ++k) {
    int64_t out = k + 1 == config_.head_layers ? 1 : h;
    params_.create("head.l" + std::to_string(k) + ".W", out, h);
    params_.create("head.l" + std::to_string(k) + ".b", 1, out);
  }
  params_.create("registry.E", static_cast<int64_t>(registry_keys_.size()), h);
  detail::init_params(params_, seed);
}

int SpareModel::encoder_input_dim(int table) const {
  return detail::encoder_input_dim(tables_[static_cast<size_t>(table)]);
}

Tape::Id SpareModel::forward(Tape& tape, const BatchSchedule& schedule,
                             const std::vector<FeatureVector>& slot_features,
                             MessageCounter* counter) {
  if (slot_features.size() != schedule.nodes.size())
    throw ShapeMismatch("forward: features for " + std::to_string(slot_features.size()) +
                        " slots, schedule has " + std::to_string(schedule.nodes.size()));
  if (schedule.nodes.empty()) return tape.constant(Tensor(0, 1));
  int64_t h = config_.hidden_width;
  size_t n_tables = tables_.size();

  // Regular slots go to their table's encoder; marked slots read the
  // registry row for their key.
  std::vector<int32_t> table_of(schedule.nodes.size(), -1);
  std::vector<const FeatureVector*> features(schedule.nodes.size());
  std::vector<std::pair<int32_t, int64_t>> h0_pos(schedule.nodes.size());
  std::vector<int64_t> registry_picks;
  for (size_t s = 0; s < schedule.nodes.size(); ++s) {
    const NodeSlot& slot = schedule.nodes[s];
    features[s] = &slot_features[s];
    if (slot.is_embedding) {
      auto it = registry_rows_.find(slot.key);
      if (it == registry_rows_.end())
        throw UnknownEmbeddingKey("no row for tuple (" + std::to_string(slot.key.tuple.table) +
                                  "," + std::to_string(slot.key.tuple.row) + ") at depth " +
                                  std::to_string(slot.key.depth));
      h0_pos[s] = {static_cast<int32_t>(n_tables),
                   static_cast<int64_t>(registry_picks.size())};
      registry_picks.push_back(it->second);
    } else {
      table_of[s] = slot.table;
    }
  }
  std::vector<Tape::Id> h0_sources = detail::encode_tables(
      tape, params_, tables_, config_.encoder_layers, table_of, features, h0_pos);
  Tape::Id registry = tape.leaf(params_.at("registry.E"));
  h0_sources.push_back(tape.gather_rows(registry, std::move(registry_picks)));
  Tape::Id h0_all = tape.gather_multi(h0_sources, h0_pos);

  // Level sweep: each node consumes its children exactly once.
  Tape::Id rel_embed = tape.leaf(params_.at("rel.E"));
  Tape::Id proj_w = tape.leaf(params_.at("agg.proj.W"));
  Tape::Id proj_b = tape.leaf(params_.at("agg.proj.b"));
  Tape::Id self_w = -1, self_b = -1, child_w = -1, child_b = -1, comb_w = -1, comb_b = -1;
  if (config_.variant == AggVariant::Gcn) {
    self_w = tape.leaf(params_.at("agg.self.W"));
    self_b = tape.leaf(params_.at("agg.self.b"));
  } else {
    child_w = tape.leaf(params_.at("agg.child.W"));
    child_b = tape.leaf(params_.at("agg.child.b"));
    comb_w = tape.leaf(params_.at("agg.combine.W"));
    comb_b = tape.leaf(params_.at("agg.combine.b"));
  }

  std::vector<int32_t> level_of(schedule.nodes.size(), -1);
  for (size_t k = 0; k < schedule.levels.size(); ++k)
    for (int32_t s = schedule.levels[k].begin; s < schedule.levels[k].end; ++s)
      level_of[static_cast<size_t>(s)] = static_cast<int32_t>(k);

  std::vector<Tape::Id> level_out;
  for (size_t k = 0; k < schedule.levels.size(); ++k) {
    const ScheduleLevel& level = schedule.levels[k];
    int64_t n = level.end - level.begin;
    std::vector<int64_t> own(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) own[static_cast<size_t>(i)] = level.begin + i;
    Tape::Id h0 = tape.gather_rows(h0_all, std::move(own));

    Tape::Id agg;
    if (level.child_slots.empty()) {
      agg = tape.constant(Tensor(n, h));  // leaves aggregate an empty set
    } else {
      std::vector<std::pair<int32_t, int64_t>> picks;
      picks.reserve(level.child_slots.size());
      for (int32_t child : level.child_slots) {
        int32_t lv = level_of[static_cast<size_t>(child)];
        picks.push_back({lv, child - schedule.levels[static_cast<size_t>(lv)].begin});
      }
      Tape::Id children = tape.gather_multi(level_out, picks);
      std::vector<int64_t> types;
      types.reserve(level.labels.size());
      for (const ChildLabel& label : level.labels)
        types.push_back(label.same_depth != 0
                            ? 2 * n_relations_
                            : 2 * label.relation + (label.along_fk != 0 ? 0 : 1));
      Tape::Id rels = tape.gather_rows(rel_embed, std::move(types));
      Tape::Id projected = tape.linear(tape.concat_cols(children, rels), proj_w, proj_b);
      if (config_.variant == AggVariant::Gcn) {
        agg = tape.segment_aggregate(projected, level.offsets, Agg::Mean);
      } else {
        Tape::Id per_child = tape.relu(tape.linear(projected, child_w, child_b));
        agg = tape.segment_aggregate(per_child, level.offsets, Agg::Sum);
      }
    }
    Tape::Id out;
    if (config_.variant == AggVariant::Gcn) {
      out = tape.relu(tape.add(tape.linear(h0, self_w, self_b), agg));
    } else {
      out = tape.relu(tape.linear(tape.concat_cols(h0, agg), comb_w, comb_b));
    }
    level_out.push_back(out);
    if (counter != nullptr) {
      counter->messages += static_cast<int64_t>(level.child_slots.size());
      counter->state_updates += n;
    }
  }

  std::vector<std::pair<int32_t, int64_t>> root_picks;
  root_picks.reserve(schedule.root_slots.size());
  for (int32_t s : schedule.root_slots) {
    int32_t lv = level_of[static_cast<size_t>(s)];
    root_picks.push_back({lv, s - schedule.levels[static_cast<size_t>(lv)].begin});
  }
  Tape::Id roots = tape.gather_multi(level_out, root_picks);
  return apply_mlp(tape, detail::mlp_leaves(tape, params_, "head", config_.head_layers), roots);
}

}  // namespace spare
