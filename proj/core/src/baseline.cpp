#include "spare/baseline.hpp"

#include <algorithm>
#include <tuple>

#include "model_common.hpp"

namespace spare {

BaselinePlan build_baseline_plan(const std::vector<TupleGraph>& graphs) {
  BaselinePlan plan;
  plan.graph_offsets.push_back(0);

  // Vertex slots in (graph, tuple) order.
  std::vector<std::vector<int64_t>> slot_of(graphs.size());
  for (size_t g = 0; g < graphs.size(); ++g) {
    const TupleGraph& graph = graphs[g];
    std::vector<int32_t> order(graph.vertices.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int32_t>(i);
    std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
      return graph.vertices[static_cast<size_t>(a)].ref <
             graph.vertices[static_cast<size_t>(b)].ref;
    });
    slot_of[g].assign(graph.vertices.size(), -1);
    for (int32_t v : order) {
      slot_of[g][static_cast<size_t>(v)] = static_cast<int64_t>(plan.vertices.size());
      const GraphVertex& gv = graph.vertices[static_cast<size_t>(v)];
      plan.vertices.push_back({static_cast<int32_t>(g), v, gv.ref.table, gv.ref});
    }
    plan.graph_offsets.push_back(static_cast<int64_t>(plan.vertices.size()));
    plan.undirected_edges += static_cast<int64_t>(graph.edges.size());
  }

  // Two directed messages per edge, grouped by receiver slot.
  struct Incoming {
    TupleRef sender_ref;
    int32_t relation;
    uint8_t holds_fk;
    int64_t sender_slot;
  };
  std::vector<std::vector<Incoming>> incoming(plan.vertices.size());
  for (size_t g = 0; g < graphs.size(); ++g) {
    for (const GraphEdge& e : graphs[g].edges) {
      int64_t u = slot_of[g][static_cast<size_t>(e.u)];
      int64_t v = slot_of[g][static_cast<size_t>(e.v)];
      TupleRef u_ref = graphs[g].vertices[static_cast<size_t>(e.u)].ref;
      TupleRef v_ref = graphs[g].vertices[static_cast<size_t>(e.v)].ref;
      // message v -> u: the sender holds the key iff the edge's fk side is v
      incoming[static_cast<size_t>(u)].push_back(
          {v_ref, e.relation, static_cast<uint8_t>(!e.along_fk), v});
      incoming[static_cast<size_t>(v)].push_back(
          {u_ref, e.relation, static_cast<uint8_t>(e.along_fk), u});
    }
  }
  plan.recv_offsets.push_back(0);
  for (std::vector<Incoming>& list : incoming) {
    std::sort(list.begin(), list.end(), [](const Incoming& a, const Incoming& b) {
      return std::tie(a.sender_ref, a.relation, a.holds_fk) <
             std::tie(b.sender_ref, b.relation, b.holds_fk);
    });
    for (const Incoming& m : list) {
      plan.senders.push_back(m.sender_slot);
      plan.relations.push_back(m.relation);
      plan.sender_holds_fk.push_back(m.holds_fk);
    }
    plan.recv_offsets.push_back(static_cast<int64_t>(plan.senders.size()));
  }
  return plan;
}

GnnBaseline::GnnBaseline(const Schema& schema, const FeatureStats& stats,
                         const GnnConfig& config, uint64_t seed)
    : config_(config) {
  if (config_.rounds < 1) throw std::invalid_argument("baseline: rounds must be at least 1");
  if (config_.hidden_width < 1 || config_.encoder_layers < 1 || config_.head_layers < 1)
    throw std::invalid_argument("baseline: width and layer counts must be positive");
  n_relations_ = static_cast<int>(schema.relations.size());
  tables_ = detail::table_layouts(schema, stats);

  int64_t h = config_.hidden_width;
  detail::create_encoder_params(params_, tables_, config_.hidden_width, config_.encoder_layers);
  params_.create("rel.E", 2 * n_relations_, kRelEmbedDim);
  params_.create("msg.proj.W", h, h + kRelEmbedDim);
  params_.create("msg.proj.b", 1, h);
  params_.create("upd.self.W", h, h);
  params_.create("upd.self.b", 1, h);
  for (int k = 0; k < config_.head_layers; ++k) {
    int64_t out = k + 1 == config_.head_layers ? 1 : h;
    params_.create("head.l" + std::to_string(k) + ".W", out, h);
    params_.create("head.l" + std::to_string(k) + ".b", 1, out);
  }
  detail::init_params(params_, seed);
}

Tape::Id GnnBaseline::forward(Tape& tape, const BaselinePlan& plan,
                              const std::vector<FeatureVector>& vertex_features,
                              MessageCounter* counter) {
  if (vertex_features.size() != plan.vertices.size())
    throw ShapeMismatch("baseline forward: features for " +
                        std::to_string(vertex_features.size()) + " vertices, plan has " +
                        std::to_string(plan.vertices.size()));

  std::vector<int32_t> table_of(plan.vertices.size());
  std::vector<const FeatureVector*> features(plan.vertices.size());
  std::vector<std::pair<int32_t, int64_t>> pos(plan.vertices.size());
  for (size_t s = 0; s < plan.vertices.size(); ++s) {
    table_of[s] = plan.vertices[s].table;
    features[s] = &vertex_features[s];
  }
  std::vector<Tape::Id> sources = detail::encode_tables(
      tape, params_, tables_, config_.encoder_layers, table_of, features, pos);
  Tape::Id h = tape.gather_multi(sources, pos);

  Tape::Id rel_embed = tape.leaf(params_.at("rel.E"));
  Tape::Id proj_w = tape.leaf(params_.at("msg.proj.W"));
  Tape::Id proj_b = tape.leaf(params_.at("msg.proj.b"));
  Tape::Id self_w = tape.leaf(params_.at("upd.self.W"));
  Tape::Id self_b = tape.leaf(params_.at("upd.self.b"));

  std::vector<int64_t> types;
  types.reserve(plan.senders.size());
  for (size_t m = 0; m < plan.senders.size(); ++m)
    types.push_back(2 * plan.relations[m] + (plan.sender_holds_fk[m] != 0 ? 0 : 1));

  for (int round = 0; round < config_.rounds; ++round) {
    Tape::Id sent = tape.gather_rows(h, std::vector<int64_t>(plan.senders));
    Tape::Id rels = tape.gather_rows(rel_embed, std::vector<int64_t>(types));
    Tape::Id messages = tape.linear(tape.concat_cols(sent, rels), proj_w, proj_b);
    Tape::Id incoming = tape.segment_aggregate(messages, plan.recv_offsets, Agg::Mean);
    h = tape.relu(tape.add(tape.linear(h, self_w, self_b), incoming));
    if (counter != nullptr) {
      counter->messages += static_cast<int64_t>(plan.senders.size());
      counter->state_updates += static_cast<int64_t>(plan.vertices.size());
    }
  }

  Tape::Id pooled = tape.segment_aggregate(h, plan.graph_offsets, Agg::Mean);
  return apply_mlp(tape, detail::mlp_leaves(tape, params_, "head", config_.head_layers), pooled);
}

}  // namespace spare
