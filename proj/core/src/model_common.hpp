// Internals shared by the SPARE model and the GNN baseline: table feature
// layouts, per-table encoder parameter creation and application, and the
// seeded init convention. Defined in model.cpp.
#pragma once

#include <string>
#include <vector>

#include "spare/model.hpp"
#include "spare/store.hpp"
#include "spare/tensor.hpp"

namespace spare::detail {

std::vector<TableLayout> table_layouts(const Schema& schema, const FeatureStats& stats);

int encoder_input_dim(const TableLayout& layout);

/// Creates `enc.<table>.cat.<col>.E` plus `enc.<table>.l<k>.W/b` for every
/// table, in schema order.
void create_encoder_params(ParameterSet& params, const std::vector<TableLayout>& layouts,
                           int hidden, int encoder_layers);

/// Seeds a ParameterSet by name suffix: ".W" He-normal over fan-in, ".b"
/// zero, ".E" normal with deviation 1/sqrt(cols); one stream, creation
/// order, so identical architectures initialize identically.
void init_params(ParameterSet& params, uint64_t seed);

std::vector<MlpLayer> mlp_leaves(Tape& tape, ParameterSet& params, const std::string& prefix,
                                 int layers);

/// Runs each table's encoder over the slots assigned to it. table_of[s] < 0
/// skips slot s (its position must be filled by the caller). Returns one
/// tape id per table and writes (source, row) coordinates into pos.
std::vector<Tape::Id> encode_tables(Tape& tape, ParameterSet& params,
                                    const std::vector<TableLayout>& layouts, int encoder_layers,
                                    const std::vector<int32_t>& table_of,
                                    const std::vector<const FeatureVector*>& features,
                                    std::vector<std::pair<int32_t, int64_t>>& pos);

}  // namespace spare::detail
