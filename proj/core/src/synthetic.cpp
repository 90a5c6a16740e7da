#include "spare/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "spare/csv.hpp"
#include "spare/rng.hpp"

namespace spare {

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

namespace {

using nlohmann::ordered_json;

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

ordered_json table_json(const std::string& name, const std::string& file,
                        std::vector<std::pair<std::string, std::string>> columns) {
  ordered_json cols = ordered_json::array();
  for (auto& [col, type] : columns) cols.push_back({{"name", col}, {"type", type}});
  return {{"name", name}, {"file", file}, {"primary_key", "id"}, {"columns", cols}};
}

ordered_json relation_json(const std::string& from_table, const std::string& from_column,
                           const std::string& to_table) {
  return {{"from_table", from_table},
          {"from_column", from_column},
          {"to_table", to_table},
          {"to_column", "id"}};
}

/// Draws parent indices from a fixed cumulative-weight table.
class WeightedPicker {
 public:
  explicit WeightedPicker(std::vector<double> weights) : cumulative_(std::move(weights)) {
    for (size_t i = 1; i < cumulative_.size(); ++i) cumulative_[i] += cumulative_[i - 1];
  }
  int64_t pick(Rng& rng) const {
    double u = rng.uniform() * cumulative_.back();
    auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return static_cast<int64_t>(it - cumulative_.begin());
  }

 private:
  std::vector<double> cumulative_;
};

void gen_classification(const SyntheticSpec& spec, Rng& rng,
                        const std::filesystem::path& dir) {
  ordered_json schema = {
      {"tables",
       ordered_json::array({table_json("parents", "parents.csv", {{"attr", "numeric"}}),
                            table_json("children", "children.csv",
                                       {{"f1", "numeric"},
                                        {"f2", "numeric"},
                                        {"label", "numeric"}})})},
      {"relations", ordered_json::array({relation_json("children", "parent", "parents")})},
      {"target", {{"table", "children"}, {"column", "label"}, {"task", "binary_classification"}}}};
  write_text(dir / "schema.json", schema.dump(2) + "\n");

  std::vector<int> attr(static_cast<size_t>(spec.parents));
  CsvTable parents;
  parents.header = {"id", "attr"};
  for (int64_t i = 0; i < spec.parents; ++i) {
    attr[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_index(2));
    parents.rows.push_back(
        {"p" + std::to_string(i), format_double(attr[static_cast<size_t>(i)])});
  }
  write_csv((dir / "parents.csv").string(), parents);

  CsvTable children;
  children.header = {"id", "parent", "f1", "f2", "label"};
  for (int64_t j = 0; j < spec.targets; ++j) {
    int64_t p = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(spec.parents)));
    double f1 = rng.normal();
    double f2 = rng.normal();
    int label = attr[static_cast<size_t>(p)];
    if (rng.uniform() < spec.flip_p) label = 1 - label;
    children.rows.push_back({"c" + std::to_string(j), "p" + std::to_string(p),
                             format_double(f1), format_double(f2),
                             format_double(label)});
  }
  write_csv((dir / "children.csv").string(), children);
}

void gen_regression(const SyntheticSpec& spec, Rng& rng, const std::filesystem::path& dir,
                    bool zipf) {
  ordered_json schema = {
      {"tables",
       ordered_json::array({table_json("parents", "parents.csv", {{"a", "numeric"}}),
                            table_json("children", "children.csv",
                                       {{"f1", "numeric"}, {"target", "numeric"}})})},
      {"relations",
       ordered_json::array({relation_json("children", "p1", "parents"),
                            relation_json("children", "p2", "parents")})},
      {"target", {{"table", "children"}, {"column", "target"}, {"task", "regression"}}}};
  write_text(dir / "schema.json", schema.dump(2) + "\n");

  std::vector<double> a(static_cast<size_t>(spec.parents));
  CsvTable parents;
  parents.header = {"id", "a"};
  for (int64_t i = 0; i < spec.parents; ++i) {
    a[static_cast<size_t>(i)] = rng.normal();
    parents.rows.push_back({"p" + std::to_string(i), format_double(a[static_cast<size_t>(i)])});
  }
  write_csv((dir / "parents.csv").string(), parents);

  std::vector<double> weights(static_cast<size_t>(spec.parents), 1.0);
  if (zipf)
    for (int64_t i = 0; i < spec.parents; ++i)
      weights[static_cast<size_t>(i)] = std::pow(static_cast<double>(i + 1), -spec.zipf_s);
  WeightedPicker picker(std::move(weights));

  CsvTable children;
  children.header = {"id", "p1", "p2", "f1", "target"};
  for (int64_t j = 0; j < spec.targets; ++j) {
    int64_t p1 = picker.pick(rng);
    int64_t p2 = picker.pick(rng);
    double f1 = rng.normal();
    double target = 1.0 * a[static_cast<size_t>(p1)] - 0.7 * a[static_cast<size_t>(p2)] +
                    spec.noise * rng.normal();
    children.rows.push_back({"c" + std::to_string(j), "p" + std::to_string(p1),
                             "p" + std::to_string(p2), format_double(f1),
                             format_double(target)});
  }
  write_csv((dir / "children.csv").string(), children);
}

}  // namespace

void gen_synthetic(const SyntheticSpec& spec, uint64_t seed, const std::string& out_dir) {
  if (spec.parents < 1 || spec.targets < 1)
    throw std::invalid_argument("synthetic: sizes must be at least 1");
  if (spec.flip_p < 0.0 || spec.flip_p > 1.0)
    throw std::invalid_argument("synthetic: flip_p must lie in [0, 1]");
  std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  Rng rng(seed);
  if (spec.family == "relational-signal") {
    gen_classification(spec, rng, dir);
  } else if (spec.family == "sum-regression") {
    gen_regression(spec, rng, dir, false);
  } else if (spec.family == "skewed") {
    gen_regression(spec, rng, dir, true);
  } else {
    throw std::invalid_argument("synthetic: unknown family '" + spec.family + "'");
  }
}

}  // namespace spare
