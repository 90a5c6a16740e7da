#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "spare/checkpoint.hpp"
#include "spare/config.hpp"
#include "spare/store.hpp"
#include "spare/synthetic.hpp"
#include "spare/train.hpp"

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

spare::TrainConfig config_or_default(const std::string& path) {
  return path.empty() ? spare::TrainConfig{} : spare::load_train_config(path);
}

int run(int argc, char** argv) {
  CLI::App app{"Single-pass relational models over relational databases"};
  app.require_subcommand(1);

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Load a schema and its CSVs, report row counts");
  std::string schema_path, data_dir;
  bool lenient = false;
  ingest_cmd->add_option("--schema", schema_path, "Schema JSON file")->required();
  ingest_cmd->add_option("--data", data_dir, "Directory holding the CSV files")->required();
  ingest_cmd->add_flag("--lenient", lenient, "Turn dangling foreign keys into missing links");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  spare::SyntheticSpec spec;
  uint64_t synth_seed = 1;
  std::string out_dir;
  synth_cmd->add_option("--family", spec.family,
                        "relational-signal | sum-regression | skewed")->required();
  synth_cmd->add_option("--seed", synth_seed, "Generator seed");
  synth_cmd->add_option("--out", out_dir, "Output directory")->required();
  synth_cmd->add_option("--parents", spec.parents, "Parent table rows");
  synth_cmd->add_option("--targets", spec.targets, "Target table rows");
  synth_cmd->add_option("--flip", spec.flip_p, "Label flip probability (relational-signal)");
  synth_cmd->add_option("--noise", spec.noise, "Noise deviation (sum-regression)");
  synth_cmd->add_option("--zipf", spec.zipf_s, "Popularity exponent (skewed)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  std::string config_path, ckpt_path, report_path;
  train_cmd->add_option("--config", config_path, "Config JSON (defaults apply when omitted)");
  train_cmd->add_option("--data", data_dir, "Dataset directory with schema.json")->required();
  train_cmd->add_option("--out", ckpt_path, "Checkpoint file to write")->required();
  train_cmd->add_option("--report", report_path, "Also write the metrics report here");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on one split");
  std::string split = "test";
  eval_cmd->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  eval_cmd->add_option("--data", data_dir, "Dataset directory with schema.json")->required();
  eval_cmd->add_option("--split", split, "train | val | test")->required();

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Compare single-pass and T-round message counts/times");
  bench_cmd->add_option("--config", config_path, "Config JSON (defaults apply when omitted)");
  bench_cmd->add_option("--data", data_dir, "Dataset directory with schema.json")->required();

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Occurrence histogram and reduction ratios");
  stats_cmd->add_option("--config", config_path, "Config JSON (defaults apply when omitted)");
  stats_cmd->add_option("--data", data_dir, "Dataset directory with schema.json")->required();

  CLI11_PARSE(app, argc, argv);

  if (ingest_cmd->parsed()) {
    spare::Schema schema = spare::load_schema(schema_path);
    spare::Store store = spare::ingest(schema, data_dir, !lenient);
    for (size_t t = 0; t < schema.tables.size(); ++t)
      std::cout << schema.tables[t].name << ": " << store.row_count(static_cast<int>(t))
                << " rows\n";
    std::cout << "relations: " << schema.relations.size() << "\nok\n";
  } else if (synth_cmd->parsed()) {
    spare::gen_synthetic(spec, synth_seed, out_dir);
    std::cout << "wrote " << spec.family << " dataset to " << out_dir << "\n";
  } else if (train_cmd->parsed()) {
    spare::TrainResult result = spare::train(config_or_default(config_path), data_dir);
    spare::save_checkpoint(result.checkpoint, ckpt_path);
    if (!report_path.empty())
      write_text(report_path, spare::serialize_report(result.report, /*include_timing=*/false));
    std::cout << spare::serialize_report(result.report, /*include_timing=*/true);
  } else if (eval_cmd->parsed()) {
    spare::Checkpoint ckpt = spare::load_checkpoint(ckpt_path);
    spare::MetricsReport report = spare::evaluate(ckpt, data_dir, split);
    std::cout << spare::serialize_report(report, /*include_timing=*/false);
  } else if (bench_cmd->parsed()) {
    std::cout << spare::format_bench(spare::bench_run(config_or_default(config_path), data_dir));
  } else if (stats_cmd->parsed()) {
    std::cout << spare::stats_report(config_or_default(config_path), data_dir);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
