#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ltraj/commands.hpp"
#include "ltraj/error.hpp"

namespace {

struct Flags {
  std::string config_file;
  std::optional<std::string> manifest, calibration, output, format, auc_table, out_dir;
  std::optional<std::uint32_t> segment_size;
  std::optional<std::uint64_t> checkpoint_stride, checkpoint_tokens, max_tokens, seed;
  std::optional<std::size_t> k, workers, control_shuffles;
  std::vector<std::string> metrics;
  bool partial = false, quartiles = false;
  // synth
  std::optional<std::size_t> problems, samples, layers, hidden_dim, pilot_samples;
  std::optional<std::uint64_t> mean_tokens, min_tokens;
  std::optional<std::size_t> synth_segment;
  std::optional<double> target_auc, base_accuracy;
  std::optional<std::string> model_id;
};

template <typename T>
void take(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

ltraj::RunConfig build_config(const std::string& command, const Flags& f) {
  ltraj::RunConfig c;
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    if (!in) throw ltraj::Error(ltraj::ErrorCode::io, "cannot open " + f.config_file);
    std::stringstream ss;
    ss << in.rdbuf();
    c.merge_json(ss.str());
  }
  c.command = command;
  if (f.manifest) c.manifest = *f.manifest;
  if (f.calibration) c.calibration = *f.calibration;
  if (f.output) c.output = *f.output;
  if (f.auc_table) c.auc_table = *f.auc_table;
  if (f.out_dir) c.out_dir = *f.out_dir;
  if (f.format) {
    const auto fmt = ltraj::parse_output_format(*f.format);
    if (!fmt) throw ltraj::Error(ltraj::ErrorCode::config, "unknown format " + *f.format);
    c.format = *fmt;
  }
  take(f.segment_size, c.segment_size);
  take(f.checkpoint_stride, c.checkpoint_stride);
  take(f.checkpoint_tokens, c.checkpoint_tokens);
  take(f.max_tokens, c.max_tokens);
  take(f.seed, c.seed);
  take(f.k, c.k);
  take(f.workers, c.workers);
  take(f.control_shuffles, c.control_shuffles);
  if (!f.metrics.empty()) {
    c.metrics.clear();
    for (const auto& name : f.metrics) {
      const auto m = ltraj::parse_metric(name);
      if (!m) throw ltraj::Error(ltraj::ErrorCode::config, "unknown metric " + name);
      c.metrics.push_back(*m);
    }
  }
  c.partial = c.partial || f.partial;
  c.quartiles = c.quartiles || f.quartiles;

  take(f.problems, c.synth.problems);
  take(f.samples, c.synth.samples_per_problem);
  take(f.layers, c.synth.layers);
  take(f.hidden_dim, c.synth.hidden_dim);
  take(f.pilot_samples, c.synth.pilot_samples);
  take(f.mean_tokens, c.synth.mean_tokens);
  take(f.min_tokens, c.synth.min_tokens);
  take(f.synth_segment, c.synth.segment_size);
  take(f.target_auc, c.synth.target_auc);
  take(f.base_accuracy, c.synth.base_accuracy);
  take(f.model_id, c.synth.model_id);
  if (command == "synth") {
    take(f.seed, c.synth.seed);
    take(f.max_tokens, c.synth.max_tokens);
  }
  return c;
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_file, "JSON config file; flags override it");
  cmd->add_option("-o,--output", f.output, "Output file (default stdout)");
  cmd->add_option("--format", f.format, "json-lines or csv");
  cmd->add_option("--workers", f.workers, "Worker threads (default LTRAJ_WORKERS or all cores)");
}

void add_data(CLI::App* cmd, Flags& f) {
  cmd->add_option("-m,--manifest", f.manifest, "Manifest (JSON lines)");
  cmd->add_option("--segment-size", f.segment_size, "Tokens per segment (500)");
  cmd->add_option("--metrics", f.metrics, "Metrics to include (default all)")->delimiter(',');
  cmd->add_option("-k", f.k, "Samples per problem (5)");
  cmd->add_option("--seed", f.seed, "Run seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-trajectory correctness signals for sampled reasoning traces"};
  app.require_subcommand(1);
  Flags f;

  auto* signals = app.add_subcommand("signals", "Per-sample signal values");
  add_common(signals, f);
  add_data(signals, f);
  signals->add_flag("--partial", f.partial, "Also emit Net/Cumulative at every checkpoint stride");
  signals->add_option("--checkpoint-stride", f.checkpoint_stride, "Tokens between partial checkpoints (500)");

  auto* evaluate = app.add_subcommand("evaluate", "AUC and Spearman per metric with aggregate rows");
  add_common(evaluate, f);
  add_data(evaluate, f);
  evaluate->add_flag("--quartiles", f.quartiles, "Emit per-class five-number summaries");
  evaluate->add_option("--auc-table", f.auc_table, "Aggregate a precomputed AUC/correlation table instead");

  auto* calibrate = app.add_subcommand("calibrate", "Fit threshold rules and combined weights");
  add_common(calibrate, f);
  add_data(calibrate, f);

  auto* simulate = app.add_subcommand("simulate", "Replay calibrated rules on held-out problems");
  add_common(simulate, f);
  add_data(simulate, f);
  simulate->add_option("-c,--calibration", f.calibration, "Calibration artifact")->required();

  auto* early = app.add_subcommand("early-path", "Early path selection with a random forest");
  add_common(early, f);
  add_data(early, f);
  early->add_option("-c,--calibration", f.calibration, "Calibration artifact (for the fold plan)");
  early->add_option("--checkpoint-tokens", f.checkpoint_tokens, "Checkpoint (2000)");
  early->add_option("--control-shuffles", f.control_shuffles, "Label shuffles in the permutation control (100)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
  add_common(synth, f);
  synth->add_option("--out-dir", f.out_dir, "Destination directory")->required();
  synth->add_option("--seed", f.seed, "Generator seed");
  synth->add_option("--problems", f.problems, "Problems (100)");
  synth->add_option("--samples", f.samples, "Samples per problem (5)");
  synth->add_option("--layers", f.layers, "Layers (4)");
  synth->add_option("--hidden-dim", f.hidden_dim, "Hidden size (16)");
  synth->add_option("--mean-tokens", f.mean_tokens, "Mean reasoning length (10000)");
  synth->add_option("--min-tokens", f.min_tokens, "Shortest reasoning length (1000)");
  synth->add_option("--max-tokens", f.max_tokens, "Longest reasoning length (31768)");
  synth->add_option("--segment-size", f.synth_segment, "Stored segment size, 0 for token-level (500)");
  synth->add_option("--target-auc", f.target_auc, "Net Change AUC to hit (0.75)");
  synth->add_option("--base-accuracy", f.base_accuracy, "Share of correct samples (0.55)");
  synth->add_option("--pilot-samples", f.pilot_samples, "Samples in the AUC pilot (4000)");
  synth->add_option("--model-id", f.model_id, "model_id written to the manifest");

  auto* validate = app.add_subcommand("validate", "Check a dataset before policy runs");
  add_common(validate, f);
  add_data(validate, f);
  validate->add_option("--max-tokens", f.max_tokens, "Longest allowed reasoning (31768)");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto* sub = app.get_subcommands().front();
    const auto config = build_config(sub->get_name(), f);
    const auto result = ltraj::run_command(config);
    for (const auto& line : result.log) std::cerr << line << '\n';
    const auto text = result.render(config.format);
    if (config.output.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(config.output, std::ios::binary);
      if (!out) throw ltraj::Error(ltraj::ErrorCode::io, "cannot write " + config.output.string());
      out << text;
    }
    if (result.error_rows > 0) std::cerr << result.error_rows << " error rows\n";
    return result.exit_code();
  } catch (const ltraj::Error& e) {
    std::cerr << "ltraj: " << e.what() << '\n';
    return 2;
  }
}
