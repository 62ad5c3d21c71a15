#include "ltraj/commands.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ltraj/error.hpp"
#include "ltraj/parallel.hpp"
#include "ltraj/path_classifier.hpp"
#include "ltraj/stats.hpp"

namespace ltraj {

namespace {

using json = nlohmann::json;

// Streams of the run seed used by early path selection.
constexpr std::uint64_t kForestStream = 0xf0e5;
constexpr std::uint64_t kShuffleStream = 0x5bf1;
constexpr std::uint64_t kControlForestStream = 0xc0f0;

constexpr std::array kQuantiles = {0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50,
                                   0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Dataset load_input(const RunConfig& config) {
  if (config.manifest.empty()) throw Error(ErrorCode::config, config.command + " needs a manifest");
  return load_manifest(config.manifest);
}

SignalOptions signal_options(const RunConfig& config, std::uint32_t segment_size) {
  SignalOptions o;
  o.segmentation.segment_size = segment_size;
  o.workers = config.workers;
  return o;
}

std::vector<Metric> ordered_metrics(const std::vector<Metric>& metrics) {
  std::vector<Metric> out = metrics;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool is_output_metric(Metric m) {
  return std::find(kOutputMetrics.begin(), kOutputMetrics.end(), m) != kOutputMetrics.end();
}

std::string pct(double fraction) { return format_double(100.0 * fraction); }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Cell mean_cell(const std::vector<double>& v) {
  if (v.empty()) return std::monostate{};
  return mean_of(v);
}

std::vector<Candidate> first_k(std::vector<Candidate> c, std::size_t k) {
  if (c.size() > k) c.resize(k);
  return c;
}

// Fold-averaged figures of one policy row.
struct PolicyStats {
  std::vector<double> accuracy, delta, samples, reduction, coverage, fallback, above, cutoff;

  void add(const std::vector<SelectionOutcome>& outcomes, double mv_accuracy) {
    const auto e = efficiency_metrics(outcomes);
    accuracy.push_back(e.accuracy_pct);
    delta.push_back(e.accuracy_pct - mv_accuracy);
    samples.push_back(e.mean_samples);
    reduction.push_back(e.token_reduction_pct);
    std::size_t accepted = 0, fell_back = 0, accepted_correct = 0;
    for (const auto& o : outcomes) {
      if (o.method == SelectionMethod::early_accept) {
        ++accepted;
        accepted_correct += o.correct.value_or(false) ? 1 : 0;
      } else if (o.method == SelectionMethod::majority_fallback) {
        ++fell_back;
      }
    }
    const double n = static_cast<double>(outcomes.size());
    coverage.push_back(100.0 * static_cast<double>(accepted) / n);
    fallback.push_back(100.0 * static_cast<double>(fell_back) / n);
    if (accepted > 0) above.push_back(100.0 * static_cast<double>(accepted_correct) / static_cast<double>(accepted));
  }
};

}  // namespace

// --- config ------------------------------------------------------------------

void RunConfig::merge_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::config, "config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "command") command = v.get<std::string>();
      else if (key == "manifest") manifest = v.get<std::string>();
      else if (key == "calibration") calibration = v.get<std::string>();
      else if (key == "output") output = v.get<std::string>();
      else if (key == "segment_size") segment_size = v.get<std::uint32_t>();
      else if (key == "checkpoint_stride") checkpoint_stride = v.get<std::uint64_t>();
      else if (key == "checkpoint_tokens") checkpoint_tokens = v.get<std::uint64_t>();
      else if (key == "k") k = v.get<std::size_t>();
      else if (key == "max_tokens") max_tokens = v.get<std::uint64_t>();
      else if (key == "seed") seed = v.get<std::uint64_t>();
      else if (key == "workers") workers = v.get<std::size_t>();
      else if (key == "partial") partial = v.get<bool>();
      else if (key == "quartiles") quartiles = v.get<bool>();
      else if (key == "auc_table") auc_table = v.get<std::string>();
      else if (key == "control_shuffles") control_shuffles = v.get<std::size_t>();
      else if (key == "out_dir") out_dir = v.get<std::string>();
      else if (key == "format") {
        const auto f = parse_output_format(v.get<std::string>());
        if (!f) throw Error(ErrorCode::config, "unknown format " + v.get<std::string>());
        format = *f;
      } else if (key == "metrics") {
        metrics.clear();
        for (const auto& name : v) {
          const auto m = parse_metric(name.get<std::string>());
          if (!m) throw Error(ErrorCode::config, "unknown metric " + name.get<std::string>());
          metrics.push_back(*m);
        }
      } else if (key == "synth") {
        for (const auto& [sk, sv] : v.items()) {
          if (sk == "problems") synth.problems = sv.get<std::size_t>();
          else if (sk == "samples_per_problem") synth.samples_per_problem = sv.get<std::size_t>();
          else if (sk == "layers") synth.layers = sv.get<std::size_t>();
          else if (sk == "hidden_dim") synth.hidden_dim = sv.get<std::size_t>();
          else if (sk == "mean_tokens") synth.mean_tokens = sv.get<std::uint64_t>();
          else if (sk == "min_tokens") synth.min_tokens = sv.get<std::uint64_t>();
          else if (sk == "max_tokens") synth.max_tokens = sv.get<std::uint64_t>();
          else if (sk == "segment_size") synth.segment_size = sv.get<std::size_t>();
          else if (sk == "target_auc") synth.target_auc = sv.get<double>();
          else if (sk == "base_accuracy") synth.base_accuracy = sv.get<double>();
          else if (sk == "seed") synth.seed = sv.get<std::uint64_t>();
          else if (sk == "model_id") synth.model_id = sv.get<std::string>();
          else if (sk == "pilot_samples") synth.pilot_samples = sv.get<std::size_t>();
          else throw Error(ErrorCode::config, "unknown synth key " + sk);
        }
      } else {
        throw Error(ErrorCode::config, "unknown config key " + key);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("bad config value: ") + e.what());
  }
}

void RunConfig::validate() const {
  if (segment_size == 0) throw Error(ErrorCode::config, "segment_size must be positive");
  if (checkpoint_stride == 0 || checkpoint_tokens == 0) {
    throw Error(ErrorCode::config, "checkpoint_stride and checkpoint_tokens must be positive");
  }
  if (k == 0) throw Error(ErrorCode::config, "k must be positive");
  if (metrics.empty()) throw Error(ErrorCode::config, "no metrics selected");
  for (const auto m : metrics) {
    if (m == Metric::combined) {
      throw Error(ErrorCode::config, "combined is derived from calibration and cannot be selected");
    }
  }
}

std::string CommandResult::render(OutputFormat format) const {
  if (document) return *document;
  return render_tables(tables, format);
}

// --- signals -----------------------------------------------------------------

CommandResult cmd_signals(const RunConfig& config) {
  config.validate();
  const auto data = load_input(config);
  const auto table = compute_signal_table(data, signal_options(config, config.segment_size));
  const auto metrics = ordered_metrics(config.metrics);

  CommandResult result;
  Table t{"signals", {"problem", "sample", "metric", "value", "segments", "checkpoint", "error"}, {}};
  for (const auto& p : table) {
    for (const auto& s : p.samples) {
      for (const auto m : metrics) {
        const Cell segments = is_output_metric(m) || s.segments == 0 ? Cell{} : Cell{std::uint64_t{s.segments}};
        if (const auto v = s.value(m)) {
          t.add_row({p.problem_id, s.sample_id, std::string(metric_name(m)), *v, segments, {}, {}});
        } else {
          const auto it = s.errors.find(m);
          t.add_row({p.problem_id, s.sample_id, std::string(metric_name(m)), {}, segments, {},
                     it != s.errors.end() ? it->second : std::string("no value")});
          ++result.error_rows;
        }
      }
    }
  }
  result.tables.push_back(std::move(t));

  if (config.partial) {
    std::vector<const SampleRecord*> records;
    for (const auto& g : data.problems()) {
      for (const auto& s : g.samples) records.push_back(&s);
    }
    struct Partial {
      std::vector<CheckpointSignals> points;
      std::string error;
    };
    std::vector<Partial> partials(records.size());
    SegmentationConfig seg;
    seg.segment_size = config.segment_size;
    parallel_for(records.size(), config.workers, [&](std::size_t i) {
      try {
        partials[i].points = partial_signals(read_trace(data.trace_location(*records[i])), config.checkpoint_stride, seg);
      } catch (const Error& e) {
        partials[i].error = e.what();
      }
    });
    Table pt{"partial_signals",
             {"problem", "sample", "checkpoint", "full_length", "metric", "value", "segments", "error"},
             {}};
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = *records[i];
      if (!partials[i].error.empty()) {
        pt.add_row({r.problem_id, r.sample_id, {}, {}, {}, {}, {}, partials[i].error});
        ++result.error_rows;
        continue;
      }
      for (const auto& cp : partials[i].points) {
        for (const auto& sc : cp.scores) {
          pt.add_row({r.problem_id, r.sample_id, cp.checkpoint_tokens, cp.full_length,
                      std::string(metric_name(sc.metric)), sc.value, std::uint64_t{sc.segments_used}, {}});
        }
      }
    }
    result.tables.push_back(std::move(pt));
  }
  return result;
}

// --- evaluate ----------------------------------------------------------------

std::vector<AucTableEntry> load_auc_table(const std::filesystem::path& source) {
  std::istringstream in(read_file(source));
  std::vector<AucTableEntry> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      const auto name = j.at("metric").get<std::string>();
      const auto m = parse_metric(name);
      if (!m) throw Error(ErrorCode::malformed_line, "unknown metric " + name);
      out.push_back({j.at("model").get<std::string>(), j.at("dataset").get<std::string>(), *m,
                     j.at("auc").get<double>(), j.at("corr").get<double>()});
    } catch (const json::exception& e) {
      throw Error(ErrorCode::malformed_line, source.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

namespace {

Table aggregate_table(const std::map<Metric, std::pair<std::vector<double>, std::vector<double>>>& columns,
                      const std::vector<Metric>& metrics) {
  Table t{"aggregate", {"metric", "count", "auc_mean", "auc_std", "spearman_mean", "spearman_std"}, {}};
  for (const auto m : metrics) {
    const auto it = columns.find(m);
    if (it == columns.end() || it->second.first.empty()) continue;
    const auto a = aggregate(it->second.first);
    Cell rho_mean, rho_std;
    if (!it->second.second.empty()) {
      const auto r = aggregate(it->second.second);
      rho_mean = r.mean;
      rho_std = r.population_std;
    }
    t.add_row({std::string(metric_name(m)), std::uint64_t{a.count}, a.mean, a.population_std, rho_mean, rho_std});
  }
  return t;
}

void add_summary(Table& t, const std::string& model, Metric m, const char* cls, const FiveNumberSummary& s) {
  t.add_row({model, std::string(metric_name(m)), std::string(cls), std::uint64_t{s.count}, s.min, s.q1, s.median,
             s.q3, s.max});
}

}  // namespace

CommandResult cmd_evaluate(const RunConfig& config) {
  config.validate();
  const auto metrics = ordered_metrics(config.metrics);
  CommandResult result;
  Table eval{"evaluation", {"model", "dataset", "metric", "orientation", "n", "auc", "spearman", "error"}, {}};
  std::map<Metric, std::pair<std::vector<double>, std::vector<double>>> columns;

  if (!config.auc_table.empty()) {
    for (const auto& e : load_auc_table(config.auc_table)) {
      if (std::find(metrics.begin(), metrics.end(), e.metric) == metrics.end()) continue;
      const auto o = orientation(e.metric) == Orientation::lower_is_better ? "lower_is_better" : "higher_is_better";
      eval.add_row({e.model, e.dataset, std::string(metric_name(e.metric)), std::string(o), {}, e.auc, e.corr, {}});
      columns[e.metric].first.push_back(e.auc);
      columns[e.metric].second.push_back(e.corr);
    }
    result.tables.push_back(std::move(eval));
    result.tables.push_back(aggregate_table(columns, metrics));
    return result;
  }

  const auto data = load_input(config);
  const auto table = compute_signal_table(data, signal_options(config, config.segment_size));
  const std::string dataset = std::filesystem::absolute(config.manifest).parent_path().filename().string();

  std::vector<std::string> models;
  for (const auto& p : table) {
    if (std::find(models.begin(), models.end(), p.model_id) == models.end()) models.push_back(p.model_id);
  }
  Table dist{"distribution", {"model", "metric", "class", "count", "min", "q1", "median", "q3", "max"}, {}};
  for (const auto& model : models) {
    for (const auto m : metrics) {
      LabeledScores data_m;
      data_m.orientation = orientation(m);
      for (const auto& p : table) {
        if (p.model_id != model) continue;
        for (const auto& s : p.samples) {
          if (!s.label) {
            throw Error(ErrorCode::missing_value, p.problem_id + "/" + s.sample_id + " has no label");
          }
          if (const auto v = s.value(m)) {
            data_m.scores.push_back(*v);
            data_m.labels.push_back(*s.label);
          }
        }
      }
      const auto o = data_m.orientation == Orientation::lower_is_better ? "lower_is_better" : "higher_is_better";
      const std::uint64_t n = data_m.scores.size();
      double auc;
      try {
        auc = roc_auc(data_m);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::single_class) throw;
        eval.add_row({model, dataset, std::string(metric_name(m)), std::string(o), n, {}, {}, std::string(e.what())});
        ++result.error_rows;
        continue;
      }
      std::vector<double> y(data_m.labels.begin(), data_m.labels.end());
      Cell rho;
      std::string err;
      try {
        rho = spearman(data_m.scores, y);
      } catch (const Error& e) {
        err = e.what();
        ++result.error_rows;
      }
      eval.add_row({model, dataset, std::string(metric_name(m)), std::string(o), n, auc, rho,
                    err.empty() ? Cell{} : Cell{err}});
      columns[m].first.push_back(auc);
      if (const auto* r = std::get_if<double>(&rho)) columns[m].second.push_back(*r);

      if (config.quartiles) {
        const auto g = group_distribution(data_m);
        add_summary(dist, model, m, "correct", g.correct);
        add_summary(dist, model, m, "incorrect", g.incorrect);
      }
    }
  }
  result.tables.push_back(std::move(eval));
  result.tables.push_back(aggregate_table(columns, metrics));
  if (config.quartiles) result.tables.push_back(std::move(dist));
  return result;
}

// --- calibrate ---------------------------------------------------------------

CommandResult cmd_calibrate(const RunConfig& config) {
  config.validate();
  const auto data = load_input(config);
  const auto table = compute_signal_table(data, signal_options(config, config.segment_size));
  CalibrationOptions options;
  options.seed = config.seed;
  options.k = config.k;
  options.segment_size = config.segment_size;
  options.metrics = ordered_metrics(config.metrics);
  const auto artifact = calibrate(table, options);

  CommandResult result;
  result.document = artifact.to_json();
  for (std::size_t f = 0; f < artifact.folds.size(); ++f) {
    const auto& fold = artifact.folds[f];
    std::string line = "fold " + std::to_string(f) + ": MV@" + std::to_string(config.k) + " " +
                       pct(fold.majority_vote_accuracy) + "%";
    for (const auto& r : fold.rules) {
      line += ", " + std::string(metric_name(r.metric)) + " ";
      line += r.cutoff ? pct(r.calibration_accuracy) + "%" + (r.fallback ? " (median fallback)" : "")
                       : "skipped (" + r.skipped + ")";
    }
    result.log.push_back(std::move(line));
  }
  return result;
}

// --- simulate ----------------------------------------------------------------

FoldSimulation simulate_fold(const SignalTable& table, const FoldCalibration& fold, std::size_t k,
                             const std::vector<Metric>& metrics) {
  const auto test = select_problems(table, fold.test_problems);
  FoldSimulation out;
  for (const auto& p : test) {
    const auto c = p.candidates(Metric::net_change);
    out.majority_vote.push_back(majority_vote_outcome(p.problem_id, c, k));
    out.shortest.push_back(shortest_answer(p.problem_id, c, k));
  }

  const auto run_rule = [&](const RuleCalibration& rc, const SignalTable& problems) {
    RuleSimulation rs{rc, {}, {}};
    const auto rule = rc.rule();
    if (!rule) return rs;
    try {
      for (const auto& p : problems) rs.outcomes.push_back(sequential_select(p.problem_id, p.candidates(rc.metric), *rule, k));
    } catch (const Error& e) {
      rs.outcomes.clear();
      rs.error = e.what();
    }
    return rs;
  };

  for (const auto m : metrics) {
    const auto* rc = fold.find(m);
    if (!rc) throw Error(ErrorCode::config, "calibration artifact has no rule for " + std::string(metric_name(m)));
    out.rules.push_back(run_rule(*rc, test));
  }
  if (const auto* rc = fold.find(Metric::combined)) {
    if (fold.combined.weights) {
      out.rules.push_back(run_rule(*rc, with_combined(test, *fold.combined.weights)));
    } else {
      out.rules.push_back(RuleSimulation{*rc, {}, {}});
    }
  }
  return out;
}

CommandResult cmd_simulate(const RunConfig& config) {
  config.validate();
  if (config.calibration.empty()) throw Error(ErrorCode::config, "simulate needs a calibration artifact");
  const auto artifact = CalibrationArtifact::from_json(read_file(config.calibration));
  if (artifact.folds.empty()) throw Error(ErrorCode::config, "calibration artifact has no folds");
  const auto data = load_input(config);
  const auto table =
      compute_signal_table(data, signal_options(config, static_cast<std::uint32_t>(artifact.segment_size)));
  std::set<std::string> present;
  for (const auto& p : table) present.insert(p.problem_id);
  const auto metrics = ordered_metrics(config.metrics);
  const std::size_t k = artifact.k;

  CommandResult result;
  PolicyStats mv, shortest;
  std::map<std::size_t, PolicyStats> lt;
  std::vector<RuleCalibration> rule_order;
  std::map<std::size_t, std::string> notes;

  struct CurveAcc {
    std::vector<double> threshold, sample_accuracy, share, policy_accuracy;
  };
  std::map<std::pair<Metric, std::size_t>, CurveAcc> curve;

  for (std::size_t f = 0; f < artifact.folds.size(); ++f) {
    const auto& fold = artifact.folds[f];
    for (const auto& id : fold.test_problems) {
      if (!present.count(id)) {
        throw Error(ErrorCode::config, "fold " + std::to_string(f) + " test problem " + id + " is not in the manifest");
      }
    }
    const auto sim = simulate_fold(table, fold, k, metrics);
    if (sim.majority_vote.empty()) throw Error(ErrorCode::config, "fold " + std::to_string(f) + " has no test problems");
    const double mv_acc = efficiency_metrics(sim.majority_vote).accuracy_pct;
    mv.add(sim.majority_vote, mv_acc);
    shortest.add(sim.shortest, mv_acc);
    for (std::size_t r = 0; r < sim.rules.size(); ++r) {
      const auto& rs = sim.rules[r];
      if (f == 0) rule_order.push_back(rs.calibration);
      if (r >= rule_order.size() || rule_order[r].metric != rs.calibration.metric) {
        throw Error(ErrorCode::config, "folds calibrate different rule sets");
      }
      if (!rs.error.empty()) {
        notes[r] = rs.error;
        continue;
      }
      if (rs.outcomes.empty()) {
        if (notes[r].empty()) notes[r] = "skipped: " + rs.calibration.skipped;
        continue;
      }
      lt[r].add(rs.outcomes, mv_acc);
      lt[r].cutoff.push_back(*rs.calibration.cutoff);
    }

    // quantile curve over calibration-set thresholds
    const auto cal = select_problems(table, fold.calibration_problems);
    const auto test = select_problems(table, fold.test_problems);
    for (const auto m : metrics) {
      std::vector<double> cal_values;
      bool complete = true;
      for (const auto& p : cal) {
        for (const auto& c : first_k(p.candidates(m), k)) {
          if (c.score) cal_values.push_back(*c.score);
        }
      }
      for (const auto& p : test) {
        for (const auto& c : first_k(p.candidates(m), k)) complete = complete && c.score.has_value();
      }
      if (cal_values.empty() || !complete) continue;
      const auto dir = default_direction(m);
      for (std::size_t qi = 0; qi < kQuantiles.size(); ++qi) {
        const double q = kQuantiles[qi];
        const double cut = percentile(cal_values, 100.0 * (dir == Direction::accept_if_geq ? q : 1.0 - q));
        const ThresholdRule rule{m, dir, cut};
        std::size_t accepted = 0, accepted_correct = 0, total = 0, policy_correct = 0;
        for (const auto& p : test) {
          const auto c = first_k(p.candidates(m), k);
          for (const auto& s : c) {
            ++total;
            if (rule.accepts(*s.score)) {
              ++accepted;
              accepted_correct += s.label.value_or(false) ? 1 : 0;
            }
          }
          policy_correct += sequential_select(p.problem_id, c, rule, k).correct.value_or(false) ? 1 : 0;
        }
        auto& acc = curve[{m, qi}];
        acc.threshold.push_back(cut);
        if (accepted > 0) {
          acc.sample_accuracy.push_back(100.0 * static_cast<double>(accepted_correct) / static_cast<double>(accepted));
        }
        acc.share.push_back(100.0 * static_cast<double>(accepted) / static_cast<double>(total));
        acc.policy_accuracy.push_back(100.0 * static_cast<double>(policy_correct) / static_cast<double>(test.size()));
      }
    }
  }

  Table t{"simulate",
          {"method", "metric", "cutoff", "accuracy_pct", "delta_accuracy_pct", "mean_samples", "token_reduction_pct",
           "coverage_pct", "fallback_pct", "above_threshold_accuracy_pct", "folds", "note"},
          {}};
  const std::string kk = std::to_string(k);
  const auto row = [&](const std::string& method, Cell metric, const PolicyStats& s, bool rule, Cell note) {
    t.add_row({method, std::move(metric), rule ? mean_cell(s.cutoff) : Cell{}, mean_cell(s.accuracy),
               mean_cell(s.delta), mean_cell(s.samples), mean_cell(s.reduction),
               rule ? mean_cell(s.coverage) : Cell{}, rule ? mean_cell(s.fallback) : Cell{},
               rule ? mean_cell(s.above) : Cell{}, std::uint64_t{s.accuracy.size()}, std::move(note)});
  };
  row("MV@" + kk, Cell{}, mv, false, Cell{});
  row("Shortest@" + kk, Cell{}, shortest, false, Cell{});
  for (std::size_t r = 0; r < rule_order.size(); ++r) {
    const auto it = notes.find(r);
    const bool failed = it != notes.end() && !it->second.empty() && it->second.rfind("skipped", 0) != 0;
    if (failed) ++result.error_rows;
    const auto s = lt.count(r) ? lt.at(r) : PolicyStats{};
    row("LT", std::string(metric_name(rule_order[r].metric)), s, true,
        it != notes.end() && !it->second.empty() ? Cell{it->second} : Cell{});
  }
  result.tables.push_back(std::move(t));

  Table c{"quantile_curve",
          {"metric", "quantile", "threshold", "sample_accuracy_pct", "accepted_share_pct", "policy_accuracy_pct"},
          {}};
  for (const auto& [key, acc] : curve) {
    c.add_row({std::string(metric_name(key.first)), kQuantiles[key.second], mean_cell(acc.threshold),
               mean_cell(acc.sample_accuracy), mean_cell(acc.share), mean_cell(acc.policy_accuracy)});
  }
  result.tables.push_back(std::move(c));
  return result;
}

// --- early path ----------------------------------------------------------------

CommandResult cmd_early_path(const RunConfig& config) {
  config.validate();
  const auto data = load_input(config);
  const std::uint64_t checkpoint = config.checkpoint_tokens;
  for (const auto& g : data.problems()) {
    for (const auto& s : g.samples) {
      TraceHeader h;
      try {
        h = read_trace_header(data.trace_location(s));
      } catch (const Error&) {
        continue;  // surfaces below as a missing feature
      }
      if (h.kind == StorageKind::segments && h.segment_size && checkpoint % *h.segment_size != 0) {
        throw Error(ErrorCode::config, g.problem_id + "/" + s.sample_id + " is stored in segments of " +
                                           std::to_string(*h.segment_size) + " tokens, which does not divide " +
                                           "the checkpoint " + std::to_string(checkpoint));
      }
    }
  }

  std::uint32_t segment_size = config.segment_size;
  std::size_t k = config.k;
  FoldPlan plan;
  if (!config.calibration.empty()) {
    const auto artifact = CalibrationArtifact::from_json(read_file(config.calibration));
    segment_size = static_cast<std::uint32_t>(artifact.segment_size);
    k = artifact.k;
    plan.seed = artifact.seed;
    for (const auto& f : artifact.folds) plan.folds.push_back({f.calibration_problems, f.test_problems});
  }
  auto options = signal_options(config, segment_size);
  options.checkpoint_tokens = checkpoint;
  const auto table = compute_signal_table(data, options);
  if (config.calibration.empty()) plan = make_folds(table, config.seed);

  const auto paths_of = [&](const ProblemSignals& p) {
    std::vector<PathCandidate> paths;
    for (std::size_t i = 0; i < p.samples.size() && i < k; ++i) {
      const auto& s = p.samples[i];
      PathCandidate c{s.answer, s.label, s.tokens, s.checkpoint_features, std::nullopt};
      if (s.value(Metric::net_change) && s.value(Metric::cumulative_change)) c.full_features = s.full_features();
      paths.push_back(std::move(c));
    }
    return paths;
  };

  PolicyStats ep, mv, control;
  std::vector<double> random_acc, random_saved, oob;
  std::size_t short_fallbacks = 0;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const auto cal = select_problems(table, plan.folds[f].calibration);
    const auto test = select_problems(table, plan.folds[f].test);
    if (test.empty()) throw Error(ErrorCode::config, "fold " + std::to_string(f) + " has no test problems");

    std::vector<PathFeatures> x;
    std::vector<bool> y;
    for (const auto& p : cal) {
      for (const auto& c : paths_of(p)) {
        if (!c.label) throw Error(ErrorCode::missing_value, p.problem_id + " has an unlabeled sample");
        const auto& feat = c.total_tokens > checkpoint ? c.checkpoint_features : c.full_features;
        if (!feat) continue;
        x.push_back(*feat);
        y.push_back(*c.label);
      }
    }
    ForestConfig fc;
    fc.seed = derive_seed(derive_seed(config.seed, kForestStream), f);
    const auto classifier = PathClassifier::train(x, y, fc);
    if (classifier.oob_accuracy()) oob.push_back(100.0 * *classifier.oob_accuracy());

    // permutation control: each shuffle trains and replays independently
    std::vector<EfficiencyMetrics> control_runs(config.control_shuffles);
    parallel_for(config.control_shuffles, config.workers, [&](std::size_t r) {
      auto shuffled = y;
      Rng rng(derive_seed(derive_seed(derive_seed(config.seed, kShuffleStream), f), r));
      rng.shuffle(shuffled);
      ForestConfig cc = fc;
      cc.seed = derive_seed(derive_seed(derive_seed(config.seed, kControlForestStream), f), r);
      const auto control_classifier = PathClassifier::train(x, shuffled, cc);
      std::vector<SelectionOutcome> picks;
      for (const auto& p : test) picks.push_back(early_path_select(p.problem_id, paths_of(p), control_classifier, checkpoint));
      control_runs[r] = efficiency_metrics(picks);
    });

    std::vector<SelectionOutcome> ep_out, mv_out;
    double rand_correct = 0.0, rand_tokens = 0.0, budget = 0.0;
    for (const auto& p : test) {
      const auto paths = paths_of(p);
      ep_out.push_back(early_path_select(p.problem_id, paths, classifier, checkpoint));
      short_fallbacks += ep_out.back().short_trace_fallback ? 1 : 0;
      mv_out.push_back(majority_vote_outcome(p.problem_id, p.candidates(Metric::net_change), k));
      // uniform pick among the k paths at the checkpoint
      const double n = static_cast<double>(paths.size());
      double capped = 0.0, hits = 0.0;
      for (const auto& c : paths) {
        capped += static_cast<double>(std::min(c.total_tokens, checkpoint));
        hits += c.label.value_or(false) ? 1.0 : 0.0;
        budget += static_cast<double>(c.total_tokens);
      }
      for (const auto& c : paths) {
        rand_tokens += (static_cast<double>(c.total_tokens) + capped - static_cast<double>(std::min(c.total_tokens, checkpoint))) / n;
      }
      rand_correct += hits / n;
    }
    const double mv_acc = efficiency_metrics(mv_out).accuracy_pct;
    ep.add(ep_out, mv_acc);
    mv.add(mv_out, mv_acc);
    random_acc.push_back(100.0 * rand_correct / static_cast<double>(test.size()));
    random_saved.push_back(100.0 * (1.0 - rand_tokens / budget));
    if (!control_runs.empty()) {
      std::vector<double> accs, saved;
      for (const auto& e : control_runs) {
        accs.push_back(e.accuracy_pct);
        saved.push_back(e.token_reduction_pct);
      }
      control.accuracy.push_back(mean_of(accs));
      control.delta.push_back(mean_of(accs) - mv_acc);
      control.reduction.push_back(mean_of(saved));
    }
  }

  CommandResult result;
  const double mv_mean = mean_of(mv.accuracy);
  Table t{"early_path", {"method", "accuracy_pct", "delta_accuracy_pct", "saved_tokens_pct", "folds", "note"}, {}};
  std::string note;
  if (!oob.empty()) note = "oob accuracy " + format_double(std::round(mean_of(oob) * 100.0) / 100.0) + "%";
  if (short_fallbacks > 0) {
    note += (note.empty() ? "" : "; ") + std::to_string(short_fallbacks) + " problems chosen on full traces";
  }
  const auto folds = std::uint64_t{plan.folds.size()};
  t.add_row({std::string("LT early-path@") + std::to_string(checkpoint), mean_cell(ep.accuracy), mean_cell(ep.delta),
             mean_cell(ep.reduction), folds, note.empty() ? Cell{} : Cell{note}});
  t.add_row({"MV@" + std::to_string(k), mv_mean, 0.0, 0.0, folds, Cell{}});
  t.add_row({std::string("random-pick"), mean_of(random_acc), mean_of(random_acc) - mv_mean, mean_of(random_saved),
             folds, Cell{}});
  if (config.control_shuffles > 0) {
    t.add_row({std::string("shuffled-label control"), mean_cell(control.accuracy), mean_cell(control.delta),
               mean_cell(control.reduction), folds,
               Cell{"mean over " + std::to_string(config.control_shuffles) + " label shuffles"}});
  }
  result.tables.push_back(std::move(t));
  return result;
}

// --- synth / validate ----------------------------------------------------------

CommandResult cmd_synth(const RunConfig& config) {
  if (config.out_dir.empty()) throw Error(ErrorCode::config, "synth needs an output directory");
  auto synth = config.synth;
  if (synth.workers == 0) synth.workers = config.workers;
  const auto summary = generate(synth, config.out_dir);
  CommandResult result;
  Table t{"synth", {"manifest", "problems", "samples", "correct", "separation", "pilot_auc"}, {}};
  t.add_row({summary.manifest.string(), std::uint64_t{synth.problems}, std::uint64_t{summary.samples},
             std::uint64_t{summary.correct}, summary.solution.separation, summary.solution.pilot_auc});
  result.tables.push_back(std::move(t));
  return result;
}

CommandResult cmd_validate(const RunConfig& config) {
  config.validate();
  const auto data = load_input(config);
  CommandResult result;
  Table t{"issues", {"kind", "problem", "sample", "detail"}, {}};
  for (const auto& issue : validate_dataset(data, config.k, true)) {
    t.add_row({std::string(to_string(issue.kind)), issue.problem_id,
               issue.sample_id.empty() ? Cell{} : Cell{issue.sample_id}, issue.detail});
  }
  for (const auto& g : data.problems()) {
    for (const auto& s : g.samples) {
      if (s.reasoning_token_count > config.max_tokens) {
        t.add_row({std::string("over_max_tokens"), g.problem_id, s.sample_id,
                   std::to_string(s.reasoning_token_count) + " tokens exceed " + std::to_string(config.max_tokens)});
      }
    }
  }
  result.error_rows = t.rows.size();
  Table summary{"validation", {"problems", "samples", "issues"}, {}};
  summary.add_row({std::uint64_t{data.problems().size()}, std::uint64_t{data.sample_count()},
                   std::uint64_t{t.rows.size()}});
  result.tables.push_back(std::move(summary));
  result.tables.push_back(std::move(t));
  return result;
}

CommandResult run_command(const RunConfig& config) {
  const auto& c = config.command;
  if (c == "signals") return cmd_signals(config);
  if (c == "evaluate") return cmd_evaluate(config);
  if (c == "calibrate") return cmd_calibrate(config);
  if (c == "simulate") return cmd_simulate(config);
  if (c == "early-path") return cmd_early_path(config);
  if (c == "synth") return cmd_synth(config);
  if (c == "validate") return cmd_validate(config);
  throw Error(ErrorCode::config, "unknown command " + c);
}

}  // namespace ltraj
