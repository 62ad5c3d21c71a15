#include "ltraj/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "ltraj/error.hpp"
#include "ltraj/rng.hpp"
#include "ltraj/stats.hpp"

namespace ltraj {

namespace {

using json = nlohmann::json;
using ProblemCandidates = std::vector<std::vector<Candidate>>;

ProblemCandidates gather(const SignalTable& table, Metric metric, std::size_t k) {
  ProblemCandidates out;
  out.reserve(table.size());
  for (const auto& p : table) {
    auto c = p.candidates(metric);
    if (c.size() > k) c.resize(k);
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (!c[i].label) {
        throw Error(ErrorCode::missing_value, p.problem_id + ": sample " + std::to_string(i + 1) + " has no label");
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

double accuracy_of(const ProblemCandidates& problems, const ThresholdRule* rule, std::size_t k) {
  if (problems.empty()) throw Error(ErrorCode::invariant, "accuracy over no problems");
  std::size_t hits = 0;
  for (const auto& c : problems) {
    const auto outcome = rule ? sequential_select({}, c, *rule, k) : majority_vote_outcome({}, c, k);
    hits += outcome.correct.value_or(false) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(problems.size());
}

RuleCalibration calibrate_metric(const SignalTable& table, Metric metric, std::size_t k) {
  RuleCalibration rc;
  rc.metric = metric;
  rc.direction = default_direction(metric);
  const auto problems = gather(table, metric, k);

  std::vector<double> all, incorrect;
  std::size_t missing = 0;
  for (const auto& c : problems) {
    for (const auto& s : c) {
      if (!s.score) {
        ++missing;
        continue;
      }
      all.push_back(*s.score);
      if (!*s.label) incorrect.push_back(*s.score);
    }
  }
  if (missing > 0) {
    rc.skipped = std::to_string(missing) + " calibration samples have no " + std::string(metric_name(metric));
    return rc;
  }
  if (all.empty()) {
    rc.skipped = "no calibration values";
    return rc;
  }
  const auto grid = candidate_thresholds(incorrect, all);
  rc.fallback = grid.fallback;
  rc.candidates = grid.cutoffs.size();
  rc.incorrect_count = grid.incorrect_count;

  std::map<double, double> cache;
  std::vector<GridPoint> points;
  points.reserve(grid.cutoffs.size());
  for (const double cut : grid.cutoffs) {
    auto it = cache.find(cut);
    if (it == cache.end()) {
      const ThresholdRule rule{metric, rc.direction, cut};
      it = cache.emplace(cut, accuracy_of(problems, &rule, k)).first;
    }
    points.push_back({cut, it->second});
  }
  rc.cutoff = select_threshold(points, rc.direction);

  std::vector<GridPoint> ranked = points;
  std::stable_sort(ranked.begin(), ranked.end(), [&](const GridPoint& a, const GridPoint& b) {
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    return rc.direction == Direction::accept_if_geq ? a.cutoff > b.cutoff : a.cutoff < b.cutoff;
  });
  for (std::size_t i = 0; i < std::min<std::size_t>(2, ranked.size()); ++i) rc.best_cutoffs.push_back(ranked[i].cutoff);

  const ThresholdRule chosen{metric, rc.direction, *rc.cutoff};
  rc.calibration_accuracy = accuracy_of(problems, &chosen, k);
  return rc;
}

std::vector<std::string> ids_of(const SignalTable& table) {
  std::vector<std::string> ids;
  ids.reserve(table.size());
  for (const auto& p : table) ids.push_back(p.problem_id);
  return ids;
}

std::vector<std::string> sample_problems(const std::vector<std::string>& ids, double fraction, std::uint64_t seed) {
  if (ids.empty()) return {};
  const auto want = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ids.size()))), 1, ids.size());
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(want);
  std::sort(order.begin(), order.end());
  std::vector<std::string> out;
  for (const auto i : order) out.push_back(ids[i]);
  return out;
}

// --- json ---------------------------------------------------------------------

const std::array<Metric, 3> kWeightOrder = kTrajectoryMetrics;

json weights_to_json(const WeightVector& w) {
  json weights = json::object(), stats = json::object();
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string name(metric_name(kWeightOrder[i]));
    weights[name] = w.weights[i];
    stats[name] = {{"mean", w.stats[i].mean}, {"std", w.stats[i].stddev}};
  }
  return {{"weights", weights}, {"standardization", stats}};
}

WeightVector weights_from_json(const json& j) {
  WeightVector w;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string name(metric_name(kWeightOrder[i]));
    w.weights[i] = j.at("weights").at(name).get<double>();
    w.stats[i].mean = j.at("standardization").at(name).at("mean").get<double>();
    w.stats[i].stddev = j.at("standardization").at(name).at("std").get<double>();
  }
  w.validate();
  return w;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

Metric metric_from_json(const json& j) {
  const auto name = j.get<std::string>();
  const auto m = parse_metric(name);
  if (!m) throw Error(ErrorCode::bad_header, "unknown metric '" + name + "'");
  return *m;
}

Direction direction_from_json(const json& j) {
  const auto name = j.get<std::string>();
  if (name == to_string(Direction::accept_if_geq)) return Direction::accept_if_geq;
  if (name == to_string(Direction::accept_if_leq)) return Direction::accept_if_leq;
  throw Error(ErrorCode::bad_header, "unknown direction '" + name + "'");
}

}  // namespace

FoldPlan make_folds(std::span<const std::string> problem_ids, std::uint64_t seed, std::size_t folds,
                    double calibration_fraction) {
  const std::size_t n = problem_ids.size();
  if (n < kMinProblemsForFolds) {
    throw Error(ErrorCode::too_few_problems, "need at least " + std::to_string(kMinProblemsForFolds) +
                                                 " problems to build folds, got " + std::to_string(n));
  }
  if (folds == 0) throw Error(ErrorCode::config, "fold count must be positive");
  if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0)) {
    throw Error(ErrorCode::config, "calibration fraction must lie in (0, 1)");
  }
  const auto n_cal =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(calibration_fraction * static_cast<double>(n))),
                              1, n - 1);
  FoldPlan plan;
  plan.seed = seed;
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, f));
    rng.shuffle(order);
    std::vector<bool> is_cal(n, false);
    for (std::size_t i = 0; i < n_cal; ++i) is_cal[order[i]] = true;
    Fold fold;
    for (std::size_t i = 0; i < n; ++i) (is_cal[i] ? fold.calibration : fold.test).push_back(problem_ids[i]);
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

FoldPlan make_folds(const SignalTable& table, std::uint64_t seed, std::size_t folds, double calibration_fraction) {
  const auto ids = ids_of(table);
  return make_folds(ids, seed, folds, calibration_fraction);
}

CandidateGrid candidate_thresholds(std::span<const double> incorrect_values, std::span<const double> all_values) {
  if (all_values.empty()) throw Error(ErrorCode::missing_value, "no calibration values for the metric");
  CandidateGrid grid;
  grid.incorrect_count = incorrect_values.size();
  if (incorrect_values.size() < kMinIncorrectForGrid) {
    grid.fallback = true;
    grid.cutoffs.push_back(median(all_values));
    return grid;
  }
  std::vector<double> sorted(incorrect_values.begin(), incorrect_values.end());
  std::sort(sorted.begin(), sorted.end());
  for (int p = kGridLowPercentile; p <= kGridHighPercentile; ++p) grid.cutoffs.push_back(percentile(sorted, p));
  return grid;
}

double simulate_rule(const SignalTable& calibration, const ThresholdRule& rule, std::size_t k) {
  return accuracy_of(gather(calibration, rule.metric, k), &rule, k);
}

double select_threshold(std::span<const GridPoint> grid, Direction direction) {
  if (grid.empty()) throw Error(ErrorCode::invariant, "threshold grid is empty");
  if (grid.size() == 1) return grid.front().cutoff;
  std::vector<GridPoint> ranked(grid.begin(), grid.end());
  std::stable_sort(ranked.begin(), ranked.end(), [&](const GridPoint& a, const GridPoint& b) {
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    return direction == Direction::accept_if_geq ? a.cutoff > b.cutoff : a.cutoff < b.cutoff;
  });
  if (ranked[0].cutoff == ranked[1].cutoff) return ranked[0].cutoff;
  return (ranked[0].cutoff + ranked[1].cutoff) / 2.0;
}

WeightVector fit_combined_weights(const SignalTable& slice) {
  std::array<std::vector<double>, 3> values;
  std::vector<double> labels;
  for (const auto& p : slice) {
    for (const auto& s : p.samples) {
      if (!s.label) continue;
      std::array<double, 3> row{};
      bool complete = true;
      for (std::size_t i = 0; i < 3; ++i) {
        const auto v = s.value(kWeightOrder[i]);
        if (!v) {
          complete = false;
          break;
        }
        row[i] = *v;
      }
      if (!complete) continue;
      for (std::size_t i = 0; i < 3; ++i) values[i].push_back(row[i]);
      labels.push_back(*s.label ? 1.0 : 0.0);
    }
  }
  if (labels.size() < 10) {
    throw Error(ErrorCode::invariant,
                "combined-weight slice needs at least 10 labeled samples, got " + std::to_string(labels.size()));
  }
  const auto positives = std::count(labels.begin(), labels.end(), 1.0);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    throw Error(ErrorCode::single_class, "combined-weight slice contains a single class");
  }

  WeightVector w;
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto summary = aggregate(values[i]);
    w.stats[i] = {summary.mean, summary.population_std};
    double r = 0.0;
    if (summary.population_std > kDegenerateEps) {
      std::vector<double> x = values[i];
      if (orientation(kWeightOrder[i]) == Orientation::lower_is_better) {
        for (auto& v : x) v = -v;
      }
      try {
        r = pearson(x, labels);
      } catch (const Error&) {
        r = 0.0;
      }
    }
    w.weights[i] = std::abs(r);
    total += w.weights[i];
  }
  if (total <= kDegenerateEps) {
    w.weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  } else {
    for (auto& x : w.weights) x /= total;
  }
  return w;
}

SignalTable with_combined(const SignalTable& table, const WeightVector& weights) {
  SignalTable out = table;
  for (auto& p : out) {
    for (auto& s : p.samples) {
      std::map<Metric, double> scores;
      for (const auto m : kWeightOrder) {
        if (const auto v = s.value(m)) scores[m] = *v;
      }
      if (scores.size() == 3) s.set(Metric::combined, combined_score(scores, weights));
    }
  }
  return out;
}

std::optional<ThresholdRule> RuleCalibration::rule() const {
  if (!cutoff) return std::nullopt;
  return ThresholdRule{metric, direction, *cutoff};
}

const RuleCalibration* FoldCalibration::find(Metric metric) const {
  for (const auto& r : rules) {
    if (r.metric == metric) return &r;
  }
  return nullptr;
}

std::uint64_t combined_slice_seed(std::uint64_t seed, std::size_t fold_index) noexcept {
  return derive_seed(derive_seed(seed, 0x51ce), fold_index);
}

FoldCalibration calibrate_fold(const SignalTable& calibration, std::size_t fold_index,
                               const CalibrationOptions& options) {
  if (calibration.empty()) throw Error(ErrorCode::too_few_problems, "fold has no calibration problems");
  if (options.k == 0) throw Error(ErrorCode::config, "k must be positive");
  FoldCalibration fc;
  fc.calibration_problems = ids_of(calibration);
  fc.majority_vote_accuracy = accuracy_of(gather(calibration, Metric::net_change, options.k), nullptr, options.k);

  for (const auto m : options.metrics) {
    if (m == Metric::combined) continue;
    fc.rules.push_back(calibrate_metric(calibration, m, options.k));
  }

  if (options.combined) {
    auto& cc = fc.combined;
    cc.slice_seed = combined_slice_seed(options.seed, fold_index);
    cc.slice_problems = sample_problems(fc.calibration_problems, kCombinedSliceFraction, cc.slice_seed);
    try {
      cc.weights = fit_combined_weights(select_problems(calibration, cc.slice_problems));
    } catch (const Error& e) {
      cc.skipped = e.what();
    }
    if (cc.weights) {
      fc.rules.push_back(calibrate_metric(with_combined(calibration, *cc.weights), Metric::combined, options.k));
    } else {
      RuleCalibration rc;
      rc.metric = Metric::combined;
      rc.direction = default_direction(Metric::combined);
      rc.skipped = "no combined weights: " + cc.skipped;
      fc.rules.push_back(std::move(rc));
    }
  }
  return fc;
}

CalibrationArtifact calibrate(const SignalTable& table, const CalibrationOptions& options) {
  return calibrate(table, make_folds(table, options.seed, options.folds, options.calibration_fraction), options);
}

CalibrationArtifact calibrate(const SignalTable& table, const FoldPlan& plan, const CalibrationOptions& options) {
  CalibrationArtifact art;
  art.seed = options.seed;
  art.k = options.k;
  art.segment_size = options.segment_size;
  std::set<std::string> present;
  for (const auto& p : table) present.insert(p.problem_id);
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const auto& fold = plan.folds[f];
    for (const auto& id : fold.calibration) {
      if (!present.count(id)) {
        throw Error(ErrorCode::missing_value, "fold " + std::to_string(f + 1) + ": calibration problem '" + id +
                                                  "' is not in the signal table");
      }
    }
    auto fc = calibrate_fold(select_problems(table, fold.calibration), f, options);
    fc.test_problems = fold.test;
    art.folds.push_back(std::move(fc));
  }
  return art;
}

std::string CalibrationArtifact::to_json() const {
  json j;
  j["format"] = "ltraj-calibration";
  j["version"] = 1;
  j["seed"] = seed;
  j["k"] = k;
  j["segment_size"] = segment_size;
  j["folds"] = json::array();
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto& fc = folds[f];
    json jf;
    jf["index"] = f;
    jf["calibration_problems"] = fc.calibration_problems;
    jf["test_problems"] = fc.test_problems;
    jf["majority_vote_accuracy"] = fc.majority_vote_accuracy;
    jf["rules"] = json::array();
    for (const auto& r : fc.rules) {
      json jr{{"metric", metric_name(r.metric)},
              {"direction", to_string(r.direction)},
              {"cutoff", optional_number(r.cutoff)},
              {"fallback", r.fallback},
              {"candidates", r.candidates},
              {"incorrect_count", r.incorrect_count},
              {"best_cutoffs", r.best_cutoffs},
              {"calibration_accuracy", r.calibration_accuracy}};
      if (!r.skipped.empty()) jr["skipped"] = r.skipped;
      jf["rules"].push_back(std::move(jr));
    }
    json jc{{"slice_seed", fc.combined.slice_seed}, {"slice_problems", fc.combined.slice_problems}};
    if (fc.combined.weights) jc.update(weights_to_json(*fc.combined.weights));
    if (!fc.combined.skipped.empty()) jc["skipped"] = fc.combined.skipped;
    jf["combined"] = std::move(jc);
    j["folds"].push_back(std::move(jf));
  }
  return j.dump(2) + "\n";
}

CalibrationArtifact CalibrationArtifact::from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    if (j.value("format", std::string{}) != "ltraj-calibration") {
      throw Error(ErrorCode::bad_header, "not a calibration artifact");
    }
    if (j.at("version").get<int>() != 1) throw Error(ErrorCode::unsupported_version, "calibration artifact version");
    CalibrationArtifact art;
    art.seed = j.at("seed").get<std::uint64_t>();
    art.k = j.at("k").get<std::size_t>();
    art.segment_size = j.at("segment_size").get<std::size_t>();
    for (const auto& jf : j.at("folds")) {
      FoldCalibration fc;
      fc.calibration_problems = jf.at("calibration_problems").get<std::vector<std::string>>();
      fc.test_problems = jf.at("test_problems").get<std::vector<std::string>>();
      fc.majority_vote_accuracy = jf.at("majority_vote_accuracy").get<double>();
      for (const auto& jr : jf.at("rules")) {
        RuleCalibration r;
        r.metric = metric_from_json(jr.at("metric"));
        r.direction = direction_from_json(jr.at("direction"));
        if (!jr.at("cutoff").is_null()) r.cutoff = jr.at("cutoff").get<double>();
        r.fallback = jr.at("fallback").get<bool>();
        r.candidates = jr.at("candidates").get<std::size_t>();
        r.incorrect_count = jr.at("incorrect_count").get<std::size_t>();
        r.best_cutoffs = jr.at("best_cutoffs").get<std::vector<double>>();
        r.calibration_accuracy = jr.at("calibration_accuracy").get<double>();
        r.skipped = jr.value("skipped", std::string{});
        fc.rules.push_back(std::move(r));
      }
      const auto& jc = jf.at("combined");
      fc.combined.slice_seed = jc.at("slice_seed").get<std::uint64_t>();
      fc.combined.slice_problems = jc.at("slice_problems").get<std::vector<std::string>>();
      if (jc.contains("weights")) fc.combined.weights = weights_from_json(jc);
      fc.combined.skipped = jc.value("skipped", std::string{});
      art.folds.push_back(std::move(fc));
    }
    return art;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::bad_header, std::string("calibration artifact: ") + e.what());
  }
}

}  // namespace ltraj
