#include "ltraj/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "ltraj/error.hpp"
#include "ltraj/parallel.hpp"
#include "ltraj/signals.hpp"
#include "ltraj/stats.hpp"

namespace ltraj {

namespace {

// Neutral walk: unit drift per segment against 1.5 units of isotropic wander.
constexpr double kDrift = 1.0;
constexpr double kWander = 1.5;
constexpr double kDriftSpread = 0.25;  // log-normal spread of per-sample drift
constexpr double kBoost = 3.0;  // extra drift of a strongly directed walk
constexpr double kTokenJitter = 0.25;
constexpr double kAucTolerance = 0.03;
constexpr std::size_t kDistractors = 3;
constexpr std::array<double, kDistractors> kDistractorWeights{0.85, 0.1, 0.05};

struct WalkParams {
  double drift;
  double wander;
  double reversion;
};

WalkParams walk_params(double s, bool correct, bool directed) {
  if (correct) return {kDrift * (directed ? 1.0 + kBoost : 1.0), kWander * (1.0 - 0.5 * s), 0.0};
  return {kDrift * (1.0 - 0.2 * s), kWander * (1.0 + 4.0 * s), 0.05 * s};
}

std::size_t walk_segment(const SynthConfig& c) { return c.segment_size == 0 ? kDefaultSegmentSize : c.segment_size; }

std::string padded(const char* prefix, std::size_t value, std::size_t width) {
  std::string digits = std::to_string(value);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

double pilot_auc(const SynthConfig& config, double separation) {
  SynthConfig pilot = config;
  pilot.segment_size = walk_segment(config);
  Rng rng(derive_seed(config.seed, 0x9170));
  LabeledScores data;
  for (std::size_t i = 0; i < config.pilot_samples; ++i) {
    const bool correct = rng.bernoulli(config.base_accuracy);
    const auto s = synth_sample(pilot, separation, correct, "pilot", std::to_string(i), rng);
    data.scores.push_back(net_change(s.trace).value);
    data.labels.push_back(correct);
  }
  return roc_auc(data);
}

}  // namespace

void SynthConfig::validate() const {
  if (problems == 0) throw Error(ErrorCode::config, "problems must be positive");
  if (samples_per_problem == 0) throw Error(ErrorCode::config, "samples_per_problem must be positive");
  if (layers == 0 || hidden_dim == 0) throw Error(ErrorCode::config, "layers and hidden_dim must be positive");
  if (!(target_auc > 0.5 && target_auc <= 1.0)) throw Error(ErrorCode::config, "target_auc must lie in (0.5, 1]");
  if (!(base_accuracy > 0.0 && base_accuracy < 1.0)) {
    throw Error(ErrorCode::config, "base_accuracy must lie in (0, 1)");
  }
  if (min_tokens > max_tokens || mean_tokens == 0) throw Error(ErrorCode::config, "bad token range");
  if (min_tokens < 2 * walk_segment(*this)) {
    throw Error(ErrorCode::config, "min_tokens must cover at least two segments");
  }
  if (pilot_samples < 20) throw Error(ErrorCode::config, "pilot_samples must be at least 20");
}

SynthSample synth_sample(const SynthConfig& config, double separation, bool correct, const std::string& problem_id,
                         const std::string& sample_id, Rng& rng) {
  // A share `separation` of correct walks is strongly directed.
  const bool directed = rng.uniform() < separation;
  const auto p = walk_params(separation, correct, directed);
  const std::size_t L = config.layers;
  const std::size_t d = config.hidden_dim;
  const std::size_t seg = walk_segment(config);

  const double length_factor = 0.6 + 0.8 * rng.uniform();
  const auto raw_tokens =
      std::llround(static_cast<double>(config.mean_tokens) * length_factor);
  const auto tokens = std::clamp<std::uint64_t>(static_cast<std::uint64_t>(std::max<long long>(raw_tokens, 0)),
                                                config.min_tokens, config.max_tokens);
  const std::size_t n = static_cast<std::size_t>((tokens + seg - 1) / seg);
  const double drift = p.drift * std::exp(kDriftSpread * rng.normal());
  const double noise = p.wander / std::sqrt(static_cast<double>(d));

  // walk[t][l][i], one state per segment
  std::vector<double> walk(n * L * d);
  for (std::size_t l = 0; l < L; ++l) {
    const double scale = 1.0 + 0.5 * static_cast<double>(l);
    std::vector<double> dir(d), start(d);
    double norm = 0.0;
    for (auto& x : dir) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : dir) x /= norm;
    for (auto& x : start) x = 2.0 * rng.normal();
    std::vector<double> h = start;
    for (std::size_t t = 0; t < n; ++t) {
      if (t > 0) {
        for (std::size_t i = 0; i < d; ++i) {
          h[i] += scale * (drift * dir[i] + noise * rng.normal()) - p.reversion * (h[i] - start[i]);
        }
      }
      std::copy(h.begin(), h.end(), walk.begin() + static_cast<std::ptrdiff_t>((t * L + l) * d));
    }
  }

  TraceHeader header;
  header.model_id = config.model_id;
  header.problem_id = problem_id;
  header.sample_id = sample_id;
  header.num_layers = static_cast<std::uint32_t>(L);
  header.hidden_dim = static_cast<std::uint32_t>(d);
  header.token_count = tokens;
  std::vector<float> values;
  if (config.segment_size == 0) {
    header.kind = StorageKind::tokens;
    header.position_count = tokens;
    values.reserve(tokens * L * d);
    for (std::uint64_t j = 0; j < tokens; ++j) {
      const std::size_t t = static_cast<std::size_t>(j / seg);
      for (std::size_t x = 0; x < L * d; ++x) {
        values.push_back(static_cast<float>(walk[t * L * d + x] + kTokenJitter * rng.normal()));
      }
    }
  } else {
    header.kind = StorageKind::segments;
    header.position_count = n;
    header.segment_size = static_cast<std::uint32_t>(seg);
    values.reserve(walk.size());
    for (const double v : walk) values.push_back(static_cast<float>(v));
  }

  AnswerLogits logits;
  double top = 4.0 + 0.8 * rng.normal() + (correct ? 0.5 * separation : 0.0);
  for (std::size_t i = 0; i < 5; ++i) {
    logits.tokens.push_back(std::string(1, static_cast<char>('A' + i)));
    logits.logits.push_back(top);
    top -= 0.2 + 0.8 * rng.uniform();
  }
  logits.tail_mass = 0.02 + 0.08 * rng.uniform();

  return SynthSample{correct, tokens, Trace(std::move(header), std::move(values)), std::move(logits)};
}

SynthSolution solve_separation(const SynthConfig& config) {
  config.validate();
  const double target = config.target_auc;
  const double at_zero = pilot_auc(config, 0.0);
  if (at_zero >= target) return {0.0, at_zero};
  const double at_one = pilot_auc(config, 1.0);
  if (at_one < target - kAucTolerance) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "target Net AUC %.3f unreachable; full separation gives %.3f", target, at_one);
    throw Error(ErrorCode::infeasible, buf);
  }
  if (at_one <= target) return {1.0, at_one};

  double lo = 0.0, hi = 1.0;
  SynthSolution best{1.0, at_one};
  for (int iter = 0; iter < 30; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double auc = pilot_auc(config, mid);
    if (std::abs(auc - target) < std::abs(best.pilot_auc - target)) best = {mid, auc};
    if (std::abs(auc - target) <= 0.002) break;
    (auc < target ? lo : hi) = mid;
  }
  return best;
}

SynthSummary generate(const SynthConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  SynthSummary summary;
  summary.solution = solve_separation(config);
  const double s = summary.solution.separation;

  const std::size_t width = std::to_string(config.problems).size();
  const std::size_t spp = config.samples_per_problem;

  struct ProblemPlan {
    std::string id;
    double accuracy;
    std::string answer;
    std::array<std::string, kDistractors> distractors;
  };
  std::vector<ProblemPlan> plans;
  const std::uint64_t problem_stream = derive_seed(config.seed, 1);
  const double spread = 0.2 * std::min(config.base_accuracy, 1.0 - config.base_accuracy);
  for (std::size_t i = 0; i < config.problems; ++i) {
    Rng rng(derive_seed(problem_stream, i));
    ProblemPlan plan;
    plan.id = padded("p", i + 1, width);
    plan.accuracy = config.base_accuracy + spread * (2.0 * rng.uniform() - 1.0);
    const auto answer = rng.below(1000);
    plan.answer = std::to_string(answer);
    for (std::size_t j = 0; j < kDistractors; ++j) plan.distractors[j] = std::to_string(answer + 1000 * (j + 1) + rng.below(997));
    plans.push_back(std::move(plan));
  }

  std::filesystem::create_directories(out_dir / "traces");
  const std::uint64_t sample_stream = derive_seed(config.seed, 2);
  std::vector<SampleRecord> records(config.problems * spp);
  parallel_for(records.size(), config.workers, [&](std::size_t idx) {
    const auto& plan = plans[idx / spp];
    const std::string sample_id = "s" + std::to_string(idx % spp + 1);
    Rng rng(derive_seed(sample_stream, idx));
    const bool correct = rng.bernoulli(plan.accuracy);
    std::string answer = plan.answer;
    if (!correct) {
      double u = rng.uniform();
      std::size_t j = 0;
      while (j + 1 < kDistractors && u >= kDistractorWeights[j]) u -= kDistractorWeights[j++];
      answer = plan.distractors[j];
    }
    auto sample = synth_sample(config, s, correct, plan.id, sample_id, rng);
    const std::string rel = "traces/" + plan.id + "_" + sample_id + ".ltrc";
    write_trace(sample.trace, out_dir / rel);

    SampleRecord& r = records[idx];
    r.problem_id = plan.id;
    r.sample_id = sample_id;
    r.trace_path = rel;
    r.answer = answer;
    r.label = correct;
    r.reasoning_token_count = sample.tokens;
    r.answer_logits = std::move(sample.logits);
    r.model_id = config.model_id;
  });

  Dataset data(out_dir);
  for (auto& r : records) {
    summary.correct += *r.label ? 1 : 0;
    data.add(std::move(r));
  }
  summary.samples = records.size();
  summary.manifest = out_dir / "manifest.jsonl";
  write_manifest(data, summary.manifest);
  return summary;
}

}  // namespace ltraj
