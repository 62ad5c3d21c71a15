#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ltraj/rng.hpp"
#include "ltraj/segmenter.hpp"
#include "ltraj/trace_store.hpp"

namespace ltraj {

/// Segment-level random walks per layer. At separation s in [0, 1], a share s
/// of correct walks is strongly directed and the rest wander less than the
/// neutral walk; incorrect walks lose drift, wander more and revert toward
/// their start. s = 0 gives identical classes. generate() solves for the s
/// that yields the requested Net Change AUC.
struct SynthConfig {
  std::size_t problems = 100;
  std::size_t samples_per_problem = 5;
  std::size_t layers = 4;
  std::size_t hidden_dim = 16;
  std::uint64_t mean_tokens = 10000;
  std::uint64_t min_tokens = 1000;
  std::uint64_t max_tokens = 31768;
  /// Stored segment size; 0 writes token-level traces.
  std::size_t segment_size = kDefaultSegmentSize;
  double target_auc = 0.75;
  double base_accuracy = 0.55;
  std::uint64_t seed = 0;
  std::string model_id = "synthetic";
  std::size_t pilot_samples = 4000;
  std::size_t workers = 0;

  void validate() const;
};

struct SynthSolution {
  double separation;
  double pilot_auc;
};

/// Bisection on the separation knob against a fixed pilot population.
/// Throws Error(infeasible) when even full separation falls short.
SynthSolution solve_separation(const SynthConfig& config);

/// One generated sample.
struct SynthSample {
  bool correct;
  std::uint64_t tokens;
  Trace trace;
  AnswerLogits logits;
};

/// Draws a sample of the given label at `separation`. Lengths and
/// trajectories come from `rng` only.
SynthSample synth_sample(const SynthConfig& config, double separation, bool correct, const std::string& problem_id,
                         const std::string& sample_id, Rng& rng);

struct SynthSummary {
  SynthSolution solution;
  std::size_t samples = 0;
  std::size_t correct = 0;
  std::filesystem::path manifest;
};

/// Writes traces under out_dir/traces and out_dir/manifest.jsonl.
/// Same config (seed included) gives byte-identical files.
SynthSummary generate(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace ltraj
