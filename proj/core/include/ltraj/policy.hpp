#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ltraj/signals.hpp"
#include "ltraj/trace_store.hpp"

namespace ltraj {

inline constexpr std::size_t kDefaultSampleBudget = 5;

/// Trim, case-fold, collapse internal whitespace, and canonicalize pure
/// decimal numbers ("007" -> "7", "42.0" -> "42"). Purely syntactic.
std::string normalize_answer(std::string_view raw);

/// Index of the chosen answer's earliest occurrence. Most frequent wins;
/// ties go to the answer that appeared first. `answers` must be nonempty.
std::size_t majority_vote_index(std::span<const std::string> answers);
std::string majority_vote(std::span<const std::string> answers);

enum class SelectionMethod { early_accept, majority_fallback, majority_vote, shortest, early_path };
std::string_view to_string(SelectionMethod method) noexcept;

struct SelectionOutcome {
  std::string problem_id;
  std::string chosen_answer;
  std::optional<bool> correct;
  std::size_t samples_used = 0;
  std::uint64_t tokens_used = 0;
  /// Tokens of all k candidates run to completion (the MV@k cost).
  std::uint64_t budget_tokens = 0;
  SelectionMethod method = SelectionMethod::majority_vote;
  std::size_t chosen_index = 0;
  /// Early-path only: no path reached the checkpoint, chosen on full traces.
  bool short_trace_fallback = false;

  bool operator==(const SelectionOutcome&) const = default;
};

/// One sampled generation as seen by the selection policies.
struct Candidate {
  std::string answer;  // normalized
  std::optional<bool> label;
  std::uint64_t tokens = 0;
  std::optional<double> score;
};

Candidate make_candidate(const SampleRecord& record, std::optional<double> score = std::nullopt);

enum class Direction { accept_if_geq, accept_if_leq };
std::string_view to_string(Direction direction) noexcept;
Direction default_direction(Metric metric) noexcept;

struct ThresholdRule {
  Metric metric = Metric::net_change;
  Direction direction = Direction::accept_if_geq;
  double cutoff = 0.0;

  bool accepts(double value) const noexcept {
    return direction == Direction::accept_if_geq ? value >= cutoff : value <= cutoff;
  }
};

/// MV over the first k candidates; charged every candidate's tokens.
SelectionOutcome majority_vote_outcome(std::string problem_id, std::span<const Candidate> candidates,
                                       std::size_t k = kDefaultSampleBudget);
/// Fewest-token candidate among the first k (earliest on ties); charged all k.
SelectionOutcome shortest_answer(std::string problem_id, std::span<const Candidate> candidates,
                                 std::size_t k = kDefaultSampleBudget);
/// Accepts the first candidate whose score satisfies `rule`, else MV over k.
/// Throws Error(missing_value) if a candidate reached before acceptance has
/// no score.
SelectionOutcome sequential_select(std::string problem_id, std::span<const Candidate> candidates,
                                   const ThresholdRule& rule, std::size_t k = kDefaultSampleBudget);

struct EfficiencyMetrics {
  double accuracy_pct;
  double mean_samples;
  double token_reduction_pct;
  std::size_t problems;
};

/// Accuracy over problems, mean samples consumed, and 1 - used/budget tokens.
EfficiencyMetrics efficiency_metrics(std::span<const SelectionOutcome> outcomes);

}  // namespace ltraj
