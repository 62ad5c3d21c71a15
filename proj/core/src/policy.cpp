#include "ltraj/policy.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "ltraj/error.hpp"

namespace ltraj {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Canonical form of [+-]digits[.digits]; nullopt when `s` is not that shape.
std::optional<std::string> canonical_decimal(const std::string& s) {
  std::size_t i = 0;
  bool negative = false;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) negative = s[i++] == '-';
  std::string int_part, frac_part;
  while (i < s.size() && is_digit(s[i])) int_part += s[i++];
  bool has_point = false;
  if (i < s.size() && s[i] == '.') {
    has_point = true;
    ++i;
    while (i < s.size() && is_digit(s[i])) frac_part += s[i++];
  }
  if (i != s.size() || (int_part.empty() && frac_part.empty())) return std::nullopt;
  if (has_point && frac_part.empty() && int_part.empty()) return std::nullopt;

  const auto first_nonzero = int_part.find_first_not_of('0');
  int_part = first_nonzero == std::string::npos ? "0" : int_part.substr(first_nonzero);
  const auto last_nonzero = frac_part.find_last_not_of('0');
  frac_part = last_nonzero == std::string::npos ? "" : frac_part.substr(0, last_nonzero + 1);

  std::string out = int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  if (negative && out != "0") out.insert(out.begin(), '-');
  return out;
}

void require_nonempty(std::span<const Candidate> candidates, std::size_t k) {
  if (candidates.empty() || k == 0) throw Error(ErrorCode::invariant, "selection needs at least one candidate");
}

std::uint64_t total_tokens(std::span<const Candidate> candidates) {
  std::uint64_t total = 0;
  for (const auto& c : candidates) total += c.tokens;
  return total;
}

SelectionOutcome pick(std::string problem_id, std::span<const Candidate> window, std::size_t index,
                      SelectionMethod method, std::size_t samples_used, std::uint64_t tokens_used) {
  SelectionOutcome out;
  out.problem_id = std::move(problem_id);
  out.chosen_answer = window[index].answer;
  out.correct = window[index].label;
  out.samples_used = samples_used;
  out.tokens_used = tokens_used;
  out.budget_tokens = total_tokens(window);
  out.method = method;
  out.chosen_index = index;
  return out;
}

std::size_t vote_index(std::span<const Candidate> window) {
  std::vector<std::string> answers;
  answers.reserve(window.size());
  for (const auto& c : window) answers.push_back(c.answer);
  return majority_vote_index(answers);
}

}  // namespace

std::string normalize_answer(std::string_view raw) {
  std::string out;
  bool pending_space = false;
  for (const char c : raw) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (auto number = canonical_decimal(out)) return *number;
  return out;
}

std::size_t majority_vote_index(std::span<const std::string> answers) {
  if (answers.empty()) throw Error(ErrorCode::invariant, "majority vote over no answers");
  std::map<std::string_view, std::pair<std::size_t, std::size_t>> tally;  // answer -> (count, first index)
  for (std::size_t i = 0; i < answers.size(); ++i) {
    auto [it, inserted] = tally.try_emplace(answers[i], 0, i);
    ++it->second.first;
  }
  std::size_t best_count = 0;
  std::size_t best_index = 0;
  for (const auto& [answer, entry] : tally) {
    const auto [count, first] = entry;
    if (count > best_count || (count == best_count && first < best_index)) {
      best_count = count;
      best_index = first;
    }
  }
  return best_index;
}

std::string majority_vote(std::span<const std::string> answers) { return answers[majority_vote_index(answers)]; }

std::string_view to_string(SelectionMethod method) noexcept {
  switch (method) {
    case SelectionMethod::early_accept: return "early_accept";
    case SelectionMethod::majority_fallback: return "majority_fallback";
    case SelectionMethod::majority_vote: return "majority_vote";
    case SelectionMethod::shortest: return "shortest";
    case SelectionMethod::early_path: return "early_path";
  }
  return "unknown";
}

std::string_view to_string(Direction direction) noexcept {
  return direction == Direction::accept_if_geq ? "accept_if_geq" : "accept_if_leq";
}

Direction default_direction(Metric metric) noexcept {
  return orientation(metric) == Orientation::lower_is_better ? Direction::accept_if_leq : Direction::accept_if_geq;
}

Candidate make_candidate(const SampleRecord& record, std::optional<double> score) {
  return Candidate{normalize_answer(record.answer), record.label, record.reasoning_token_count, score};
}

SelectionOutcome majority_vote_outcome(std::string problem_id, std::span<const Candidate> candidates, std::size_t k) {
  require_nonempty(candidates, k);
  const auto window = candidates.first(std::min(k, candidates.size()));
  return pick(std::move(problem_id), window, vote_index(window), SelectionMethod::majority_vote, window.size(),
              total_tokens(window));
}

SelectionOutcome shortest_answer(std::string problem_id, std::span<const Candidate> candidates, std::size_t k) {
  require_nonempty(candidates, k);
  const auto window = candidates.first(std::min(k, candidates.size()));
  std::size_t best = 0;
  for (std::size_t i = 1; i < window.size(); ++i) {
    if (window[i].tokens < window[best].tokens) best = i;
  }
  return pick(std::move(problem_id), window, best, SelectionMethod::shortest, window.size(), total_tokens(window));
}

SelectionOutcome sequential_select(std::string problem_id, std::span<const Candidate> candidates,
                                   const ThresholdRule& rule, std::size_t k) {
  require_nonempty(candidates, k);
  const auto window = candidates.first(std::min(k, candidates.size()));
  std::uint64_t consumed = 0;
  for (std::size_t i = 0; i < window.size(); ++i) {
    consumed += window[i].tokens;
    if (!window[i].score) {
      throw Error(ErrorCode::missing_value, problem_id + ": candidate " + std::to_string(i + 1) + " has no " +
                                                std::string(metric_name(rule.metric)) + " value");
    }
    if (rule.accepts(*window[i].score)) {
      return pick(std::move(problem_id), window, i, SelectionMethod::early_accept, i + 1, consumed);
    }
  }
  return pick(std::move(problem_id), window, vote_index(window), SelectionMethod::majority_fallback, window.size(),
              consumed);
}

EfficiencyMetrics efficiency_metrics(std::span<const SelectionOutcome> outcomes) {
  if (outcomes.empty()) throw Error(ErrorCode::invariant, "efficiency metrics over no outcomes");
  std::size_t correct = 0;
  double samples = 0.0;
  double used = 0.0;
  double budget = 0.0;
  for (const auto& o : outcomes) {
    if (!o.correct) throw Error(ErrorCode::missing_value, o.problem_id + ": outcome has no correctness label");
    correct += *o.correct ? 1 : 0;
    samples += static_cast<double>(o.samples_used);
    used += static_cast<double>(o.tokens_used);
    budget += static_cast<double>(o.budget_tokens);
  }
  const double n = static_cast<double>(outcomes.size());
  return {100.0 * static_cast<double>(correct) / n, samples / n, budget > 0.0 ? 100.0 * (1.0 - used / budget) : 0.0,
          outcomes.size()};
}

}  // namespace ltraj
