#include "ltraj/signal_table.hpp"

#include <set>

#include "ltraj/error.hpp"
#include "ltraj/parallel.hpp"

namespace ltraj {

PathFeatures SampleSignals::full_features() const {
  const auto net = value(Metric::net_change);
  const auto cum = value(Metric::cumulative_change);
  if (!net || !cum) throw Error(ErrorCode::missing_value, sample_id + ": no full-trace net/cumulative change");
  return {*net, *cum};
}

std::vector<Candidate> ProblemSignals::candidates(Metric m) const {
  std::vector<Candidate> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.candidate(m));
  return out;
}

SampleSignals compute_sample_signals(const SampleRecord& record, const std::filesystem::path& trace_location,
                                     const SignalOptions& options) {
  SampleSignals out;
  out.sample_id = record.sample_id;
  out.answer = normalize_answer(record.answer);
  out.label = record.label;
  out.tokens = record.reasoning_token_count;

  if (record.answer_logits) {
    try {
      const AnswerLogitSummary logits(*record.answer_logits);
      for (const auto m : kOutputMetrics) out.set(m, output_signal(m, logits));
    } catch (const Error& e) {
      for (const auto m : kOutputMetrics) out.errors[m] = e.what();
    }
  } else {
    for (const auto m : kOutputMetrics) out.errors[m] = "record has no answer_logits";
  }

  std::optional<Trace> trace;
  try {
    trace.emplace(read_trace(trace_location));
    if (trace->token_count() != record.reasoning_token_count && trace->kind() == StorageKind::segments) {
      throw Error(ErrorCode::invariant, "trace token_count " + std::to_string(trace->token_count()) +
                                            " disagrees with manifest " +
                                            std::to_string(record.reasoning_token_count));
    }
  } catch (const Error& e) {
    out.trace_error = e.what();
    for (const auto m : kTraceMetrics) out.errors[m] = e.what();
    return out;
  }

  std::optional<Trace> segments;
  try {
    segments.emplace(as_segments(*trace, options.segmentation));
    out.segments = segments->positions();
  } catch (const Error& e) {
    out.trace_error = e.what();
    for (const auto m : kTraceMetrics) out.errors[m] = e.what();
    return out;
  }
  for (const auto m : kTraceMetrics) {
    try {
      out.set(m, trace_signal(m, *segments).value);
    } catch (const Error& e) {
      out.errors[m] = e.what();
    }
  }

  if (options.checkpoint_tokens) {
    const auto c = *options.checkpoint_tokens;
    const std::uint64_t total =
        trace->kind() == StorageKind::tokens ? static_cast<std::uint64_t>(trace->positions()) : trace->token_count();
    if (total > c) {
      try {
        const auto partial = as_segments(truncate_to_checkpoint(*trace, c), options.segmentation);
        out.checkpoint_features = PathFeatures{net_change(partial).value, cumulative_change(partial).value};
      } catch (const Error&) {
        // left empty; early path selection reports the missing features
      }
    }
  }
  return out;
}

SignalTable compute_signal_table(const Dataset& data, const SignalOptions& options) {
  std::vector<std::pair<std::size_t, std::size_t>> index;
  for (std::size_t p = 0; p < data.problems().size(); ++p) {
    for (std::size_t s = 0; s < data.problems()[p].samples.size(); ++s) index.emplace_back(p, s);
  }
  std::vector<SampleSignals> flat(index.size());
  parallel_for(index.size(), options.workers, [&](std::size_t i) {
    const auto& record = data.problems()[index[i].first].samples[index[i].second];
    flat[i] = compute_sample_signals(record, data.trace_location(record), options);
  });

  SignalTable table;
  std::size_t i = 0;
  for (const auto& g : data.problems()) {
    ProblemSignals ps{g.problem_id, g.samples.empty() ? std::string{} : g.samples.front().model_id, {}};
    for (std::size_t s = 0; s < g.samples.size(); ++s) ps.samples.push_back(std::move(flat[i++]));
    table.push_back(std::move(ps));
  }
  return table;
}

SignalTable select_problems(const SignalTable& table, const std::vector<std::string>& problem_ids) {
  const std::set<std::string> keep(problem_ids.begin(), problem_ids.end());
  SignalTable out;
  for (const auto& p : table) {
    if (keep.count(p.problem_id)) out.push_back(p);
  }
  return out;
}

}  // namespace ltraj
