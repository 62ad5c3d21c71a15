#include "ltraj/segmenter.hpp"

#include <algorithm>
#include <vector>

#include "ltraj/error.hpp"

namespace ltraj {

void SegmentationConfig::validate() const {
  if (segment_size == 0) throw Error(ErrorCode::config, "segment_size must be >= 1");
  if (min_segments < 2) throw Error(ErrorCode::config, "min_segments must be >= 2");
}

std::uint64_t stored_segment_tokens(const TraceHeader& header, std::size_t index) {
  if (header.kind == StorageKind::tokens) return 1;
  const std::uint64_t k = *header.segment_size;
  const std::uint64_t start = static_cast<std::uint64_t>(index) * k;
  if (start >= header.token_count) return 0;
  return std::min(k, header.token_count - start);
}

namespace {

// Averages consecutive groups of input positions. `weights[p]` is the number
// of tokens behind input position p and `bounds` lists group end offsets.
Trace average_groups(const Trace& trace, const std::vector<std::size_t>& bounds,
                     const std::vector<std::uint64_t>& weights, std::uint32_t segment_size,
                     std::uint64_t token_count) {
  const auto L = trace.layers();
  const auto d = trace.dim();
  std::vector<float> out;
  out.reserve(bounds.size() * L * d);
  std::vector<double> acc(L * d);
  std::size_t begin = 0;
  for (const auto end : bounds) {
    std::fill(acc.begin(), acc.end(), 0.0);
    double total = 0.0;
    for (std::size_t p = begin; p < end; ++p) {
      const double w = static_cast<double>(weights[p]);
      total += w;
      const auto row = trace.values().subspan(p * L * d, L * d);
      for (std::size_t i = 0; i < row.size(); ++i) acc[i] += w * static_cast<double>(row[i]);
    }
    for (const double a : acc) out.push_back(static_cast<float>(a / total));
    begin = end;
  }
  TraceHeader h = trace.header();
  h.kind = StorageKind::segments;
  h.segment_size = segment_size;
  h.position_count = bounds.size();
  h.token_count = token_count;
  return Trace(std::move(h), std::move(out));
}

}  // namespace

Trace segment_trace(const Trace& trace, const SegmentationConfig& config) {
  config.validate();
  const std::uint64_t k = config.segment_size;
  std::vector<std::uint64_t> weights(trace.positions(), 1);
  std::uint64_t tokens = trace.positions();
  std::uint64_t stride = k;  // input positions per output segment

  if (trace.kind() == StorageKind::segments) {
    const std::uint64_t stored = *trace.header().segment_size;
    if (k % stored != 0) {
      throw Error(ErrorCode::config, "cannot re-segment stored segments of " + std::to_string(stored) +
                                         " tokens into segments of " + std::to_string(k));
    }
    tokens = trace.token_count();
    for (std::size_t p = 0; p < trace.positions(); ++p) {
      weights[p] = stored_segment_tokens(trace.header(), p);
      if (weights[p] == 0 || (p + 1 < trace.positions() && weights[p] != stored)) {
        throw Error(ErrorCode::invariant, "stored segments are inconsistent with token_count");
      }
    }
    stride = k / stored;
  }

  // Groups of up to `stride` input positions; only the last can hold fewer
  // than k tokens and it is kept iff trailing partials are enabled.
  std::vector<std::size_t> bounds;
  const std::size_t P = trace.positions();
  for (std::size_t begin = 0; begin < P; begin += static_cast<std::size_t>(stride)) {
    const std::size_t end = std::min<std::size_t>(P, begin + static_cast<std::size_t>(stride));
    std::uint64_t group_tokens = 0;
    for (std::size_t p = begin; p < end; ++p) group_tokens += weights[p];
    if (group_tokens < k && !config.include_trailing_partial) break;
    bounds.push_back(end);
  }

  if (bounds.size() < config.min_segments) {
    throw Error(ErrorCode::too_few_segments, std::to_string(tokens) + " tokens give " +
                                                 std::to_string(bounds.size()) + " segment(s) of " +
                                                 std::to_string(k) + ", need " +
                                                 std::to_string(config.min_segments));
  }
  std::uint64_t covered = 0;
  for (std::size_t p = 0; p < bounds.back(); ++p) covered += weights[p];
  return average_groups(trace, bounds, weights, config.segment_size, covered);
}

Trace truncate_to_checkpoint(const Trace& trace, std::uint64_t token_budget) {
  if (token_budget == 0) throw Error(ErrorCode::config, "token_budget must be >= 1");
  if (token_budget >= trace.token_count() && trace.kind() == StorageKind::segments) return trace;
  const auto L = trace.layers();
  const auto d = trace.dim();
  TraceHeader h = trace.header();
  std::size_t keep = 0;
  if (trace.kind() == StorageKind::tokens) {
    if (token_budget >= trace.positions()) return trace;
    keep = static_cast<std::size_t>(token_budget);
    h.token_count = token_budget;
  } else {
    const std::uint64_t stored = *trace.header().segment_size;
    if (token_budget % stored != 0) {
      throw Error(ErrorCode::config, "checkpoint " + std::to_string(token_budget) +
                                         " is not a multiple of the stored segment size " + std::to_string(stored));
    }
    keep = static_cast<std::size_t>(token_budget / stored);
    h.token_count = token_budget;
  }
  h.position_count = keep;
  auto values = trace.values().first(keep * L * d);
  return Trace(std::move(h), std::vector<float>(values.begin(), values.end()));
}

}  // namespace ltraj
