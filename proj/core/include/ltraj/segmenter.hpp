#pragma once

#include <cstdint>

#include "ltraj/trace_store.hpp"

namespace ltraj {

inline constexpr std::uint32_t kDefaultSegmentSize = 500;

struct SegmentationConfig {
  std::uint32_t segment_size = kDefaultSegmentSize;
  std::uint32_t min_segments = 2;
  bool include_trailing_partial = true;

  void validate() const;
};

/// Block-averages a token-level trace into segment means. Segment n covers
/// tokens [(n-1)k, nk); accumulation is in double, storage float32.
/// A segment-stored trace whose segment size divides k is re-averaged with
/// token-count weights. Throws Error(too_few_segments) when N < min_segments.
Trace segment_trace(const Trace& trace, const SegmentationConfig& config = {});

/// Prefix of the first min(R, token_budget) tokens; identity when the budget
/// covers the whole trace. For segment-stored traces the budget must be a
/// multiple of the stored segment size (or cover the full trace).
Trace truncate_to_checkpoint(const Trace& trace, std::uint64_t token_budget);

/// Number of tokens averaged into stored segment `index` of a segment trace.
std::uint64_t stored_segment_tokens(const TraceHeader& header, std::size_t index);

}  // namespace ltraj
