#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ltraj {

inline constexpr std::uint32_t kTraceFormatVersion = 1;

enum class StorageKind { tokens, segments };

/// Metadata block of an LTRC file.
///
/// `position_count` is R for token-level traces and N for pre-averaged
/// segment traces. `segment_size` is set iff `kind == segments`.
struct TraceHeader {
  std::uint32_t format_version = kTraceFormatVersion;
  std::string model_id;
  std::string problem_id;
  std::string sample_id;
  std::uint32_t num_layers = 0;
  std::uint32_t hidden_dim = 0;
  StorageKind kind = StorageKind::tokens;
  std::uint64_t position_count = 0;
  std::optional<std::uint32_t> segment_size;
  std::uint64_t token_count = 0;

  /// Throws Error(invariant) on any violated header invariant.
  void validate() const;

  bool operator==(const TraceHeader&) const = default;
};

/// Hidden-state tensor of shape [positions, layers, dim], position-major.
/// Holds token-level states (a hidden-state trace) or per-segment means
/// (a segment trace) depending on `header().kind`.
class Trace {
 public:
  /// Validates the header, the payload size and finiteness of every value.
  Trace(TraceHeader header, std::vector<float> values);

  const TraceHeader& header() const noexcept { return header_; }
  StorageKind kind() const noexcept { return header_.kind; }
  std::size_t positions() const noexcept { return static_cast<std::size_t>(header_.position_count); }
  std::size_t layers() const noexcept { return header_.num_layers; }
  std::size_t dim() const noexcept { return header_.hidden_dim; }
  std::uint64_t token_count() const noexcept { return header_.token_count; }

  std::span<const float> values() const noexcept { return values_; }
  std::span<const float> state(std::size_t position, std::size_t layer) const;

  bool operator==(const Trace&) const = default;

 private:
  TraceHeader header_;
  std::vector<float> values_;
};

/// Number of float32 values implied by a header.
std::uint64_t payload_size(const TraceHeader& header);

void write_trace(const Trace& trace, const std::filesystem::path& destination);
Trace read_trace(const std::filesystem::path& source);
/// Parses and validates only the header block.
TraceHeader read_trace_header(const std::filesystem::path& source);

std::vector<std::uint8_t> encode_trace(const Trace& trace);
Trace decode_trace(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Manifest

/// Top-k logit summary of the next-token distribution after answer elicitation.
struct AnswerLogits {
  std::vector<std::string> tokens;
  std::vector<double> logits;  // descending
  std::optional<double> tail_mass;

  bool operator==(const AnswerLogits&) const = default;
};

struct SampleRecord {
  std::string problem_id;
  std::string sample_id;
  std::string trace_path;
  std::string answer;
  std::optional<bool> label;
  std::uint64_t reasoning_token_count = 0;
  std::optional<AnswerLogits> answer_logits;
  std::string model_id;

  bool operator==(const SampleRecord&) const = default;
};

struct ProblemGroup {
  std::string problem_id;
  std::vector<SampleRecord> samples;  // generation order
};

/// Records grouped by problem, problems and samples in file order.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::filesystem::path base_dir) : base_dir_(std::move(base_dir)) {}

  /// Appends a record; throws Error(duplicate_sample) on a repeated
  /// (problem_id, sample_id).
  void add(SampleRecord record);

  const std::vector<ProblemGroup>& problems() const noexcept { return problems_; }
  const ProblemGroup* find(const std::string& problem_id) const;
  std::size_t sample_count() const noexcept;
  bool empty() const noexcept { return problems_.empty(); }

  /// Copy containing only the listed problems (in this dataset's order).
  Dataset subset(std::span<const std::string> problem_ids) const;

  const std::filesystem::path& base_dir() const noexcept { return base_dir_; }
  /// Resolves a relative trace_path against the manifest directory.
  std::filesystem::path trace_location(const SampleRecord& record) const;

 private:
  std::filesystem::path base_dir_;
  std::vector<ProblemGroup> problems_;
};

Dataset load_manifest(const std::filesystem::path& source);
Dataset parse_manifest(const std::string& text, std::filesystem::path base_dir = {});
void write_manifest(const Dataset& data, const std::filesystem::path& destination);
std::string format_manifest_line(const SampleRecord& record);

enum class IssueKind { missing_label, missing_trace, count_mismatch, token_count_mismatch, unreadable_trace };

struct ValidationIssue {
  IssueKind kind;
  std::string problem_id;
  std::string sample_id;  // empty for problem-level issues
  std::string detail;
};

std::string_view to_string(IssueKind kind) noexcept;

/// Report-only check that a dataset is ready for k-sample policy runs.
/// With `check_traces`, each trace header is also read and its token_count
/// compared against the record.
std::vector<ValidationIssue> validate_dataset(const Dataset& data, std::size_t expected_samples,
                                              bool check_traces = false);

}  // namespace ltraj
