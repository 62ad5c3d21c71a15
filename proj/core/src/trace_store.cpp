#include "ltraj/trace_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <system_error>

#include <nlohmann/json.hpp>
#include "ltraj/error.hpp"

namespace ltraj {

namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'L', 'T', 'R', 'C'};
constexpr std::size_t kPreambleBytes = 12;
constexpr std::uint32_t kMaxHeaderBytes = 1u << 20;

static_assert(std::numeric_limits<float>::is_iec559);

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

std::string_view kind_name(StorageKind kind) {
  return kind == StorageKind::tokens ? "tokens" : "segments";
}

json header_to_json(const TraceHeader& h) {
  json j;
  j["format_version"] = h.format_version;
  j["model_id"] = h.model_id;
  j["problem_id"] = h.problem_id;
  j["sample_id"] = h.sample_id;
  j["num_layers"] = h.num_layers;
  j["hidden_dim"] = h.hidden_dim;
  j["storage_kind"] = kind_name(h.kind);
  j["position_count"] = h.position_count;
  if (h.segment_size) j["segment_size"] = *h.segment_size;
  j["token_count"] = h.token_count;
  return j;
}

template <typename T>
T require_field(const json& j, const char* name) {
  if (!j.contains(name)) throw Error(ErrorCode::bad_header, std::string("missing field '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::bad_header, std::string("field '") + name + "' has the wrong type");
  }
}

std::uint64_t require_unsigned(const json& j, const char* name) {
  if (!j.contains(name)) throw Error(ErrorCode::bad_header, std::string("missing field '") + name + "'");
  const auto& v = j.at(name);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw Error(ErrorCode::bad_header, std::string("field '") + name + "' must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

TraceHeader header_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::bad_header, "header is not a JSON object");
  TraceHeader h;
  h.format_version = static_cast<std::uint32_t>(require_unsigned(j, "format_version"));
  h.model_id = require_field<std::string>(j, "model_id");
  h.problem_id = require_field<std::string>(j, "problem_id");
  h.sample_id = require_field<std::string>(j, "sample_id");
  h.num_layers = static_cast<std::uint32_t>(require_unsigned(j, "num_layers"));
  h.hidden_dim = static_cast<std::uint32_t>(require_unsigned(j, "hidden_dim"));
  const auto kind = require_field<std::string>(j, "storage_kind");
  if (kind == "tokens") {
    h.kind = StorageKind::tokens;
  } else if (kind == "segments") {
    h.kind = StorageKind::segments;
  } else {
    throw Error(ErrorCode::bad_header, "unknown storage_kind '" + kind + "'");
  }
  h.position_count = require_unsigned(j, "position_count");
  if (j.contains("segment_size")) h.segment_size = static_cast<std::uint32_t>(require_unsigned(j, "segment_size"));
  h.token_count = require_unsigned(j, "token_count");
  return h;
}

float load_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

void store_f32(std::uint8_t* p, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(bits >> (8 * i));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + source.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::io, "read failed for '" + source.string() + "'");
  return bytes;
}

/// Writes via a sibling temporary and renames, so a failed write never leaves
/// a partial file at the destination.
void write_file_atomically(const std::filesystem::path& destination, std::span<const std::uint8_t> bytes) {
  auto tmp = destination;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::io, "write failed for '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, destination, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::io, "cannot move output into '" + destination.string() + "'");
  }
}

struct ParsedPreamble {
  TraceHeader header;
  std::size_t payload_offset;
};

ParsedPreamble parse_preamble(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::bad_magic, "file does not start with \"LTRC\"");
  }
  if (bytes.size() < kPreambleBytes) {
    throw Error(ErrorCode::truncated, "expected at least 12 preamble bytes, got " + std::to_string(bytes.size()));
  }
  const auto version = get_u32(bytes, 4);
  if (version != kTraceFormatVersion) {
    throw Error(ErrorCode::unsupported_version, "version " + std::to_string(version) + " (supported: 1)");
  }
  const auto header_len = get_u32(bytes, 8);
  if (header_len > kMaxHeaderBytes) throw Error(ErrorCode::bad_header, "header length " + std::to_string(header_len));
  if (bytes.size() < kPreambleBytes + header_len) {
    throw Error(ErrorCode::truncated, "expected " + std::to_string(kPreambleBytes + header_len) +
                                          " bytes through the header, got " + std::to_string(bytes.size()));
  }
  json j;
  try {
    j = json::parse(bytes.begin() + kPreambleBytes, bytes.begin() + kPreambleBytes + header_len);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::bad_header, std::string("header JSON: ") + e.what());
  }
  auto header = header_from_json(j);
  if (header.format_version != version) {
    throw Error(ErrorCode::bad_header, "header format_version disagrees with preamble");
  }
  try {
    header.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::bad_header, e.what());
  }
  return {std::move(header), kPreambleBytes + header_len};
}

}  // namespace

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::bad_magic: return "bad-magic";
    case ErrorCode::unsupported_version: return "unsupported-version";
    case ErrorCode::bad_header: return "bad-header";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::non_finite: return "non-finite";
    case ErrorCode::invariant: return "invariant";
    case ErrorCode::malformed_line: return "malformed-line";
    case ErrorCode::duplicate_sample: return "duplicate-sample";
    case ErrorCode::too_few_segments: return "too-few-segments";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::out_of_range: return "out-of-range";
    case ErrorCode::single_class: return "single-class";
    case ErrorCode::missing_value: return "missing-value";
    case ErrorCode::too_few_problems: return "too-few-problems";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::config: return "config";
  }
  return "unknown";
}

void TraceHeader::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::invariant, what); };
  if (format_version != kTraceFormatVersion) fail("format_version must be 1");
  if (num_layers == 0) fail("num_layers must be positive");
  if (hidden_dim == 0) fail("hidden_dim must be positive");
  if (position_count == 0) fail("position_count must be at least 1");
  if (kind == StorageKind::segments) {
    if (!segment_size || *segment_size == 0) fail("segment traces need a positive segment_size");
    if (token_count < position_count) fail("token_count must be >= position_count for segment traces");
  } else if (segment_size) {
    fail("segment_size is only valid for segment traces");
  }
}

std::uint64_t payload_size(const TraceHeader& header) {
  return header.position_count * header.num_layers * header.hidden_dim;
}

Trace::Trace(TraceHeader header, std::vector<float> values) : header_(std::move(header)), values_(std::move(values)) {
  header_.validate();
  if (values_.size() != payload_size(header_)) {
    throw Error(ErrorCode::invariant, "payload has " + std::to_string(values_.size()) + " values, header implies " +
                                          std::to_string(payload_size(header_)));
  }
  const auto bad = std::find_if(values_.begin(), values_.end(), [](float v) { return !std::isfinite(v); });
  if (bad != values_.end()) {
    throw Error(ErrorCode::non_finite, "non-finite value at payload index " + std::to_string(bad - values_.begin()));
  }
}

std::span<const float> Trace::state(std::size_t position, std::size_t layer) const {
  if (position >= positions() || layer >= layers()) {
    throw Error(ErrorCode::out_of_range, "state(" + std::to_string(position) + ", " + std::to_string(layer) + ")");
  }
  return std::span<const float>(values_).subspan((position * layers() + layer) * dim(), dim());
}

std::vector<std::uint8_t> encode_trace(const Trace& trace) {
  const auto header_text = header_to_json(trace.header()).dump();
  std::vector<std::uint8_t> out;
  out.reserve(kPreambleBytes + header_text.size() + trace.values().size() * 4);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kTraceFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out.insert(out.end(), header_text.begin(), header_text.end());
  const auto offset = out.size();
  out.resize(offset + trace.values().size() * 4);
  for (std::size_t i = 0; i < trace.values().size(); ++i) store_f32(out.data() + offset + 4 * i, trace.values()[i]);
  return out;
}

Trace decode_trace(std::span<const std::uint8_t> bytes) {
  auto [header, offset] = parse_preamble(bytes);
  const auto count = payload_size(header);
  const auto expected = offset + count * 4;
  if (bytes.size() < expected) {
    throw Error(ErrorCode::truncated,
                "expected " + std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw Error(ErrorCode::invariant, std::to_string(bytes.size() - expected) + " trailing bytes after payload");
  }
  std::vector<float> values(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = load_f32(bytes.data() + offset + 4 * i);
  return Trace(std::move(header), std::move(values));
}

void write_trace(const Trace& trace, const std::filesystem::path& destination) {
  // Trace construction already enforced every invariant; encoding cannot fail.
  const auto bytes = encode_trace(trace);
  write_file_atomically(destination, bytes);
}

Trace read_trace(const std::filesystem::path& source) {
  const auto bytes = read_file(source);
  try {
    return decode_trace(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), source.string() + ": " + e.what());
  }
}

namespace {

// Header plus the byte offset where the payload starts.
std::pair<TraceHeader, std::uint64_t> read_header_block(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + source.string() + "'");
  std::vector<std::uint8_t> pre(kPreambleBytes);
  in.read(reinterpret_cast<char*>(pre.data()), kPreambleBytes);
  pre.resize(static_cast<std::size_t>(in.gcount()));
  if (pre.size() < 4 || std::memcmp(pre.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::bad_magic, source.string());
  }
  if (pre.size() < kPreambleBytes) throw Error(ErrorCode::truncated, source.string());
  const auto header_len = std::min(get_u32(pre, 8), kMaxHeaderBytes + 1);
  pre.resize(kPreambleBytes + header_len);
  in.read(reinterpret_cast<char*>(pre.data() + kPreambleBytes), header_len);
  pre.resize(kPreambleBytes + static_cast<std::size_t>(in.gcount()));
  auto parsed = parse_preamble(pre);
  return {std::move(parsed.header), parsed.payload_offset};
}

}  // namespace

TraceHeader read_trace_header(const std::filesystem::path& source) { return read_header_block(source).first; }

// ---------------------------------------------------------------------------
// Dataset / manifest

void Dataset::add(SampleRecord record) {
  auto it = std::find_if(problems_.begin(), problems_.end(),
                         [&](const ProblemGroup& g) { return g.problem_id == record.problem_id; });
  if (it == problems_.end()) {
    problems_.push_back(ProblemGroup{record.problem_id, {}});
    it = std::prev(problems_.end());
  }
  for (const auto& s : it->samples) {
    if (s.sample_id == record.sample_id) {
      throw Error(ErrorCode::duplicate_sample, "(" + record.problem_id + ", " + record.sample_id + ")");
    }
  }
  it->samples.push_back(std::move(record));
}

const ProblemGroup* Dataset::find(const std::string& problem_id) const {
  for (const auto& g : problems_) {
    if (g.problem_id == problem_id) return &g;
  }
  return nullptr;
}

std::size_t Dataset::sample_count() const noexcept {
  std::size_t n = 0;
  for (const auto& g : problems_) n += g.samples.size();
  return n;
}

Dataset Dataset::subset(std::span<const std::string> problem_ids) const {
  const std::set<std::string> keep(problem_ids.begin(), problem_ids.end());
  Dataset out(base_dir_);
  for (const auto& g : problems_) {
    if (keep.count(g.problem_id)) out.problems_.push_back(g);
  }
  return out;
}

std::filesystem::path Dataset::trace_location(const SampleRecord& record) const {
  std::filesystem::path p(record.trace_path);
  if (p.is_relative() && !base_dir_.empty()) return base_dir_ / p;
  return p;
}

namespace {

SampleRecord record_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::malformed_line, "record is not a JSON object");
  SampleRecord r;
  r.problem_id = require_field<std::string>(j, "problem_id");
  r.sample_id = require_field<std::string>(j, "sample_id");
  r.trace_path = j.value("trace_path", std::string{});
  r.answer = j.value("answer", std::string{});
  r.model_id = j.value("model_id", std::string{});
  if (j.contains("label") && !j["label"].is_null()) {
    if (!j["label"].is_boolean()) throw Error(ErrorCode::malformed_line, "label must be boolean or null");
    r.label = j["label"].get<bool>();
  }
  if (j.contains("reasoning_token_count")) r.reasoning_token_count = require_unsigned(j, "reasoning_token_count");
  if (j.contains("answer_logits") && !j["answer_logits"].is_null()) {
    const auto& a = j["answer_logits"];
    AnswerLogits logits;
    logits.logits = require_field<std::vector<double>>(a, "logits");
    if (a.contains("tokens")) logits.tokens = require_field<std::vector<std::string>>(a, "tokens");
    if (a.contains("tail_mass") && !a["tail_mass"].is_null()) logits.tail_mass = a["tail_mass"].get<double>();
    if (logits.logits.size() < 2) throw Error(ErrorCode::malformed_line, "answer_logits needs at least 2 entries");
    if (!std::is_sorted(logits.logits.rbegin(), logits.logits.rend())) {
      throw Error(ErrorCode::malformed_line, "answer_logits must be sorted descending");
    }
    if (!logits.tokens.empty() && logits.tokens.size() != logits.logits.size()) {
      throw Error(ErrorCode::malformed_line, "answer_logits tokens and logits differ in length");
    }
    r.answer_logits = std::move(logits);
  }
  return r;
}

json record_to_json(const SampleRecord& r) {
  json j;
  j["problem_id"] = r.problem_id;
  j["sample_id"] = r.sample_id;
  j["trace_path"] = r.trace_path;
  j["answer"] = r.answer;
  j["label"] = r.label ? json(*r.label) : json(nullptr);
  j["reasoning_token_count"] = r.reasoning_token_count;
  if (r.answer_logits) {
    json a;
    a["tokens"] = r.answer_logits->tokens;
    a["logits"] = r.answer_logits->logits;
    if (r.answer_logits->tail_mass) a["tail_mass"] = *r.answer_logits->tail_mass;
    j["answer_logits"] = std::move(a);
  } else {
    j["answer_logits"] = nullptr;
  }
  j["model_id"] = r.model_id;
  return j;
}

}  // namespace

Dataset parse_manifest(const std::string& text, std::filesystem::path base_dir) {
  Dataset data(std::move(base_dir));
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SampleRecord record;
    try {
      record = record_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::malformed_line, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::malformed_line, "line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      data.add(std::move(record));
    } catch (const Error& e) {
      throw Error(ErrorCode::duplicate_sample, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return data;
}

Dataset load_manifest(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open manifest '" + source.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_manifest(text, source.parent_path());
}

std::string format_manifest_line(const SampleRecord& record) { return record_to_json(record).dump(); }

void write_manifest(const Dataset& data, const std::filesystem::path& destination) {
  std::string text;
  for (const auto& g : data.problems()) {
    for (const auto& s : g.samples) {
      text += format_manifest_line(s);
      text += '\n';
    }
  }
  write_file_atomically(destination, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string_view to_string(IssueKind kind) noexcept {
  switch (kind) {
    case IssueKind::missing_label: return "missing-label";
    case IssueKind::missing_trace: return "missing-trace";
    case IssueKind::count_mismatch: return "count-mismatch";
    case IssueKind::token_count_mismatch: return "token-count-mismatch";
    case IssueKind::unreadable_trace: return "unreadable-trace";
  }
  return "unknown";
}

std::vector<ValidationIssue> validate_dataset(const Dataset& data, std::size_t expected_samples, bool check_traces) {
  std::vector<ValidationIssue> issues;
  for (const auto& g : data.problems()) {
    if (g.samples.size() != expected_samples) {
      issues.push_back({IssueKind::count_mismatch, g.problem_id, {},
                        "has " + std::to_string(g.samples.size()) + " samples, expected " +
                            std::to_string(expected_samples)});
    }
    for (const auto& s : g.samples) {
      if (!s.label) issues.push_back({IssueKind::missing_label, g.problem_id, s.sample_id, "label is null"});
      const auto location = data.trace_location(s);
      std::error_code ec;
      if (s.trace_path.empty() || !std::filesystem::is_regular_file(location, ec)) {
        issues.push_back({IssueKind::missing_trace, g.problem_id, s.sample_id,
                          s.trace_path.empty() ? "trace_path is empty" : "no file at " + location.string()});
        continue;
      }
      if (!check_traces) continue;
      try {
        const auto [header, offset] = read_header_block(location);
        const auto expected = offset + 4 * payload_size(header);
        const auto actual = std::filesystem::file_size(location);
        if (actual != expected) {
          issues.push_back({IssueKind::unreadable_trace, g.problem_id, s.sample_id,
                            std::string(actual < expected ? "truncated" : "trailing bytes") + ": expected " +
                                std::to_string(expected) + " bytes, got " + std::to_string(actual)});
          continue;
        }
        if (header.token_count != s.reasoning_token_count) {
          issues.push_back({IssueKind::token_count_mismatch, g.problem_id, s.sample_id,
                            "manifest says " + std::to_string(s.reasoning_token_count) + ", trace says " +
                                std::to_string(header.token_count)});
        }
      } catch (const Error& e) {
        issues.push_back({IssueKind::unreadable_trace, g.problem_id, s.sample_id, e.what()});
      }
    }
  }
  return issues;
}

}  // namespace ltraj
