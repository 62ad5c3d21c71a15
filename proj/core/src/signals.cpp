#include "ltraj/signals.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ltraj/error.hpp"

namespace ltraj {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> widen(std::span<const float> v) { return {v.begin(), v.end()}; }

std::vector<double> difference(std::span<const float> later, std::span<const float> earlier) {
  std::vector<double> out(later.size());
  for (std::size_t i = 0; i < later.size(); ++i) {
    out[i] = static_cast<double>(later[i]) - static_cast<double>(earlier[i]);
  }
  return out;
}

void require_trajectory(const Trace& segments) {
  if (segments.positions() < 2) {
    throw Error(ErrorCode::too_few_segments,
                "trajectory signals need at least 2 segments, got " + std::to_string(segments.positions()));
  }
}

void require_layer(const Trace& segments, std::size_t layer) {
  if (layer >= segments.layers()) {
    throw Error(ErrorCode::out_of_range,
                "layer " + std::to_string(layer) + " of " + std::to_string(segments.layers()));
  }
}

double mean_ignoring_nan(const std::vector<double>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

SignalScore to_score(const LayerSignalVector& layers, const Trace& segments) {
  return SignalScore{layers.metric, layers.layer_mean, segments.positions(), std::nullopt};
}

double angle_between(std::span<const double> a, std::span<const double> b) {
  const double c = dot(a, b) / (norm(a) * norm(b));
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace

std::string_view metric_name(Metric metric) noexcept {
  switch (metric) {
    case Metric::net_change: return "net_change";
    case Metric::cumulative_change: return "cumulative_change";
    case Metric::aligned_change: return "aligned_change";
    case Metric::layer_magnitude: return "layer_magnitude";
    case Metric::layer_angle: return "layer_angle";
    case Metric::logit_margin: return "logit_margin";
    case Metric::entropy: return "entropy";
    case Metric::perplexity: return "perplexity";
    case Metric::combined: return "combined";
  }
  return "unknown";
}

std::optional<Metric> parse_metric(std::string_view name) noexcept {
  for (const auto m : kSampleMetrics) {
    if (metric_name(m) == name) return m;
  }
  if (name == "combined") return Metric::combined;
  return std::nullopt;
}

Orientation orientation(Metric metric) noexcept {
  return metric == Metric::cumulative_change ? Orientation::lower_is_better : Orientation::higher_is_better;
}

std::vector<double> drift_vector(const Trace& segments, std::size_t layer) {
  require_trajectory(segments);
  require_layer(segments, layer);
  return difference(segments.state(segments.positions() - 1, layer), segments.state(0, layer));
}

std::vector<std::vector<double>> update_vectors(const Trace& segments, std::size_t layer) {
  require_trajectory(segments);
  require_layer(segments, layer);
  std::vector<std::vector<double>> out;
  out.reserve(segments.positions() - 1);
  for (std::size_t n = 1; n < segments.positions(); ++n) {
    out.push_back(difference(segments.state(n, layer), segments.state(n - 1, layer)));
  }
  return out;
}

LayerSignalVector net_change_layers(const Trace& segments) {
  require_trajectory(segments);
  const auto N = static_cast<double>(segments.positions());
  LayerSignalVector out{Metric::net_change, {}, 0.0};
  for (std::size_t l = 0; l < segments.layers(); ++l) out.per_layer.push_back(norm(drift_vector(segments, l)) / N);
  out.layer_mean = mean_ignoring_nan(out.per_layer);
  return out;
}

LayerSignalVector cumulative_change_layers(const Trace& segments) {
  require_trajectory(segments);
  LayerSignalVector out{Metric::cumulative_change, {}, 0.0};
  for (std::size_t l = 0; l < segments.layers(); ++l) {
    double path = 0.0;
    for (const auto& v : update_vectors(segments, l)) path += norm(v);
    out.per_layer.push_back(path);
  }
  out.layer_mean = mean_ignoring_nan(out.per_layer);
  return out;
}

LayerSignalVector aligned_change_layers(const Trace& segments) {
  require_trajectory(segments);
  LayerSignalVector out{Metric::aligned_change, {}, 0.0};
  for (std::size_t l = 0; l < segments.layers(); ++l) {
    const auto u = drift_vector(segments, l);
    const double u_norm = norm(u);
    double sum = 0.0;
    std::size_t terms = 0;
    if (u_norm >= kDegenerateEps) {
      for (const auto& v : update_vectors(segments, l)) {
        const double v_norm = norm(v);
        if (v_norm < kDegenerateEps) continue;
        sum += std::clamp(dot(v, u) / (v_norm * u_norm), -1.0, 1.0);
        ++terms;
      }
    }
    out.per_layer.push_back(terms == 0 ? std::numeric_limits<double>::quiet_NaN()
                                       : sum / static_cast<double>(terms));
  }
  out.layer_mean = mean_ignoring_nan(out.per_layer);
  if (std::isnan(out.layer_mean)) {
    throw Error(ErrorCode::degenerate, "aligned change undefined: no layer has a nonzero drift and update");
  }
  return out;
}

SignalScore net_change(const Trace& segments) { return to_score(net_change_layers(segments), segments); }
SignalScore cumulative_change(const Trace& segments) { return to_score(cumulative_change_layers(segments), segments); }
SignalScore aligned_change(const Trace& segments) { return to_score(aligned_change_layers(segments), segments); }

SignalScore layer_magnitude(const Trace& segments) {
  const auto L = segments.layers();
  if (L < 2) throw Error(ErrorCode::invariant, "layer magnitude needs at least 2 layers");
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t n = 0; n < segments.positions(); ++n) {
    const double span = norm(difference(segments.state(n, L - 1), segments.state(n, 0)));
    if (span < kDegenerateEps) continue;
    double steps = 0.0;
    for (std::size_t l = 1; l < L; ++l) steps += norm(difference(segments.state(n, l), segments.state(n, l - 1)));
    total += steps / span / static_cast<double>(L);
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::degenerate, "layer magnitude: every segment has zero first-to-last span");
  return {Metric::layer_magnitude, total / static_cast<double>(used), segments.positions(), std::nullopt};
}

SignalScore layer_angle(const Trace& segments) {
  const auto L = segments.layers();
  if (L < 2) throw Error(ErrorCode::invariant, "layer angle needs at least 2 layers");
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t n = 0; n < segments.positions(); ++n) {
    std::vector<std::vector<double>> h;
    std::vector<double> norms;
    for (std::size_t l = 0; l < L; ++l) {
      h.push_back(widen(segments.state(n, l)));
      norms.push_back(norm(h.back()));
    }
    if (norms.front() < kDegenerateEps || norms.back() < kDegenerateEps) continue;
    // Parallel endpoints make the normalizer vanish; acos is too steep near 1
    // to compare the angle itself against eps, so test 1 - cos instead.
    const double span_cos = dot(h.back(), h.front()) / (norms.back() * norms.front());
    if (1.0 - span_cos < kDegenerateEps) continue;
    const double span = std::acos(std::clamp(span_cos, -1.0, 1.0));
    double sum = 0.0;
    std::size_t terms = 0;
    for (std::size_t l = 1; l < L; ++l) {
      if (norms[l] < kDegenerateEps || norms[l - 1] < kDegenerateEps) continue;
      sum += angle_between(h[l], h[l - 1]);
      ++terms;
    }
    if (terms == 0) continue;
    // (1/L) * sum over the L-1 transitions, rescaled if any were skipped.
    const double transitions = static_cast<double>(L - 1);
    total += (sum / static_cast<double>(terms)) * transitions / static_cast<double>(L) / span;
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::degenerate, "layer angle: no segment has a nonzero first-to-last angle");
  return {Metric::layer_angle, total / static_cast<double>(used), segments.positions(), std::nullopt};
}

SignalScore trace_signal(Metric metric, const Trace& segments) {
  switch (metric) {
    case Metric::net_change: return net_change(segments);
    case Metric::cumulative_change: return cumulative_change(segments);
    case Metric::aligned_change: return aligned_change(segments);
    case Metric::layer_magnitude: return layer_magnitude(segments);
    case Metric::layer_angle: return layer_angle(segments);
    default: break;
  }
  throw Error(ErrorCode::config, std::string(metric_name(metric)) + " is not a trace metric");
}

// ---------------------------------------------------------------------------

AnswerLogitSummary::AnswerLogitSummary(std::vector<double> top_logits, std::optional<double> tail_mass)
    : top_logits_(std::move(top_logits)), tail_mass_(tail_mass) {
  if (top_logits_.size() < 2) throw Error(ErrorCode::invariant, "need at least 2 logits");
  if (!std::is_sorted(top_logits_.rbegin(), top_logits_.rend())) {
    throw Error(ErrorCode::invariant, "logits must be sorted descending");
  }
  for (const double v : top_logits_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, "non-finite logit");
  }
  if (tail_mass_ && !(*tail_mass_ >= 0.0 && *tail_mass_ < 1.0)) {
    throw Error(ErrorCode::invariant, "tail_mass must lie in [0, 1)");
  }
}

std::vector<double> AnswerLogitSummary::probabilities() const {
  const double top = top_logits_.front();
  std::vector<double> p;
  p.reserve(top_logits_.size());
  double z = 0.0;
  for (const double v : top_logits_) {
    p.push_back(std::exp(v - top));
    z += p.back();
  }
  const double scale = (1.0 - tail_mass_.value_or(0.0)) / z;
  for (double& x : p) x *= scale;
  return p;
}

double output_margin(const AnswerLogitSummary& logits) { return logits.top_logits()[0] - logits.top_logits()[1]; }

double output_entropy(const AnswerLogitSummary& logits) {
  double h = 0.0;
  for (const double p : logits.probabilities()) {
    if (p > 0.0) h -= p * std::log(p);
  }
  if (const auto tail = logits.tail_mass(); tail && *tail > 0.0) h -= *tail * std::log(*tail);
  return h;
}

double output_perplexity(const AnswerLogitSummary& logits) { return 1.0 / logits.probabilities().front(); }

double output_signal(Metric metric, const AnswerLogitSummary& logits) {
  switch (metric) {
    case Metric::logit_margin: return output_margin(logits);
    case Metric::entropy: return output_entropy(logits);
    case Metric::perplexity: return output_perplexity(logits);
    default: break;
  }
  throw Error(ErrorCode::config, std::string(metric_name(metric)) + " is not an output metric");
}

// ---------------------------------------------------------------------------

void WeightVector::validate() const {
  double sum = 0.0;
  for (const double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw Error(ErrorCode::config, "weights must lie in [0, 1]");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::config, "weights sum to " + std::to_string(sum));
}

double combined_score(const std::map<Metric, double>& scores, const WeightVector& weights) {
  weights.validate();
  double total = 0.0;
  for (std::size_t i = 0; i < kTrajectoryMetrics.size(); ++i) {
    const auto metric = kTrajectoryMetrics[i];
    const auto it = scores.find(metric);
    if (it == scores.end()) {
      throw Error(ErrorCode::missing_value, "combined score needs " + std::string(metric_name(metric)));
    }
    const double sign = orientation(metric) == Orientation::lower_is_better ? -1.0 : 1.0;
    total += weights.weights[i] * sign * weights.stats[i].apply(it->second);
  }
  return total;
}

// ---------------------------------------------------------------------------

Trace as_segments(const Trace& trace, const SegmentationConfig& config) {
  if (trace.kind() == StorageKind::segments && trace.header().segment_size == config.segment_size) {
    if (trace.positions() < config.min_segments) {
      throw Error(ErrorCode::too_few_segments, "stored trace has " + std::to_string(trace.positions()) +
                                                   " segment(s), need " + std::to_string(config.min_segments));
    }
    if (!config.include_trailing_partial && stored_segment_tokens(trace.header(), trace.positions() - 1) <
                                                 *trace.header().segment_size) {
      return segment_trace(trace, config);
    }
    return trace;
  }
  return segment_trace(trace, config);
}

std::vector<CheckpointSignals> partial_signals(const Trace& trace, std::uint64_t stride,
                                               const SegmentationConfig& config) {
  config.validate();
  if (stride == 0 || stride % config.segment_size != 0) {
    throw Error(ErrorCode::config, "checkpoint stride " + std::to_string(stride) +
                                       " must be a positive multiple of the segment size " +
                                       std::to_string(config.segment_size));
  }
  const std::uint64_t total =
      trace.kind() == StorageKind::tokens ? static_cast<std::uint64_t>(trace.positions()) : trace.token_count();
  std::vector<std::uint64_t> checkpoints;
  for (std::uint64_t c = stride; c < total; c += stride) checkpoints.push_back(c);
  checkpoints.push_back(total);

  std::vector<CheckpointSignals> out;
  for (const auto c : checkpoints) {
    const bool full = c == total;
    std::optional<Trace> seg;
    try {
      seg.emplace(full ? as_segments(trace, config) : as_segments(truncate_to_checkpoint(trace, c), config));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::too_few_segments) continue;
      throw;
    }
    CheckpointSignals cp{c, full, {}};
    cp.scores.push_back(net_change(*seg));
    cp.scores.push_back(cumulative_change(*seg));
    if (full) {
      try {
        cp.scores.push_back(aligned_change(*seg));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::degenerate) throw;
      }
    }
    for (auto& s : cp.scores) s.checkpoint_tokens = c;
    out.push_back(std::move(cp));
  }
  return out;
}

}  // namespace ltraj
