#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <unistd.h>

namespace ltraj::testing {

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (const double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> minus(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

constexpr double kEps = 1e-12;

TraceHeader header_of(const States& s) {
  TraceHeader h;
  h.model_id = "oracle";
  h.problem_id = "p";
  h.sample_id = "s";
  h.num_layers = static_cast<std::uint32_t>(s.front().size());
  h.hidden_dim = static_cast<std::uint32_t>(s.front().front().size());
  h.position_count = s.size();
  return h;
}

std::vector<float> flatten(const States& s) {
  std::vector<float> v;
  for (const auto& pos : s)
    for (const auto& layer : pos)
      for (const double x : layer) v.push_back(static_cast<float>(x));
  return v;
}

}  // namespace

Trace segment_trace_of(const States& s, std::uint32_t segment_size) {
  auto h = header_of(s);
  h.kind = StorageKind::segments;
  h.segment_size = segment_size;
  h.token_count = s.size() * segment_size;
  return Trace(h, flatten(s));
}

Trace token_trace_of(const States& s) {
  auto h = header_of(s);
  h.kind = StorageKind::tokens;
  h.token_count = s.size();
  return Trace(h, flatten(s));
}

States states_of(const Trace& t) {
  States s(t.positions(), std::vector<std::vector<double>>(t.layers(), std::vector<double>(t.dim())));
  const auto v = t.values();
  std::size_t idx = 0;
  for (auto& pos : s)
    for (auto& layer : pos)
      for (auto& x : layer) x = v[idx++];
  return s;
}

States random_states(Rng& rng, std::size_t n, std::size_t layers, std::size_t dim, double scale) {
  States s(n, std::vector<std::vector<double>>(layers, std::vector<double>(dim)));
  for (auto& pos : s)
    for (auto& layer : pos)
      for (auto& x : layer) x = static_cast<float>(scale * rng.normal());
  return s;
}

double oracle_net(const States& s) {
  const std::size_t n = s.size(), layers = s[0].size();
  double total = 0.0;
  for (std::size_t l = 0; l < layers; ++l) total += norm(minus(s[n - 1][l], s[0][l]));
  return total / static_cast<double>(layers) / static_cast<double>(n);
}

double oracle_cumulative(const States& s) {
  const std::size_t n = s.size(), layers = s[0].size();
  double total = 0.0;
  for (std::size_t l = 0; l < layers; ++l)
    for (std::size_t t = 1; t < n; ++t) total += norm(minus(s[t][l], s[t - 1][l]));
  return total / static_cast<double>(layers);
}

double oracle_aligned(const States& s) {
  const std::size_t n = s.size(), layers = s[0].size();
  double outer = 0.0;
  std::size_t kept_layers = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto u = minus(s[n - 1][l], s[0][l]);
    const double nu = norm(u);
    if (nu < kEps) continue;
    double inner = 0.0;
    std::size_t kept = 0;
    for (std::size_t t = 1; t < n; ++t) {
      const auto v = minus(s[t][l], s[t - 1][l]);
      const double nv = norm(v);
      if (nv < kEps) continue;
      inner += dot(v, u) / (nv * nu);
      ++kept;
    }
    if (kept == 0) continue;
    outer += inner / static_cast<double>(kept);
    ++kept_layers;
  }
  return outer / static_cast<double>(kept_layers);
}

double oracle_layer_magnitude(const States& s) {
  const std::size_t layers = s[0].size();
  double total = 0.0;
  std::size_t kept = 0;
  for (const auto& seg : s) {
    const double denom = norm(minus(seg[layers - 1], seg[0]));
    if (denom < kEps) continue;
    double sum = 0.0;
    for (std::size_t l = 1; l < layers; ++l) sum += norm(minus(seg[l], seg[l - 1]));
    total += sum / denom / static_cast<double>(layers);
    ++kept;
  }
  return total / static_cast<double>(kept);
}

double oracle_layer_angle(const States& s) {
  const std::size_t layers = s[0].size();
  const auto angle = [](const std::vector<double>& a, const std::vector<double>& b) {
    const double c = dot(a, b) / (norm(a) * norm(b));
    return std::acos(std::clamp(c, -1.0, 1.0));
  };
  double total = 0.0;
  std::size_t kept = 0;
  for (const auto& seg : s) {
    bool zero = false;
    for (const auto& h : seg) zero = zero || norm(h) < kEps;
    if (zero) continue;
    const double denom = angle(seg[layers - 1], seg[0]);
    if (denom < kEps) continue;
    double sum = 0.0;
    for (std::size_t l = 1; l < layers; ++l) sum += angle(seg[l], seg[l - 1]);
    total += sum / denom / static_cast<double>(layers);
    ++kept;
  }
  return total / static_cast<double>(kept);
}

double oracle_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  // rank by counting: rank = 1 + #less + (#equal - 1) / 2
  const auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (const double w : v) {
        if (w < v[i]) ++less;
        if (w == v[i]) ++equal;
      }
      r[i] = 1.0 + less + (equal - 1.0) / 2.0;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

double oracle_percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double oracle_entropy(const std::vector<double>& logits, double tail_mass) {
  double z = 0.0;
  for (const double x : logits) z += std::exp(x);
  double h = 0.0;
  for (const double x : logits) {
    const double p = (1.0 - tail_mass) * std::exp(x) / z;
    if (p > 0) h -= p * std::log(p);
  }
  if (tail_mass > 0) h -= tail_mass * std::log(tail_mass);
  return h;
}

ScriptedOutcome scripted_majority(const std::vector<ScriptedSample>& c, std::size_t k) {
  const std::size_t m = std::min(k, c.size());
  std::size_t best = 0, best_count = 0;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < m; ++j) count += c[j].answer == c[i].answer ? 1 : 0;
    if (count > best_count) {  // strict: the earliest occurrence of a tied answer wins
      best = i;
      best_count = count;
    }
  }
  std::uint64_t budget = 0;
  for (std::size_t i = 0; i < m; ++i) budget += c[i].tokens;
  return {c[best].answer, c[best].correct, m, budget, budget};
}

ScriptedOutcome scripted_sequential(const std::vector<ScriptedSample>& c, double cutoff, bool leq, std::size_t k) {
  const std::size_t m = std::min(k, c.size());
  std::uint64_t used = 0, budget = 0;
  for (std::size_t i = 0; i < m; ++i) budget += c[i].tokens;
  for (std::size_t i = 0; i < m; ++i) {
    used += c[i].tokens;
    const bool hit = leq ? c[i].score <= cutoff : c[i].score >= cutoff;
    if (hit) return {c[i].answer, c[i].correct, i + 1, used, budget};
  }
  return scripted_majority(c, k);
}

TempDir::TempDir(const std::string& tag) {
  static int counter = 0;
  path_ = std::filesystem::temp_directory_path() /
          ("ltraj_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace ltraj::testing
