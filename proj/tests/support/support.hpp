#pragma once

// Independent reference implementations for the test suites. Nothing here
// calls into the library's numeric code: every quantity is recomputed from
// its definition with explicit loops over plain vectors.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ltraj/rng.hpp"
#include "ltraj/trace_store.hpp"

namespace ltraj::testing {

/// states[n][l][i]
using States = std::vector<std::vector<std::vector<double>>>;

Trace segment_trace_of(const States& s, std::uint32_t segment_size = 500);
Trace token_trace_of(const States& s);
/// Values exactly as stored (float32 widened to double).
States states_of(const Trace& t);
States random_states(Rng& rng, std::size_t n, std::size_t layers, std::size_t dim, double scale = 1.0);

double oracle_net(const States& s);
double oracle_cumulative(const States& s);
double oracle_aligned(const States& s);
double oracle_layer_magnitude(const States& s);
double oracle_layer_angle(const States& s);

double oracle_auc(const std::vector<double>& scores, const std::vector<bool>& labels);
double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y);
/// Sorts a copy and interpolates at p/100 * (n - 1).
double oracle_percentile(std::vector<double> v, double p);
double oracle_entropy(const std::vector<double>& logits, double tail_mass);

/// One problem's k candidates, scripted from scratch for policy replays.
struct ScriptedSample {
  std::string answer;
  bool correct;
  std::uint64_t tokens;
  double score;
};

struct ScriptedOutcome {
  std::string answer;
  bool correct;
  std::size_t samples;
  std::uint64_t tokens;
  std::uint64_t budget;
};

ScriptedOutcome scripted_majority(const std::vector<ScriptedSample>& c, std::size_t k);
/// accept_if_geq unless `leq`.
ScriptedOutcome scripted_sequential(const std::vector<ScriptedSample>& c, double cutoff, bool leq, std::size_t k);

/// Removes the directory on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::string read_text(const std::filesystem::path& p);

}  // namespace ltraj::testing
