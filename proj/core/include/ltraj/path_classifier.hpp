#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ltraj/policy.hpp"

namespace ltraj {

/// (Net Change, Cumulative Change) of a partial trace at a token checkpoint.
using PathFeatures = std::array<double, 2>;

struct ForestConfig {
  std::size_t trees = 100;
  std::size_t max_depth = 4;
  std::uint64_t seed = 0;
  std::size_t min_training = 20;
  /// Smallest leaf as a share of the training rows (at least one row).
  double min_leaf_fraction = 0.03;

  bool operator==(const ForestConfig&) const = default;
};

/// Bagged ensemble of axis-aligned Gini trees. Each tree draws a bootstrap
/// resample and picks the split feature at random per node; tree t is seeded
/// from derive_seed(seed, t), so the ensemble is a pure function of
/// (features, labels, config).
class PathClassifier {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    bool votes_correct = false;

    bool operator==(const Node&) const = default;
  };
  using Tree = std::vector<Node>;

  /// Throws Error(single_class) without both labels and Error(invariant)
  /// below `config.min_training` rows.
  static PathClassifier train(std::span<const PathFeatures> features, const std::vector<bool>& labels,
                              const ForestConfig& config);

  /// Fraction of trees voting "correct", in [0, 1].
  double predict(const PathFeatures& x) const;
  std::optional<double> oob_accuracy() const noexcept { return oob_accuracy_; }
  const std::vector<Tree>& trees() const noexcept { return trees_; }
  const ForestConfig& config() const noexcept { return config_; }

  bool operator==(const PathClassifier&) const = default;

 private:
  ForestConfig config_;
  std::vector<Tree> trees_;
  std::optional<double> oob_accuracy_;
};

/// One of the k parallel generations considered by early path selection.
struct PathCandidate {
  std::string answer;  // normalized
  std::optional<bool> label;
  std::uint64_t total_tokens = 0;
  /// Signals at the checkpoint; absent when the path ended before it.
  std::optional<PathFeatures> checkpoint_features;
  /// Signals of the finished trace; used only for paths that ended early.
  std::optional<PathFeatures> full_features;
};

/// Scores every path at the checkpoint and continues the most probable one
/// (earliest on ties). Terminated paths are charged min(length, checkpoint).
/// When no path reaches the checkpoint, selection uses full-trace features
/// and the outcome is flagged.
SelectionOutcome early_path_select(std::string problem_id, std::span<const PathCandidate> paths,
                                   const PathClassifier& classifier, std::uint64_t checkpoint_tokens);

}  // namespace ltraj
