#include "ltraj/path_classifier.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "ltraj/error.hpp"
#include "ltraj/rng.hpp"

namespace ltraj {

namespace {

constexpr double kMinGain = 1e-12;

struct Split {
  double gain = 0.0;
  double threshold = 0.0;
};

double gini(std::size_t positives, std::size_t total) {
  if (total == 0) return 0.0;
  const double p = static_cast<double>(positives) / static_cast<double>(total);
  return 2.0 * p * (1.0 - p);
}

// Bootstrap rows are kept as per-row multiplicities. Each feature is sorted
// once per forest; nodes receive their rows in both orders via stable
// partitions of the parent's lists.
class TreeBuilder {
 public:
  using Rows = std::array<std::vector<std::uint32_t>, 2>;

  TreeBuilder(std::span<const PathFeatures> x, const std::vector<bool>& y, std::size_t max_depth,
              std::size_t min_leaf, Rng& rng)
      : x_(x), y_(y), max_depth_(max_depth), min_leaf_(min_leaf), rng_(rng) {}

  PathClassifier::Tree build(const Rows& presorted, const std::vector<std::uint32_t>& counts) {
    tree_.clear();
    counts_ = &counts;
    Rows rows;
    for (std::size_t f = 0; f < 2; ++f) {
      for (const auto r : presorted[f]) {
        if (counts[r] > 0) rows[f].push_back(r);
      }
    }
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  std::uint32_t grow(const Rows& rows, std::size_t depth) {
    const auto id = static_cast<std::uint32_t>(tree_.size());
    tree_.emplace_back();
    std::size_t total = 0, positives = 0;
    for (const auto r : rows[0]) {
      total += (*counts_)[r];
      positives += y_[r] ? (*counts_)[r] : 0;
    }
    tree_[id].votes_correct = 2 * positives > total;
    if (depth >= max_depth_ || positives == 0 || positives == total || total < 2 * min_leaf_) return id;

    const std::size_t first = static_cast<std::size_t>(rng_.below(2));
    for (const std::size_t feature : {first, 1 - first}) {
      const auto split = best_split(rows[feature], feature, total, positives);
      if (split.gain <= kMinGain) continue;
      Rows left, right;
      for (std::size_t f = 0; f < 2; ++f) {
        for (const auto r : rows[f]) (x_[r][feature] <= split.threshold ? left : right)[f].push_back(r);
      }
      tree_[id].feature = static_cast<int>(feature);
      tree_[id].threshold = split.threshold;
      const auto l = grow(left, depth + 1);
      const auto rnode = grow(right, depth + 1);
      tree_[id].left = l;
      tree_[id].right = rnode;
      return id;
    }
    return id;
  }

  // Exhaustive search over midpoints between distinct sorted values.
  Split best_split(const std::vector<std::uint32_t>& sorted, std::size_t feature, std::size_t n,
                   std::size_t positives) const {
    const double parent = gini(positives, n);
    Split best;
    std::size_t nl = 0, left_pos = 0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const auto r = sorted[i];
      const auto c = (*counts_)[r];
      nl += c;
      left_pos += y_[r] ? c : 0;
      if (i + 1 == sorted.size()) break;
      const double a = x_[r][feature];
      const double b = x_[sorted[i + 1]][feature];
      const std::size_t nr = n - nl;
      if (!(a < b) || nl < min_leaf_ || nr < min_leaf_) continue;
      const double child = (static_cast<double>(nl) * gini(left_pos, nl) +
                            static_cast<double>(nr) * gini(positives - left_pos, nr)) /
                           static_cast<double>(n);
      const double gain = parent - child;
      if (gain > best.gain) {
        best.gain = gain;
        best.threshold = a + (b - a) / 2.0;
      }
    }
    return best;
  }

  std::span<const PathFeatures> x_;
  const std::vector<bool>& y_;
  std::size_t max_depth_;
  std::size_t min_leaf_;
  Rng& rng_;
  const std::vector<std::uint32_t>* counts_ = nullptr;
  PathClassifier::Tree tree_;
};

bool tree_vote(const PathClassifier::Tree& tree, const PathFeatures& x) {
  std::uint32_t node = 0;
  while (tree[node].feature >= 0) {
    const auto& n = tree[node];
    node = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return tree[node].votes_correct;
}

}  // namespace

PathClassifier PathClassifier::train(std::span<const PathFeatures> features, const std::vector<bool>& labels,
                                     const ForestConfig& config) {
  if (features.size() != labels.size()) throw Error(ErrorCode::invariant, "features and labels differ in length");
  if (features.size() < config.min_training) {
    throw Error(ErrorCode::invariant, "need at least " + std::to_string(config.min_training) +
                                          " training traces, got " + std::to_string(features.size()));
  }
  if (config.trees == 0) throw Error(ErrorCode::config, "forest needs at least one tree");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (positives == 0 || positives == labels.size()) {
    throw Error(ErrorCode::single_class, "training labels contain a single class");
  }

  PathClassifier forest;
  forest.config_ = config;
  const std::size_t n = features.size();
  const auto min_leaf = std::max<std::size_t>(
      1, static_cast<std::size_t>(config.min_leaf_fraction * static_cast<double>(n)));
  std::array<std::vector<std::uint32_t>, 2> order;
  for (std::size_t f = 0; f < 2; ++f) {
    order[f].resize(n);
    std::iota(order[f].begin(), order[f].end(), 0u);
    std::stable_sort(order[f].begin(), order[f].end(),
                     [&](std::uint32_t a, std::uint32_t b) { return features[a][f] < features[b][f]; });
  }
  std::vector<std::size_t> oob_votes(n, 0), oob_seen(n, 0);
  std::vector<std::uint32_t> counts(n);
  for (std::size_t t = 0; t < config.trees; ++t) {
    Rng rng(derive_seed(config.seed, t));
    std::fill(counts.begin(), counts.end(), 0u);
    for (std::size_t i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(rng.below(n))];
    TreeBuilder builder(features, labels, config.max_depth, min_leaf, rng);
    forest.trees_.push_back(builder.build(order, counts));
    for (std::size_t i = 0; i < n; ++i) {
      if (counts[i] > 0) continue;
      ++oob_seen[i];
      oob_votes[i] += tree_vote(forest.trees_.back(), features[i]) ? 1 : 0;
    }
  }

  std::size_t scored = 0, hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (oob_seen[i] == 0) continue;
    ++scored;
    const bool predicted = 2 * oob_votes[i] > oob_seen[i];
    hits += predicted == labels[i] ? 1 : 0;
  }
  if (scored > 0) forest.oob_accuracy_ = static_cast<double>(hits) / static_cast<double>(scored);
  return forest;
}

double PathClassifier::predict(const PathFeatures& x) const {
  std::size_t votes = 0;
  for (const auto& tree : trees_) votes += tree_vote(tree, x) ? 1 : 0;
  return static_cast<double>(votes) / static_cast<double>(trees_.size());
}

SelectionOutcome early_path_select(std::string problem_id, std::span<const PathCandidate> paths,
                                   const PathClassifier& classifier, std::uint64_t checkpoint_tokens) {
  if (paths.empty()) throw Error(ErrorCode::invariant, "early path selection over no paths");
  const bool any_reached = std::any_of(paths.begin(), paths.end(), [&](const PathCandidate& p) {
    return p.total_tokens > checkpoint_tokens;
  });

  std::size_t best = 0;
  double best_p = -1.0;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& p = paths[i];
    const bool ended_early = p.total_tokens <= checkpoint_tokens;
    const auto& f = ended_early ? p.full_features : p.checkpoint_features;
    if (!f) {
      throw Error(ErrorCode::missing_value, problem_id + ": path " + std::to_string(i + 1) +
                                                (ended_early ? " has no full-trace features"
                                                             : " has no checkpoint features"));
    }
    const double prob = classifier.predict(*f);
    if (prob > best_p) {
      best_p = prob;
      best = i;
    }
  }

  SelectionOutcome out;
  out.problem_id = std::move(problem_id);
  out.chosen_answer = paths[best].answer;
  out.correct = paths[best].label;
  out.samples_used = paths.size();
  out.method = SelectionMethod::early_path;
  out.chosen_index = best;
  out.short_trace_fallback = !any_reached;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    out.budget_tokens += paths[i].total_tokens;
    out.tokens_used += i == best ? paths[i].total_tokens : std::min(paths[i].total_tokens, checkpoint_tokens);
  }
  return out;
}

}  // namespace ltraj
