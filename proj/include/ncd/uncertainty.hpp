#pragma once

// Entropy-based uncertainty: normalised entropy maps, per-image foreground
// entropy, and the clean/unclean split with its one-shot reassignment.

#include <map>
#include <string>
#include <vector>

#include "ncd/core.hpp"

namespace ncd {

/// H x W map of normalised entropies in [0, 1].
class EntropyMap {
 public:
  EntropyMap(int height, int width) : height_(height), width_(width), values_(static_cast<std::size_t>(height) * width) {}
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixels() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

 private:
  int height_;
  int width_;
  std::vector<double> values_;
};

using ScoreMap = std::map<std::string, double>;

struct SplitState {
  std::vector<std::string> clean;
  std::vector<std::string> unclean;
  ScoreMap scores;
  double lambda = 1.0;
  bool reassigned = false;
  /// Ids whose clustering labels were dropped by reassignment.
  std::vector<std::string> discarded;

  bool is_clean(const std::string& id) const;
};

/// Per-pixel Shannon entropy divided by log(C), with 0 log 0 = 0.
EntropyMap entropy_map(const ProbMap& prob, int n_classes);

/// Mean entropy over mask pixels; throws on an empty mask.
double foreground_entropy(const EntropyMap& e, const NovelMask& mask);

/// Ascending sort by score (ties by id); the first floor(lambda * N), at least
/// one, are clean.
SplitState rank_split(const ScoreMap& scores, double lambda);

/// Keeps the floor(|clean| / 2) (at least one) lowest fresh scores clean and
/// moves the rest to unclean, discarding their clustering labels. One shot.
SplitState dynamic_reassign(const SplitState& state, const ScoreMap& fresh_scores);

/// rank_split plus images that could not be scored, appended to unclean with
/// an infinite score.
SplitState rank_split_with_unscored(const ScoreMap& scores, const std::vector<std::string>& unscored, double lambda);

}  // namespace ncd
