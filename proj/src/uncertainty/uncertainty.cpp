#include "ncd/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace ncd {

bool SplitState::is_clean(const std::string& id) const {
  return std::find(clean.begin(), clean.end(), id) != clean.end();
}

EntropyMap entropy_map(const ProbMap& prob, int n_classes) {
  if (n_classes < 2) throw Error("entropy needs at least two classes");
  if (n_classes != prob.channels()) throw ShapeError("class count differs from the probability channels");
  const double norm = 1.0 / std::log(static_cast<double>(n_classes));
  EntropyMap out(prob.height(), prob.width());
  for (std::size_t i = 0; i < prob.pixels(); ++i) {
    double h = 0.0;
    for (double p : prob.pixel(i))
      if (p > 0.0) h -= p * std::log(p);
    out[i] = std::clamp(h * norm, 0.0, 1.0);
  }
  return out;
}

double foreground_entropy(const EntropyMap& e, const NovelMask& mask) {
  if (e.height() != mask.height() || e.width() != mask.width()) throw ShapeError("entropy map and mask differ in shape");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < e.pixels(); ++i)
    if (mask[i]) {
      sum += e[i];
      ++n;
    }
  if (n == 0) throw Error("foreground entropy of an empty mask");
  return sum / static_cast<double>(n);
}

namespace {

std::vector<std::pair<double, std::string>> sorted_by_score(const ScoreMap& scores) {
  std::vector<std::pair<double, std::string>> v;
  v.reserve(scores.size());
  for (const auto& [id, s] : scores) v.emplace_back(s, id);
  std::sort(v.begin(), v.end());
  return v;
}

std::size_t keep_count(double ratio, std::size_t n) {
  auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n);
}

}  // namespace

SplitState rank_split(const ScoreMap& scores, double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in (0,1]");
  if (scores.empty()) throw Error("rank_split over an empty score map");
  SplitState s;
  s.lambda = lambda;
  s.scores = scores;
  const auto ranked = sorted_by_score(scores);
  const std::size_t n_clean = keep_count(lambda, ranked.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) (i < n_clean ? s.clean : s.unclean).push_back(ranked[i].second);
  return s;
}

SplitState rank_split_with_unscored(const ScoreMap& scores, const std::vector<std::string>& unscored, double lambda) {
  SplitState s = rank_split(scores, lambda);
  for (const auto& id : unscored) {
    s.unclean.push_back(id);
    s.scores[id] = std::numeric_limits<double>::infinity();
  }
  return s;
}

SplitState dynamic_reassign(const SplitState& state, const ScoreMap& fresh_scores) {
  if (state.reassigned) throw Error("dynamic reassignment already applied");
  ScoreMap clean_scores;
  for (const auto& id : state.clean) {
    auto it = fresh_scores.find(id);
    if (it == fresh_scores.end()) throw Error("no fresh score for clean image '" + id + "'");
    clean_scores[id] = it->second;
  }
  SplitState out = state;
  out.reassigned = true;
  out.clean.clear();
  if (clean_scores.empty()) return out;
  const auto ranked = sorted_by_score(clean_scores);
  const std::size_t keep = keep_count(0.5, ranked.size());
  std::vector<std::string> moved;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& id = ranked[i].second;
    out.scores[id] = ranked[i].first;
    if (i < keep)
      out.clean.push_back(id);
    else
      moved.push_back(id);
  }
  out.unclean.insert(out.unclean.begin(), moved.begin(), moved.end());
  out.discarded.insert(out.discarded.end(), moved.begin(), moved.end());
  return out;
}

}  // namespace ncd
