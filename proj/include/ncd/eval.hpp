#pragma once

// Confusion matrices, mIoU, and novel-channel to ground-truth matching.

#include <cstdint>
#include <string>
#include <vector>

#include "ncd/clustering.hpp"
#include "ncd/core.hpp"
#include "ncd/segmenter.hpp"

namespace ncd {

class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  ConfusionMatrix(int n_pred, int n_gt) : n_pred_(n_pred), n_gt_(n_gt), counts_(static_cast<std::size_t>(n_pred) * n_gt, 0) {}

  int n_pred() const { return n_pred_; }
  int n_gt() const { return n_gt_; }
  std::uint64_t at(int pred, int gt) const { return counts_[static_cast<std::size_t>(pred) * n_gt_ + gt]; }
  std::uint64_t& at(int pred, int gt) { return counts_[static_cast<std::size_t>(pred) * n_gt_ + gt]; }
  std::uint64_t total() const;

  /// Rows [pred_begin, pred_end) x columns [gt_begin, gt_end).
  ConfusionMatrix block(int pred_begin, int pred_end, int gt_begin, int gt_end) const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int n_pred_ = 0;
  int n_gt_ = 0;
  std::vector<std::uint64_t> counts_;
};

/// Adds one image; pixels where either map holds the ignore id are skipped.
void accumulate(ConfusionMatrix& m, const LabelMap& pred, const LabelMap& gt);
ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int n_pred, int n_gt);

/// Mean IoU over `classes` of a square matrix; classes absent from both pred
/// and gt are left out of the mean. Throws if every class is absent.
double miou(const ConfusionMatrix& m, const std::vector<int>& classes);
/// IoU of one class, or NaN when absent from both.
double class_iou(const ConfusionMatrix& m, int cls);

enum class MatchMode { one_to_one, many_to_one };

std::string to_string(MatchMode mode);
MatchMode match_mode_for(ClusterMode mode);

struct ClusterMapping {
  MatchMode mode = MatchMode::one_to_one;
  /// target[j]: ground-truth novel class index (0-based within the novel block)
  /// for predicted novel channel j.
  std::vector<int> target;
  std::uint64_t matched_pixels = 0;
};

/// Maximum-weight assignment for a square count matrix: result[row] = column.
std::vector<int> hungarian_max(const std::vector<std::vector<std::int64_t>>& weights);

/// Rows are predicted novel channels, columns ground-truth novel classes.
ClusterMapping match_clusters(const ConfusionMatrix& novel_block, MatchMode mode);

struct EvalReport {
  double base_miou = 0.0;
  double novel_miou = 0.0;
  double all_miou = 0.0;
  ClusterMapping mapping;
  /// In ground-truth class space after remapping.
  ConfusionMatrix confusion;

  std::string to_key_value() const;
  static std::string csv_header();
  std::string csv_row(const std::string& run_label) const;
};

/// Predicts every val image, matches novel channels transductively on the val
/// split, remaps and scores.
EvalReport evaluate(const LinearSegmenter& model, const Dataset& val, MatchMode mode);

}  // namespace ncd
