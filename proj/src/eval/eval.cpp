#include "ncd/eval.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace ncd {

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

ConfusionMatrix ConfusionMatrix::block(int pred_begin, int pred_end, int gt_begin, int gt_end) const {
  if (pred_begin < 0 || pred_end > n_pred_ || gt_begin < 0 || gt_end > n_gt_ || pred_begin > pred_end ||
      gt_begin > gt_end)
    throw ShapeError("confusion block out of range");
  ConfusionMatrix out(pred_end - pred_begin, gt_end - gt_begin);
  for (int p = pred_begin; p < pred_end; ++p)
    for (int g = gt_begin; g < gt_end; ++g) out.at(p - pred_begin, g - gt_begin) = at(p, g);
  return out;
}

void accumulate(ConfusionMatrix& m, const LabelMap& pred, const LabelMap& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) throw ShapeError("prediction and ground truth differ in shape");
  for (std::size_t i = 0; i < gt.pixels(); ++i) {
    if (gt[i] == kIgnoreId || pred[i] == kIgnoreId) continue;
    if (pred[i] >= m.n_pred() || gt[i] >= m.n_gt())
      throw Error("label outside the confusion matrix: pred " + std::to_string(pred[i]) + ", gt " +
                  std::to_string(gt[i]));
    ++m.at(pred[i], gt[i]);
  }
}

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int n_pred, int n_gt) {
  ConfusionMatrix m(n_pred, n_gt);
  accumulate(m, pred, gt);
  return m;
}

double class_iou(const ConfusionMatrix& m, int cls) {
  if (m.n_pred() != m.n_gt()) throw ShapeError("IoU needs a square confusion matrix");
  const std::uint64_t tp = m.at(cls, cls);
  std::uint64_t pred_sum = 0, gt_sum = 0;
  for (int j = 0; j < m.n_gt(); ++j) pred_sum += m.at(cls, j);
  for (int i = 0; i < m.n_pred(); ++i) gt_sum += m.at(i, cls);
  const std::uint64_t uni = pred_sum + gt_sum - tp;
  if (uni == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(tp) / static_cast<double>(uni);
}

double miou(const ConfusionMatrix& m, const std::vector<int>& classes) {
  if (classes.empty()) throw Error("mIoU over an empty class set");
  double sum = 0.0;
  int n = 0;
  for (int c : classes) {
    if (c < 0 || c >= m.n_gt()) throw Error("class " + std::to_string(c) + " outside the confusion matrix");
    const double iou = class_iou(m, c);
    if (std::isnan(iou)) continue;
    sum += iou;
    ++n;
  }
  if (n == 0) throw Error("every class in the mIoU set is absent from prediction and ground truth");
  return sum / n;
}

std::string to_string(MatchMode mode) { return mode == MatchMode::one_to_one ? "one-to-one" : "many-to-one"; }

MatchMode match_mode_for(ClusterMode mode) {
  return mode == ClusterMode::exact ? MatchMode::one_to_one : MatchMode::many_to_one;
}

std::vector<int> hungarian_max(const std::vector<std::vector<std::int64_t>>& weights) {
  const int n = static_cast<int>(weights.size());
  for (const auto& row : weights)
    if (static_cast<int>(row.size()) != n) throw ShapeError("assignment matrix must be square");
  if (n == 0) return {};
  // Shortest augmenting path with potentials on cost = -weight (1-based arrays).
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      std::int64_t delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const std::int64_t cur = -weights[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n);
  for (int j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

ClusterMapping match_clusters(const ConfusionMatrix& block, MatchMode mode) {
  if (block.n_pred() == 0 || block.n_gt() == 0) throw Error("empty novel confusion block");
  ClusterMapping out;
  out.mode = mode;
  if (mode == MatchMode::one_to_one) {
    if (block.n_pred() != block.n_gt()) throw ShapeError("one-to-one matching needs a square novel block");
    std::vector<std::vector<std::int64_t>> w(block.n_pred(), std::vector<std::int64_t>(block.n_gt()));
    for (int i = 0; i < block.n_pred(); ++i)
      for (int j = 0; j < block.n_gt(); ++j) w[i][j] = static_cast<std::int64_t>(block.at(i, j));
    out.target = hungarian_max(w);
  } else {
    out.target.resize(block.n_pred());
    for (int i = 0; i < block.n_pred(); ++i) {
      int best = 0;
      for (int j = 1; j < block.n_gt(); ++j)
        if (block.at(i, j) > block.at(i, best)) best = j;
      out.target[i] = best;
    }
  }
  for (int i = 0; i < block.n_pred(); ++i) out.matched_pixels += block.at(i, out.target[i]);
  return out;
}

EvalReport evaluate(const LinearSegmenter& model, const Dataset& val, MatchMode mode) {
  const ClassSpace& cs = model.class_space();
  if (val.class_space.n_base != cs.n_base || val.class_space.n_novel != cs.n_novel)
    throw ConfigError("validation class space differs from the model's");
  if (model.channels() != cs.channels()) throw ShapeError("evaluation needs a novel model");
  const int n_gt = cs.n_total();

  std::vector<LabelMap> preds;
  preds.reserve(val.size());
  ConfusionMatrix raw(cs.channels(), n_gt);
  for (const auto& item : val.items) {
    if (!item.labels) throw Error("val item '" + item.id + "' has no labels");
    preds.push_back(predict(model, item.features));
    accumulate(raw, preds.back(), *item.labels);
  }

  EvalReport report;
  report.mapping = match_clusters(raw.block(cs.n_base, cs.channels(), cs.n_base, n_gt), mode);
  ConfusionMatrix& m = report.confusion = ConfusionMatrix(n_gt, n_gt);
  for (std::size_t k = 0; k < val.size(); ++k) {
    LabelMap remapped = preds[k];
    for (std::size_t i = 0; i < remapped.pixels(); ++i)
      if (remapped[i] >= cs.n_base)
        remapped[i] = static_cast<ClassId>(cs.n_base + report.mapping.target[remapped[i] - cs.n_base]);
    accumulate(m, remapped, *val.items[k].labels);
  }

  std::vector<int> base_ids(cs.n_base), novel_ids(cs.n_novel), all_ids(n_gt);
  std::iota(base_ids.begin(), base_ids.end(), 0);
  std::iota(novel_ids.begin(), novel_ids.end(), cs.n_base);
  std::iota(all_ids.begin(), all_ids.end(), 0);
  report.base_miou = miou(m, base_ids);
  report.novel_miou = miou(m, novel_ids);
  report.all_miou = miou(m, all_ids);
  return report;
}

std::string EvalReport::to_key_value() const {
  std::ostringstream os;
  os.precision(17);
  os << "base_miou = " << base_miou << "\n"
     << "novel_miou = " << novel_miou << "\n"
     << "all_miou = " << all_miou << "\n"
     << "match_mode = " << to_string(mapping.mode) << "\n"
     << "mapping =";
  for (int t : mapping.target) os << ' ' << t;
  os << "\n";
  return os.str();
}

std::string EvalReport::csv_header() { return "run,base_miou,novel_miou,all_miou,match_mode"; }

std::string EvalReport::csv_row(const std::string& run_label) const {
  std::ostringstream os;
  os.precision(17);
  os << run_label << ',' << base_miou << ',' << novel_miou << ',' << all_miou << ',' << to_string(mapping.mode);
  return os.str();
}

}  // namespace ncd
