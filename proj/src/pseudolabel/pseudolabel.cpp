#include "ncd/pseudolabel.hpp"

#include <algorithm>

namespace ncd {

LabelMap confident_base_labels(const ProbMap& prob, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0,1)");
  LabelMap out(prob.height(), prob.width(), kBackgroundId);
  for (std::size_t i = 0; i < prob.pixels(); ++i) {
    auto p = prob.pixel(i);
    const ClassId c = argmax_class(p);
    if (p[c] > tau) out[i] = c;
  }
  return out;
}

NovelMask novel_salient_mask(const SaliencyMask& saliency, const LabelMap& base_labels) {
  if (saliency.height() != base_labels.height() || saliency.width() != base_labels.width())
    throw ShapeError("saliency and base labels differ in shape");
  NovelMask out(saliency.height(), saliency.width());
  for (std::size_t i = 0; i < saliency.pixels(); ++i) out.set(i, saliency[i] && base_labels[i] == kBackgroundId);
  return out;
}

LabelMap fuse_labels(const LabelMap& base_labels, const NovelMask& mask, ClassId cluster_class) {
  if (mask.height() != base_labels.height() || mask.width() != base_labels.width())
    throw ShapeError("novel mask and base labels differ in shape");
  LabelMap out = base_labels;
  for (std::size_t i = 0; i < mask.pixels(); ++i) {
    if (!mask[i]) continue;
    if (base_labels[i] != kBackgroundId)
      throw Error("novel mask overlaps a confident base pixel at index " + std::to_string(i));
    out[i] = cluster_class;
  }
  return out;
}

std::vector<PseudoLabelRecord> build_pseudo_labels(const LinearSegmenter& base_model, const Dataset& novel,
                                                   double tau) {
  if (base_model.channels() != novel.class_space.n_base)
    throw ShapeError("base model channels differ from the novel split's n_base");
  std::vector<PseudoLabelRecord> records;
  records.reserve(novel.size());
  for (const auto& item : novel.items) {
    if (!item.saliency) throw Error("novel item '" + item.id + "' has no saliency mask");
    auto base_labels = confident_base_labels(forward(base_model, item.features), tau);
    auto mask = novel_salient_mask(*item.saliency, base_labels);
    LabelMap fused = base_labels;
    records.push_back({item.id, std::move(base_labels), std::move(mask), std::move(fused), std::nullopt,
                       std::nullopt, true});
  }
  return records;
}

void assign_cluster(PseudoLabelRecord& record, int cluster_index, ClassId cluster_class) {
  record.fused = fuse_labels(record.base_labels, record.novel_mask, cluster_class);
  record.cluster_class = cluster_class;
  record.cluster_index = cluster_index;
}

}  // namespace ncd
