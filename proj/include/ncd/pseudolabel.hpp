#pragma once

// Stage-2 label construction for unlabelled novel images: confident base
// pixels, the salient novel mask, and fusion with an image-level cluster class.

#include <optional>
#include <string>
#include <vector>

#include "ncd/core.hpp"
#include "ncd/segmenter.hpp"

namespace ncd {

inline constexpr std::size_t kMinNovelPixels = 16;

struct PseudoLabelRecord {
  std::string image_id;
  LabelMap base_labels;
  NovelMask novel_mask;
  /// Base labels plus the cluster class on the novel mask; equals base_labels
  /// until a cluster is assigned.
  LabelMap fused;
  /// Assigned class id (>= n_base); empty when the image was not clustered.
  std::optional<ClassId> cluster_class;
  std::optional<int> cluster_index;
  /// False once the clustering labels were discarded (unclean split).
  bool labels_valid = true;

  std::size_t novel_pixels() const { return novel_mask.count(); }
  bool clusterable(std::size_t min_pixels = kMinNovelPixels) const { return novel_pixels() >= min_pixels; }
};

/// Argmax base class where the top probability exceeds tau, 0 elsewhere.
LabelMap confident_base_labels(const ProbMap& prob, double tau);

/// saliency AND (base_labels == 0), pixelwise.
NovelMask novel_salient_mask(const SaliencyMask& saliency, const LabelMap& base_labels);

/// Base label where nonzero, cluster_class on the mask, 0 elsewhere. Throws when
/// the mask overlaps a nonzero base label.
LabelMap fuse_labels(const LabelMap& base_labels, const NovelMask& mask, ClassId cluster_class);

/// Runs the base model over every novel image and builds unclustered records.
std::vector<PseudoLabelRecord> build_pseudo_labels(const LinearSegmenter& base_model, const Dataset& novel,
                                                   double tau);

/// Fixes the cluster class of a record and recomputes its fused labels.
void assign_cluster(PseudoLabelRecord& record, int cluster_index, ClassId cluster_class);

}  // namespace ncd
