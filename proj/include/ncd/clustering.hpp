#pragma once

// Image-level novel class discovery: masked mean-feature pooling and k-means
// (k-means++ seeding, Lloyd iterations) over the pooled vectors.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ncd/core.hpp"
#include "ncd/pseudolabel.hpp"

namespace ncd {

using Point = std::vector<double>;

struct ClusterModel {
  int k = 0;
  std::vector<Point> centroids;
  /// assignments[i] is the cluster of input point i.
  std::vector<int> assignments;
  /// Squared distance of each point to its centroid.
  std::vector<double> distances;
  double inertia = 0.0;
  int iterations = 0;
  /// Inertia after each Lloyd update; non-increasing.
  std::vector<double> inertia_trace;
  /// For cluster_novel_images: record index each point was pooled from.
  std::vector<std::size_t> owners;
};

enum class ClusterMode { exact, over };

std::string to_string(ClusterMode mode);
ClusterMode cluster_mode_from_string(const std::string& s);

inline constexpr int kKmeansMaxIter = 300;

Point masked_mean_feature(const FeatureMap& x, const NovelMask& mask, std::size_t min_pixels = kMinNovelPixels);

ClusterModel kmeans(const std::vector<Point>& points, int k, std::uint64_t seed, int max_iter = kKmeansMaxIter);

/// Cluster j maps to class id n_base + j. Validates k against the head size of
/// `cs` for the given mode.
std::vector<ClassId> assign_cluster_classes(const ClusterModel& model, const ClassSpace& cs, ClusterMode mode);

/// Clustering stage over built pseudo-label records: pools every clusterable
/// image, runs k-means with k = cs.novel_head_size and fuses the labels.
/// Returns the fitted model; record order matches `novel`.
ClusterModel cluster_novel_images(const Dataset& novel, std::vector<PseudoLabelRecord>& records,
                                  const ClassSpace& cs, ClusterMode mode, std::uint64_t seed);

}  // namespace ncd
