#pragma once

// Desk-scale fold benchmarks: prototype-plus-noise features on a pixel grid,
// ground-truth label maps, and saliency masks corrupted to look like the output
// of an imperfect saliency model.

#include <cstdint>
#include <vector>

#include "ncd/core.hpp"

namespace ncd::synth {

enum class ShapeFamily { rectangles, ellipses, mixed };

struct SceneSpec {
  int height = 32;
  int width = 32;
  int feature_dim = 8;
  /// One D-vector per class id; index 0 is background.
  std::vector<std::vector<float>> prototypes;
  /// Optional second appearance mode per class id (empty entry = unimodal).
  /// Each object of a bimodal class uses one of its two prototypes at random.
  std::vector<std::vector<float>> alt_prototypes;
  /// Per-pixel isotropic gaussian noise.
  double sigma = 0.0;
  /// Per-object appearance offset, shared by every pixel of the object.
  double instance_sigma = 0.0;
  int min_objects = 1;
  int max_objects = 3;
  ShapeFamily shapes = ShapeFamily::mixed;

  int n_classes() const { return static_cast<int>(prototypes.size()); }
  void validate() const;
};

struct SaliencyNoiseSpec {
  /// Per image a radius in [-r, r] is drawn; negative erodes, positive dilates.
  int boundary_erode_dilate = 0;
  double flip_rate = 0.0;
  double miss_rate = 0.0;

  void validate() const;
};

struct FoldSpec {
  int n_base_fg = 5;
  int n_novel = 5;
  int base_images = 200;
  int novel_images = 300;
  int val_images = 100;
  /// Upper bound on novel objects in one novel-split image.
  int max_novel_objects = 1;
  std::uint64_t seed = 0;

  int n_base() const { return n_base_fg + 1; }
  ClassSpace class_space() const { return ClassSpace::exact(n_base(), n_novel); }
  void validate() const;
};

struct Benchmark {
  Dataset base;
  Dataset novel;
  Dataset val;
};

/// Prototypes on a sphere of radius `separation` around the origin (background
/// included), redrawn until pairwise distances are at least separation/2.
std::vector<std::vector<float>> random_prototypes(int n_classes, int dim, double separation, std::uint64_t seed);

/// Scene over all foreground classes of `spec`.
std::pair<FeatureMap, LabelMap> generate_scene(const SceneSpec& spec, std::uint64_t seed);

/// Scene with exactly the given objects, drawn in order (later objects occlude
/// earlier ones).
std::pair<FeatureMap, LabelMap> generate_scene(const SceneSpec& spec, std::uint64_t seed,
                                               const std::vector<int>& object_classes);

SaliencyMask generate_saliency(const LabelMap& labels, const SaliencyNoiseSpec& noise, std::uint64_t seed);

Benchmark make_fold_benchmark(const SceneSpec& scene, const FoldSpec& fold, const SaliencyNoiseSpec& noise);

/// Deterministic seed derivation (splitmix64 over the inputs).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace ncd::synth
