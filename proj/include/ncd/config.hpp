#pragma once

// Run configuration and its flat "section.key = value" text format.
//
//   # comment
//   scene.sigma = 0.5
//   eums.lambda = 0.67
//   ablation.self_training = true
//   run.seeds = 0,1,2,3,4
//
// Unknown keys are rejected. Every key is optional; defaults reproduce the
// reference hyper-parameters.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ncd/clustering.hpp"
#include "ncd/segmenter.hpp"
#include "ncd/selftrain.hpp"
#include "ncd/synth.hpp"

namespace ncd {

/// Generation parameters for a SceneSpec (prototypes are drawn from a seed).
struct SceneConfig {
  int height = 32;
  int width = 32;
  int feature_dim = 8;
  double sigma = 0.5;
  double instance_sigma = 0.0;
  double separation = 3.0;
  std::uint64_t prototype_seed = 7;
  int min_objects = 1;
  int max_objects = 3;
  synth::ShapeFamily shapes = synth::ShapeFamily::mixed;
  /// Number of novel classes (the first ones) given a second appearance mode.
  int bimodal_novel = 0;

  synth::SceneSpec build(int n_classes, int first_novel) const;
};

struct RunConfig {
  SceneConfig scene;
  synth::FoldSpec fold;
  synth::SaliencyNoiseSpec saliency;
  TrainConfig base_train;
  TrainConfig novel_train;
  EumsConfig eums;
  Ablation ablation;
  std::vector<std::uint64_t> seeds{0};
  bool cache = true;

  RunConfig();

  synth::SceneSpec scene_spec() const { return scene.build(1 + fold.n_base_fg + fold.n_novel, fold.n_base()); }
  ClassSpace class_space() const;
  ClusterMode cluster_mode() const { return ablation.over_clustering ? ClusterMode::over : ClusterMode::exact; }
  void validate() const;

  /// Canonical text form; parse(to_text()) reproduces the config.
  std::string to_text() const;
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);

  /// Hashes of the settings each stage depends on, for artifact caching.
  std::string benchmark_key() const;
  std::string stage1_key(std::uint64_t seed) const;
  std::string stage2_key(std::uint64_t seed) const;
};

/// Flat key/value view used by the parser; exposed for the report command.
std::map<std::string, std::string> parse_key_values(const std::string& text);

}  // namespace ncd
