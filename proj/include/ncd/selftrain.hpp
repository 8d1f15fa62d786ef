#pragma once

// Stage-3 novel fine-tuning: the basic loop on clustering pseudo-labels and the
// EUMS loop (entropy-ranked clean/unclean split, dynamic reassignment, mean
// teacher self-training on the unclean split).

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "ncd/core.hpp"
#include "ncd/pseudolabel.hpp"
#include "ncd/segmenter.hpp"
#include "ncd/uncertainty.hpp"

namespace ncd {

/// Feature-space augmentations. The weak view is a random horizontal flip; the
/// strong view applies the same flip plus per-channel scale jitter and additive
/// gaussian noise (the analogue of colour jitter).
struct AugmentationSpec {
  double flip_prob = 0.5;
  double strong_noise_sigma = 0.3;
  /// Channel scales are drawn from [1 - scale_jitter, 1 + scale_jitter].
  double scale_jitter = 0.2;

  void validate() const;
};

struct AugmentedPair {
  FeatureMap weak;
  FeatureMap strong;
  bool flipped = false;
};

FeatureMap hflip(const FeatureMap& x);
LabelMap hflip(const LabelMap& y);

/// Weak and strong views sharing one geometric transform.
AugmentedPair augment_pair(const FeatureMap& x, const AugmentationSpec& spec, std::mt19937_64& rng);

struct RampUp {
  double length = 5.0;  // T
  double epoch = 0.0;   // t
};

/// exp(-5 (1 - min(t, T)/T)^2).
double ramp_weight(const RampUp& r);

struct EumsConfig {
  double tau = 0.9;
  double lambda = 0.67;
  double eta = 0.0;
  double ramp_length = 5.0;
  int reassign_epoch = 5;
  double ema_momentum = 0.99;
  int epochs = 30;
  int over_factor = 2;
  AugmentationSpec augment;

  void validate() const;
};

/// Component switches, one per ablation column.
struct Ablation {
  bool over_clustering = true;
  bool entropy_ranking = true;
  bool dynamic_reassignment = true;
  bool self_training = true;

  void validate() const;
  bool is_basic() const { return !entropy_ranking; }
};

/// Argmax of the teacher prediction where its top probability exceeds eta,
/// ignore id elsewhere.
LabelMap online_pseudo_label(const ProbMap& teacher_prob, double eta);

/// Student cross-entropy on strong views against online labels. Unlike the
/// supervised loss, a fully ignored input gives (0, 0) rather than an error.
LossGrad self_training_loss(const LinearSegmenter& model, const FeatureMap& x_strong, const LabelMap& y_online);

struct StepLosses {
  double base = 0.0;
  double clean = 0.0;
  double unclean = 0.0;
  double omega = 0.0;
};

/// Unclean inputs for one step; views are generated inside overall_step.
struct UncleanBatch {
  std::vector<const FeatureMap*> images;
};

struct StepContext {
  double lr = 0.1;
  double omega = 0.0;
  double eta = 0.0;
  AugmentationSpec augment;
};

/// Basic-framework step: one SGD step on L_seg(base) + L_seg(clean).
StepLosses basic_step(LinearSegmenter& model, std::vector<double>& velocity, std::span<const Sample> base,
                      std::span<const Sample> clean, const StepContext& ctx, const TrainConfig& cfg);

/// Full step: L_seg(base) + L_seg(clean) + omega * L_d(unclean), one SGD step,
/// then an EMA update of the teacher. An empty unclean batch reduces to
/// basic_step exactly.
StepLosses overall_step(LinearSegmenter& model, TeacherState& teacher, std::vector<double>& velocity,
                        std::span<const Sample> base, std::span<const Sample> clean, const UncleanBatch& unclean,
                        const StepContext& ctx, const TrainConfig& cfg, std::mt19937_64& aug_rng);

struct EpochMetrics {
  int epoch = 0;
  double loss_base = 0.0;
  double loss_clean = 0.0;
  double loss_unclean = 0.0;
  double omega = 0.0;
  std::size_t clean_size = 0;
  std::size_t unclean_size = 0;
  double val_miou = 0.0;
};

struct LoopHooks {
  /// Validation metric for the per-epoch log; NaN when absent.
  std::function<double(const LinearSegmenter&)> val_metric;
  std::function<void(const EpochMetrics&)> on_epoch;
  /// Epoch offset for the log (the EUMS loop continues the basic loop's count).
  int epoch_offset = 0;
};

/// Cycles through a fixed id list in per-pass shuffled order.
class BatchSampler {
 public:
  BatchSampler(std::vector<std::size_t> indices, std::uint64_t seed);
  std::vector<std::size_t> next(std::size_t batch_size);
  std::size_t size() const { return indices_.size(); }

 private:
  void reshuffle();
  std::vector<std::size_t> indices_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_;
};

/// Everything the stage-3 loops read.
struct NovelTrainingData {
  const Dataset* base = nullptr;
  const Dataset* novel = nullptr;
  /// One record per novel item, same order.
  std::vector<PseudoLabelRecord>* records = nullptr;
};

/// Basic framework loop: base ground truth plus clustering pseudo-labels of
/// every clustered novel image.
void run_basic_loop(LinearSegmenter& model, const NovelTrainingData& data, const TrainConfig& cfg, std::uint64_t seed,
                    const LoopHooks& hooks = {});

/// Foreground entropy of each listed novel image under `model`.
ScoreMap score_images(const LinearSegmenter& model, const NovelTrainingData& data,
                      const std::vector<std::size_t>& indices);

/// Initial split of the clustered novel images scored by `model`; unclustered
/// images are appended to unclean.
SplitState initial_split(const LinearSegmenter& model, const NovelTrainingData& data, double lambda);

/// EUMS loop from an initial split. Returns the final split; records of
/// reassigned images are marked invalid.
SplitState run_eums_loop(LinearSegmenter& model, const NovelTrainingData& data, SplitState split,
                         const EumsConfig& ecfg, const Ablation& ablation, const TrainConfig& cfg, std::uint64_t seed,
                         const LoopHooks& hooks = {});

struct EumsResult {
  LinearSegmenter model;
  std::optional<SplitState> split;
};

/// Stage 3 end to end: expand the base model, run the basic loop, then (if
/// entropy ranking is enabled) split and run the EUMS loop.
EumsResult train_eums(const LinearSegmenter& base_model, const NovelTrainingData& data, const ClassSpace& cs,
                      const EumsConfig& ecfg, const Ablation& ablation, const TrainConfig& cfg, std::uint64_t seed,
                      const LoopHooks& hooks = {});

}  // namespace ncd
