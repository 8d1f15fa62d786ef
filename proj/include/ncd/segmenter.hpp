#pragma once

// Reference per-pixel segmenter: softmax(W x + b) over feature channels.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "ncd/core.hpp"

namespace ncd {

class LinearSegmenter {
 public:
  LinearSegmenter() = default;
  /// Zero-initialised model with `channels` outputs over `dim` features.
  LinearSegmenter(ClassSpace cs, int channels, int dim);

  /// Base model: one output per base class.
  static LinearSegmenter for_base(const ClassSpace& cs, int dim) { return {cs, cs.n_base, dim}; }
  /// Novel model: base rows copied from `base`, novel rows zero.
  static LinearSegmenter expand_from_base(const LinearSegmenter& base, const ClassSpace& cs);

  const ClassSpace& class_space() const { return class_space_; }
  int channels() const { return channels_; }
  int dim() const { return dim_; }

  /// Flat parameter vector: weights (channels x dim, row-major) then bias.
  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  std::size_t param_count() const { return params_.size(); }
  const double* weights() const { return params_.data(); }
  const double* bias() const { return params_.data() + static_cast<std::size_t>(channels_) * dim_; }
  double& weight(int c, int d) { return params_[static_cast<std::size_t>(c) * dim_ + d]; }
  double& bias(int c) { return params_[static_cast<std::size_t>(channels_) * dim_ + c]; }

  bool operator==(const LinearSegmenter&) const = default;

 private:
  ClassSpace class_space_;
  int channels_ = 0;
  int dim_ = 0;
  std::vector<double> params_;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
  /// Non-ignore pixels that contributed.
  std::size_t pixels = 0;
};

struct TrainConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int epochs = 30;
  int batch_size = 8;
  /// Learning rate is multiplied by lr_decay_factor from this epoch on; <0 disables.
  int lr_decay_epoch = 15;
  double lr_decay_factor = 0.1;
  std::uint64_t seed = 0;

  double lr_at(int epoch) const {
    return (lr_decay_epoch >= 0 && epoch >= lr_decay_epoch) ? learning_rate * lr_decay_factor : learning_rate;
  }
  void validate() const;
};

struct TeacherState {
  LinearSegmenter model;
  double ema_momentum = 0.99;
};

/// One labelled image for batched losses.
struct Sample {
  const FeatureMap* features;
  const LabelMap* labels;
};

ProbMap forward(const LinearSegmenter& model, const FeatureMap& x);

/// Per-pixel argmax of the model's prediction.
LabelMap predict(const LinearSegmenter& model, const FeatureMap& x);

/// Mean cross-entropy over non-ignore pixels and its exact gradient. Throws
/// when every pixel is ignored.
LossGrad ce_loss_grad(const LinearSegmenter& model, const FeatureMap& x, const LabelMap& y);

/// Mean of per-image cross-entropies over a batch. Images without a single
/// labelled pixel are skipped; an entirely unlabelled batch yields (0, 0).
LossGrad batch_ce_loss_grad(const LinearSegmenter& model, std::span<const Sample> batch);

/// velocity <- momentum*velocity + grad + weight_decay*params; params <- params - lr*velocity.
void sgd_step(LinearSegmenter& model, std::span<const double> grad, std::vector<double>& velocity, double lr,
              const TrainConfig& cfg);

/// Stage-1 training on the labelled base split. `on_epoch` receives the mean
/// batch loss of each epoch.
LinearSegmenter train_base(const Dataset& base, int dim, const TrainConfig& cfg,
                           const std::function<void(int, double)>& on_epoch = {});

TeacherState make_teacher(const LinearSegmenter& student, double ema_momentum);
/// theta_t <- m*theta_t + (1-m)*theta_s.
void ema_update(TeacherState& teacher, const LinearSegmenter& student);

// Checkpoint: "NCDM" | u32 version | u32 C' | u32 D | f32 weights | f32 bias (little-endian).
inline constexpr char kCheckpointMagic[4] = {'N', 'C', 'D', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const LinearSegmenter& model, const std::filesystem::path& path);
LinearSegmenter load_checkpoint(const std::filesystem::path& path, const ClassSpace& cs);
/// Parameters rounded through f32, i.e. what a save/load round trip produces.
LinearSegmenter round_to_checkpoint_precision(const LinearSegmenter& model);

}  // namespace ncd
