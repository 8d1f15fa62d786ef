#include "ncd/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "ncd/kernels.hpp"
#include "ncd/synth.hpp"

namespace ncd {

void AugmentationSpec::validate() const {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("augment: flip_prob must lie in [0,1]");
  if (!(strong_noise_sigma >= 0.0)) throw ConfigError("augment: strong_noise_sigma must be >= 0");
  if (!(scale_jitter >= 0.0 && scale_jitter < 1.0)) throw ConfigError("augment: scale_jitter must lie in [0,1)");
}

void EumsConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("eums: tau must lie in (0,1)");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("eums: lambda must lie in (0,1]");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eums: eta must lie in [0,1]");
  if (!(ramp_length >= 1.0)) throw ConfigError("eums: ramp_length must be >= 1");
  if (reassign_epoch < 0) throw ConfigError("eums: reassign_epoch must be >= 0");
  if (!(ema_momentum >= 0.0 && ema_momentum < 1.0)) throw ConfigError("eums: ema_momentum must lie in [0,1)");
  if (epochs < reassign_epoch) throw ConfigError("eums: epochs must be >= reassign_epoch");
  if (over_factor < 1) throw ConfigError("eums: over_factor must be >= 1");
  augment.validate();
}

void Ablation::validate() const {
  if (dynamic_reassignment && !entropy_ranking)
    throw ConfigError("ablation: dynamic_reassignment requires entropy_ranking");
  if (self_training && !entropy_ranking) throw ConfigError("ablation: self_training requires entropy_ranking");
}

FeatureMap hflip(const FeatureMap& x) {
  FeatureMap out(x.height(), x.width(), x.dim());
  for (int h = 0; h < x.height(); ++h)
    for (int w = 0; w < x.width(); ++w) {
      auto src = x.pixel(static_cast<std::size_t>(h) * x.width() + w);
      auto dst = out.pixel(static_cast<std::size_t>(h) * x.width() + (x.width() - 1 - w));
      std::copy(src.begin(), src.end(), dst.begin());
    }
  return out;
}

LabelMap hflip(const LabelMap& y) {
  LabelMap out(y.height(), y.width());
  for (int h = 0; h < y.height(); ++h)
    for (int w = 0; w < y.width(); ++w) out.at(h, y.width() - 1 - w) = y.at(h, w);
  return out;
}

AugmentedPair augment_pair(const FeatureMap& x, const AugmentationSpec& spec, std::mt19937_64& rng) {
  AugmentedPair out;
  out.flipped = std::bernoulli_distribution(spec.flip_prob)(rng);
  out.weak = out.flipped ? hflip(x) : x;
  out.strong = out.weak;
  std::uniform_real_distribution<double> scale(1.0 - spec.scale_jitter, 1.0 + spec.scale_jitter);
  std::vector<double> scales(x.dim());
  for (auto& s : scales) s = scale(rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto values = out.strong.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    double v = values[i] * scales[i % scales.size()];
    if (spec.strong_noise_sigma > 0.0) v += spec.strong_noise_sigma * noise(rng);
    values[i] = static_cast<float>(v);
  }
  return out;
}

double ramp_weight(const RampUp& r) {
  const double T = std::max(r.length, 1.0);
  const double t = std::clamp(r.epoch, 0.0, T);
  const double u = 1.0 - t / T;
  return std::exp(-5.0 * u * u);
}

LabelMap online_pseudo_label(const ProbMap& teacher_prob, double eta) {
  LabelMap out(teacher_prob.height(), teacher_prob.width(), kIgnoreId);
  for (std::size_t i = 0; i < teacher_prob.pixels(); ++i) {
    auto p = teacher_prob.pixel(i);
    const ClassId c = argmax_class(p);
    if (p[c] > eta) out[i] = c;
  }
  return out;
}

LossGrad self_training_loss(const LinearSegmenter& model, const FeatureMap& x_strong, const LabelMap& y_online) {
  const Sample s{&x_strong, &y_online};
  return batch_ce_loss_grad(model, std::span<const Sample>(&s, 1));
}

namespace {

void require_nonempty(std::span<const Sample> batch, const char* what) {
  if (batch.empty()) throw Error(std::string("empty ") + what + " batch");
}

// Supervised part shared by both step kinds; returns the summed gradient.
std::vector<double> supervised_grad(const LinearSegmenter& model, std::span<const Sample> base,
                                    std::span<const Sample> clean, StepLosses& losses) {
  require_nonempty(base, "base");
  require_nonempty(clean, "clean");
  auto lb = batch_ce_loss_grad(model, base);
  auto lc = batch_ce_loss_grad(model, clean);
  losses.base = lb.loss;
  losses.clean = lc.loss;
  kernels::active().axpby(1.0, lc.grad.data(), 1.0, lb.grad.data(), lb.grad.size());
  return std::move(lb.grad);
}

}  // namespace

StepLosses basic_step(LinearSegmenter& model, std::vector<double>& velocity, std::span<const Sample> base,
                      std::span<const Sample> clean, const StepContext& ctx, const TrainConfig& cfg) {
  StepLosses losses;
  auto grad = supervised_grad(model, base, clean, losses);
  sgd_step(model, grad, velocity, ctx.lr, cfg);
  return losses;
}

StepLosses overall_step(LinearSegmenter& model, TeacherState& teacher, std::vector<double>& velocity,
                        std::span<const Sample> base, std::span<const Sample> clean, const UncleanBatch& unclean,
                        const StepContext& ctx, const TrainConfig& cfg, std::mt19937_64& aug_rng) {
  StepLosses losses;
  losses.omega = ctx.omega;
  auto grad = supervised_grad(model, base, clean, losses);

  if (!unclean.images.empty()) {
    std::vector<FeatureMap> strong_views;
    std::vector<LabelMap> online;
    strong_views.reserve(unclean.images.size());
    online.reserve(unclean.images.size());
    for (const FeatureMap* x : unclean.images) {
      auto pair = augment_pair(*x, ctx.augment, aug_rng);
      online.push_back(online_pseudo_label(forward(teacher.model, pair.weak), ctx.eta));
      strong_views.push_back(std::move(pair.strong));
    }
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < online.size(); ++i) samples.push_back({&strong_views[i], &online[i]});
    auto ld = batch_ce_loss_grad(model, samples);
    losses.unclean = ld.loss;
    if (ld.pixels > 0) kernels::active().axpby(ctx.omega, ld.grad.data(), 1.0, grad.data(), grad.size());
  }

  sgd_step(model, grad, velocity, ctx.lr, cfg);
  ema_update(teacher, model);
  return losses;
}

BatchSampler::BatchSampler(std::vector<std::size_t> indices, std::uint64_t seed)
    : indices_(std::move(indices)), rng_(seed) {
  std::sort(indices_.begin(), indices_.end());
  reshuffle();
}

void BatchSampler::reshuffle() {
  order_ = indices_;
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next(std::size_t batch_size) {
  std::vector<std::size_t> out;
  if (indices_.empty()) return out;
  const std::size_t n = std::min(batch_size, indices_.size());
  while (out.size() < n) {
    if (cursor_ == order_.size()) reshuffle();
    out.push_back(order_[cursor_++]);
  }
  return out;
}

namespace {

constexpr std::uint64_t kBaseStream = 0x42;
constexpr std::uint64_t kCleanStream = 0x43;
constexpr std::uint64_t kUncleanStream = 0x44;
constexpr std::uint64_t kAugStream = 0x45;

std::size_t steps_per_epoch(std::size_t batch_size, std::initializer_list<std::size_t> sizes) {
  const std::size_t m = std::max(sizes);
  return (m + batch_size - 1) / batch_size;
}

std::vector<Sample> base_samples(const Dataset& base, const std::vector<std::size_t>& idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back({&base.items[i].features, &*base.items[i].labels});
  return out;
}

std::vector<Sample> novel_samples(const NovelTrainingData& data, const std::vector<std::size_t>& idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back({&data.novel->items[i].features, &(*data.records)[i].fused});
  return out;
}

std::vector<std::size_t> all_base_indices(const Dataset& base) {
  std::vector<std::size_t> v(base.size());
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

void check_data(const NovelTrainingData& data) {
  if (!data.base || !data.novel || !data.records) throw Error("incomplete stage-3 training data");
  if (data.base->empty()) throw Error("empty base split");
  if (data.records->size() != data.novel->size()) throw Error("pseudo-label records do not match the novel split");
}

double metric_or_nan(const LoopHooks& hooks, const LinearSegmenter& model) {
  return hooks.val_metric ? hooks.val_metric(model) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

void run_basic_loop(LinearSegmenter& model, const NovelTrainingData& data, const TrainConfig& cfg, std::uint64_t seed,
                    const LoopHooks& hooks) {
  cfg.validate();
  check_data(data);
  std::vector<std::size_t> labelled;
  for (std::size_t i = 0; i < data.records->size(); ++i) {
    const auto& r = (*data.records)[i];
    if (r.cluster_class && r.labels_valid) labelled.push_back(i);
  }
  if (labelled.empty()) throw Error("no clustered novel images to fine-tune on");

  BatchSampler base_sampler(all_base_indices(*data.base), synth::derive_seed(seed, kBaseStream));
  BatchSampler clean_sampler(labelled, synth::derive_seed(seed, kCleanStream));
  std::vector<double> velocity(model.param_count(), 0.0);
  const std::size_t steps = steps_per_epoch(cfg.batch_size, {data.base->size(), labelled.size()});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    StepContext ctx;
    ctx.lr = cfg.lr_at(epoch);
    EpochMetrics em;
    em.epoch = hooks.epoch_offset + epoch;
    for (std::size_t s = 0; s < steps; ++s) {
      auto b = base_samples(*data.base, base_sampler.next(cfg.batch_size));
      auto c = novel_samples(data, clean_sampler.next(cfg.batch_size));
      auto l = basic_step(model, velocity, b, c, ctx, cfg);
      em.loss_base += l.base;
      em.loss_clean += l.clean;
    }
    em.loss_base /= static_cast<double>(steps);
    em.loss_clean /= static_cast<double>(steps);
    em.clean_size = labelled.size();
    em.val_miou = metric_or_nan(hooks, model);
    if (hooks.on_epoch) hooks.on_epoch(em);
  }
}

ScoreMap score_images(const LinearSegmenter& model, const NovelTrainingData& data,
                      const std::vector<std::size_t>& indices) {
  ScoreMap scores;
  for (auto i : indices) {
    const auto& rec = (*data.records)[i];
    auto e = entropy_map(forward(model, data.novel->items[i].features), model.channels());
    scores[rec.image_id] = foreground_entropy(e, rec.novel_mask);
  }
  return scores;
}

SplitState initial_split(const LinearSegmenter& model, const NovelTrainingData& data, double lambda) {
  check_data(data);
  std::vector<std::size_t> scored;
  std::vector<std::string> unscored;
  for (std::size_t i = 0; i < data.records->size(); ++i) {
    const auto& r = (*data.records)[i];
    if (r.cluster_class && r.labels_valid && r.novel_pixels() > 0)
      scored.push_back(i);
    else
      unscored.push_back(r.image_id);
  }
  if (scored.empty()) throw Error("no clustered novel images to rank");
  return rank_split_with_unscored(score_images(model, data, scored), unscored, lambda);
}

SplitState run_eums_loop(LinearSegmenter& model, const NovelTrainingData& data, SplitState split,
                         const EumsConfig& ecfg, const Ablation& ablation, const TrainConfig& cfg, std::uint64_t seed,
                         const LoopHooks& hooks) {
  ecfg.validate();
  ablation.validate();
  cfg.validate();
  check_data(data);

  std::unordered_map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < data.records->size(); ++i) index_of[(*data.records)[i].image_id] = i;
  auto to_indices = [&](const std::vector<std::string>& ids) {
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
      auto it = index_of.find(id);
      if (it == index_of.end()) throw Error("split references unknown image '" + id + "'");
      out.push_back(it->second);
    }
    std::sort(out.begin(), out.end());
    return out;
  };

  std::vector<std::size_t> clean = to_indices(split.clean);
  std::vector<std::size_t> unclean = to_indices(split.unclean);
  // Unclean images never train on clustering labels.
  for (auto i : unclean) (*data.records)[i].labels_valid = false;

  BatchSampler base_sampler(all_base_indices(*data.base), synth::derive_seed(seed, kBaseStream));
  BatchSampler clean_sampler(clean, synth::derive_seed(seed, kCleanStream));
  BatchSampler unclean_sampler(unclean, synth::derive_seed(seed, kUncleanStream));
  std::mt19937_64 aug_rng(synth::derive_seed(seed, kAugStream));
  TeacherState teacher = make_teacher(model, ecfg.ema_momentum);
  std::vector<double> velocity(model.param_count(), 0.0);

  for (int epoch = 0; epoch < ecfg.epochs; ++epoch) {
    if (ablation.dynamic_reassignment && epoch == ecfg.reassign_epoch && !split.reassigned) {
      split = dynamic_reassign(split, score_images(model, data, clean));
      clean = to_indices(split.clean);
      unclean = to_indices(split.unclean);
      for (const auto& id : split.discarded) (*data.records)[index_of.at(id)].labels_valid = false;
      clean_sampler = BatchSampler(clean, synth::derive_seed(seed, kCleanStream, 1));
      unclean_sampler = BatchSampler(unclean, synth::derive_seed(seed, kUncleanStream, 1));
    }

    const bool use_unclean = ablation.self_training && !unclean.empty();
    const std::size_t steps =
        steps_per_epoch(cfg.batch_size, {data.base->size(), clean.size(), use_unclean ? unclean.size() : 0});
    StepContext ctx;
    ctx.lr = cfg.lr_at(epoch);
    ctx.eta = ecfg.eta;
    ctx.augment = ecfg.augment;
    ctx.omega = ablation.self_training ? ramp_weight({ecfg.ramp_length, static_cast<double>(epoch)}) : 0.0;

    EpochMetrics em;
    em.epoch = hooks.epoch_offset + epoch;
    em.omega = ctx.omega;
    for (std::size_t s = 0; s < steps; ++s) {
      auto b = base_samples(*data.base, base_sampler.next(cfg.batch_size));
      auto c = novel_samples(data, clean_sampler.next(cfg.batch_size));
      UncleanBatch u;
      if (use_unclean)
        for (auto i : unclean_sampler.next(cfg.batch_size)) u.images.push_back(&data.novel->items[i].features);
      auto l = overall_step(model, teacher, velocity, b, c, u, ctx, cfg, aug_rng);
      em.loss_base += l.base;
      em.loss_clean += l.clean;
      em.loss_unclean += l.unclean;
    }
    em.loss_base /= static_cast<double>(steps);
    em.loss_clean /= static_cast<double>(steps);
    em.loss_unclean /= static_cast<double>(steps);
    em.clean_size = clean.size();
    em.unclean_size = unclean.size();
    em.val_miou = metric_or_nan(hooks, model);
    if (hooks.on_epoch) hooks.on_epoch(em);
  }
  return split;
}

EumsResult train_eums(const LinearSegmenter& base_model, const NovelTrainingData& data, const ClassSpace& cs,
                      const EumsConfig& ecfg, const Ablation& ablation, const TrainConfig& cfg, std::uint64_t seed,
                      const LoopHooks& hooks) {
  ecfg.validate();
  ablation.validate();
  EumsResult result{LinearSegmenter::expand_from_base(base_model, cs), std::nullopt};
  run_basic_loop(result.model, data, cfg, synth::derive_seed(seed, 1), hooks);
  if (!ablation.entropy_ranking) return result;

  auto split = initial_split(result.model, data, ecfg.lambda);
  LoopHooks eums_hooks = hooks;
  eums_hooks.epoch_offset = hooks.epoch_offset + cfg.epochs;
  TrainConfig loop_cfg = cfg;
  loop_cfg.epochs = ecfg.epochs;
  result.split = run_eums_loop(result.model, data, std::move(split), ecfg, ablation, loop_cfg,
                               synth::derive_seed(seed, 2), eums_hooks);
  return result;
}

}  // namespace ncd
