#include "ncd/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ncd/io.hpp"
#include "ncd/kernels.hpp"
#include "ncd/synth.hpp"

namespace ncd {

LinearSegmenter::LinearSegmenter(ClassSpace cs, int channels, int dim)
    : class_space_(cs), channels_(channels), dim_(dim) {
  if (channels < 1 || dim < 1) throw ShapeError("segmenter needs >= 1 channel and >= 1 feature");
  params_.assign(static_cast<std::size_t>(channels) * dim + channels, 0.0);
}

LinearSegmenter LinearSegmenter::expand_from_base(const LinearSegmenter& base, const ClassSpace& cs) {
  if (base.channels() != cs.n_base) throw ShapeError("base model channel count differs from n_base");
  LinearSegmenter m(cs, cs.channels(), base.dim());
  const std::size_t D = base.dim();
  std::copy(base.weights(), base.weights() + cs.n_base * D, m.params_.begin());
  std::copy(base.bias(), base.bias() + cs.n_base, m.params_.begin() + static_cast<std::ptrdiff_t>(cs.channels() * D));
  return m;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
}

namespace {

void check_dim(const LinearSegmenter& model, const FeatureMap& x) {
  if (x.dim() != model.dim())
    throw ShapeError("feature dim " + std::to_string(x.dim()) + " != model dim " + std::to_string(model.dim()));
}

// Softmax in place; returns log-sum-exp of the logits.
double softmax_inplace(std::span<double> z) { return kernels::active().softmax(z.data(), z.size()); }

struct ImageCe {
  double loss_sum = 0.0;
  std::size_t pixels = 0;
};

// Per-image pass: loss sum and gradient sum (unnormalised) into the buffers.
ImageCe image_ce(const LinearSegmenter& model, const FeatureMap& x, const LabelMap& y, std::vector<double>& gw,
                 std::vector<double>& logits) {
  const auto& k = kernels::active();
  const std::size_t C = model.channels(), D = model.dim();
  double* grad_bias = gw.data() + C * D;
  ImageCe out;
  for (std::size_t i = 0; i < x.pixels(); ++i) {
    const ClassId label = y[i];
    if (label == kIgnoreId) continue;
    if (label >= C) throw Error("label " + std::to_string(label) + " exceeds model channels");
    const float* f = x.pixel(i).data();
    k.affine(model.weights(), model.bias(), f, C, D, logits.data());
    const double z_true = logits[label];
    const double lse = softmax_inplace(logits);
    out.loss_sum += lse - z_true;
    logits[label] -= 1.0;
    k.outer_accumulate(logits.data(), f, C, D, gw.data());
    for (std::size_t c = 0; c < C; ++c) grad_bias[c] += logits[c];
    ++out.pixels;
  }
  return out;
}

void check_labels_shape(const FeatureMap& x, const LabelMap& y) {
  if (x.height() != y.height() || x.width() != y.width()) throw ShapeError("labels and features differ in shape");
}

}  // namespace

ProbMap forward(const LinearSegmenter& model, const FeatureMap& x) {
  check_dim(model, x);
  const auto& k = kernels::active();
  ProbMap out(x.height(), x.width(), model.channels());
  for (std::size_t i = 0; i < x.pixels(); ++i) {
    auto row = out.pixel(i);
    k.affine(model.weights(), model.bias(), x.pixel(i).data(), model.channels(), model.dim(), row.data());
    softmax_inplace(row);
  }
  return out;
}

LabelMap predict(const LinearSegmenter& model, const FeatureMap& x) {
  check_dim(model, x);
  const auto& k = kernels::active();
  LabelMap out(x.height(), x.width());
  std::vector<double> logits(model.channels());
  for (std::size_t i = 0; i < x.pixels(); ++i) {
    k.affine(model.weights(), model.bias(), x.pixel(i).data(), model.channels(), model.dim(), logits.data());
    out[i] = argmax_class(logits);
  }
  return out;
}

LossGrad ce_loss_grad(const LinearSegmenter& model, const FeatureMap& x, const LabelMap& y) {
  check_dim(model, x);
  check_labels_shape(x, y);
  LossGrad out;
  out.grad.assign(model.param_count(), 0.0);
  std::vector<double> logits(model.channels());
  auto ce = image_ce(model, x, y, out.grad, logits);
  if (ce.pixels == 0) throw Error("cross-entropy over an image with every pixel ignored");
  const double inv = 1.0 / static_cast<double>(ce.pixels);
  out.loss = ce.loss_sum * inv;
  for (double& g : out.grad) g *= inv;
  out.pixels = ce.pixels;
  return out;
}

LossGrad batch_ce_loss_grad(const LinearSegmenter& model, std::span<const Sample> batch) {
  LossGrad out;
  out.grad.assign(model.param_count(), 0.0);
  std::vector<double> image_grad(model.param_count());
  std::vector<double> logits(model.channels());
  const auto& k = kernels::active();
  std::size_t images = 0;
  for (const auto& s : batch) {
    check_dim(model, *s.features);
    check_labels_shape(*s.features, *s.labels);
    std::fill(image_grad.begin(), image_grad.end(), 0.0);
    auto ce = image_ce(model, *s.features, *s.labels, image_grad, logits);
    if (ce.pixels == 0) continue;
    const double inv = 1.0 / static_cast<double>(ce.pixels);
    out.loss += ce.loss_sum * inv;
    k.axpby(inv, image_grad.data(), 1.0, out.grad.data(), out.grad.size());
    out.pixels += ce.pixels;
    ++images;
  }
  if (images > 0) {
    const double inv = 1.0 / static_cast<double>(images);
    out.loss *= inv;
    for (double& g : out.grad) g *= inv;
  }
  return out;
}

void sgd_step(LinearSegmenter& model, std::span<const double> grad, std::vector<double>& velocity, double lr,
              const TrainConfig& cfg) {
  if (grad.size() != model.param_count()) throw ShapeError("gradient shape differs from model");
  if (velocity.empty()) velocity.assign(model.param_count(), 0.0);
  if (velocity.size() != model.param_count()) throw ShapeError("velocity shape differs from model");
  kernels::active().sgd_momentum(model.params().data(), velocity.data(), grad.data(), grad.size(), lr, cfg.momentum,
                                 cfg.weight_decay);
}

LinearSegmenter train_base(const Dataset& base, int dim, const TrainConfig& cfg,
                           const std::function<void(int, double)>& on_epoch) {
  cfg.validate();
  if (base.empty()) throw Error("train_base: empty base dataset");
  for (const auto& item : base.items)
    if (!item.labels) throw Error("train_base: base item '" + item.id + "' has no labels");
  auto model = LinearSegmenter::for_base(base.class_space, dim);
  std::vector<double> velocity(model.param_count(), 0.0);
  std::vector<std::size_t> order(base.size());
  std::vector<Sample> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(synth::derive_seed(cfg.seed, 0x62617365, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t j = start; j < std::min(order.size(), start + cfg.batch_size); ++j)
        batch.push_back({&base.items[order[j]].features, &*base.items[order[j]].labels});
      auto lg = batch_ce_loss_grad(model, batch);
      if (lg.pixels == 0) continue;
      sgd_step(model, lg.grad, velocity, cfg.lr_at(epoch), cfg);
      loss_sum += lg.loss;
      ++steps;
    }
    if (on_epoch) on_epoch(epoch, steps ? loss_sum / steps : 0.0);
  }
  return model;
}

TeacherState make_teacher(const LinearSegmenter& student, double ema_momentum) {
  if (!(ema_momentum >= 0.0 && ema_momentum < 1.0)) throw ConfigError("ema_momentum must lie in [0,1)");
  return {student, ema_momentum};
}

void ema_update(TeacherState& teacher, const LinearSegmenter& student) {
  if (teacher.model.channels() != student.channels() || teacher.model.dim() != student.dim())
    throw ShapeError("teacher and student shapes differ");
  const double m = teacher.ema_momentum;
  kernels::active().axpby(1.0 - m, student.params().data(), m, teacher.model.params().data(),
                          student.param_count());
}

void save_checkpoint(const LinearSegmenter& model, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.channels()));
  w.u32(static_cast<std::uint32_t>(model.dim()));
  for (double v : model.params()) w.f32(static_cast<float>(v));
  io::write_file(path, w.bytes());
}

LinearSegmenter load_checkpoint(const std::filesystem::path& path, const ClassSpace& cs) {
  auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  if (!r.magic(kCheckpointMagic)) throw IoError("not a model checkpoint: " + path.string());
  if (r.u32() != kCheckpointVersion) throw IoError("unsupported checkpoint version in " + path.string());
  const auto channels = static_cast<int>(r.u32());
  const auto dim = static_cast<int>(r.u32());
  if (channels != cs.n_base && channels != cs.channels())
    throw ShapeError("checkpoint has " + std::to_string(channels) + " channels, class space expects " +
                     std::to_string(cs.n_base) + " or " + std::to_string(cs.channels()));
  LinearSegmenter m(cs, channels, dim);
  if (r.remaining() != m.param_count() * 4) throw IoError("checkpoint payload size mismatch: " + path.string());
  for (double& v : m.params()) v = r.f32();
  return m;
}

LinearSegmenter round_to_checkpoint_precision(const LinearSegmenter& model) {
  LinearSegmenter m = model;
  for (double& v : m.params()) v = static_cast<float>(v);
  return m;
}

}  // namespace ncd
