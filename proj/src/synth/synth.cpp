#include "ncd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <string>

namespace ncd::synth {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string make_id(const char* prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d", prefix, index);
  return buf;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0x9e3779b97f4a7c15ULL));
}

void SceneSpec::validate() const {
  if (height < 1 || width < 1 || feature_dim < 1) throw ConfigError("scene: grid and feature_dim must be >= 1");
  if (prototypes.size() < 2) throw ConfigError("scene: need a background and at least one object prototype");
  if (!(sigma >= 0.0) || !(instance_sigma >= 0.0)) throw ConfigError("scene: sigma must be >= 0");
  if (min_objects < 1 || max_objects < min_objects) throw ConfigError("scene: invalid objects_per_image range");
  for (const auto& p : prototypes)
    if (static_cast<int>(p.size()) != feature_dim) throw ConfigError("scene: prototype length != feature_dim");
  if (!alt_prototypes.empty() && alt_prototypes.size() != prototypes.size())
    throw ConfigError("scene: alt_prototypes must be empty or have one entry per class");
  std::vector<const std::vector<float>*> all;
  for (const auto& p : prototypes) all.push_back(&p);
  for (const auto& p : alt_prototypes) {
    if (p.empty()) continue;
    if (static_cast<int>(p.size()) != feature_dim) throw ConfigError("scene: prototype length != feature_dim");
    all.push_back(&p);
  }
  if (!alt_prototypes.empty() && !alt_prototypes[0].empty()) throw ConfigError("scene: background must be unimodal");
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j)
      if (*all[i] == *all[j]) throw ConfigError("scene: prototypes must be pairwise distinct");
}

void SaliencyNoiseSpec::validate() const {
  if (boundary_erode_dilate < 0) throw ConfigError("saliency: boundary_erode_dilate must be >= 0");
  if (!(flip_rate >= 0.0 && flip_rate <= 1.0)) throw ConfigError("saliency: flip_rate must lie in [0,1]");
  if (!(miss_rate >= 0.0 && miss_rate <= 1.0)) throw ConfigError("saliency: miss_rate must lie in [0,1]");
}

void FoldSpec::validate() const {
  if (n_base_fg < 1) throw ConfigError("fold: n_base_fg must be >= 1");
  if (n_novel < 1) throw ConfigError("fold: n_novel must be >= 1");
  if (base_images < 1 || novel_images < 1 || val_images < 1) throw ConfigError("fold: split sizes must be >= 1");
  if (max_novel_objects < 1) throw ConfigError("fold: max_novel_objects must be >= 1");
}

std::vector<std::vector<float>> random_prototypes(int n_classes, int dim, double separation, std::uint64_t seed) {
  if (n_classes < 2 || dim < 1 || !(separation > 0.0)) throw ConfigError("random_prototypes: invalid arguments");
  std::mt19937_64 rng(derive_seed(seed, 0x70726f74));
  std::normal_distribution<double> normal;
  std::vector<std::vector<float>> protos;
  for (int attempt = 0; attempt < 10000 && static_cast<int>(protos.size()) < n_classes; ++attempt) {
    std::vector<double> v(dim);
    double norm = 0.0;
    for (auto& x : v) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    std::vector<float> p(dim);
    for (int d = 0; d < dim; ++d) p[d] = static_cast<float>(separation * v[d] / norm);
    bool ok = true;
    for (const auto& q : protos) {
      double d2 = 0.0;
      for (int d = 0; d < dim; ++d) d2 += (p[d] - q[d]) * (p[d] - q[d]);
      if (std::sqrt(d2) < separation / 2) ok = false;
    }
    if (ok) protos.push_back(std::move(p));
  }
  if (static_cast<int>(protos.size()) < n_classes)
    throw ConfigError("random_prototypes: cannot place " + std::to_string(n_classes) + " prototypes in " +
                      std::to_string(dim) + " dimensions");
  return protos;
}

std::pair<FeatureMap, LabelMap> generate_scene(const SceneSpec& spec, std::uint64_t seed,
                                               const std::vector<int>& object_classes) {
  spec.validate();
  for (int c : object_classes)
    if (c < 1 || c >= spec.n_classes()) throw ConfigError("scene: object class out of range");

  std::mt19937_64 rng(seed);
  const int H = spec.height, W = spec.width, D = spec.feature_dim;
  LabelMap labels(H, W, kBackgroundId);
  const int min_side = std::max(1, H / 5), max_side_h = std::max(min_side, H / 2);
  const int min_side_w = std::max(1, W / 5), max_side_w = std::max(min_side_w, W / 2);

  std::vector<int> owner(static_cast<std::size_t>(H) * W, -1);
  std::vector<const std::vector<float>*> object_proto(object_classes.size());
  for (std::size_t k = 0; k < object_classes.size(); ++k) {
    const int c = object_classes[k];
    object_proto[k] = &spec.prototypes[c];
    if (!spec.alt_prototypes.empty() && !spec.alt_prototypes[c].empty() && uniform_int(rng, 0, 1) == 1)
      object_proto[k] = &spec.alt_prototypes[c];
    const int oh = uniform_int(rng, min_side, max_side_h);
    const int ow = uniform_int(rng, min_side_w, max_side_w);
    const int top = uniform_int(rng, 0, H - oh);
    const int left = uniform_int(rng, 0, W - ow);
    bool ellipse = spec.shapes == ShapeFamily::ellipses ||
                   (spec.shapes == ShapeFamily::mixed && uniform_int(rng, 0, 1) == 1);
    const double cy = top + (oh - 1) / 2.0, cx = left + (ow - 1) / 2.0;
    const double ry = oh / 2.0, rx = ow / 2.0;
    for (int h = top; h < top + oh; ++h)
      for (int w = left; w < left + ow; ++w) {
        if (ellipse) {
          const double dy = (h - cy) / ry, dx = (w - cx) / rx;
          if (dy * dy + dx * dx > 1.0) continue;
        }
        labels.at(h, w) = static_cast<ClassId>(object_classes[k]);
        owner[static_cast<std::size_t>(h) * W + w] = static_cast<int>(k);
      }
  }

  // Per-object appearance offsets, then per-pixel noise.
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> offsets(object_classes.size(), std::vector<double>(D, 0.0));
  if (spec.instance_sigma > 0.0)
    for (auto& off : offsets)
      for (auto& v : off) v = spec.instance_sigma * normal(rng);

  FeatureMap features(H, W, D);
  for (std::size_t i = 0; i < labels.pixels(); ++i) {
    const auto& proto = owner[i] >= 0 ? *object_proto[owner[i]] : spec.prototypes[labels[i]];
    auto px = features.pixel(i);
    for (int d = 0; d < D; ++d) {
      double v = proto[d];
      if (owner[i] >= 0) v += offsets[owner[i]][d];
      if (spec.sigma > 0.0) v += spec.sigma * normal(rng);
      px[d] = static_cast<float>(v);
    }
  }
  return {std::move(features), std::move(labels)};
}

std::pair<FeatureMap, LabelMap> generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(seed, 0x636c6173));
  const int n = uniform_int(rng, spec.min_objects, spec.max_objects);
  std::vector<int> classes(n);
  for (auto& c : classes) c = uniform_int(rng, 1, spec.n_classes() - 1);
  return generate_scene(spec, seed, classes);
}

SaliencyMask generate_saliency(const LabelMap& labels, const SaliencyNoiseSpec& noise, std::uint64_t seed) {
  noise.validate();
  std::mt19937_64 rng(seed);
  const int H = labels.height(), W = labels.width();
  const std::size_t N = labels.pixels();
  std::vector<std::uint8_t> mask(N, 0);

  // Objects are 4-connected components of equal foreground label.
  std::vector<int> component(N, -1);
  std::bernoulli_distribution miss(noise.miss_rate);
  int n_components = 0;
  for (std::size_t start = 0; start < N; ++start) {
    const ClassId c = labels[start];
    if (c == kBackgroundId || c == kIgnoreId || component[start] >= 0) continue;
    const bool keep = !miss(rng);
    std::deque<std::size_t> queue{start};
    component[start] = n_components;
    while (!queue.empty()) {
      const std::size_t p = queue.front();
      queue.pop_front();
      if (keep) mask[p] = 1;
      const int h = static_cast<int>(p) / W, w = static_cast<int>(p) % W;
      const int nh[4] = {h - 1, h + 1, h, h};
      const int nw[4] = {w, w, w - 1, w + 1};
      for (int k = 0; k < 4; ++k) {
        if (nh[k] < 0 || nh[k] >= H || nw[k] < 0 || nw[k] >= W) continue;
        const std::size_t q = static_cast<std::size_t>(nh[k]) * W + nw[k];
        if (component[q] < 0 && labels[q] == c) {
          component[q] = n_components;
          queue.push_back(q);
        }
      }
    }
    ++n_components;
  }

  if (noise.boundary_erode_dilate > 0) {
    const int r = uniform_int(rng, -noise.boundary_erode_dilate, noise.boundary_erode_dilate);
    if (r != 0) {
      const int rad = std::abs(r);
      const bool dilate = r > 0;
      std::vector<std::uint8_t> out(N);
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          bool any = false, all = true;
          for (int dh = -rad; dh <= rad; ++dh)
            for (int dw = -rad; dw <= rad; ++dw) {
              const int y = std::clamp(h + dh, 0, H - 1), x = std::clamp(w + dw, 0, W - 1);
              const bool v = mask[static_cast<std::size_t>(y) * W + x] != 0;
              any = any || v;
              all = all && v;
            }
          out[static_cast<std::size_t>(h) * W + w] = dilate ? any : all;
        }
      mask = std::move(out);
    }
  }

  if (noise.flip_rate > 0.0) {
    std::bernoulli_distribution flip(noise.flip_rate);
    for (auto& v : mask)
      if (flip(rng)) v ^= 1;
  }
  return SaliencyMask(H, W, std::move(mask));
}

Benchmark make_fold_benchmark(const SceneSpec& scene, const FoldSpec& fold, const SaliencyNoiseSpec& noise) {
  scene.validate();
  fold.validate();
  noise.validate();
  const int n_classes = 1 + fold.n_base_fg + fold.n_novel;
  if (scene.n_classes() != n_classes)
    throw ConfigError("class count mismatch: scene has " + std::to_string(scene.n_classes()) +
                      " prototypes, fold needs " + std::to_string(n_classes));
  const ClassSpace cs = fold.class_space();
  const int first_novel = cs.n_base;

  std::mt19937_64 rng(derive_seed(fold.seed, 0x666f6c64));
  auto base_class = [&] { return uniform_int(rng, 1, fold.n_base_fg); };
  auto novel_class = [&] { return uniform_int(rng, first_novel, n_classes - 1); };
  auto object_count = [&] { return uniform_int(rng, scene.min_objects, scene.max_objects); };

  Benchmark bm;
  bm.base = Dataset{SplitTag::base, cs, {}};
  bm.novel = Dataset{SplitTag::novel, cs, {}};
  bm.val = Dataset{SplitTag::val, cs, {}};

  for (int i = 0; i < fold.base_images; ++i) {
    std::vector<int> classes(object_count());
    for (auto& c : classes) c = base_class();
    auto [feats, labels] = generate_scene(scene, derive_seed(fold.seed, 1, i), classes);
    bm.base.items.push_back({make_id("base", i), std::move(feats), std::move(labels), std::nullopt});
  }

  for (int i = 0; i < fold.novel_images; ++i) {
    const int n = object_count();
    // Base objects are drawn first so that the novel objects stay visible.
    int n_novel_objects = 1;
    for (int k = 1; k < n; ++k)
      if (n_novel_objects < fold.max_novel_objects && uniform_int(rng, 0, 1) == 1) ++n_novel_objects;
    std::vector<int> classes;
    for (int k = 0; k < n - n_novel_objects; ++k) classes.push_back(base_class());
    for (int k = 0; k < n_novel_objects; ++k) classes.push_back(novel_class());
    auto [feats, labels] = generate_scene(scene, derive_seed(fold.seed, 2, i), classes);
    auto sal = generate_saliency(labels, noise, derive_seed(fold.seed, 3, i));
    bm.novel.items.push_back({make_id("novel", i), std::move(feats), std::move(labels), std::move(sal)});
  }

  for (int i = 0; i < fold.val_images; ++i) {
    std::vector<int> classes(object_count());
    for (auto& c : classes) c = uniform_int(rng, 1, n_classes - 1);
    auto [feats, labels] = generate_scene(scene, derive_seed(fold.seed, 4, i), classes);
    bm.val.items.push_back({make_id("val", i), std::move(feats), std::move(labels), std::nullopt});
  }
  return bm;
}

}  // namespace ncd::synth
