#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ncd/eval.hpp"
#include "ncd/synth.hpp"
#include "support.hpp"

using namespace ncd;

namespace {

// Literal per-class IoU over pixel sets.
double brute_miou(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts, int n) {
  double sum = 0;
  int present = 0;
  for (int c = 0; c < n; ++c) {
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t k = 0; k < preds.size(); ++k)
      for (std::size_t i = 0; i < gts[k].pixels(); ++i) {
        if (gts[k][i] == kIgnoreId || preds[k][i] == kIgnoreId) continue;
        const bool p = preds[k][i] == c, g = gts[k][i] == c;
        inter += p && g;
        uni += p || g;
      }
    if (uni == 0) continue;
    sum += static_cast<double>(inter) / static_cast<double>(uni);
    ++present;
  }
  return sum / present;
}

std::int64_t exhaustive_best(const std::vector<std::vector<std::int64_t>>& w) {
  std::vector<int> perm(w.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::int64_t best = -1;
  do {
    std::int64_t s = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += w[i][perm[i]];
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Nearest-prototype linear model: logit_c = p_c . x - |p_c|^2 / 2.
LinearSegmenter prototype_model(const ClassSpace& cs, const std::vector<std::vector<float>>& protos,
                                const std::vector<int>& channel_class) {
  const int dim = static_cast<int>(protos[0].size());
  LinearSegmenter m(cs, static_cast<int>(channel_class.size()), dim);
  for (std::size_t c = 0; c < channel_class.size(); ++c) {
    const auto& p = protos[channel_class[c]];
    double n2 = 0;
    for (int d = 0; d < dim; ++d) {
      m.weight(static_cast<int>(c), d) = p[d];
      n2 += double(p[d]) * p[d];
    }
    m.bias(static_cast<int>(c)) = -n2 / 2;
  }
  return m;
}

}  // namespace

TEST_CASE("confusion and mIoU equal brute force") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + t % 7;
    std::vector<LabelMap> preds, gts;
    for (int k = 0; k < 1 + t % 3; ++k) {
      preds.push_back(testing::random_labels(rng, 8, 8, n, 0.05));
      gts.push_back(testing::random_labels(rng, 8, 8, n, 0.1));
    }
    ConfusionMatrix m(n, n);
    std::uint64_t valid = 0;
    for (std::size_t k = 0; k < preds.size(); ++k) {
      accumulate(m, preds[k], gts[k]);
      for (std::size_t i = 0; i < gts[k].pixels(); ++i) valid += gts[k][i] != kIgnoreId && preds[k][i] != kIgnoreId;
    }
    CHECK(m.total() == valid);
    for (int p = 0; p < n; ++p)
      for (int g = 0; g < n; ++g) {
        std::uint64_t c = 0;
        for (std::size_t k = 0; k < preds.size(); ++k)
          for (std::size_t i = 0; i < gts[k].pixels(); ++i) c += preds[k][i] == p && gts[k][i] == g;
        REQUIRE(m.at(p, g) == c);
      }
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    const double v = miou(m, all);
    CHECK(v == brute_miou(preds, gts, n));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);

    // Relabel every class id by the same permutation.
    std::vector<ClassId> perm(n);
    std::iota(perm.begin(), perm.end(), ClassId{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    ConfusionMatrix pm(n, n);
    for (std::size_t k = 0; k < preds.size(); ++k) {
      auto a = preds[k], b = gts[k];
      for (std::size_t i = 0; i < a.pixels(); ++i) {
        if (a[i] != kIgnoreId) a[i] = perm[a[i]];
        if (b[i] != kIgnoreId) b[i] = perm[b[i]];
      }
      accumulate(pm, a, b);
    }
    CHECK(miou(pm, all) == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("absent classes are left out of the mean") {
  ConfusionMatrix m(3, 3);
  m.at(0, 0) = 4;
  m.at(1, 1) = 2;
  m.at(1, 0) = 2;
  CHECK(std::isnan(class_iou(m, 2)));
  CHECK(miou(m, {0, 1, 2}) == doctest::Approx((4.0 / 6 + 2.0 / 4) / 2));
  CHECK_THROWS(miou(m, {2}));
}

TEST_CASE("hungarian equals exhaustive search") {
  std::mt19937_64 rng(2);
  for (int n = 1; n <= 6; ++n)
    for (int t = 0; t < 50; ++t) {
      std::uniform_int_distribution<std::int64_t> u(0, t % 2 ? 5 : 1000);
      std::vector<std::vector<std::int64_t>> w(n, std::vector<std::int64_t>(n));
      for (auto& r : w)
        for (auto& v : r) v = u(rng);
      const auto a = hungarian_max(w);
      std::vector<int> sorted = a;
      std::sort(sorted.begin(), sorted.end());
      for (int i = 0; i < n; ++i) REQUIRE(sorted[i] == i);
      std::int64_t s = 0;
      for (int i = 0; i < n; ++i) s += w[i][a[i]];
      CHECK(s == exhaustive_best(w));
    }
  CHECK(hungarian_max({}).empty());
  CHECK_THROWS(hungarian_max({{1, 2}}));
}

TEST_CASE("cluster matching modes") {
  ConfusionMatrix block(4, 2);
  block.at(0, 1) = 5;
  block.at(1, 0) = 3;
  block.at(1, 1) = 3;  // tie goes to the lowest class
  block.at(2, 1) = 1;
  const auto many = match_clusters(block, MatchMode::many_to_one);
  CHECK(many.target == std::vector<int>{1, 0, 1, 0});
  CHECK(many.matched_pixels == 9);
  CHECK_THROWS_AS(match_clusters(block, MatchMode::one_to_one), ShapeError);

  ConfusionMatrix sq(2, 2);
  sq.at(0, 1) = 7;
  sq.at(1, 0) = 2;
  sq.at(0, 0) = 6;
  const auto one = match_clusters(sq, MatchMode::one_to_one);
  CHECK(one.target == std::vector<int>{1, 0});
  CHECK(one.matched_pixels == 9);
}

TEST_CASE("evaluate on prototype scenes") {
  synth::SceneSpec scene;
  scene.height = scene.width = 16;
  scene.feature_dim = 6;
  scene.prototypes = synth::random_prototypes(6, 6, 3.0, 4);
  synth::FoldSpec fold;
  fold.n_base_fg = 2;
  fold.n_novel = 3;
  fold.base_images = 1;
  fold.novel_images = 1;
  fold.val_images = 20;
  const auto bm = synth::make_fold_benchmark(scene, fold, {});

  SUBCASE("oracle with permuted novel channels") {
    const auto cs = ClassSpace::exact(3, 3);
    const auto m = prototype_model(cs, scene.prototypes, {0, 1, 2, 5, 3, 4});
    const auto r = evaluate(m, bm.val, MatchMode::one_to_one);
    CHECK(r.base_miou == 1.0);
    CHECK(r.novel_miou == 1.0);
    CHECK(r.all_miou == 1.0);
    CHECK(r.mapping.target == std::vector<int>{2, 0, 1});
  }
  SUBCASE("over-clustered oracle merges many to one") {
    const auto cs = ClassSpace::over(3, 3, 2);
    // Channels 6-8 duplicate prototypes with a lower bias, so they never win.
    auto m = prototype_model(cs, scene.prototypes, {0, 1, 2, 4, 5, 3, 3, 4, 5});
    for (int c = 6; c < 9; ++c) m.bias(c) -= 100.0;
    const auto r = evaluate(m, bm.val, MatchMode::many_to_one);
    CHECK(r.novel_miou == 1.0);
    CHECK(r.mapping.target[0] == 1);
    CHECK(r.mapping.target[2] == 0);
  }
  SUBCASE("background-only model scores zero on novel classes") {
    const auto cs = ClassSpace::exact(3, 3);
    LinearSegmenter m(cs, 6, 6);
    m.bias(0) = 10.0;
    const auto r = evaluate(m, bm.val, MatchMode::one_to_one);
    CHECK(r.novel_miou == 0.0);
    const auto again = evaluate(m, bm.val, MatchMode::one_to_one);
    CHECK(again.to_key_value() == r.to_key_value());
  }
  SUBCASE("class space mismatch") {
    LinearSegmenter m(ClassSpace::exact(3, 2), 5, 6);
    CHECK_THROWS_AS(evaluate(m, bm.val, MatchMode::one_to_one), ConfigError);
  }
}

TEST_CASE("report formats") {
  EvalReport r;
  r.base_miou = 0.5;
  r.novel_miou = 0.25;
  r.all_miou = 0.375;
  r.mapping.target = {1, 0};
  CHECK(r.to_key_value().find("novel_miou = 0.25\n") != std::string::npos);
  CHECK(r.to_key_value().find("mapping = 1 0\n") != std::string::npos);
  CHECK(EvalReport::csv_header() == "run,base_miou,novel_miou,all_miou,match_mode");
  CHECK(r.csv_row("x") == "x,0.5,0.25,0.375,one-to-one");
}
