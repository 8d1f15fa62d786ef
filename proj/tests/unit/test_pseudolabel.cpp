#include <doctest.h>

#include <random>

#include "ncd/pseudolabel.hpp"
#include "support.hpp"

using namespace ncd;

namespace {

ProbMap random_probs(std::mt19937_64& rng, int h, int w, int c, double sharpness) {
  std::gamma_distribution<double> g(1.0 / sharpness, 1.0);
  ProbMap p(h, w, c);
  for (std::size_t i = 0; i < p.pixels(); ++i) {
    auto row = p.pixel(i);
    double s = 0;
    for (double& v : row) s += (v = g(rng) + 1e-300);
    for (double& v : row) v /= s;
  }
  return p;
}

}  // namespace

TEST_CASE("confident base labels threshold strictly") {
  ProbMap p(1, 3, 3);
  const double rows[3][3] = {{0.05, 0.95, 0.0}, {0.1, 0.0, 0.9}, {0.3, 0.3, 0.4}};
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) p.pixel(i)[c] = rows[i][c];
  const auto y = confident_base_labels(p, 0.9);
  CHECK(y[0] == 1);
  CHECK(y[1] == 0);  // 0.9 is not > 0.9
  CHECK(y[2] == 0);
  CHECK_THROWS_AS(confident_base_labels(p, 1.0), ConfigError);
}

TEST_CASE("confident labels are zero below tau and monotone in tau") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto p = random_probs(rng, 4, 5, 6, 0.2);
    std::size_t prev = p.pixels() + 1;
    for (double tau : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
      const auto y = confident_base_labels(p, tau);
      std::size_t nonzero = 0;
      for (std::size_t i = 0; i < y.pixels(); ++i) {
        const auto row = p.pixel(i);
        const double mx = *std::max_element(row.begin(), row.end());
        if (mx <= tau) CHECK(y[i] == 0);
        else CHECK(y[i] == argmax_class(row));
        nonzero += y[i] != 0;
      }
      CHECK(nonzero <= prev);
      prev = nonzero;
    }
  }
}

TEST_CASE("novel mask is saliency restricted to background") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto s = testing::random_mask<SaliencyMask>(rng, 6, 7, 0.5);
    const auto b = testing::random_labels(rng, 6, 7, 3);
    const auto m = novel_salient_mask(s, b);
    for (std::size_t i = 0; i < m.pixels(); ++i) {
      CHECK(m[i] <= s[i]);
      CHECK(m[i] == (s[i] && b[i] == 0));
    }
  }
}

TEST_CASE("fusion equals the additive formula") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto s = testing::random_mask<SaliencyMask>(rng, 5, 8, 0.6);
    const auto b = testing::random_labels(rng, 5, 8, 4);
    const auto m = novel_salient_mask(s, b);
    const ClassId c = static_cast<ClassId>(4 + t % 10);
    const auto f = fuse_labels(b, m, c);
    for (std::size_t i = 0; i < f.pixels(); ++i) CHECK(f[i] == b[i] + c * (m[i] ? 1 : 0));
  }
  CHECK(fuse_labels(LabelMap(1, 1, 3), NovelMask(1, 1), 16)[0] == 3);
  CHECK(fuse_labels(LabelMap(1, 1, 0), NovelMask(1, 1, 1), 16)[0] == 16);
  CHECK(fuse_labels(LabelMap(1, 1, 0), NovelMask(1, 1), 16)[0] == 0);
  CHECK_THROWS(fuse_labels(LabelMap(1, 1, 2), NovelMask(1, 1, 1), 16));
}

TEST_CASE("pseudo-label records from a base model") {
  std::mt19937_64 rng(4);
  const auto cs = ClassSpace::exact(3, 2);
  const auto model = testing::random_model(rng, cs, 3, 4, 3.0);
  Dataset novel{SplitTag::novel, cs, {}};
  for (int i = 0; i < 5; ++i)
    novel.items.push_back({"n" + std::to_string(i), testing::random_features(rng, 6, 6, 4), std::nullopt,
                           testing::random_mask<SaliencyMask>(rng, 6, 6, 0.7)});
  auto records = build_pseudo_labels(model, novel, 0.9);
  REQUIRE(records.size() == 5);
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    CHECK(rec.image_id == novel.items[r].id);
    CHECK(rec.base_labels == confident_base_labels(forward(model, novel.items[r].features), 0.9));
    CHECK(rec.novel_mask == novel_salient_mask(*novel.items[r].saliency, rec.base_labels));
    CHECK(rec.fused == rec.base_labels);
    CHECK_FALSE(rec.cluster_class.has_value());
  }
  assign_cluster(records[0], 1, 4);
  CHECK(records[0].cluster_class == ClassId{4});
  CHECK(records[0].fused == fuse_labels(records[0].base_labels, records[0].novel_mask, 4));

  PseudoLabelRecord tiny;
  tiny.novel_mask = NovelMask(4, 4);
  for (std::size_t i = 0; i < 15; ++i) tiny.novel_mask.set(i, true);
  CHECK_FALSE(tiny.clusterable());
  tiny.novel_mask.set(15, true);
  CHECK(tiny.clusterable());

  const auto wide = testing::random_model(rng, cs, 5, 4);
  CHECK_THROWS_AS(build_pseudo_labels(wide, novel, 0.9), ShapeError);
}
