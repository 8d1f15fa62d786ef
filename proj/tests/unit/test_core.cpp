#include <doctest.h>

#include <cmath>
#include <limits>

#include "ncd/core.hpp"

using namespace ncd;

TEST_CASE("class space layouts") {
  const auto e = ClassSpace::exact(6, 5);
  CHECK(e.channels() == 11);
  CHECK(e.n_total() == 11);
  const auto o = ClassSpace::over(6, 5, 2);
  CHECK(o.novel_head_size == 10);
  CHECK(o.channels() == 16);
  CHECK(o.n_total() == 11);
  CHECK(o.is_novel_channel(6));
  CHECK(o.is_novel_channel(15));
  CHECK_FALSE(o.is_novel_channel(5));
  CHECK_FALSE(o.is_novel_channel(16));

  CHECK_THROWS_AS(ClassSpace::exact(0, 5), ConfigError);
  CHECK_THROWS_AS(ClassSpace::exact(6, 0), ConfigError);
  CHECK_THROWS_AS(ClassSpace::over(6, 5, 0), ConfigError);
  CHECK_THROWS_AS(ClassSpace::exact(200, 60), ConfigError);
}

TEST_CASE("feature map shape and finiteness") {
  FeatureMap f(2, 3, 4);
  CHECK(f.pixels() == 6);
  CHECK(f.values().size() == 24);
  f.pixel(5)[3] = 7.0f;
  CHECK(f.values()[23] == 7.0f);

  CHECK_THROWS_AS(FeatureMap(2, 2, 2, std::vector<float>(7)), ShapeError);
  CHECK_THROWS_AS(FeatureMap(0, 2, 2), ShapeError);
  std::vector<float> bad(8, 0.0f);
  bad[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(FeatureMap(2, 2, 2, bad), Error);
  bad[3] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(FeatureMap(2, 2, 2, bad), Error);
}

TEST_CASE("label map indexing") {
  LabelMap y(2, 3, 4);
  y.at(1, 2) = 9;
  CHECK(y[5] == 9);
  CHECK(y[0] == 4);
  CHECK_THROWS_AS(LabelMap(2, 2, std::vector<ClassId>(3)), ShapeError);
}

TEST_CASE("binary masks count and reject non-binary values") {
  SaliencyMask m(3, 3);
  CHECK(m.count() == 0);
  m.set(0, true);
  m.set(8, true);
  CHECK(m.count() == 2);
  CHECK(m.at(2, 2));
  CHECK_THROWS_AS(NovelMask(1, 2, std::vector<std::uint8_t>{0, 2}), Error);
  CHECK_THROWS_AS(NovelMask(1, 2, std::vector<std::uint8_t>{0}), ShapeError);
}

TEST_CASE("argmax breaks ties toward the lowest id") {
  const std::vector<double> p{0.2, 0.4, 0.4};
  CHECK(argmax_class(p) == 1);
  const std::vector<double> q{0.5, 0.5};
  CHECK(argmax_class(q) == 0);
}

TEST_CASE("split tags round trip") {
  for (auto t : {SplitTag::base, SplitTag::novel, SplitTag::val}) CHECK(split_tag_from_string(to_string(t)) == t);
  CHECK_THROWS(split_tag_from_string("train"));
}

TEST_CASE("dataset validation") {
  const auto cs = ClassSpace::exact(3, 2);
  FeatureMap f(2, 2, 1);
  Dataset base{SplitTag::base, cs, {}};
  base.items.push_back({"a", f, LabelMap(2, 2, 2), std::nullopt});
  CHECK_NOTHROW(base.validate());

  SUBCASE("base labels stay below n_base") {
    base.items[0].labels = LabelMap(2, 2, 3);
    CHECK_THROWS(base.validate());
  }
  SUBCASE("ignore id is allowed") {
    base.items[0].labels = LabelMap(2, 2, kIgnoreId);
    CHECK_NOTHROW(base.validate());
  }
  SUBCASE("duplicate ids") {
    base.items.push_back(base.items[0]);
    CHECK_THROWS(base.validate());
  }
  SUBCASE("base items need labels") {
    base.items[0].labels.reset();
    CHECK_THROWS(base.validate());
  }
  SUBCASE("label shape must match") {
    base.items[0].labels = LabelMap(1, 2, 0);
    CHECK_THROWS_AS(base.validate(), ShapeError);
  }

  Dataset novel{SplitTag::novel, cs, {}};
  novel.items.push_back({"n", f, LabelMap(2, 2, 4), SaliencyMask(2, 2)});
  CHECK_NOTHROW(novel.validate());
  novel.items[0].labels = LabelMap(2, 2, 5);
  CHECK_THROWS(novel.validate());
  novel.items[0].labels.reset();
  novel.items[0].saliency.reset();
  CHECK_THROWS(novel.validate());

  // Over-clustered pseudo-labels may use every channel of the wider head.
  Dataset pseudo{SplitTag::novel, ClassSpace::over(3, 2, 2), {}};
  pseudo.items.push_back({"p", f, LabelMap(2, 2, 6), SaliencyMask(2, 2)});
  CHECK_NOTHROW(pseudo.validate());
}
