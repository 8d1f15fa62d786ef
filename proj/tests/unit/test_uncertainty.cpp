#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "ncd/uncertainty.hpp"
#include "support.hpp"

using namespace ncd;

namespace {

ProbMap one_pixel(std::vector<double> p) {
  ProbMap m(1, 1, static_cast<int>(p.size()));
  std::copy(p.begin(), p.end(), m.pixel(0).begin());
  return m;
}

ScoreMap random_scores(std::mt19937_64& rng, std::size_t n, bool ties) {
  std::uniform_real_distribution<double> u;
  std::uniform_int_distribution<int> coarse(0, 3);
  ScoreMap s;
  for (std::size_t i = 0; i < n; ++i) s["img_" + std::to_string(rng() % 100000)] = ties ? coarse(rng) / 4.0 : u(rng);
  return s;
}

}  // namespace

TEST_CASE("entropy closed forms") {
  CHECK(entropy_map(one_pixel({0.25, 0.25, 0.25, 0.25}), 4)[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(entropy_map(one_pixel({0.25, 0.25, 0.25, 0.25}), 4)[0] - 1.0) < 1e-9);
  CHECK(entropy_map(one_pixel({0, 1, 0, 0}), 4)[0] == 0.0);
  CHECK(std::abs(entropy_map(one_pixel({0.5, 0.5, 0, 0}), 4)[0] - 0.5) < 1e-9);
  CHECK_THROWS(entropy_map(one_pixel({0.5, 0.5}), 3));
}

TEST_CASE("entropy is bounded and permutation invariant") {
  std::mt19937_64 rng(1);
  std::gamma_distribution<double> g(0.3, 1.0);
  for (int t = 0; t < 200; ++t) {
    const int c = 2 + t % 9;
    std::vector<double> p(c);
    double s = 0;
    for (double& v : p) s += (v = g(rng));
    for (double& v : p) v /= s;
    const double h = entropy_map(one_pixel(p), c)[0];
    CHECK(h >= 0.0);
    CHECK(h <= 1.0);
    std::shuffle(p.begin(), p.end(), rng);
    CHECK(entropy_map(one_pixel(p), c)[0] == doctest::Approx(h).epsilon(1e-12));
  }
}

TEST_CASE("foreground entropy averages over the mask") {
  EntropyMap e(1, 4);
  e[0] = 0.2;
  e[1] = 0.4;
  e[2] = 0.9;
  e[3] = 1.0;
  CHECK(foreground_entropy(e, NovelMask(1, 4, std::vector<std::uint8_t>{1, 1, 0, 0})) == doctest::Approx(0.3));
  CHECK_THROWS(foreground_entropy(e, NovelMask(1, 4)));
}

TEST_CASE("rank_split and dynamic_reassign properties") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u;
  const double lambdas[] = {0.33, 0.5, 0.67, 0.83, 1.0};
  for (int t = 0; t < 1000; ++t) {
    const auto scores = random_scores(rng, 1 + rng() % 40, t % 3 == 0);
    const double lambda = lambdas[t % 5];
    const auto s = rank_split(scores, lambda);
    const std::size_t n = scores.size();
    const std::size_t expect = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(lambda * n)));
    REQUIRE(s.clean.size() == expect);
    REQUIRE(s.unclean.size() == n - expect);
    std::set<std::string> all(s.clean.begin(), s.clean.end());
    for (const auto& id : s.unclean) CHECK(all.insert(id).second);
    CHECK(all.size() == n);
    double max_clean = -1, min_unclean = 2;
    for (const auto& id : s.clean) max_clean = std::max(max_clean, scores.at(id));
    for (const auto& id : s.unclean) min_unclean = std::min(min_unclean, scores.at(id));
    CHECK(max_clean <= min_unclean);

    ScoreMap fresh;
    for (const auto& [id, v] : scores) fresh[id] = u(rng);
    const auto r = dynamic_reassign(s, fresh);
    CHECK(r.reassigned);
    CHECK(r.clean.size() == std::max<std::size_t>(1, s.clean.size() / 2));
    CHECK(r.clean.size() + r.unclean.size() == n);
    for (const auto& id : r.clean) CHECK(s.is_clean(id));
    double max_kept = -1, min_moved = 2;
    for (const auto& id : r.clean) max_kept = std::max(max_kept, fresh.at(id));
    for (const auto& id : r.discarded) {
      min_moved = std::min(min_moved, fresh.at(id));
      CHECK(s.is_clean(id));
      CHECK_FALSE(r.is_clean(id));
    }
    CHECK(max_kept <= min_moved);
    CHECK(r.discarded.size() == s.clean.size() - r.clean.size());
    CHECK_THROWS(dynamic_reassign(r, fresh));
  }
}

TEST_CASE("split examples") {
  ScoreMap s{{"a", 0.4}, {"b", 0.1}, {"c", 0.1}, {"d", 0.9}};
  const auto sp = rank_split(s, 0.5);
  CHECK(sp.clean == std::vector<std::string>{"b", "c"});
  CHECK(sp.unclean == std::vector<std::string>{"a", "d"});
  CHECK(rank_split(s, 0.1).clean.size() == 1);

  // Fresh scores reverse the old order: membership follows the fresh ones.
  ScoreMap four{{"p", 0.1}, {"q", 0.2}, {"r", 0.3}, {"s", 0.4}};
  const auto all_clean = rank_split(four, 1.0);
  ScoreMap rev{{"p", 0.9}, {"q", 0.8}, {"r", 0.2}, {"s", 0.1}};
  const auto r = dynamic_reassign(all_clean, rev);
  CHECK(r.clean == std::vector<std::string>{"s", "r"});
  CHECK(r.discarded == std::vector<std::string>{"q", "p"});

  ScoreMap eight;
  for (int i = 0; i < 8; ++i) eight["i" + std::to_string(i)] = i;
  CHECK(dynamic_reassign(rank_split(eight, 1.0), eight).clean.size() == 4);
  ScoreMap one{{"x", 0.5}};
  CHECK(dynamic_reassign(rank_split(one, 0.5), one).clean.size() == 1);
  CHECK_THROWS(dynamic_reassign(rank_split(eight, 1.0), one));

  const auto u = rank_split_with_unscored(s, {"z"}, 0.5);
  CHECK(u.unclean.back() == "z");
  CHECK(std::isinf(u.scores.at("z")));
  CHECK_THROWS_AS(rank_split(s, 0.0), ConfigError);
}
