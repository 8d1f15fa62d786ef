#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ncd/kernels.hpp"

using namespace ncd;
using namespace ncd::kernels;

namespace {

std::vector<double> rand_d(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

std::vector<float> rand_f(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<float> g;
  std::vector<float> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol * (1.0 + std::abs(a[i])));
}

// Sizes cover empty vector bodies, exact multiples of the SIMD width and tails.
const std::size_t kSizes[] = {1, 3, 4, 5, 8, 11, 16, 17, 33};

}  // namespace

TEST_CASE("scalar kernels against literal formulas") {
  const auto& k = scalar_table();
  const double w[] = {1, 2, 3, 4, 5, 6};
  const double b[] = {0.5, -1};
  const float x[] = {1, 0, -1};
  double out[2];
  k.affine(w, b, x, 2, 3, out);
  CHECK(out[0] == 0.5 + 1 - 3);
  CHECK(out[1] == -1 + 4 - 6);

  double g[6] = {};
  const double c[] = {2, -1};
  k.outer_accumulate(c, x, 2, 3, g);
  CHECK(g[0] == 2);
  CHECK(g[2] == -2);
  CHECK(g[3] == -1);
  CHECK(g[5] == 1);

  const double p[] = {1, 2, 3}, q[] = {0, 0, 1};
  CHECK(k.squared_distance(p, q, 3) == 1 + 4 + 4);

  double y[] = {1, 1};
  const double xs[] = {2, 3};
  k.axpby(2.0, xs, 0.5, y, 2);
  CHECK(y[0] == 4.5);
  CHECK(y[1] == 6.5);

  double params[] = {1.0}, vel[] = {0.5};
  const double grad[] = {0.2};
  k.sgd_momentum(params, vel, grad, 1, 0.1, 0.9, 0.01);
  CHECK(vel[0] == doctest::Approx(0.9 * 0.5 + 0.2 + 0.01 * 1.0).epsilon(1e-15));
  CHECK(params[0] == doctest::Approx(1.0 - 0.1 * vel[0]).epsilon(1e-15));

  double z[] = {0.0, std::log(3.0)};
  const double lse = k.softmax(z, 2);
  CHECK(lse == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(z[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(z[1] == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("simd kernels match the scalar reference") {
  if (!isa_supported(Isa::avx2)) {
    MESSAGE("AVX2 not available; equivalence not exercised on this machine");
    return;
  }
  const auto& s = scalar_table();
  const auto& v = *avx2_table();
  std::mt19937_64 rng(11);

  for (std::size_t dim : kSizes) {
    CAPTURE(dim);
    const std::size_t rows = dim % 7 + 1;
    const auto w = rand_d(rng, rows * dim), b = rand_d(rng, rows);
    const auto x = rand_f(rng, dim);
    std::vector<double> o1(rows), o2(rows);
    s.affine(w.data(), b.data(), x.data(), rows, dim, o1.data());
    v.affine(w.data(), b.data(), x.data(), rows, dim, o2.data());
    check_close(o1, o2, 1e-13);

    auto g1 = rand_d(rng, rows * dim), g2 = g1;
    s.outer_accumulate(b.data(), x.data(), rows, dim, g1.data());
    v.outer_accumulate(b.data(), x.data(), rows, dim, g2.data());
    check_close(g1, g2, 1e-14);

    const auto p = rand_d(rng, dim), q = rand_d(rng, dim);
    CHECK(v.squared_distance(p.data(), q.data(), dim) ==
          doctest::Approx(s.squared_distance(p.data(), q.data(), dim)).epsilon(1e-13));

    auto y1 = rand_d(rng, dim), y2 = y1;
    s.axpby(0.3, p.data(), -1.7, y1.data(), dim);
    v.axpby(0.3, p.data(), -1.7, y2.data(), dim);
    check_close(y1, y2, 1e-14);

    auto a1 = rand_d(rng, dim), a2 = a1;
    s.accumulate_f32(x.data(), a1.data(), dim);
    v.accumulate_f32(x.data(), a2.data(), dim);
    CHECK(a1 == a2);

    auto p1 = rand_d(rng, dim), p2 = p1, v1 = rand_d(rng, dim), v2 = v1;
    s.sgd_momentum(p1.data(), v1.data(), q.data(), dim, 0.1, 0.9, 1e-4);
    v.sgd_momentum(p2.data(), v2.data(), q.data(), dim, 0.1, 0.9, 1e-4);
    check_close(p1, p2, 1e-14);
    check_close(v1, v2, 1e-14);

    for (double scale : {0.1, 3.0, 40.0, 400.0}) {
      auto z1 = rand_d(rng, dim, scale), z2 = z1;
      const double l1 = s.softmax(z1.data(), dim);
      const double l2 = v.softmax(z2.data(), dim);
      CHECK(l2 == doctest::Approx(l1).epsilon(1e-14));
      for (std::size_t i = 0; i < dim; ++i) CHECK(std::abs(z1[i] - z2[i]) <= 1e-14);
    }
  }
}

TEST_CASE("isa selection") {
  const Isa before = active_isa();
  select_isa(Isa::scalar);
  CHECK(active_isa() == Isa::scalar);
  CHECK(&active() == &scalar_table());
  if (isa_supported(Isa::avx2)) {
    select_isa(Isa::avx2);
    CHECK(active_isa() == Isa::avx2);
  } else {
    CHECK_THROWS(select_isa(Isa::avx2));
  }
  select_isa(before);
  CHECK(isa_from_string(to_string(Isa::avx2)) == Isa::avx2);
  CHECK(isa_from_string("scalar") == Isa::scalar);
  CHECK_THROWS(isa_from_string("neon"));
}
