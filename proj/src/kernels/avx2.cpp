// Compiled with -mavx2 -mfma. Nothing here may run before dispatch has
// confirmed CPU support.

#include "ncd/kernels.hpp"

#if defined(NCD_HAVE_AVX2)

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace ncd::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

inline __m256d load4f(const float* x) { return _mm256_cvtps_pd(_mm_loadu_ps(x)); }

void affine(const double* weights, const double* bias, const float* x, std::size_t rows, std::size_t dim,
            double* out) {
  const std::size_t vec_end = dim & ~std::size_t{3};
  for (std::size_t r = 0; r < rows; ++r) {
    const double* w = weights + r * dim;
    __m256d acc = _mm256_setzero_pd();
    std::size_t d = 0;
    for (; d < vec_end; d += 4) acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + d), load4f(x + d), acc);
    double s = hsum(acc);
    for (; d < dim; ++d) s += w[d] * static_cast<double>(x[d]);
    out[r] = bias[r] + s;
  }
}

void outer_accumulate(const double* coeff, const float* x, std::size_t rows, std::size_t dim,
                      double* grad) {
  const std::size_t vec_end = dim & ~std::size_t{3};
  for (std::size_t r = 0; r < rows; ++r) {
    const __m256d c = _mm256_set1_pd(coeff[r]);
    double* g = grad + r * dim;
    std::size_t d = 0;
    for (; d < vec_end; d += 4)
      _mm256_storeu_pd(g + d, _mm256_fmadd_pd(c, load4f(x + d), _mm256_loadu_pd(g + d)));
    for (; d < dim; ++d) g[d] += coeff[r] * static_cast<double>(x[d]);
  }
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d t = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(t, t, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

void axpby(double alpha, const double* x, double beta, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const __m256d vb = _mm256_set1_pd(beta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_mul_pd(vb, _mm256_loadu_pd(y + i))));
  for (; i < n; ++i) y[i] = alpha * x[i] + beta * y[i];
}

void accumulate_f32(const float* x, double* acc, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(acc + i, _mm256_add_pd(_mm256_loadu_pd(acc + i), load4f(x + i)));
  for (; i < n; ++i) acc[i] += static_cast<double>(x[i]);
}

void sgd_momentum(double* params, double* velocity, const double* grad, std::size_t n, double lr,
                  double momentum, double decay) {
  const __m256d vm = _mm256_set1_pd(momentum);
  const __m256d vd = _mm256_set1_pd(decay);
  const __m256d vlr = _mm256_set1_pd(lr);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d p = _mm256_loadu_pd(params + i);
    __m256d v = _mm256_fmadd_pd(vm, _mm256_loadu_pd(velocity + i), _mm256_loadu_pd(grad + i));
    v = _mm256_fmadd_pd(vd, p, v);
    _mm256_storeu_pd(velocity + i, v);
    _mm256_storeu_pd(params + i, _mm256_fnmadd_pd(vlr, v, p));
  }
  for (; i < n; ++i) {
    velocity[i] = momentum * velocity[i] + grad[i] + decay * params[i];
    params[i] -= lr * velocity[i];
  }
}

// exp for x <= 0: 2^k * p(r) with r = x - k ln2 and a degree-12 Taylor
// polynomial (relative error ~1e-16 on |r| <= ln2/2). Inputs below -708 are
// clamped; their results are negligible next to the exp(0) term of a softmax.
inline __m256d exp_nonpositive(__m256d x) {
  x = _mm256_max_pd(x, _mm256_set1_pd(-708.0));
  const __m256d k = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(k, _mm256_set1_pd(6.93147180369123816490e-01), x);
  r = _mm256_fnmadd_pd(k, _mm256_set1_pd(1.90821492927058770002e-10), r);
  static constexpr double c[] = {1.0 / 479001600, 1.0 / 39916800, 1.0 / 3628800, 1.0 / 362880, 1.0 / 40320,
                                 1.0 / 5040,      1.0 / 720,      1.0 / 120,     1.0 / 24,     1.0 / 6,
                                 0.5,             1.0,            1.0};
  __m256d p = _mm256_set1_pd(c[0]);
  for (int i = 1; i < 13; ++i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[i]));
  const __m128i k32 = _mm256_cvtpd_epi32(k);
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(k32), _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

double softmax(double* z, std::size_t n) {
  const double mx = *std::max_element(z, z + n);
  const __m256d vmx = _mm256_set1_pd(mx);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d e = exp_nonpositive(_mm256_sub_pd(_mm256_loadu_pd(z + i), vmx));
    _mm256_storeu_pd(z + i, e);
    acc = _mm256_add_pd(acc, e);
  }
  double sum = hsum(acc);
  if (i < n) {
    alignas(32) double tail[4] = {-1000.0, -1000.0, -1000.0, -1000.0};
    std::copy(z + i, z + n, tail);
    const __m256d e = exp_nonpositive(_mm256_sub_pd(_mm256_load_pd(tail), vmx));
    _mm256_store_pd(tail, e);
    for (std::size_t j = i; j < n; ++j) {
      z[j] = tail[j - i];
      sum += z[j];
    }
  }
  const double inv = 1.0 / sum;
  const __m256d vinv = _mm256_set1_pd(inv);
  i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(z + i, _mm256_mul_pd(_mm256_loadu_pd(z + i), vinv));
  for (; i < n; ++i) z[i] *= inv;
  return mx + std::log(sum);
}

constexpr KernelTable kAvx2{Isa::avx2,     affine,       outer_accumulate, squared_distance, axpby,
                            accumulate_f32, sgd_momentum, softmax};

}  // namespace

const KernelTable* avx2_table() { return &kAvx2; }

}  // namespace ncd::kernels

#else

namespace ncd::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace ncd::kernels

#endif
