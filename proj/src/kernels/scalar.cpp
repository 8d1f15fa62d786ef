#include <algorithm>
#include <cmath>

#include "ncd/kernels.hpp"

namespace ncd::kernels {
namespace {

void affine(const double* weights, const double* bias, const float* x, std::size_t rows, std::size_t dim,
            double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* w = weights + r * dim;
    double acc = bias[r];
    for (std::size_t d = 0; d < dim; ++d) acc += w[d] * static_cast<double>(x[d]);
    out[r] = acc;
  }
}

void outer_accumulate(const double* coeff, const float* x, std::size_t rows, std::size_t dim,
                      double* grad) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double c = coeff[r];
    double* g = grad + r * dim;
    for (std::size_t d = 0; d < dim; ++d) g[d] += c * static_cast<double>(x[d]);
  }
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = a[i] - b[i];
    acc += t * t;
  }
  return acc;
}

void axpby(double alpha, const double* x, double beta, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i] + beta * y[i];
}

void accumulate_f32(const float* x, double* acc, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += static_cast<double>(x[i]);
}

void sgd_momentum(double* params, double* velocity, const double* grad, std::size_t n, double lr,
                  double momentum, double decay) {
  for (std::size_t i = 0; i < n; ++i) {
    velocity[i] = momentum * velocity[i] + grad[i] + decay * params[i];
    params[i] -= lr * velocity[i];
  }
}

double softmax(double* z, std::size_t n) {
  const double mx = *std::max_element(z, z + n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = std::exp(z[i] - mx);
    sum += z[i];
  }
  for (std::size_t i = 0; i < n; ++i) z[i] /= sum;
  return mx + std::log(sum);
}

constexpr KernelTable kScalar{Isa::scalar,   affine,       outer_accumulate, squared_distance, axpby,
                              accumulate_f32, sgd_momentum, softmax};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace ncd::kernels
