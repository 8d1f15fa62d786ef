#pragma once

// Dense arithmetic inner loops shared by the segmenter, clustering and EMA code.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The variant is picked once at startup from CPUID and can be
// overridden with select_isa(). Results of the two paths agree to rounding
// (FMA contraction and reassociated sums), not bit-for-bit, so a single process
// must stick to one table for reproducible runs.

#include <cstddef>
#include <string_view>

namespace ncd::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  /// out[r] = bias[r] + sum_d weights[r*dim + d] * x[d], for r < rows.
  void (*affine)(const double* weights, const double* bias, const float* x, std::size_t rows,
                 std::size_t dim, double* out);
  /// grad[r*dim + d] += coeff[r] * x[d], for r < rows.
  void (*outer_accumulate)(const double* coeff, const float* x, std::size_t rows, std::size_t dim,
                           double* grad);
  /// sum_i (a[i] - b[i])^2.
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  /// y[i] = alpha * x[i] + beta * y[i].
  void (*axpby)(double alpha, const double* x, double beta, double* y, std::size_t n);
  /// acc[i] += x[i] with x in single precision (feature pooling).
  void (*accumulate_f32)(const float* x, double* acc, std::size_t n);
  /// velocity = momentum*velocity + grad + decay*params; params -= lr*velocity.
  void (*sgd_momentum)(double* params, double* velocity, const double* grad, std::size_t n, double lr,
                       double momentum, double decay);
  /// In-place softmax of z[0..n); returns log(sum_i exp(z_i)).
  double (*softmax)(double* z, std::size_t n);
};

const KernelTable& scalar_table();
/// Null when the binary was built without AVX2 support.
const KernelTable* avx2_table();

bool isa_supported(Isa isa);
/// Table in use by the library. Defaults to the best supported ISA.
const KernelTable& active();
Isa active_isa();
/// Switches the process-wide table; throws if the ISA is unsupported here.
void select_isa(Isa isa);

std::string_view to_string(Isa isa);
Isa isa_from_string(std::string_view s);

}  // namespace ncd::kernels
