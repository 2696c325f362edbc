#pragma once

// Dense double-precision inner-loop kernels used by the tensor library.
//
// Every kernel has a scalar reference implementation; AVX2+FMA (x86-64) and
// NEON (aarch64) variants are compiled when the toolchain supports them and
// selected once at startup. Set L4SLLM_SIMD=scalar to force the reference path.

#include <cstddef>
#include <string_view>

namespace l4sllm::simd {

enum class SimdLevel { Scalar, Avx2, Neon };

std::string_view to_string(SimdLevel level);

struct KernelTable {
  SimdLevel level;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[i] = alpha * x[i]
  void (*scale)(double alpha, const double* x, double* y, std::size_t n);
  // y[i] += x[i]
  void (*add)(const double* x, double* y, std::size_t n);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, const double* x, double* y, std::size_t n);
void add(const double* x, double* y, std::size_t n);
}  // namespace scalar

// Returns nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_table();
const KernelTable* neon_table();
const KernelTable& scalar_table();

// Best table supported by this CPU, honoring the L4SLLM_SIMD override.
const KernelTable& active();

// Swap the active table (tests and benchmarks). Not thread-safe.
void set_active(const KernelTable& table);

}  // namespace l4sllm::simd
