#include <cstdlib>
#include <string>

#include "l4sllm/simd/kernels.hpp"

namespace l4sllm::simd {

#if !L4SLLM_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif
#if !L4SLLM_HAVE_NEON
const KernelTable* neon_table() { return nullptr; }
#endif

std::string_view to_string(SimdLevel level) {
  switch (level) {
    case SimdLevel::Scalar: return "scalar";
    case SimdLevel::Avx2: return "avx2";
    case SimdLevel::Neon: return "neon";
  }
  return "unknown";
}

const KernelTable& scalar_table() {
  static const KernelTable table{SimdLevel::Scalar, scalar::dot, scalar::axpy, scalar::scale,
                                 scalar::add};
  return table;
}

namespace {

const KernelTable* select_best() {
  if (const char* env = std::getenv("L4SLLM_SIMD"); env != nullptr && std::string(env) == "scalar") {
    return &scalar_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  if (const KernelTable* t = neon_table()) return t;
  return &scalar_table();
}

const KernelTable*& current() {
  static const KernelTable* table = select_best();
  return table;
}

}  // namespace

const KernelTable& active() { return *current(); }

void set_active(const KernelTable& table) { current() = &table; }

}  // namespace l4sllm::simd
