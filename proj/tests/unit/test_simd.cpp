#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "l4sllm/simd/kernels.hpp"

using namespace l4sllm::simd;

namespace {

std::vector<const KernelTable*> variants() {
  std::vector<const KernelTable*> out;
  if (const auto* t = avx2_table()) out.push_back(t);
  if (const auto* t = neon_table()) out.push_back(t);
  return out;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("scalar kernels on small inputs") {
  const std::vector<double> a{1, 2, 3}, b{4, -5, 6};
  CHECK(scalar::dot(a.data(), b.data(), 3) == doctest::Approx(12.0));
  std::vector<double> y{1, 1, 1};
  scalar::axpy(2.0, a.data(), y.data(), 3);
  CHECK(y == std::vector<double>{3, 5, 7});
  scalar::scale(-1.0, a.data(), y.data(), 3);
  CHECK(y == std::vector<double>{-1, -2, -3});
  scalar::add(b.data(), y.data(), 3);
  CHECK(y == std::vector<double>{3, -7, 3});
  CHECK(scalar::dot(a.data(), b.data(), 0) == 0.0);
}

TEST_CASE("vector variants agree with the scalar reference") {
  std::mt19937_64 rng(11);
  const auto& ref = scalar_table();
  CHECK(ref.level == SimdLevel::Scalar);
  for (const KernelTable* t : variants()) {
    INFO(to_string(t->level));
    // Lengths straddle the vector width and unroll factors, including tails.
    for (std::size_t n : {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 64, 127, 1000}) {
      const auto a = random_vec(n, rng);
      const auto b = random_vec(n, rng);
      double mag = 0.0;
      for (std::size_t i = 0; i < n; ++i) mag += std::abs(a[i] * b[i]);
      CHECK(std::abs(t->dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <= 1e-13 * (mag + 1.0));

      auto y1 = b, y2 = b;
      t->axpy(0.37, a.data(), y1.data(), n);
      ref.axpy(0.37, a.data(), y2.data(), n);
      // FMA may round once instead of twice.
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(y1[i] - y2[i]) <= 4e-16 * (std::abs(0.37 * a[i]) + std::abs(b[i])));
      }

      t->scale(-1.5, a.data(), y1.data(), n);
      ref.scale(-1.5, a.data(), y2.data(), n);
      CHECK(y1 == y2);

      t->add(a.data(), y1.data(), n);
      ref.add(a.data(), y2.data(), n);
      CHECK(y1 == y2);
    }
  }
}

TEST_CASE("active table can be swapped") {
  const KernelTable& before = active();
  set_active(scalar_table());
  CHECK(active().level == SimdLevel::Scalar);
  set_active(before);
  CHECK(active().level == before.level);
}
