#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace aspers::simd {

// Inner-loop kernels used by the dense layers, the hinge penalty and k-means.
// Every variant must agree with the scalar reference to rounding error; only
// the summation order and FMA contraction differ.
struct KernelTable {
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_kernels();

// nullptr when the variant was not compiled for this target or the CPU lacks
// the instructions.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// Best available table, chosen once per process. ASPERS_SIMD=scalar forces
// the reference path.
const KernelTable& active_kernels();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active_kernels().dot(a.data(), b.data(), a.size());
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active_kernels().axpy(a, x.data(), y.data(), x.size());
}

inline double squared_distance(std::span<const double> a,
                               std::span<const double> b) {
  return active_kernels().squared_distance(a.data(), b.data(), a.size());
}

}  // namespace aspers::simd
