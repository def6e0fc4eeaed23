#pragma once

// Data-parallel inner loops used by the backbone, the regression head and the
// map statistics. A scalar reference implementation is always present; an
// AVX2/FMA variant is compiled on x86-64 and selected at runtime when the CPU
// supports it. Set AUTHAUDIT_KERNELS=scalar to force the reference path.

#include <cstddef>

namespace authaudit::kernels {

struct CenteredMoments {
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
};

struct KernelTable {
  const char* name;
  float (*dot_f32)(const float* a, const float* b, std::size_t n);
  double (*dot_f64)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy_f64)(double alpha, const double* x, double* y, std::size_t n);
  double (*sum_f64)(const double* x, std::size_t n);
  // Second moments about the supplied means.
  CenteredMoments (*centered_moments_f64)(const double* x, const double* y, std::size_t n,
                                          double mean_x, double mean_y);
};

const KernelTable& scalar();
// nullptr when the binary was built without AVX2 or the CPU lacks AVX2/FMA.
const KernelTable* avx2();
// The table used by the library; chosen once per process.
const KernelTable& active();

}  // namespace authaudit::kernels
