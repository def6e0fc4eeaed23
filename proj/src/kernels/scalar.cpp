#include "authaudit/kernels.hpp"

namespace authaudit::kernels {
namespace {

float dot_f32(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum_f64(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

CenteredMoments centered_moments_f64(const double* x, const double* y, std::size_t n,
                                     double mean_x, double mean_y) {
  CenteredMoments m;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mean_x;
    const double dy = y[i] - mean_y;
    m.sxx += dx * dx;
    m.syy += dy * dy;
    m.sxy += dx * dy;
  }
  return m;
}

}  // namespace

const KernelTable& scalar() {
  static const KernelTable table{"scalar", dot_f32, dot_f64, axpy_f64, sum_f64,
                                 centered_moments_f64};
  return table;
}

}  // namespace authaudit::kernels
