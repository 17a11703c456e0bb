#include "kp/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kp::kernels {

namespace {
// Below this many elements the fork/join costs more than the loop.
constexpr std::int64_t kParallelThreshold = 4096;
}  // namespace

namespace serial {

void spmv(const CsrView& a, std::span<const double> x, std::span<double> y) {
  const int rows = a.rows();
  for (int i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (auto k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) sum += a.val[k] * x[a.col[k]];
    y[i] = sum;
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

void xpay(std::span<const double> x, double beta, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + beta * y[i];
}

void three_term(double zeta, double eta, double theta, std::span<const double> x,
                std::span<const double> v, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = zeta * (x[i] + eta * v[i]) + theta * y[i];
}

}  // namespace serial

void spmv(const CsrView& a, std::span<const double> x, std::span<double> y) {
  const std::int64_t rows = a.rows();
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(a.val.size()) > kParallelThreshold)
  for (std::int64_t i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (auto k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) sum += a.val[k] * x[a.col[k]];
    y[i] = sum;
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  const std::int64_t n = static_cast<std::int64_t>(a.size());
  const std::int64_t chunks = (n + static_cast<std::int64_t>(kDotChunk) - 1) / static_cast<std::int64_t>(kDotChunk);
  if (chunks <= 1) return serial::dot(a, b);
  std::vector<double> partial(static_cast<std::size_t>(chunks), 0.0);
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
  for (std::int64_t c = 0; c < chunks; ++c) {
    const std::int64_t lo = c * static_cast<std::int64_t>(kDotChunk);
    const std::int64_t hi = std::min(n, lo + static_cast<std::int64_t>(kDotChunk));
    double s = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) s += a[i] * b[i];
    partial[c] = s;
  }
  double sum = 0.0;
  for (double p : partial) sum += p;
  return sum;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::int64_t n = static_cast<std::int64_t>(y.size());
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
  for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void xpay(std::span<const double> x, double beta, std::span<double> y) {
  const std::int64_t n = static_cast<std::int64_t>(y.size());
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] + beta * y[i];
}

void three_term(double zeta, double eta, double theta, std::span<const double> x,
                std::span<const double> v, std::span<double> y) {
  const std::int64_t n = static_cast<std::int64_t>(y.size());
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
  for (std::int64_t i = 0; i < n; ++i) y[i] = zeta * (x[i] + eta * v[i]) + theta * y[i];
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace kp::kernels
