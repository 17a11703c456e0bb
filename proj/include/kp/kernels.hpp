#pragma once

// Node-local numerical kernels. The functions in kp::kernels are OpenMP
// parallel; kp::kernels::serial holds the plain-loop reference versions the
// tests and benchmark compare against.
//
// All parallel kernels are bitwise deterministic regardless of thread count:
// element-wise kernels trivially so, and dot() sums fixed-size chunks in order.

#include <cstdint>
#include <span>

namespace kp::kernels {

/// CSR row block whose column indices address an arbitrary input buffer.
struct CsrView {
  std::span<const std::int64_t> row_ptr;  // rows + 1 entries
  std::span<const int> col;
  std::span<const double> val;
  int rows() const noexcept { return static_cast<int>(row_ptr.size()) - 1; }
};

/// Chunk length of the deterministic parallel dot product.
inline constexpr std::size_t kDotChunk = 2048;

namespace serial {
void spmv(const CsrView& a, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void xpay(std::span<const double> x, double beta, std::span<double> y);
void three_term(double zeta, double eta, double theta, std::span<const double> x,
                std::span<const double> v, std::span<double> y);
}  // namespace serial

/// y = A x
void spmv(const CsrView& a, std::span<const double> x, std::span<double> y);
/// Sum of a[i]*b[i] over fixed chunks of kDotChunk, chunk partials added in order.
double dot(std::span<const double> a, std::span<const double> b);
/// y += alpha x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
/// y = x + beta y
void xpay(std::span<const double> x, double beta, std::span<double> y);
/// y = zeta (x + eta v) + theta y, the two-iteration pipelined CG update.
void three_term(double zeta, double eta, double theta, std::span<const double> x,
                std::span<const double> v, std::span<double> y);

/// Number of threads the parallel kernels will use.
int max_threads();

}  // namespace kp::kernels
