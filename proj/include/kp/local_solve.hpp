#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <initializer_list>
#include <span>
#include <vector>

#include "kp/csr.hpp"

namespace kp {

/// Local systems up to this many rows are factorized densely; larger ones
/// use an iterative solver to kLocalTol.
inline constexpr int kDenseLimit = 512;
inline constexpr double kLocalTol = 1e-11;

struct LocalSolveStats {
  int solves = 0;
  int iterations = 0;       // summed over iterative solves; 0 for direct
  double max_residual = 0;  // max relative residual ||B y - rhs|| / ||rhs|| over columns
};

/// Row-block access to a global operator B as needed by the reconstruction
/// identity B_rr y_r = v_r - B_{r,rbar} y_rbar.
class BlockOperator {
 public:
  virtual ~BlockOperator() = default;
  /// B_{r,rbar} Y_rbar for a global n x c matrix Y; rows in r are ignored.
  virtual Eigen::MatrixXd offdiag_apply(std::span<const int> rows, const Eigen::MatrixXd& y) const = 0;
  /// Solves B_rr Y = rhs (|r| x c). Throws LocalSolveError when B_rr is
  /// singular or the solve misses kLocalTol.
  virtual Eigen::MatrixXd solve_diag(std::span<const int> rows, const Eigen::MatrixXd& rhs,
                                     LocalSolveStats* stats = nullptr) const = 0;
};

/// Block access to an SPD sparse matrix.
class CsrBlockOperator final : public BlockOperator {
 public:
  explicit CsrBlockOperator(const CsrMatrix& a) : a_(a) {}
  Eigen::MatrixXd offdiag_apply(std::span<const int> rows, const Eigen::MatrixXd& y) const override;
  Eigen::MatrixXd solve_diag(std::span<const int> rows, const Eigen::MatrixXd& rhs,
                             LocalSolveStats* stats = nullptr) const override;
  const CsrMatrix& matrix() const noexcept { return a_; }

 private:
  const CsrMatrix& a_;
};

/// B_{rows,rows} as an Eigen sparse matrix.
Eigen::SparseMatrix<double> extract_block(const CsrMatrix& b, std::span<const int> rows);

/// SPD solve: dense LLT up to kDenseLimit rows, else conjugate gradients.
/// All columns of rhs share one factorization.
Eigen::MatrixXd solve_spd(const Eigen::SparseMatrix<double>& b, const Eigen::MatrixXd& rhs,
                          LocalSolveStats* stats = nullptr);
/// General nonsingular solve: dense partial-pivot LU up to kDenseLimit rows,
/// else BiCGSTAB.
Eigen::MatrixXd solve_general(const Eigen::MatrixXd& b, const Eigen::MatrixXd& rhs, LocalSolveStats* stats = nullptr);

/// y_r from v_r and the complement y_rbar (Y is global n x c, rows r unread).
Eigen::MatrixXd reconstruct_block(const BlockOperator& b, std::span<const int> rows, const Eigen::MatrixXd& v_r,
                                  const Eigen::MatrixXd& y, LocalSolveStats* stats = nullptr);

/// Helpers for moving between global buffers and row subsets.
Eigen::MatrixXd take_rows(std::span<const int> rows, const Eigen::MatrixXd& global);
void put_rows(std::span<const int> rows, const Eigen::MatrixXd& sub, Eigen::MatrixXd& global);
Eigen::MatrixXd hcat(std::initializer_list<std::span<const double>> cols);

}  // namespace kp
