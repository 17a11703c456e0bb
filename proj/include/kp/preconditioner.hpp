#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kp/cluster.hpp"
#include "kp/csr.hpp"
#include "kp/distributed.hpp"
#include "kp/local_solve.hpp"

namespace kp {

enum class PrecondKind { identity, jacobi, block_jacobi, explicit_sparse };
std::string_view to_string(PrecondKind kind);
PrecondKind parse_precond_kind(std::string_view name);

/// SPD preconditioner P (the approximate inverse applied as u = P r).
/// Besides the distributed apply, it exposes the row-block access recovery
/// needs: rows of P, and solves with diagonal blocks P_rr.
class Preconditioner : public BlockOperator {
 public:
  virtual PrecondKind kind() const noexcept = 0;
  /// out = P in on every node.
  virtual void apply(ClusterSim& cluster, const DistributedVector& in, DistributedVector& out) const = 0;
  /// Sorted global columns that appear in P_{rows,*}.
  virtual std::vector<int> row_support(std::span<const int> rows) const = 0;
  /// (P y)_rows for global-length y (c columns); reads y only on row_support(rows).
  virtual Eigen::MatrixXd apply_rows(std::span<const int> rows, const Eigen::MatrixXd& y) const = 0;

  Eigen::MatrixXd offdiag_apply(std::span<const int> rows, const Eigen::MatrixXd& y) const override;
  /// P_{rows,*} A_{*,rows} as a dense |rows| x |rows| matrix (A symmetric).
  Eigen::MatrixXd times_columns(const CsrMatrix& a, std::span<const int> rows) const;
};

using PrecondPtr = std::shared_ptr<const Preconditioner>;

/// Builds a preconditioner for A on the given partition. `explicit_p` is
/// required for explicit_sparse and ignored otherwise. Block-Jacobi uses the
/// node-diagonal blocks A_jj, so P_{r,rbar} = 0 for any union of node blocks.
PrecondPtr make_preconditioner(PrecondKind kind, const CsrMatrix& a, PartitionPtr part,
                               const CsrMatrix* explicit_p = nullptr);

/// First-order Neumann approximation of A^{-1}: 2 D^{-1} - D^{-1} A D^{-1}.
/// Symmetric; positive definite when the spectrum of D^{-1/2} A D^{-1/2} lies
/// below 2, which holds for diagonally dominant A.
CsrMatrix neumann1(const CsrMatrix& a);

}  // namespace kp
