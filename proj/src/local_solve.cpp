#include "kp/local_solve.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <algorithm>
#include <cmath>
#include <string>

#include "kp/error.hpp"

namespace kp {

namespace {

std::vector<char> row_mask(int n, std::span<const int> rows) {
  std::vector<char> mask(n, 0);
  for (int r : rows) {
    if (r < 0 || r >= n) throw InvalidArgument("row set index out of range");
    mask[r] = 1;
  }
  return mask;
}

void track(LocalSolveStats* stats, double residual, int iterations) {
  if (!stats) return;
  stats->solves++;
  stats->iterations += iterations;
  stats->max_residual = std::max(stats->max_residual, residual);
}

template <class Op>
double relative_residual(const Op& b, const Eigen::MatrixXd& y, const Eigen::MatrixXd& rhs) {
  double worst = 0;
  for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
    const double nr = rhs.col(c).norm();
    if (nr == 0) continue;
    worst = std::max(worst, (b * y.col(c) - rhs.col(c)).norm() / nr);
  }
  return worst;
}

}  // namespace

Eigen::MatrixXd take_rows(std::span<const int> rows, const Eigen::MatrixXd& global) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), global.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = global.row(rows[i]);
  return out;
}

void put_rows(std::span<const int> rows, const Eigen::MatrixXd& sub, Eigen::MatrixXd& global) {
  if (sub.rows() != static_cast<Eigen::Index>(rows.size()) || sub.cols() != global.cols())
    throw InvalidArgument("put_rows: shape mismatch");
  for (std::size_t i = 0; i < rows.size(); ++i) global.row(rows[i]) = sub.row(static_cast<Eigen::Index>(i));
}

Eigen::MatrixXd hcat(std::initializer_list<std::span<const double>> cols) {
  if (cols.size() == 0) return {};
  const auto n = static_cast<Eigen::Index>(cols.begin()->size());
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(cols.size()));
  Eigen::Index c = 0;
  for (auto col : cols) {
    if (static_cast<Eigen::Index>(col.size()) != n) throw InvalidArgument("hcat: column lengths differ");
    out.col(c++) = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
  }
  return out;
}

Eigen::SparseMatrix<double> extract_block(const CsrMatrix& b, std::span<const int> rows) {
  std::vector<int> local(b.n, -1);
  for (std::size_t i = 0; i < rows.size(); ++i) local.at(rows[i]) = static_cast<int>(i);
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto cols = b.row_cols(rows[i]);
    auto vals = b.row_vals(rows[i]);
    for (std::size_t k = 0; k < cols.size(); ++k)
      if (local[cols[k]] >= 0) trip.emplace_back(static_cast<int>(i), local[cols[k]], vals[k]);
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::SparseMatrix<double> out(m, m);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

Eigen::MatrixXd solve_spd(const Eigen::SparseMatrix<double>& b, const Eigen::MatrixXd& rhs, LocalSolveStats* stats) {
  if (b.rows() != b.cols() || b.rows() != rhs.rows()) throw InvalidArgument("solve_spd: shape mismatch");
  if (b.rows() == 0) return Eigen::MatrixXd(0, rhs.cols());
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(rhs.rows(), rhs.cols());
  if (rhs.norm() == 0) {
    track(stats, 0, 0);
    return y;
  }
  int iterations = 0;
  if (b.rows() <= kDenseLimit) {
    Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(b)};
    if (llt.info() != Eigen::Success) throw LocalSolveError("local block is not positive definite");
    y = llt.solve(rhs);
  } else {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(kLocalTol);
    cg.setMaxIterations(static_cast<Eigen::Index>(10 * b.rows()));
    cg.compute(b);
    for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
      if (rhs.col(c).norm() == 0) continue;
      y.col(c) = cg.solve(rhs.col(c));
      if (cg.info() != Eigen::Success)
        throw LocalSolveError("local CG did not reach " + std::to_string(kLocalTol) + " (error " +
                              std::to_string(cg.error()) + ")");
      iterations += static_cast<int>(cg.iterations());
    }
  }
  if (!y.allFinite()) throw LocalSolveError("local SPD solve produced non-finite values");
  track(stats, relative_residual(b, y, rhs), iterations);
  return y;
}

Eigen::MatrixXd solve_general(const Eigen::MatrixXd& b, const Eigen::MatrixXd& rhs, LocalSolveStats* stats) {
  if (b.rows() != b.cols() || b.rows() != rhs.rows()) throw InvalidArgument("solve_general: shape mismatch");
  if (b.rows() == 0) return Eigen::MatrixXd(0, rhs.cols());
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(rhs.rows(), rhs.cols());
  if (rhs.norm() == 0) {
    track(stats, 0, 0);
    return y;
  }
  int iterations = 0;
  if (b.rows() <= kDenseLimit) {
    Eigen::FullPivLU<Eigen::MatrixXd> rank_check(b);
    if (!rank_check.isInvertible()) throw LocalSolveError("local system is singular");
    y = b.partialPivLu().solve(rhs);
  } else {
    Eigen::SparseMatrix<double> sb = b.sparseView();
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>> solver;
    solver.setTolerance(kLocalTol);
    solver.setMaxIterations(static_cast<Eigen::Index>(10 * b.rows()));
    solver.compute(sb);
    for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
      if (rhs.col(c).norm() == 0) continue;
      y.col(c) = solver.solve(rhs.col(c));
      if (solver.info() != Eigen::Success) throw LocalSolveError("local BiCGSTAB did not converge");
      iterations += static_cast<int>(solver.iterations());
    }
  }
  if (!y.allFinite()) throw LocalSolveError("local solve produced non-finite values");
  track(stats, relative_residual(b, y, rhs), iterations);
  return y;
}

Eigen::MatrixXd CsrBlockOperator::offdiag_apply(std::span<const int> rows, const Eigen::MatrixXd& y) const {
  if (y.rows() != a_.n) throw InvalidArgument("offdiag_apply: operand is not global length");
  const auto mask = row_mask(a_.n, rows);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), y.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto cols = a_.row_cols(rows[i]);
    auto vals = a_.row_vals(rows[i]);
    for (std::size_t k = 0; k < cols.size(); ++k)
      if (!mask[cols[k]]) out.row(static_cast<Eigen::Index>(i)) += vals[k] * y.row(cols[k]);
  }
  return out;
}

Eigen::MatrixXd CsrBlockOperator::solve_diag(std::span<const int> rows, const Eigen::MatrixXd& rhs,
                                             LocalSolveStats* stats) const {
  return solve_spd(extract_block(a_, rows), rhs, stats);
}

Eigen::MatrixXd reconstruct_block(const BlockOperator& b, std::span<const int> rows, const Eigen::MatrixXd& v_r,
                                  const Eigen::MatrixXd& y, LocalSolveStats* stats) {
  if (v_r.rows() != static_cast<Eigen::Index>(rows.size())) throw InvalidArgument("reconstruct_block: v_r length");
  const Eigen::MatrixXd rhs = v_r - b.offdiag_apply(rows, y);
  return b.solve_diag(rows, rhs, stats);
}

}  // namespace kp
