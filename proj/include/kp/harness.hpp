#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kp/csr.hpp"
#include "kp/preconditioner.hpp"
#include "kp/solver.hpp"

namespace kp {

/// 5-point Laplacian on a k x k grid: n = k^2, diagonal 4, neighbours -1.
CsrMatrix poisson2d(int k);
/// Diagonal 2, off-diagonals -1.
CsrMatrix tridiag(int n);
/// Random symmetric pattern with about `per_row` off-diagonal entries per row
/// and a dominant diagonal, so the result is SPD.
CsrMatrix random_spd(int n, int per_row, std::uint64_t seed);

/// "gen:poisson2d:K", "gen:tridiag:N", "gen:random:N:PER_ROW", or a Matrix
/// Market path. The seed is used by random generators only.
CsrMatrix load_matrix_source(const std::string& source, std::uint64_t seed);
/// Short identifier of a source for reports: the generator string or file stem.
std::string matrix_id(const std::string& source);

/// b = A * ones: the exact solution is known and b is never zero.
std::vector<double> rhs_ones(const CsrMatrix& a);

struct ExperimentConfig {
  std::string matrix = "gen:poisson2d:16";
  Method method = Method::ppcg;
  int nodes = 32;
  int n_redu = 1;
  RedundancyRule rule = RedundancyRule::minimal;
  PrecondKind precond = PrecondKind::block_jacobi;
  double rel_tol = 1e-8;
  int max_iters = 0;
  int rr_period = 50;
  FailureScript failures;
  int repetitions = 5;
  std::uint64_t seed = 42;
  bool verify_recovery = false;

  void validate() const;
};

ExperimentConfig experiment_from_json(const nlohmann::json& j, ExperimentConfig base = {});
nlohmann::json to_json(const ExperimentConfig& c);

/// One of the three run sets, averaged over repetitions. Iteration counts and
/// traces are identical between repetitions; only wall times vary.
struct SetResult {
  bool ran = false;
  bool converged = false;
  std::string error;  // exception text when the run aborted
  ConvergenceReport report;  // last repetition
  std::vector<double> wall_samples;
  double wall_mean = 0;
};

struct OverheadRecord {
  ExperimentConfig config;
  std::string id;
  int n = 0;
  std::int64_t nnz = 0;
  SetResult baseline;
  SetResult redundancy;
  SetResult failure;
  std::optional<int> failure_iteration;  // resolved trigger of the first event
  double t0 = 0;
  std::optional<double> redundancy_overhead_pct;
  std::optional<double> failure_overhead_pct;
  /// Baseline and redundancy-only runs have bitwise identical scalar traces.
  std::optional<bool> traces_identical;
};

/// Baseline, redundancy-only and redundancy-plus-failure sets. Sets that the
/// config makes meaningless (no redundancy, no failure script) are skipped.
OverheadRecord run_experiment_set(const ExperimentConfig& config);

nlohmann::json to_json(const ConvergenceReport& r, bool with_x = false);
nlohmann::json to_json(const RecoveryReport& r);
nlohmann::json to_json(const OverheadRecord& r);
nlohmann::json to_json(const RedundancyPlan& plan);

/// Writes results.json and results.csv into `dir` (created if missing). Rows
/// are ordered by (matrix, method).
void emit_report(std::span<const OverheadRecord> records, const std::filesystem::path& dir);
std::string csv_report(std::span<const OverheadRecord> records);

}  // namespace kp
