#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kp/cluster.hpp"
#include "kp/csr.hpp"
#include "kp/distributed.hpp"
#include "kp/local_solve.hpp"
#include "kp/preconditioner.hpp"
#include "kp/redundancy.hpp"

namespace kp {

enum class Method { pcg, ppcg, ppcr, tppcg };
std::string_view to_string(Method m);
Method parse_method(std::string_view name);

enum class FailurePhase { before_reduction_complete, after_reduction_and_spmv };
std::string_view to_string(FailurePhase p);
FailurePhase parse_failure_phase(std::string_view name);

/// One scripted failure. Exactly one trigger is set; progress fractions are
/// resolved against a failure-free iteration count before solving.
struct FailureEvent {
  std::optional<double> at_progress;
  std::optional<int> at_iteration;
  FailurePhase phase = FailurePhase::after_reduction_and_spmv;
  std::vector<int> victims;
};

struct FailureScript {
  std::vector<FailureEvent> events;
  bool empty() const noexcept { return events.empty(); }
};

/// Replaces progress triggers by iterations: ceil(fraction * baseline). The
/// two-step method only fails at even block starts, so its iteration is
/// rounded down to even.
FailureScript resolve_failures(const FailureScript& script, int baseline_iterations, Method method);

struct SolverConfig {
  Method method = Method::ppcg;
  double rel_tol = 1e-8;
  int max_iters = 0;  // 0: 5 n
  int rr_period = 50; // 0: residual replacement off
  int n_redu = 0;     // 0: no redundant copies, no failure tolerance
  RedundancyRule rule = RedundancyRule::minimal;
  FailureScript failures;
  /// Snapshot the state a failure destroys and report reconstruction errors.
  bool verify_recovery = false;

  void validate(int nodes) const;
};

/// Static inputs, kept in the simulated reliable storage.
struct Problem {
  std::shared_ptr<const CsrMatrix> a;
  PartitionPtr part;
  DistributedMatrix dist;
  PrecondPtr precond;
  std::vector<double> b;
  std::vector<double> x0;  // empty: zero

  int n() const noexcept { return a ? a->n : 0; }
  int nodes() const noexcept { return part ? part->nodes() : 0; }
};

Problem make_problem(CsrMatrix a, std::vector<double> b, int nodes, PrecondKind precond = PrecondKind::block_jacobi,
                     const CsrMatrix* explicit_p = nullptr);

/// Named solver vectors and scalars at one iteration. Working state, history
/// entries and recovery targets all use this form.
struct SolverState {
  int t = 0;
  std::map<std::string, DistributedVector> v;
  std::map<std::string, double> s;

  DistributedVector& vec(const std::string& name);
  const DistributedVector& vec(const std::string& name) const;
  double sc(const std::string& name) const;
  void discard(std::span<const int> ranks);
};

struct IterationRecord {
  double gamma = 0;
  double delta = 0;
  double alpha = 0;  // step length; eta for the two-step method
  double beta = 0;   // zeta for the two-step method
  double rel_residual = 0;
};

struct ResidualAudit {
  int iteration = 0;
  double true_rel = 0;       // ||b - A x|| / ||b||
  double recurrence_rel = 0; // recurrence norm / initial norm
};

struct RecoveryReport {
  std::vector<int> failed_ranks;
  FailurePhase phase = FailurePhase::after_reduction_and_spmv;
  int failure_iteration = 0;
  int recovered_iteration = 0;
  bool restarted = false;  // no complete window yet: rerun initialization
  std::map<std::string, double> reconstruction_errors;  // only with verify_recovery
  LocalSolveStats local;
  std::uint64_t recovery_elements = 0;
  std::uint64_t recovery_messages = 0;
  double wall_seconds = 0;
};

struct ConvergenceReport {
  Method method = Method::ppcg;
  bool converged = false;
  std::string stop_reason;
  int iterations = 0;
  double final_rel_residual = 0;  // recurrence estimate
  double true_rel_residual = 0;   // recomputed ||b - A x|| / ||b||
  std::vector<IterationRecord> trace;
  std::vector<ResidualAudit> audits;
  int residual_replacements = 0;
  VolumeCounters volume;
  std::vector<RecoveryReport> recoveries;
  std::vector<double> x;
  double wall_seconds = 0;
  double recovery_seconds = 0;
};

ConvergenceReport run_pcg(const Problem& p, const SolverConfig& cfg, ClusterSim& cluster);
ConvergenceReport run_ppcg(const Problem& p, const SolverConfig& cfg, ClusterSim& cluster);
ConvergenceReport run_ppcr(const Problem& p, const SolverConfig& cfg, ClusterSim& cluster);
ConvergenceReport run_2ppcg(const Problem& p, const SolverConfig& cfg, ClusterSim& cluster);
/// Dispatches on cfg.method.
ConvergenceReport run_solver(const Problem& p, const SolverConfig& cfg, ClusterSim& cluster);
/// Fresh cluster of p.nodes() nodes.
ConvergenceReport solve(const Problem& p, const SolverConfig& cfg);

}  // namespace kp
