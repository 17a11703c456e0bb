// kp: run fault-tolerant pipelined Krylov experiments on the simulated cluster.
//
//   kp solve --matrix gen:poisson2d:16 --method ppcg --nodes 4 --nredu 1
//            --fail-at 0.5 --fail-phase after --victims 0 --reps 5 --out results/

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "kp/error.hpp"
#include "kp/harness.hpp"

namespace {

struct Cli {
  std::string config_path;
  std::vector<std::string> matrices;
  std::vector<std::string> methods;
  int nodes = 0;
  int n_redu = -1;
  std::string rule, precond, phase = "after";
  double tol = 0;
  int rr_period = -1;
  int max_iters = -1;
  double fail_at = 0;
  int fail_iter = -1;
  std::vector<int> victims;
  int reps = 0;
  std::uint64_t seed = 0;
  bool verify = false;
  bool dump_plan = false;
  bool quiet = false;
  std::string out = "results";
};

kp::ExperimentConfig base_config(const Cli& c, const CLI::App& app) {
  kp::ExperimentConfig cfg;
  if (!c.config_path.empty()) {
    std::ifstream f(c.config_path);
    if (!f) throw kp::InvalidArgument("cannot open config " + c.config_path);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw kp::InvalidArgument("config " + c.config_path + ": " + e.what());
    }
    cfg = kp::experiment_from_json(j);
  }
  auto given = [&app](const char* name) { return app.count(name) > 0; };
  if (given("--nodes")) cfg.nodes = c.nodes;
  if (given("--nredu")) cfg.n_redu = c.n_redu;
  if (given("--rule")) cfg.rule = kp::parse_redundancy_rule(c.rule);
  if (given("--precond")) cfg.precond = kp::parse_precond_kind(c.precond);
  if (given("--tol")) cfg.rel_tol = c.tol;
  if (given("--rr-period")) cfg.rr_period = c.rr_period;
  if (given("--max-iters")) cfg.max_iters = c.max_iters;
  if (given("--reps")) cfg.repetitions = c.reps;
  if (given("--seed")) cfg.seed = c.seed;
  if (given("--verify")) cfg.verify_recovery = true;
  if (const char* env = std::getenv("KP_SEED")) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw kp::InvalidArgument(std::string("KP_SEED is not an integer: ") + env);
    cfg.seed = v;
  }
  if (given("--fail-at") || given("--fail-iter")) {
    kp::FailureEvent ev;
    if (given("--fail-at")) ev.at_progress = c.fail_at;
    else ev.at_iteration = c.fail_iter;
    ev.phase = kp::parse_failure_phase(c.phase);
    ev.victims = c.victims.empty() ? std::vector<int>{0} : c.victims;
    cfg.failures.events = {ev};
  }
  return cfg;
}

int dump_plan(const kp::ExperimentConfig& cfg) {
  auto a = kp::load_matrix_source(cfg.matrix, cfg.seed);
  auto part = kp::make_partition(a.n, cfg.nodes);
  const auto dist = kp::distribute(a, part);
  const auto plan = kp::compute_redundant_sets(kp::compute_send_sets(dist), cfg.n_redu, cfg.rule);
  std::cout << kp::to_json(plan).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fault-tolerant pipelined Krylov solvers on a simulated cluster"};
  app.require_subcommand(1);
  Cli c;
  auto* solve = app.add_subcommand("solve", "Run baseline, redundancy and failure sets and write results");
  solve->add_option("--config", c.config_path, "JSON experiment config; flags override its fields")->check(CLI::ExistingFile);
  solve->add_option("--matrix", c.matrices, "Matrix Market path or gen:poisson2d:K, gen:tridiag:N, gen:random:N:PER_ROW")
      ->delimiter(',');
  solve->add_option("--method", c.methods, "pcg, ppcg, ppcr, 2ppcg (comma separated for several)")->delimiter(',');
  solve->add_option("--nodes", c.nodes, "Simulated node count")->check(CLI::PositiveNumber);
  solve->add_option("--nredu", c.n_redu, "Tolerated simultaneous failures (0: no redundancy)")->check(CLI::NonNegativeNumber);
  solve->add_option("--rule", c.rule, "Redundant-set rule: minimal or threshold");
  solve->add_option("--precond", c.precond, "identity, jacobi, bjacobi, explicit");
  solve->add_option("--tol", c.tol, "Relative residual reduction")->check(CLI::PositiveNumber);
  solve->add_option("--rr-period", c.rr_period, "Residual replacement period (0: off)")->check(CLI::NonNegativeNumber);
  solve->add_option("--max-iters", c.max_iters, "Iteration cap (0: 5 n)")->check(CLI::NonNegativeNumber);
  auto* at = solve->add_option("--fail-at", c.fail_at, "Failure at this fraction of the baseline iterations");
  auto* it = solve->add_option("--fail-iter", c.fail_iter, "Failure at this iteration")->check(CLI::NonNegativeNumber);
  at->excludes(it);
  solve->add_option("--fail-phase", c.phase, "before or after");
  solve->add_option("--victims", c.victims, "Failing ranks")->delimiter(',');
  solve->add_option("--reps", c.reps, "Repetitions per set")->check(CLI::PositiveNumber);
  solve->add_option("--seed", c.seed, "Seed for random matrices (KP_SEED overrides)");
  solve->add_flag("--verify", c.verify, "Snapshot lost state and report reconstruction errors");
  solve->add_flag("--dump-redundancy-plan", c.dump_plan, "Print the redundancy plan of the first matrix and exit");
  solve->add_flag("-q,--quiet", c.quiet, "No per-record summary on stdout");
  solve->add_option("--out", c.out, "Output directory for results.json and results.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto base = base_config(c, *solve);
    std::vector<std::string> matrices = c.matrices.empty() ? std::vector<std::string>{base.matrix} : c.matrices;
    std::vector<kp::Method> methods;
    for (const auto& m : c.methods) methods.push_back(kp::parse_method(m));
    if (methods.empty()) methods.push_back(base.method);

    if (c.dump_plan) {
      auto cfg = base;
      cfg.matrix = matrices.front();
      return dump_plan(cfg);
    }

    std::vector<kp::OverheadRecord> records;
    for (const auto& mat : matrices)
      for (auto m : methods) {
        auto cfg = base;
        cfg.matrix = mat;
        cfg.method = m;
        records.push_back(kp::run_experiment_set(cfg));
        const auto& r = records.back();
        if (c.quiet) continue;
        std::cout << r.id << ' ' << kp::to_string(m) << ": ";
        if (!r.baseline.error.empty()) std::cout << "baseline error: " << r.baseline.error;
        else std::cout << r.baseline.report.iterations << " iterations" << (r.baseline.converged ? "" : " (not converged)");
        if (r.failure.ran) {
          if (!r.failure.error.empty()) std::cout << ", failure set error: " << r.failure.error;
          else std::cout << ", " << r.failure.report.iterations << " with failure";
        }
        std::cout << '\n';
      }
    kp::emit_report(records, c.out);
    if (!c.quiet) std::cout << "wrote " << c.out << "/results.json and results.csv\n";
    bool ok = true;
    for (const auto& r : records)
      ok = ok && r.baseline.converged && (!r.failure.ran || r.failure.converged);
    return ok ? 0 : 2;
  } catch (const kp::Error& e) {
    std::cerr << "kp: " << e.what() << '\n';
    return 1;
  }
}
