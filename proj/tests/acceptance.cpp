// Acceptance checks, one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <sstream>
#include <string>

#include "kp/error.hpp"
#include "kp/harness.hpp"
#include "kp/redundancy.hpp"
#include "kp/solver.hpp"
#include "support.hpp"

using namespace kp;

namespace {

using Clock = std::chrono::steady_clock;
constexpr Method kAll[] = {Method::pcg, Method::ppcg, Method::ppcr, Method::tppcg};

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& why) {
    if (ok) return;
    if (pass) detail << " | ";
    else detail << "; ";
    detail << why;
    pass = false;
  }
};

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

FailureEvent event_at(double progress, std::vector<int> victims) {
  FailureEvent ev;
  ev.at_progress = progress;
  ev.victims = std::move(victims);
  return ev;
}

SolverConfig with(Method m, int n_redu, std::vector<FailureEvent> events = {}) {
  SolverConfig c;
  c.method = m;
  c.n_redu = n_redu;
  c.failures.events = std::move(events);
  c.verify_recovery = !c.failures.empty();
  return c;
}

double max_error(const ConvergenceReport& r) {
  double e = 0;
  for (const auto& rec : r.recoveries)
    for (const auto& [_, v] : rec.reconstruction_errors) e = std::max(e, v);
  return e;
}

bool bitwise_equal(const std::vector<IterationRecord>& a, const std::vector<IterationRecord>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(IterationRecord)) == 0;
}

Problem make(const CsrMatrix& a, int nodes, PrecondKind pk = PrecondKind::block_jacobi) {
  return make_problem(a, rhs_ones(a), nodes, pk);
}

// 1. Every reconstructed block within 1e-8 of its snapshot, < 10 s per case.
Verdict exact_recovery() {
  Verdict v;
  const auto p = make(poisson2d(16), 4);
  for (Method m : kAll) {
    const auto t0 = Clock::now();
    const auto rep = solve(p, with(m, 1, {event_at(0.5, {0})}));
    const double secs = since(t0);
    const double err = max_error(rep);
    const bool checked = rep.recoveries.size() == 1 && !rep.recoveries[0].reconstruction_errors.empty();
    v.detail << ' ' << to_string(m) << ":err=" << err << ",t=" << secs << "s";
    v.require(checked, std::string(to_string(m)) + " recorded no reconstruction errors");
    v.require(err <= 1e-8, std::string(to_string(m)) + " error above 1e-8");
    v.require(secs < 10, std::string(to_string(m)) + " took >= 10 s");
    v.require(rep.converged, std::string(to_string(m)) + " did not converge");
  }
  return v;
}

// 2. Iterations with one failure within 1% + 2 of the failure-free count.
Verdict continuity() {
  Verdict v;
  for (const char* src : {"gen:poisson2d:16", "gen:tridiag:1024"})
    for (Method m : kAll) {
      const auto p = make(load_matrix_source(src, 0), 4);
      const auto base = solve(p, with(m, 0));
      std::string tag = std::string(src + 4) + "/" + std::string(to_string(m));
      try {
        const auto rep = solve(p, with(m, 1, {event_at(0.5, {0})}));
        v.detail << ' ' << tag << ':' << base.iterations << "->" << rep.iterations;
        v.require(base.converged && rep.converged, tag + " did not converge");
        v.require(std::abs(rep.iterations - base.iterations) <= 0.01 * base.iterations + 2, tag + " drift too large");
      } catch (const Error& e) {
        v.require(false, tag + ": " + e.what());
      }
    }
  return v;
}

// 3. Coverage of both window stamps after one exchange, and |R_j1| >= |R_j2| >= ...
Verdict coverage() {
  Verdict v;
  const auto t0 = Clock::now();
  int configs = 0, uncovered = 0, non_monotone = 0;
  std::string example;
  for (int idx = 0; idx < 50; ++idx) {
    const auto a = kp::testing::pattern(idx);
    for (int nn : {4, 8}) {
      const auto dist = distribute(a, make_partition(a.n, nn));
      const auto sets = compute_send_sets(dist);
      for (int n_redu : {1, 2, 3}) {
        ++configs;
        const auto plan = compute_redundant_sets(sets, n_redu);
        ClusterSim cl(nn);
        kp::testing::protected_exchange(cl, dist, plan, 100 + idx);
        if (kp::testing::first_uncovered(cl, dist.partition(), n_redu).owner >= 0) ++uncovered;
        bool mono = true;
        for (int j = 0; j < nn && mono; ++j)
          for (int k = 2; k <= n_redu; ++k)
            if (plan.R(j, k).size() > plan.R(j, k - 1).size()) {
              mono = false;
              if (example.empty()) {
                std::ostringstream s;
                s << "pattern " << idx << " (n=" << a.n << ") nn=" << nn << " n_redu=" << n_redu << " rank " << j
                  << ": |R_" << k - 1 << "|=" << plan.R(j, k - 1).size() << " < |R_" << k << "|="
                  << plan.R(j, k).size();
                example = s.str();
              }
              break;
            }
        if (!mono) ++non_monotone;
      }
    }
  }
  const double secs = since(t0);
  v.detail << " configs=" << configs << " uncovered=" << uncovered << " non_monotone=" << non_monotone
           << " t=" << secs << "s";
  v.require(uncovered == 0, "coverage below n_redu");
  v.require(non_monotone == 0, "monotonicity violated, e.g. " + example);
  v.require(secs < 60, "took >= 60 s");
  return v;
}

// 4. Removing any single element of any R_jk uncovers exactly that element.
Verdict necessity() {
  Verdict v;
  long drops = 0, still_covered = 0;
  for (int idx = 0; idx < 10; ++idx) {
    const auto a = kp::testing::pattern(idx);
    for (int nn : {4, 8}) {
      const auto dist = distribute(a, make_partition(a.n, nn));
      const auto sets = compute_send_sets(dist);
      for (int n_redu : {1, 2, 3}) {
        const auto plan = compute_redundant_sets(sets, n_redu);
        for (int j = 0; j < nn; ++j)
          for (int k = 1; k <= n_redu; ++k) {
            const auto r = plan.R(j, k);
            for (std::size_t q = 0; q < r.size(); ++q) {
              auto cut = plan;
              auto& set = cut.redundant[j][k - 1];
              const int s = set[q];
              set.erase(set.begin() + static_cast<std::ptrdiff_t>(q));
              ClusterSim cl(nn);
              kp::testing::protected_exchange(cl, dist, cut, 7);
              ++drops;
              if (kp::testing::holders(cl, j, s, 1) >= n_redu && kp::testing::holders(cl, j, s, 2) >= n_redu)
                ++still_covered;
            }
          }
      }
    }
  }
  v.detail << " drops=" << drops << " still_covered=" << still_covered;
  v.require(drops > 0, "no redundant elements to drop");
  v.require(still_covered == 0, "some element is redundant beyond n_redu");
  return v;
}

// 5. PPCG and PCG gamma traces agree to 1e-8 relative over the first 50 iterations.
// Runs stop at convergence (1e-8); the comparison covers what both produced.
Verdict equivalence() {
  Verdict v;
  const auto p = make(poisson2d(16), 4);
  auto c = with(Method::pcg, 0);
  c.max_iters = 50;
  const auto ref = solve(p, c);
  c.method = Method::ppcg;
  const auto got = solve(p, c);
  const std::size_t len = std::min<std::size_t>(50, std::min(ref.trace.size(), got.trace.size()));
  double worst = 0;
  int worst_at = -1;
  for (std::size_t i = 0; i < len; ++i) {
    const double d = std::abs(got.trace[i].gamma - ref.trace[i].gamma) / std::abs(ref.trace[i].gamma);
    if (d > worst) {
      worst = d;
      worst_at = static_cast<int>(i);
    }
  }
  v.detail << " compared=" << len << " of 50 requested (converges at " << ref.iterations << ") max_rel=" << worst
           << " at " << worst_at;
  v.require(ref.converged && got.converged, "a run did not converge");
  v.require(len + 1 >= ref.trace.size(), "PPCG stopped early");
  v.require(worst <= 1e-8, "gamma traces differ by more than 1e-8");
  return v;
}

// 6. All four methods reach 1e-8 on poisson2d(32) within 5n with replacement every 50.
Verdict convergence_protocol() {
  Verdict v;
  const auto a = poisson2d(32);
  const auto p = make(a, 4, PrecondKind::jacobi);
  for (Method m : kAll) {
    auto c = with(m, 0);
    c.rr_period = 50;
    const auto rep = solve(p, c);
    v.detail << ' ' << to_string(m) << ":it=" << rep.iterations << ",rr=" << rep.residual_replacements
             << ",true=" << rep.true_rel_residual;
    const std::string tag(to_string(m));
    v.require(rep.converged && rep.final_rel_residual <= 1e-8, tag + " did not reach 1e-8");
    v.require(rep.iterations <= 5 * a.n, tag + " exceeded 5n");
    v.require(rep.residual_replacements >= 1, tag + " never replaced the residual");
    v.require(rep.true_rel_residual <= 1e-7, tag + " true residual above 10 tol");
  }
  return v;
}

// 7. Before-phase failure recovers i_f - 1, after-phase recovers i_f.
Verdict phase_rule() {
  Verdict v;
  const auto p = make(poisson2d(16), 4);
  FailureEvent before, after;
  before.at_iteration = 5;
  before.phase = FailurePhase::before_reduction_complete;
  before.victims = {0};
  after.at_iteration = 10;
  after.phase = FailurePhase::after_reduction_and_spmv;
  after.victims = {0};
  const auto rep = solve(p, with(Method::ppcg, 1, {before, after}));
  v.require(rep.recoveries.size() == 2, "expected two recoveries");
  if (rep.recoveries.size() == 2) {
    const auto& r0 = rep.recoveries[0];
    const auto& r1 = rep.recoveries[1];
    v.detail << " before@" << r0.failure_iteration << "->" << r0.recovered_iteration << " after@"
             << r1.failure_iteration << "->" << r1.recovered_iteration;
    v.require(r0.recovered_iteration == 4 && !r0.restarted, "before-phase did not resume at i_f - 1");
    v.require(r1.recovered_iteration == 10 && !r1.restarted, "after-phase did not resume at i_f");
  }
  v.require(max_error(rep) <= 1e-8, "reconstruction error above 1e-8");
  v.require(rep.converged, "did not converge");
  return v;
}

// 8. Two failures: exact with two copies, a distinct error with one.
Verdict multi_failure() {
  Verdict v;
  const auto p = make(poisson2d(16), 8);
  for (Method m : kAll) {
    const std::string tag(to_string(m));
    const auto rep = solve(p, with(m, 2, {event_at(0.5, {0, 1})}));
    v.detail << ' ' << tag << ":err=" << max_error(rep);
    v.require(rep.recoveries.size() == 1 && !rep.recoveries[0].reconstruction_errors.empty(),
              tag + " recorded no reconstruction errors");
    v.require(max_error(rep) <= 1e-8, tag + " error above 1e-8");
    v.require(rep.converged, tag + " did not converge");
    bool distinct = false;
    try {
      solve(p, with(m, 1, {event_at(0.5, {0, 1})}));
    } catch (const UnrecoverableFailure&) {
      distinct = true;
    } catch (const Error&) {
    }
    v.require(distinct, tag + " with n_redu=1 did not raise UnrecoverableFailure");
  }
  return v;
}

// 9. Redundant volume per node per iteration bounded; redundancy leaves the trace unchanged.
Verdict overhead() {
  Verdict v;
  std::uint64_t worst_ratio_num = 0, worst_ratio_den = 1;
  int violations = 0;
  for (int idx = 0; idx < 50; ++idx) {
    const auto a = kp::testing::pattern(idx);
    for (int nn : {4, 8}) {
      const auto part = make_partition(a.n, nn);
      const auto dist = distribute(a, part);
      const auto sets = compute_send_sets(dist);
      const std::uint64_t block = (a.n + nn - 1) / nn;
      for (int n_redu : {1, 2, 3}) {
        const auto plan = compute_redundant_sets(sets, n_redu);
        ClusterSim cl(nn);
        cl.reset_counters();
        const auto x = DistributedVector::from_global(part, kp::testing::random_vector(a.n, 1), Role::p, 0);
        DistributedVector out(part, Role::s);
        ExchangeOptions o;
        o.plan = &plan;
        spmv_exchange(cl, dist, x, out, o);
        const std::uint64_t bound = n_redu * block;
        for (int j = 0; j < nn; ++j) {
          const auto sent = cl.counters().redundant_by_sender[j];
          if (sent > bound) ++violations;
          if (sent * worst_ratio_den > worst_ratio_num * bound) {
            worst_ratio_num = sent;
            worst_ratio_den = bound;
          }
        }
      }
    }
  }
  v.detail << " per-exchange worst=" << worst_ratio_num << "/" << worst_ratio_den << " violations=" << violations;
  v.require(violations == 0, "redundant volume above n_redu * ceil(n/nn)");

  int identical = 0, total = 0;
  for (Method m : kAll)
    for (const auto& a : {poisson2d(16), kp::testing::pattern(3)}) {
      const auto p = make(a, 8);
      const auto base = solve(p, with(m, 0));
      for (int n_redu : {1, 2, 3}) {
        const auto red = solve(p, with(m, n_redu));
        ++total;
        if (bitwise_equal(base.trace, red.trace)) ++identical;
        // Per iteration: the two-step method ships two stamps per exchange
        // covering two iterations.
        const std::uint64_t bound = n_redu * static_cast<std::uint64_t>((a.n + 7) / 8);
        for (auto sent : red.volume.redundant_by_sender)
          v.require(sent <= bound * static_cast<std::uint64_t>(std::max(1, red.iterations) + 1),
                    std::string(to_string(m)) + " run exceeds per-iteration bound");
      }
    }
  v.detail << " identical_traces=" << identical << "/" << total;
  v.require(identical == total, "redundancy changed a scalar trace");
  return v;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"exact-state recovery", exact_recovery},
      {"behavioral continuity", continuity},
      {"redundancy coverage", coverage},
      {"per-element necessity", necessity},
      {"PPCG equals PCG", equivalence},
      {"convergence protocol", convergence_protocol},
      {"phase rule", phase_rule},
      {"multi-failure", multi_failure},
      {"overhead accounting", overhead},
  };
  int failed = 0, id = 0;
  for (const auto& [name, check] : criteria) {
    ++id;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    std::printf("criterion %d %-22s %s%s\n", id, name, v.pass ? "PASS" : "FAIL", v.detail.str().c_str());
    std::fflush(stdout);
    if (!v.pass) ++failed;
  }
  std::printf("%d of 9 criteria failed\n", failed);
  return failed;
}
