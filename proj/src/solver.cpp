#include "kp/solver.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <string>

#include "kp/error.hpp"
#include "kp/exchange.hpp"
#include "kp/kernels.hpp"
#include "kp/recovery.hpp"

namespace kp {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::pcg: return "pcg";
    case Method::ppcg: return "ppcg";
    case Method::ppcr: return "ppcr";
    case Method::tppcg: return "2ppcg";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "pcg") return Method::pcg;
  if (name == "ppcg") return Method::ppcg;
  if (name == "ppcr") return Method::ppcr;
  if (name == "2ppcg" || name == "tppcg") return Method::tppcg;
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

std::string_view to_string(FailurePhase p) {
  return p == FailurePhase::before_reduction_complete ? "before_reduction_complete" : "after_reduction_and_spmv";
}

FailurePhase parse_failure_phase(std::string_view name) {
  if (name == "before" || name == "before_reduction_complete") return FailurePhase::before_reduction_complete;
  if (name == "after" || name == "after_reduction_and_spmv") return FailurePhase::after_reduction_and_spmv;
  throw InvalidArgument("unknown failure phase '" + std::string(name) + "'");
}

FailureScript resolve_failures(const FailureScript& script, int baseline_iterations, Method method) {
  if (baseline_iterations < 0) throw InvalidArgument("resolve_failures: negative baseline");
  FailureScript out = script;
  for (auto& ev : out.events) {
    if (ev.at_progress) {
      ev.at_iteration = static_cast<int>(std::ceil(*ev.at_progress * baseline_iterations));
      ev.at_progress.reset();
    }
    if (method == Method::tppcg && ev.at_iteration) *ev.at_iteration -= *ev.at_iteration % 2;
  }
  return out;
}

void SolverConfig::validate(int nodes) const {
  if (!(rel_tol > 0) || !std::isfinite(rel_tol)) throw InvalidArgument("rel_tol must be positive");
  if (max_iters < 0) throw InvalidArgument("max_iters must be >= 0");
  if (method == Method::tppcg && max_iters % 2 != 0) throw InvalidArgument("2ppcg needs an even max_iters");
  if (rr_period < 0) throw InvalidArgument("residual replacement period must be >= 0");
  if (n_redu < 0) throw InvalidArgument("n_redu must be >= 0");
  if (n_redu > 0 && n_redu >= nodes) throw InvalidArgument("n_redu must be below the node count");
  std::vector<int> at;
  for (const auto& ev : failures.events) {
    if (ev.at_progress.has_value() == ev.at_iteration.has_value())
      throw InvalidArgument("failure event needs exactly one of progress or iteration");
    if (ev.at_progress && !(*ev.at_progress > 0 && *ev.at_progress <= 1))
      throw InvalidArgument("failure progress must lie in (0, 1]");
    if (ev.at_iteration && *ev.at_iteration < 0) throw InvalidArgument("failure iteration must be >= 0");
    if (ev.victims.empty()) throw InvalidArgument("failure event without victims");
    auto v = ev.victims;
    std::sort(v.begin(), v.end());
    if (std::adjacent_find(v.begin(), v.end()) != v.end()) throw InvalidArgument("duplicate failure victim");
    if (v.front() < 0 || v.back() >= nodes) throw InvalidArgument("failure victim out of range");
    if (static_cast<int>(v.size()) >= nodes) throw InvalidArgument("a failure must leave a survivor");
    if (ev.at_iteration) at.push_back(*ev.at_iteration);
  }
  // Recovery reads the last two committed iterations; a second failure inside
  // that window would find them damaged.
  std::sort(at.begin(), at.end());
  for (std::size_t k = 1; k < at.size(); ++k)
    if (at[k] - at[k - 1] < 2) throw InvalidArgument("failures must be at least 2 iterations apart");
}

Problem make_problem(CsrMatrix a, std::vector<double> b, int nodes, PrecondKind precond, const CsrMatrix* explicit_p) {
  a.validate();
  if (static_cast<int>(b.size()) != a.n) throw InvalidArgument("make_problem: rhs length differs from matrix size");
  Problem p;
  auto shared = std::make_shared<const CsrMatrix>(std::move(a));
  p.part = make_partition(shared->n, nodes);
  p.dist = distribute(*shared, p.part);
  p.precond = make_preconditioner(precond, *shared, p.part, explicit_p);
  p.a = std::move(shared);
  p.b = std::move(b);
  return p;
}

DistributedVector& SolverState::vec(const std::string& name) {
  auto it = v.find(name);
  if (it == v.end()) throw InvalidArgument("solver state has no vector '" + name + "'");
  return it->second;
}

const DistributedVector& SolverState::vec(const std::string& name) const {
  auto it = v.find(name);
  if (it == v.end()) throw InvalidArgument("solver state has no vector '" + name + "'");
  return it->second;
}

double SolverState::sc(const std::string& name) const {
  auto it = s.find(name);
  if (it == s.end()) throw InvalidArgument("solver state has no scalar '" + name + "'");
  return it->second;
}

void SolverState::discard(std::span<const int> ranks) {
  for (auto& [name, vec] : v)
    for (int r : ranks) vec.discard(r);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

/// Loop machinery shared by the four methods: reductions, operator applies,
/// history of committed iterations, and the failure and recovery path.
class Driver {
 public:
  Driver(const Problem& p, const SolverConfig& cfg, ClusterSim& cluster)
      : p_(p), cfg_(cfg), cl_(cluster), b_(DistributedVector::from_global(p.part, p.b, Role::b)) {
    if (!p.a || !p.part || !p.precond) throw InvalidArgument("solver: incomplete problem");
    if (cluster.nodes() != p.nodes()) throw InvalidArgument("solver: cluster size differs from partition");
    if (!cluster.failed_ranks().empty()) throw InvalidArgument("solver: cluster has failed nodes");
    if (!p.x0.empty() && static_cast<int>(p.x0.size()) != p.n()) throw InvalidArgument("solver: x0 length");
    cfg.validate(p.nodes());
    for (const auto& ev : cfg.failures.events)
      if (!ev.at_iteration) throw InvalidArgument("solver: unresolved progress trigger; use run_solver");
    fired_.assign(cfg.failures.events.size(), false);
    max_iters_ = cfg.max_iters > 0 ? cfg.max_iters : 5 * p.n();
    if (cfg.n_redu > 0)
      plan_ = compute_redundant_sets(compute_send_sets(p.dist), cfg.n_redu, cfg.rule);
    b_norm_ = std::sqrt(kernels::serial::dot(p.b, p.b));
    rep_.method = cfg.method;
    cl_.reset_counters();
    t_start_ = Clock::now();
  }

 protected:
  struct Pending {
    std::vector<std::pair<int, ReductionHandle>> handles;
  };
  using DotPair = std::pair<const DistributedVector*, const DistributedVector*>;

  DistributedVector& add(const std::string& name, Role role) {
    return st_.v.emplace(name, DistributedVector(p_.part, role)).first->second;
  }

  void set_x0(DistributedVector& x) const {
    if (p_.x0.empty()) x = DistributedVector(p_.part, Role::x);
    else x = DistributedVector::from_global(p_.part, p_.x0, Role::x);
  }

  Pending start(std::initializer_list<DotPair> pairs) {
    Pending out;
    std::vector<double> local(pairs.size());
    for (int k : cl_.live_ranks()) {
      std::size_t q = 0;
      for (const auto& [a, b] : pairs) local[q++] = kernels::dot(a->block(k), b->block(k));
      out.handles.emplace_back(k, cl_.iallreduce_sum(k, local));
    }
    return out;
  }

  std::vector<double> wait(Pending& pend) {
    std::vector<double> first;
    bool have = false;
    for (const auto& [k, h] : pend.handles) {
      auto v = cl_.wait(h, k);
      if (have && (v.size() != first.size() || std::memcmp(v.data(), first.data(), v.size() * sizeof(double)) != 0))
        throw InternalError("reduction results differ between nodes");
      if (!have) first = std::move(v);
      have = true;
    }
    pend.handles.clear();
    return first;
  }

  /// Survivors blocked on a reduction learn of the failure from it.
  void abort_reduction(Pending& pend) {
    for (const auto& [k, h] : pend.handles) {
      if (!cl_.alive(k)) continue;
      try {
        cl_.wait(h, k);
      } catch (const ReductionFailure&) {
        continue;
      }
      throw InternalError("reduction completed despite a participant failure");
    }
    pend.handles.clear();
  }

  void put(Scalar id, int stamp, double v) {
    for (int k : cl_.live_ranks()) cl_.ledger(k).put(id, stamp, v);
  }

  void spmv(const DistributedVector& in, DistributedVector& out, bool protect = false,
            const DistributedVector* piggyback = nullptr) {
    ExchangeOptions o;
    if (protect && plan_) {
      o.plan = &*plan_;
      o.piggyback = piggyback;
    }
    spmv_exchange(cl_, p_.dist, in, out, o);
  }

  void prec(const DistributedVector& in, DistributedVector& out) { p_.precond->apply(cl_, in, out); }

  /// r = b - A x
  void true_residual(const DistributedVector& x, DistributedVector& r) {
    spmv(x, r);
    for (int k = 0; k < r.nodes(); ++k) {
      auto rk = r.block(k);
      auto bk = b_.block(k);
      for (std::size_t i = 0; i < rk.size(); ++i) rk[i] = bk[i] - rk[i];
    }
  }

  /// Observer-side audit: no messages, no counters.
  void audit(int label, const DistributedVector& x, double recurrence_rel) {
    const auto xg = x.gather();
    const CsrMatrix& a = *p_.a;
    double rr = 0;
    for (int i = 0; i < a.n; ++i) {
      double ax = 0;
      auto c = a.row_cols(i);
      auto v = a.row_vals(i);
      for (std::size_t k = 0; k < c.size(); ++k) ax += v[k] * xg[c[k]];
      rr += (p_.b[i] - ax) * (p_.b[i] - ax);
    }
    rep_.audits.push_back({label, std::sqrt(rr) / std::max(b_norm_, 1e-300), recurrence_rel});
  }

  double norm_rel(const DistributedVector& v, double ref) const {
    double s = 0;
    for (int k = 0; k < v.nodes(); ++k) s += kernels::serial::dot(v.block(k), v.block(k));
    return ref > 0 ? std::sqrt(s) / ref : 0.0;
  }

  void note_rr() {
    for (int k : cl_.live_ranks()) cl_.note(EventKind::residual_replacement, k);
  }

  bool rr_due(int i) const { return cfg_.rr_period > 0 && i > 0 && i % cfg_.rr_period == 0; }

  void commit(SolverState e) {
    if (!plan_) return;
    hist_.push_back(std::move(e));
    while (hist_.size() > 2) hist_.pop_front();
  }

  /// Copy of the named working vectors with the given stamp.
  void snap(SolverState& e, std::initializer_list<const char*> names, int stamp) const {
    for (const char* n : names) {
      auto v = st_.vec(n);
      v.stamp = stamp;
      e.v.emplace(n, std::move(v));
    }
  }

  const FailureEvent* due(FailurePhase phase, int label) {
    for (std::size_t q = 0; q < fired_.size(); ++q) {
      const auto& ev = cfg_.failures.events[q];
      if (!fired_[q] && ev.phase == phase && *ev.at_iteration == label) {
        fired_[q] = true;
        return &ev;
      }
    }
    return nullptr;
  }

  /// Injects the failure, replaces the victims and rebuilds the lost state.
  /// `lag` is how far the recoverable iteration trails the label when the
  /// pending reduction is hit. Returns true when st_ holds a recovered
  /// iteration to resume from, false when the solver must reinitialize.
  bool fail(const FailureEvent& ev, int label, int lag, Pending* pending) {
    const auto t0 = Clock::now();
    RecoveryReport rr;
    rr.failed_ranks = ev.victims;
    std::sort(rr.failed_ranks.begin(), rr.failed_ranks.end());
    rr.phase = ev.phase;
    rr.failure_iteration = label;
    const int t = ev.phase == FailurePhase::after_reduction_and_spmv ? label : label - lag;
    const auto& victims = rr.failed_ranks;

    std::optional<SolverState> reference;
    if (cfg_.verify_recovery && !hist_.empty() && hist_.back().t == t) reference = hist_.back();

    cl_.inject_failure(victims);
    st_.discard(victims);
    for (auto& e : hist_) e.discard(victims);
    if (pending) abort_reduction(*pending);
    if (static_cast<int>(victims.size()) > cfg_.n_redu)
      throw UnrecoverableFailure(std::to_string(victims.size()) + " simultaneous failures exceed redundancy level " +
                                 std::to_string(cfg_.n_redu));
    for (int f : victims) cl_.spawn_replacement(f);
    cl_.note(EventKind::recovery_begin, victims.front());

    const bool restart = t < min_recoverable_iteration(cfg_.method);
    if (restart) {
      rr.restarted = true;
      rr.recovered_iteration = 0;
      for (int k = 0; k < cl_.nodes(); ++k) {
        cl_.backups(k).clear();
        cl_.ledger(k).clear();
      }
      for (auto& [name, v] : st_.v) v = DistributedVector(p_.part, v.role);
      rep_.trace.clear();
      rep_.audits.clear();
    } else {
      rr.recovered_iteration = t;
      if (hist_.empty() || hist_.back().t != t) throw InternalError("no committed state for iteration " + std::to_string(t));
      const SolverState* prev = hist_.size() > 1 ? &hist_[hist_.size() - 2] : nullptr;
      RecoveryContext ctx{p_, cl_, victims, t, hist_.back(), prev, cfg_.n_redu};
      SolverState rec = recover(cfg_.method, ctx, rr);
      if (reference) rr.reconstruction_errors = compare_blocks(rec, *reference, victims);
      hist_.clear();
      load(rec);
      rep_.trace.resize(std::min<std::size_t>(rep_.trace.size(), static_cast<std::size_t>(t)));
      std::erase_if(rep_.audits, [t](const ResidualAudit& a) { return a.iteration > t; });
    }
    cl_.note(EventKind::recovery_end, victims.front());
    rr.wall_seconds = seconds_since(t0);
    rep_.recovery_seconds += rr.wall_seconds;
    rep_.recoveries.push_back(std::move(rr));
    return !restart;
  }

  /// Working vectors absent from `s` are recomputed after the resume point;
  /// they restart as fresh buffers so discarded blocks can be written.
  void load(const SolverState& s) {
    st_.t = s.t;
    for (auto& [name, v] : st_.v) {
      auto it = s.v.find(name);
      v = it != s.v.end() ? it->second : DistributedVector(p_.part, v.role);
    }
    st_.s = s.s;
  }

  ConvergenceReport done(bool converged, std::string reason, int iterations, double rel, const DistributedVector& x) {
    rep_.converged = converged;
    rep_.stop_reason = std::move(reason);
    rep_.iterations = iterations;
    rep_.final_rel_residual = rel;
    rep_.x = x.gather();
    const CsrMatrix& a = *p_.a;
    double rr = 0;
    for (int i = 0; i < a.n; ++i) {
      double ax = 0;
      auto c = a.row_cols(i);
      auto v = a.row_vals(i);
      for (std::size_t k = 0; k < c.size(); ++k) ax += v[k] * rep_.x[c[k]];
      rr += (p_.b[i] - ax) * (p_.b[i] - ax);
    }
    rep_.true_rel_residual = b_norm_ > 0 ? std::sqrt(rr) / b_norm_ : std::sqrt(rr);
    rep_.residual_replacements = static_cast<int>(rep_.audits.size());
    if (rep_.trace.size() != static_cast<std::size_t>(iterations)) throw InternalError("trace length differs from iteration count");
    rep_.volume = cl_.counters();
    rep_.wall_seconds = seconds_since(t_start_);
    return std::move(rep_);
  }

  const Problem& p_;
  const SolverConfig& cfg_;
  ClusterSim& cl_;
  DistributedVector b_;
  std::optional<RedundancyPlan> plan_;
  std::vector<bool> fired_;
  int max_iters_ = 0;
  double b_norm_ = 0;
  SolverState st_;
  std::deque<SolverState> hist_;
  ConvergenceReport rep_;
  Clock::time_point t_start_;
};

void require_positive(double v, const char* name, int i) {
  if (!(v > 0) || !std::isfinite(v)) throw Breakdown(name, i, v);
}

class Pcg : Driver {
 public:
  using Driver::Driver;

  ConvergenceReport run() {
    auto& x = add("x", Role::x);
    auto& r = add("r", Role::r);
    auto& u = add("u", Role::u);
    auto& p = add("p", Role::p);
    auto& s = add("s", Role::s);
    double gamma = 0, delta = 0, alpha = 0, rr = 0, r0 = 0;
    int i = 0;
    bool init = true;
    while (true) {
      if (init) {
        cl_.set_iteration(0);
        set_x0(x);
        true_residual(x, r);
        prec(r, u);
        auto red = start({{&r, &u}, {&r, &r}});
        if (const auto* ev = due(FailurePhase::before_reduction_complete, 0)) {
          fail(*ev, 0, 1, &red);
          continue;
        }
        auto v = wait(red);
        gamma = v[0];
        rr = v[1];
        put(Scalar::gamma, 0, gamma);
        put(Scalar::rnorm2, 0, rr);
        r0 = std::sqrt(rr);
        copy_into(u, p);
        i = 0;
        init = false;
      }
      cl_.set_iteration(i);
      const double rel = r0 > 0 ? std::sqrt(rr) / r0 : 0.0;
      if (rel <= cfg_.rel_tol) return done(true, "converged", i, rel, x);
      if (i >= max_iters_) return done(false, "max_iters", i, rel, x);
      require_positive(gamma, "gamma", i);

      p.stamp = i;
      spmv(p, s, true);
      auto dred = start({{&p, &s}});
      delta = wait(dred)[0];
      require_positive(delta, "delta", i);
      alpha = gamma / delta;
      put(Scalar::delta, i, delta);
      put(Scalar::alpha, i, alpha);

      SolverState e;
      e.t = i;
      snap(e, {"x", "r", "u", "p"}, i);
      e.s = {{"gamma", gamma}, {"rnorm2", rr}};
      commit(std::move(e));
      if (const auto* ev = due(FailurePhase::after_reduction_and_spmv, i)) {
        if (fail(*ev, i, 1, nullptr)) resume(i, gamma, rr);
        else init = true;
        continue;
      }

      axpy_inplace(alpha, p, x);
      axpy_inplace(-alpha, s, r);
      if (rr_due(i + 1)) {
        audit(i + 1, x, norm_rel(r, r0));
        note_rr();
        true_residual(x, r);
      }
      prec(r, u);
      auto red = start({{&r, &u}, {&r, &r}});
      if (const auto* ev = due(FailurePhase::before_reduction_complete, i + 1)) {
        if (fail(*ev, i + 1, 1, &red)) resume(i, gamma, rr);
        else init = true;
        continue;
      }
      auto v = wait(red);
      const double beta = v[0] / gamma;
      put(Scalar::gamma, i + 1, v[0]);
      put(Scalar::rnorm2, i + 1, v[1]);
      put(Scalar::beta, i, beta);
      rep_.trace.push_back({gamma, delta, alpha, beta, rel});
      xpay_inplace(u, beta, p);
      gamma = v[0];
      rr = v[1];
      ++i;
    }
  }

 private:
  void resume(int& i, double& gamma, double& rr) {
    i = st_.t;
    gamma = st_.sc("gamma");
    rr = st_.sc("rnorm2");
  }
};

/// PPCG and PPCR share their loop; they differ in where m = P w is formed,
/// the dot products, and the vectors carried.
class Pipelined : Driver {
 public:
  Pipelined(const Problem& p, const SolverConfig& cfg, ClusterSim& cluster, bool cr)
      : Driver(p, cfg, cluster), cr_(cr) {}

  ConvergenceReport run() {
    auto& x = add("x", Role::x);
    auto& r = add("r", Role::r);
    auto& u = add("u", Role::u);
    auto& w = add("w", Role::w);
    auto& m = add("m", Role::m);
    auto& n = add("n", Role::n);
    auto& z = add("z", Role::z);
    auto& q = add("q", Role::q);
    auto& s = add("s", Role::s);
    auto& p = add("p", Role::p);

    double gamma = 0, delta = 0, rr = 0, r0 = 0, gamma_prev = 0, alpha_prev = 0;
    int i = 0;
    bool init = true, resuming = false;
    while (true) {
      if (init) {
        cl_.set_iteration(0);
        set_x0(x);
        true_residual(x, r);
        prec(r, u);
        spmv(u, w);
        for (auto* v : {&z, &q, &s, &p}) *v = DistributedVector(p_.part, v->role);
        i = 0;
        gamma_prev = alpha_prev = 0;
        init = resuming = false;
      }
      cl_.set_iteration(i);
      Pending red;
      if (!resuming) {
        if (rr_due(i)) {
          audit(i, x, cr_ ? norm_rel(u, r0) : norm_rel(r, r0));
          note_rr();
          true_residual(x, r);
          prec(r, u);
          spmv(u, w);
          spmv(p, s);
          prec(s, q);
          spmv(q, z);
        }
        if (cr_) {
          prec(w, m);
          red = start({{&w, &u}, {&m, &w}, {&u, &u}});
        } else {
          red = start({{&r, &u}, {&w, &u}, {&r, &r}});
        }
        if (const auto* ev = due(FailurePhase::before_reduction_complete, i)) {
          if (fail(*ev, i, 1, &red)) resume(i, gamma, delta, rr, gamma_prev, alpha_prev, resuming);
          else init = true;
          continue;
        }
        if (!cr_) prec(w, m);
      }
      m.stamp = i;
      spmv(m, n, true);
      if (!resuming) {
        auto v = wait(red);
        gamma = v[0];
        delta = v[1];
        rr = v[2];
        put(Scalar::gamma, i, gamma);
        put(Scalar::delta, i, delta);
        put(Scalar::rnorm2, i, rr);
        if (i == 0) r0 = std::sqrt(rr);
      }
      resuming = false;

      const double rel = r0 > 0 ? std::sqrt(rr) / r0 : 0.0;
      if (rel <= cfg_.rel_tol) return done(true, "converged", i, rel, x);
      if (i >= max_iters_) return done(false, "max_iters", i, rel, x);
      require_positive(gamma, "gamma", i);
      require_positive(delta, "delta", i);
      double alpha = 0, beta = 0;
      if (i == 0) {
        alpha = gamma / delta;
      } else {
        beta = gamma / gamma_prev;
        const double den = delta - beta * gamma / alpha_prev;
        require_positive(den, "alpha denominator", i);
        alpha = gamma / den;
      }
      put(Scalar::alpha, i, alpha);
      put(Scalar::beta, i, beta);

      SolverState e;
      e.t = i;
      if (cr_) {
        snap(e, {"x", "u", "w", "m"}, i);
        snap(e, {"z", "q", "p"}, i - 1);
      } else {
        snap(e, {"x", "r", "u", "w", "m"}, i);
        snap(e, {"z", "q", "s", "p"}, i - 1);
      }
      e.s = {{"gamma", gamma}, {"delta", delta}, {"rnorm2", rr}, {"gamma_prev", gamma_prev}, {"alpha_prev", alpha_prev}};
      commit(std::move(e));
      if (const auto* ev = due(FailurePhase::after_reduction_and_spmv, i)) {
        if (fail(*ev, i, 1, nullptr)) resume(i, gamma, delta, rr, gamma_prev, alpha_prev, resuming);
        else init = true;
        continue;
      }
      rep_.trace.push_back({gamma, delta, alpha, beta, rel});

      xpay_inplace(n, beta, z);
      xpay_inplace(m, beta, q);
      if (!cr_) xpay_inplace(w, beta, s);
      xpay_inplace(u, beta, p);
      axpy_inplace(alpha, p, x);
      if (!cr_) axpy_inplace(-alpha, s, r);
      axpy_inplace(-alpha, q, u);
      axpy_inplace(-alpha, z, w);
      gamma_prev = gamma;
      alpha_prev = alpha;
      ++i;
    }
  }

 private:
  void resume(int& i, double& gamma, double& delta, double& rr, double& gamma_prev, double& alpha_prev,
              bool& resuming) {
    i = st_.t;
    gamma = st_.sc("gamma");
    delta = st_.sc("delta");
    rr = st_.sc("rnorm2");
    gamma_prev = st_.sc("gamma_prev");
    alpha_prev = st_.sc("alpha_prev");
    resuming = true;
  }

  bool cr_;
};

/// Two-iteration pipelined CG. Buffers "v" hold generation i (even) and
/// "v_next" generation i+1; g and h exist for i+1 only.
class TwoStep : Driver {
 public:
  using Driver::Driver;

  ConvergenceReport run() {
    static constexpr const char* kGen[] = {"x", "r", "u", "w", "m", "n", "c", "d"};
    static constexpr Role kRole[] = {Role::x, Role::r, Role::u, Role::w, Role::m, Role::n, Role::c, Role::d};
    for (int k = 0; k < 8; ++k) {
      add(kGen[k], kRole[k]);
      add(std::string(kGen[k]) + "_next", kRole[k]);
    }
    auto& g = add("g", Role::g);
    auto& h = add("h", Role::h);
    auto V = [this](const char* n) -> DistributedVector& { return st_.vec(n); };
    auto& x = V("x"); auto& x1 = V("x_next");
    auto& r = V("r"); auto& r1 = V("r_next");
    auto& u = V("u"); auto& u1 = V("u_next");
    auto& w = V("w"); auto& w1 = V("w_next");
    auto& m = V("m"); auto& m1 = V("m_next");
    auto& n = V("n"); auto& n1 = V("n_next");
    auto& c = V("c"); auto& c1 = V("c_next");
    auto& d = V("d"); auto& d1 = V("d_next");

    const int cap = max_iters_ + max_iters_ % 2;
    Sc s;  // scalars of the current block
    double r0 = 0;
    int i = 0;
    bool init = true, resuming = false;
    while (true) {
      Pending red;
      if (init) {
        cl_.set_iteration(0);
        set_x0(x);
        true_residual(x, r);
        prec(r, u);
        spmv(u, w);
        auto ired = start({{&u, &r}, {&u, &w}, {&r, &r}});
        if (const auto* ev = due(FailurePhase::before_reduction_complete, 0)) {
          fail(*ev, 0, 2, &ired);
          continue;
        }
        prec(w, m);
        spmv(m, n);
        prec(n, c);
        spmv(c, d);
        auto v = wait(ired);
        s = Sc{};
        s.gamma = v[0];
        s.delta = v[1];
        r0 = std::sqrt(v[2]);
        put(Scalar::gamma, 0, s.gamma);
        put(Scalar::delta, 0, s.delta);
        for (auto* vec : {&x1, &r1, &u1, &w1, &m1, &n1, &c1, &d1, &g, &h}) *vec = DistributedVector(p_.part, vec->role);
        i = 0;
        init = resuming = false;
      }
      cl_.set_iteration(i);
      if (!resuming) {
        if (i == 0) {
          require_positive(s.gamma, "gamma", 0);
          require_positive(s.delta, "delta", 0);
          s.zeta1 = 1;
          s.eta1 = s.gamma / s.delta;
          s.theta1 = 0;
        } else {
          if (rr_due_block(i)) {
            audit(i, x1, norm_rel(r1, r0));
            note_rr();
            for (int gen = 0; gen < 2; ++gen) {
              auto& X = gen ? x1 : x;
              auto& R = gen ? r1 : r;
              auto& U = gen ? u1 : u;
              auto& W = gen ? w1 : w;
              auto& M = gen ? m1 : m;
              auto& N = gen ? n1 : n;
              auto& C = gen ? c1 : c;
              auto& D = gen ? d1 : d;
              true_residual(X, R);
              prec(R, U);
              spmv(U, W);
              prec(W, M);
              spmv(M, N);
              prec(N, C);
              spmv(C, D);
            }
            prec(d1, g);
            spmv(g, h);
          }
          // Scalars of generations i and i+1 from the previous block.
          const double eta = s.gamma1 / s.lambda[0];
          const double zeta = ratio_step(s.gamma1, eta, s.gamma, s.zeta1, s.eta1, i);
          const double k1 = zeta, k2 = -zeta * eta, k3 = 1 - zeta;
          const auto& L = s.lambda;
          const double gamma = k1 * k1 * s.gamma1 + 2 * k1 * k2 * L[0] + 2 * k1 * k3 * L[5] + k2 * k2 * L[7] +
                               2 * k2 * k3 * L[1] + k3 * k3 * L[6];
          const double delta = k1 * k1 * L[0] + 2 * k1 * k2 * L[7] + 2 * k1 * k3 * L[1] + k2 * k2 * L[2] +
                               2 * k2 * k3 * L[3] + k3 * k3 * L[4];
          const double theta = k3;
          three_term_inplace(zeta, eta, theta, x1, u1, x);
          three_term_inplace(zeta, -eta, theta, r1, w1, r);
          three_term_inplace(zeta, -eta, theta, u1, m1, u);
          three_term_inplace(zeta, -eta, theta, w1, n1, w);
          three_term_inplace(zeta, -eta, theta, m1, c1, m);
          three_term_inplace(zeta, -eta, theta, n1, d1, n);
          three_term_inplace(zeta, -eta, theta, c1, g, c);
          three_term_inplace(zeta, -eta, theta, d1, h, d);
          if (!(gamma > 0 && delta > 0)) {
            // Recurrence scalars at rounding level: the Krylov space is
            // exhausted unless r(i) says otherwise.
            auto chk = start({{&r, &r}});
            const double rel = r0 > 0 ? std::sqrt(wait(chk)[0]) / r0 : 0.0;
            if (rel <= cfg_.rel_tol) return done(true, "converged", i, rel, x);
            require_positive(gamma, "gamma", i);
            require_positive(delta, "delta", i);
          }
          const double eta1 = gamma / delta;
          const double zeta1 = ratio_step(gamma, eta1, s.gamma1, zeta, eta, i + 1);
          s.gamma = gamma;
          s.delta = delta;
          s.zeta1 = zeta1;
          s.eta1 = eta1;
          s.theta1 = 1 - zeta1;
          put(Scalar::gamma, i, gamma);
          put(Scalar::delta, i, delta);
        }
        three_term_inplace(s.zeta1, s.eta1, s.theta1, x, u, x1);
        three_term_inplace(s.zeta1, -s.eta1, s.theta1, r, w, r1);
        three_term_inplace(s.zeta1, -s.eta1, s.theta1, u, m, u1);
        three_term_inplace(s.zeta1, -s.eta1, s.theta1, w, n, w1);
        three_term_inplace(s.zeta1, -s.eta1, s.theta1, m, c, m1);
        three_term_inplace(s.zeta1, -s.eta1, s.theta1, n, d, n1);
        put(Scalar::zeta, i + 1, s.zeta1);
        put(Scalar::eta, i + 1, s.eta1);

        red = start({{&u1, &w1}, {&u1, &w}, {&m1, &n1}, {&m1, &w}, {&u, &w}, {&u1, &r}, {&u, &r}, {&m1, &w1},
                     {&u1, &r1}, {&r, &r}, {&r1, &r1}});
        if (const auto* ev = due(FailurePhase::before_reduction_complete, i)) {
          if (fail(*ev, i, 2, &red)) resume(i, s, resuming);
          else init = true;
          continue;
        }
        prec(n1, c1);
        c.stamp = i;
        c1.stamp = i + 1;
        spmv(c1, d1, true, &c);
      }
      prec(d1, g);
      spmv(g, h);
      if (!resuming) {
        auto v = wait(red);
        std::copy(v.begin(), v.begin() + 8, s.lambda.begin());
        s.gamma1 = v[8];
        s.rr = v[9];
        s.rr1 = v[10];
        for (int k = 0; k < 8; ++k) put(static_cast<Scalar>(static_cast<int>(Scalar::lambda1) + k), i, s.lambda[k]);
        put(Scalar::gamma, i + 1, s.gamma1);
        put(Scalar::rnorm2, i, s.rr);
        put(Scalar::rnorm2, i + 1, s.rr1);

        SolverState e;
        e.t = i;
        snap(e, {"x", "r", "u", "w", "m", "n", "c", "d"}, i);
        snap(e, {"x_next", "r_next", "u_next", "w_next", "m_next", "n_next", "c_next", "d_next"}, i + 1);
        e.s = {{"gamma", s.gamma},       {"delta", s.delta},     {"gamma_next", s.gamma1},
               {"delta_next", s.lambda[0]}, {"zeta_next", s.zeta1}, {"eta_next", s.eta1},
               {"theta_next", s.theta1}, {"rnorm2", s.rr},       {"rnorm2_next", s.rr1}};
        for (int k = 0; k < 8; ++k) e.s["lambda" + std::to_string(k + 1)] = s.lambda[k];
        commit(std::move(e));
        if (const auto* ev = due(FailurePhase::after_reduction_and_spmv, i)) {
          if (fail(*ev, i, 2, nullptr)) resume(i, s, resuming);
          else init = true;
          continue;
        }
      }
      resuming = false;

      const double rel0 = r0 > 0 ? std::sqrt(s.rr) / r0 : 0.0;
      if (rel0 <= cfg_.rel_tol) return done(true, "converged", i, rel0, x);
      if (i >= cap) return done(false, "max_iters", i, rel0, x);
      rep_.trace.push_back({s.gamma, s.delta, s.eta1, s.zeta1, rel0});
      const double rel1 = r0 > 0 ? std::sqrt(s.rr1) / r0 : 0.0;
      if (rel1 <= cfg_.rel_tol) return done(true, "converged", i + 1, rel1, x1);
      require_positive(s.gamma1, "gamma", i + 1);
      require_positive(s.lambda[0], "delta", i + 1);
      const double eta2 = s.gamma1 / s.lambda[0];
      rep_.trace.push_back({s.gamma1, s.lambda[0], eta2, ratio_step(s.gamma1, eta2, s.gamma, s.zeta1, s.eta1, i + 2),
                            rel1});
      i += 2;
    }
  }

 private:
  struct Sc {
    double gamma = 0, delta = 0;    // generation i
    double gamma1 = 0;              // generation i+1
    double zeta1 = 0, eta1 = 0, theta1 = 0;
    std::array<double, 8> lambda{};
    double rr = 0, rr1 = 0;
  };

  /// zeta(k) = 1 / (1 - gamma(k-1) eta(k) / (gamma(k-2) zeta(k-1) eta(k-1)))
  static double ratio_step(double gamma_km1, double eta_k, double gamma_km2, double zeta_km1, double eta_km1, int k) {
    const double inner = gamma_km2 * zeta_km1 * eta_km1;
    if (inner == 0 || !std::isfinite(inner)) throw Breakdown("zeta denominator", k, inner);
    const double den = 1 - gamma_km1 * eta_k / inner;
    if (den == 0 || !std::isfinite(den)) throw Breakdown("zeta denominator", k, den);
    return 1 / den;
  }

  /// Replacement is due in block i when a period boundary lies in (i-2, i].
  bool rr_due_block(int i) const {
    return cfg_.rr_period > 0 && i >= 2 && i / cfg_.rr_period > (i - 2) / cfg_.rr_period;
  }

  void resume(int& i, Sc& s, bool& resuming) {
    i = st_.t;
    s.gamma = st_.sc("gamma");
    s.delta = st_.sc("delta");
    s.gamma1 = st_.sc("gamma_next");
    s.zeta1 = st_.sc("zeta_next");
    s.eta1 = st_.sc("eta_next");
    s.theta1 = st_.sc("theta_next");
    for (int k = 0; k < 8; ++k) s.lambda[k] = st_.sc("lambda" + std::to_string(k + 1));
    s.rr = st_.sc("rnorm2");
    s.rr1 = st_.sc("rnorm2_next");
    resuming = true;
  }
};

}  // namespace

ConvergenceReport run_pcg(const Problem& p, const SolverConfig& cfg, ClusterSim& cluster) {
  return Pcg(p, cfg, cluster).run();
}

ConvergenceReport run_ppcg(const Problem& p, const SolverConfig& cfg, ClusterSim& cluster) {
  return Pipelined(p, cfg, cluster, false).run();
}

ConvergenceReport run_ppcr(const Problem& p, const SolverConfig& cfg, ClusterSim& cluster) {
  return Pipelined(p, cfg, cluster, true).run();
}

ConvergenceReport run_2ppcg(const Problem& p, const SolverConfig& cfg, ClusterSim& cluster) {
  return TwoStep(p, cfg, cluster).run();
}

namespace {

ConvergenceReport dispatch(const Problem& p, const SolverConfig& cfg, ClusterSim& cluster) {
  switch (cfg.method) {
    case Method::pcg: return run_pcg(p, cfg, cluster);
    case Method::ppcg: return run_ppcg(p, cfg, cluster);
    case Method::ppcr: return run_ppcr(p, cfg, cluster);
    case Method::tppcg: return run_2ppcg(p, cfg, cluster);
  }
  throw InvalidArgument("unknown method");
}

}  // namespace

ConvergenceReport run_solver(const Problem& p, const SolverConfig& cfg, ClusterSim& cluster) {
  // A nonsymmetric A can keep every scalar positive and stall silently.
  if (!p.a->symmetric && !p.a->is_symmetric()) throw Breakdown("symmetry", 0, 0.0);
  const bool progress = std::any_of(cfg.failures.events.begin(), cfg.failures.events.end(),
                                    [](const FailureEvent& ev) { return ev.at_progress.has_value(); });
  if (!progress) return dispatch(p, cfg, cluster);
  cfg.validate(p.nodes());
  SolverConfig dry = cfg;
  dry.failures = {};
  dry.verify_recovery = false;
  ClusterSim scratch(p.nodes());
  const auto base = dispatch(p, dry, scratch);
  SolverConfig resolved = cfg;
  resolved.failures = resolve_failures(cfg.failures, base.iterations, cfg.method);
  return dispatch(p, resolved, cluster);
}

ConvergenceReport solve(const Problem& p, const SolverConfig& cfg) {
  ClusterSim cluster(p.nodes());
  return run_solver(p, cfg, cluster);
}

}  // namespace kp
