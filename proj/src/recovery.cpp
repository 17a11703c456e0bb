#include "kp/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kp/error.hpp"

namespace kp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Shared plumbing of the four procedures. The lead replacement (lowest
/// failed rank) gathers, retrieves and solves for the union of failed rows,
/// then hands the other replacements their blocks.
class Recoverer {
 public:
  Recoverer(const RecoveryContext& ctx, RecoveryReport& report)
      : ctx_(ctx), report_(report), a_op_(*ctx.problem.a), part_(*ctx.problem.part) {
    if (ctx.failed.empty()) throw InvalidArgument("recovery: no failed ranks");
    if (!std::is_sorted(ctx.failed.begin(), ctx.failed.end())) throw InvalidArgument("recovery: ranks must be sorted");
    for (int f : ctx.failed)
      if (!ctx.cluster.alive(f)) throw InternalError("recovery: replacement for rank " + std::to_string(f) + " not spawned");
    lead_ = ctx.failed.front();
    rows_ = part_.rows_of(ctx.failed);
    msg_before_ = ctx.cluster.counters().messages;
    elems_before_ = ctx.cluster.counters().recovery_elements;
  }

  const std::vector<int>& rows() const noexcept { return rows_; }
  const CsrBlockOperator& A() const noexcept { return a_op_; }
  const Preconditioner& P() const { return *ctx_.problem.precond; }
  LocalSolveStats* stats() { return &report_.local; }

  std::vector<double> scalars(std::initializer_list<std::pair<Scalar, int>> wanted) {
    std::vector<std::pair<Scalar, int>> w(wanted);
    return retrieve_scalars(ctx_.cluster, lead_, ctx_.failed, w);
  }

  /// Columns: the given (state, name, role, stamp) vectors over the survivors,
  /// NaN on failed rows.
  struct Source {
    const SolverState* state;
    const char* name;
    Role role;
    int stamp;
  };
  Eigen::MatrixXd gather(std::initializer_list<Source> sources) {
    std::vector<ClusterSim::GatherRequest> req;
    for (const auto& s : sources) {
      if (!s.state) throw InternalError("recovery: missing state for gather");
      req.push_back({s.role, s.stamp, &s.state->vec(s.name)});
    }
    auto cols = ctx_.cluster.gather_from_survivors(lead_, ctx_.failed, req);
    Eigen::MatrixXd out(ctx_.problem.n(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
      out.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::VectorXd>(cols[c].data(), ctx_.problem.n());
    return out;
  }

  /// Failed-row blocks of the SpMV input at the given stamps, one column each.
  Eigen::MatrixXd backups(std::initializer_list<int> stamps) {
    std::vector<int> st(stamps);
    auto got = retrieve_backups(ctx_.cluster, lead_, ctx_.failed, st, part_, ctx_.n_redu);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows_.size()), static_cast<Eigen::Index>(st.size()));
    for (std::size_t c = 0; c < st.size(); ++c) {
      Eigen::Index pos = 0;
      for (int f : ctx_.failed) {
        const auto& blk = got.at({f, st[c]});
        for (double v : blk) out(pos++, static_cast<Eigen::Index>(c)) = v;
      }
    }
    return out;
  }

  /// [b_r b_r ...] with k columns.
  Eigen::MatrixXd b_rows(int k) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows_.size()), k);
    for (std::size_t i = 0; i < rows_.size(); ++i) out.row(static_cast<Eigen::Index>(i)).setConstant(ctx_.problem.b[rows_[i]]);
    return out;
  }

  /// x(0) is the initial guess, held in reliable storage with A and b.
  Eigen::MatrixXd x0_rows() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_.size()), 1);
    const auto& x0 = ctx_.problem.x0;
    if (!x0.empty())
      for (std::size_t i = 0; i < rows_.size(); ++i) out(static_cast<Eigen::Index>(i), 0) = x0[rows_[i]];
    return out;
  }

  Eigen::MatrixXd solve(const BlockOperator& op, const Eigen::MatrixXd& v_r, const Eigen::MatrixXd& complement) {
    ctx_.cluster.note(EventKind::local_solve, lead_, static_cast<std::uint64_t>(rows_.size()));
    return reconstruct_block(op, rows_, v_r, complement, stats());
  }

  /// Writes column `col` of `sub` (failed rows) into out[name] and ships the
  /// non-lead blocks to their replacements.
  void place(SolverState& out, const std::string& name, const Eigen::MatrixXd& sub, Eigen::Index col) {
    auto& vec = out.vec(name);
    Eigen::Index pos = 0;
    for (int f : ctx_.failed) {
      const auto range = part_.range(f);
      std::vector<double> blk(range.size());
      for (int i = 0; i < range.size(); ++i) blk[i] = sub(pos++, col);
      if (f != lead_) {
        Message msg;
        msg.tag = MsgTag::replacement_exchange;
        msg.from = lead_;
        msg.to = f;
        msg.role = vec.role;
        msg.stamp = vec.stamp;
        msg.owner = f;
        msg.values = blk;
        ctx_.cluster.send(std::move(msg));
        Message got = ctx_.cluster.recv(f, lead_);
        vec.restore(f, got.values);
      } else {
        vec.restore(f, blk);
      }
    }
  }

  void finish() {
    report_.recovery_messages += ctx_.cluster.counters().messages - msg_before_;
    report_.recovery_elements += ctx_.cluster.counters().recovery_elements - elems_before_;
  }

 private:
  const RecoveryContext& ctx_;
  RecoveryReport& report_;
  CsrBlockOperator a_op_;
  const BlockRowPartition& part_;
  int lead_ = 0;
  std::vector<int> rows_;
  std::uint64_t msg_before_ = 0;
  std::uint64_t elems_before_ = 0;
};

void require_nonzero(double v, const char* what) {
  if (v == 0.0 || !std::isfinite(v)) throw UnrecoverableFailure(std::string("degenerate recurrence: ") + what + " is " + std::to_string(v));
}

}  // namespace

int min_recoverable_iteration(Method m) {
  switch (m) {
    case Method::pcg: return 0;
    case Method::ppcg:
    case Method::ppcr: return 1;
    case Method::tppcg: return 2;
  }
  return 0;
}

std::vector<double> retrieve_scalars(ClusterSim& cluster, int replacement, std::span<const int> failed,
                                     std::span<const std::pair<Scalar, int>> wanted) {
  std::vector<int> lost(failed.begin(), failed.end());
  std::sort(lost.begin(), lost.end());
  std::vector<double> out(wanted.size(), kNaN);
  std::vector<std::size_t> missing(wanted.size());
  for (std::size_t k = 0; k < wanted.size(); ++k) missing[k] = k;
  for (int s = 0; s < cluster.nodes() && !missing.empty(); ++s) {
    if (std::binary_search(lost.begin(), lost.end(), s) || !cluster.alive(s)) continue;
    Message req;
    req.tag = MsgTag::scalar_request;
    req.from = replacement;
    req.to = s;
    for (std::size_t k : missing) {
      req.indices.push_back(static_cast<int>(wanted[k].first));
      req.indices.push_back(wanted[k].second);
    }
    cluster.send(std::move(req));
    Message got = cluster.recv(s, replacement);
    Message reply;
    reply.tag = MsgTag::scalar_reply;
    reply.from = s;
    reply.to = replacement;
    const auto& ledger = cluster.ledger(s);
    for (std::size_t q = 0; q + 1 < got.indices.size(); q += 2) {
      auto v = ledger.get(static_cast<Scalar>(got.indices[q]), got.indices[q + 1]);
      reply.values.push_back(v ? *v : kNaN);
    }
    cluster.send(std::move(reply));
    Message ans = cluster.recv(replacement, s);
    std::vector<std::size_t> still;
    for (std::size_t q = 0; q < missing.size(); ++q) {
      if (std::isnan(ans.values[q])) still.push_back(missing[q]);
      else out[missing[q]] = ans.values[q];
    }
    missing = std::move(still);
  }
  if (!missing.empty())
    throw UnrecoverableFailure("no survivor holds reduction result #" + std::to_string(static_cast<int>(wanted[missing[0]].first)) +
                               " of iteration " + std::to_string(wanted[missing[0]].second));
  return out;
}

SolverState recover_pcg(const RecoveryContext& ctx, RecoveryReport& report) {
  const int t = ctx.t;
  if (t < 0) throw InvalidArgument("recover_pcg: negative iteration");
  Recoverer rc(ctx, report);
  double beta_prev = 0;
  if (t > 0) beta_prev = rc.scalars({{Scalar::beta, t - 1}})[0];
  auto sc = rc.scalars({{Scalar::gamma, t}, {Scalar::rnorm2, t}});

  Eigen::MatrixXd p_r;
  Eigen::VectorXd u_r;
  if (t > 0) {
    p_r = rc.backups({t - 1, t});
    u_r = p_r.col(1) - beta_prev * p_r.col(0);
  } else {
    // p(0) = u(0): the window holds one stamp only.
    p_r = rc.backups({t});
    u_r = p_r.col(0);
  }
  auto g = rc.gather({{&ctx.current, "r", Role::r, t}, {&ctx.current, "x", Role::x, t}});
  const Eigen::MatrixXd r_r = rc.solve(rc.P(), u_r, g.col(0));
  const Eigen::MatrixXd x_r = t > 0 ? rc.solve(rc.A(), rc.b_rows(1) - r_r, g.col(1)) : rc.x0_rows();

  SolverState out = ctx.current;
  rc.place(out, "p", p_r, p_r.cols() - 1);
  rc.place(out, "u", u_r, 0);
  rc.place(out, "r", r_r, 0);
  rc.place(out, "x", x_r, 0);
  out.s["gamma"] = sc[0];
  out.s["rnorm2"] = sc[1];
  rc.finish();
  return out;
}

SolverState recover_ppcg(const RecoveryContext& ctx, RecoveryReport& report) {
  const int t = ctx.t;
  if (t < 1) throw InvalidArgument("recover_ppcg: needs iteration >= 1");
  if (!ctx.previous) throw InvalidArgument("recover_ppcg: previous iteration state missing");
  Recoverer rc(ctx, report);
  auto g = rc.gather({{ctx.previous, "r", Role::r, t - 1}, {&ctx.current, "r", Role::r, t},
                      {ctx.previous, "u", Role::u, t - 1}, {&ctx.current, "u", Role::u, t},
                      {ctx.previous, "w", Role::w, t - 1}, {&ctx.current, "w", Role::w, t},
                      {ctx.previous, "x", Role::x, t - 1}, {&ctx.current, "x", Role::x, t}});
  auto sc = rc.scalars({{Scalar::alpha, t - 1}, {Scalar::gamma, t - 1}, {Scalar::gamma, t}, {Scalar::delta, t},
                        {Scalar::rnorm2, t}});
  const double alpha_prev = sc[0];
  require_nonzero(alpha_prev, "alpha(i-1)");
  const Eigen::MatrixXd m_r = rc.backups({t - 1, t});

  const Eigen::MatrixXd w_r = rc.solve(rc.P(), m_r, g.middleCols(4, 2));
  const Eigen::MatrixXd u_r = rc.solve(rc.A(), w_r, g.middleCols(2, 2));
  const Eigen::MatrixXd r_r = rc.solve(rc.P(), u_r, g.middleCols(0, 2));
  const Eigen::MatrixXd x_r = rc.solve(rc.A(), rc.b_rows(2) - r_r, g.middleCols(6, 2));

  const Eigen::MatrixXd z_r = (w_r.col(0) - w_r.col(1)) / alpha_prev;
  const Eigen::MatrixXd q_r = (u_r.col(0) - u_r.col(1)) / alpha_prev;
  const Eigen::MatrixXd s_r = (r_r.col(0) - r_r.col(1)) / alpha_prev;
  const Eigen::MatrixXd p_r = (x_r.col(1) - x_r.col(0)) / alpha_prev;

  SolverState out = ctx.current;
  rc.place(out, "x", x_r, 1);
  rc.place(out, "r", r_r, 1);
  rc.place(out, "u", u_r, 1);
  rc.place(out, "w", w_r, 1);
  rc.place(out, "m", m_r, 1);
  rc.place(out, "z", z_r, 0);
  rc.place(out, "q", q_r, 0);
  rc.place(out, "s", s_r, 0);
  rc.place(out, "p", p_r, 0);
  out.s["alpha_prev"] = alpha_prev;
  out.s["gamma_prev"] = sc[1];
  out.s["gamma"] = sc[2];
  out.s["delta"] = sc[3];
  out.s["rnorm2"] = sc[4];
  rc.finish();
  return out;
}

SolverState recover_ppcr(const RecoveryContext& ctx, RecoveryReport& report) {
  const int t = ctx.t;
  if (t < 1) throw InvalidArgument("recover_ppcr: needs iteration >= 1");
  if (!ctx.previous) throw InvalidArgument("recover_ppcr: previous iteration state missing");
  Recoverer rc(ctx, report);
  auto g = rc.gather({{ctx.previous, "u", Role::u, t - 1}, {&ctx.current, "u", Role::u, t},
                      {ctx.previous, "w", Role::w, t - 1}, {&ctx.current, "w", Role::w, t},
                      {ctx.previous, "x", Role::x, t - 1}, {&ctx.current, "x", Role::x, t}});
  auto sc = rc.scalars({{Scalar::alpha, t - 1}, {Scalar::gamma, t - 1}, {Scalar::gamma, t}, {Scalar::delta, t},
                        {Scalar::rnorm2, t}});
  const double alpha_prev = sc[0];
  require_nonzero(alpha_prev, "alpha(i-1)");
  const Eigen::MatrixXd m_r = rc.backups({t - 1, t});

  const Eigen::MatrixXd w_r = rc.solve(rc.P(), m_r, g.middleCols(2, 2));
  const Eigen::MatrixXd u_r = rc.solve(rc.A(), w_r, g.middleCols(0, 2));

  // P_{r,*} A_{*,r} x_r = P_{r,*} (b - A_{*,rbar} x_rbar) - u_r
  const auto& rows = rc.rows();
  const CsrMatrix& a = *ctx.problem.a;
  std::vector<char> in_r(a.n, 0);
  for (int r : rows) in_r[r] = 1;
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(a.n, 2);
  for (int s : rc.P().row_support(rows)) {
    Eigen::RowVector2d acc(ctx.problem.b[s], ctx.problem.b[s]);
    auto cols = a.row_cols(s);
    auto vals = a.row_vals(s);
    for (std::size_t k = 0; k < cols.size(); ++k)
      if (!in_r[cols[k]]) acc -= vals[k] * g.block(cols[k], 4, 1, 2);
    y.row(s) = acc;
  }
  const Eigen::MatrixXd rhs = rc.P().apply_rows(rows, y) - u_r;
  const Eigen::MatrixXd pa = rc.P().times_columns(a, rows);
  ctx.cluster.note(EventKind::local_solve, ctx.failed.front(), static_cast<std::uint64_t>(rows.size()));
  const Eigen::MatrixXd x_r = solve_general(pa, rhs, rc.stats());

  const Eigen::MatrixXd z_r = (w_r.col(0) - w_r.col(1)) / alpha_prev;
  const Eigen::MatrixXd q_r = (u_r.col(0) - u_r.col(1)) / alpha_prev;
  const Eigen::MatrixXd p_r = (x_r.col(1) - x_r.col(0)) / alpha_prev;

  SolverState out = ctx.current;
  rc.place(out, "x", x_r, 1);
  rc.place(out, "u", u_r, 1);
  rc.place(out, "w", w_r, 1);
  rc.place(out, "m", m_r, 1);
  rc.place(out, "z", z_r, 0);
  rc.place(out, "q", q_r, 0);
  rc.place(out, "p", p_r, 0);
  out.s["alpha_prev"] = alpha_prev;
  out.s["gamma_prev"] = sc[1];
  out.s["gamma"] = sc[2];
  out.s["delta"] = sc[3];
  out.s["rnorm2"] = sc[4];
  rc.finish();
  return out;
}

SolverState recover_2ppcg(const RecoveryContext& ctx, RecoveryReport& report) {
  const int t = ctx.t;
  if (t < 2 || t % 2 != 0) throw InvalidArgument("recover_2ppcg: needs an even iteration >= 2");
  Recoverer rc(ctx, report);
  const SolverState* cur = &ctx.current;
  auto g = rc.gather({{cur, "c", Role::c, t}, {cur, "c_next", Role::c, t + 1},
                      {cur, "m", Role::m, t}, {cur, "m_next", Role::m, t + 1},
                      {cur, "n", Role::n, t}, {cur, "n_next", Role::n, t + 1},
                      {cur, "r", Role::r, t}, {cur, "r_next", Role::r, t + 1},
                      {cur, "u", Role::u, t}, {cur, "u_next", Role::u, t + 1},
                      {cur, "w", Role::w, t}, {cur, "w_next", Role::w, t + 1},
                      {cur, "x", Role::x, t}, {cur, "x_next", Role::x, t + 1}});
  auto sc = rc.scalars({{Scalar::gamma, t},      {Scalar::gamma, t + 1},   {Scalar::zeta, t + 1},
                        {Scalar::eta, t + 1},    {Scalar::lambda1, t},     {Scalar::lambda2, t},
                        {Scalar::lambda3, t},    {Scalar::lambda4, t},     {Scalar::lambda5, t},
                        {Scalar::lambda6, t},    {Scalar::lambda7, t},     {Scalar::lambda8, t},
                        {Scalar::rnorm2, t},     {Scalar::rnorm2, t + 1},  {Scalar::delta, t}});
  const Eigen::MatrixXd c_r = rc.backups({t, t + 1});

  // d_r = A_{r,*} [c(t) c(t+1)] with the complement gathered and c_r retrieved.
  const auto& rows = rc.rows();
  Eigen::MatrixXd c_full = g.middleCols(0, 2);
  put_rows(rows, c_r, c_full);
  const CsrMatrix& a = *ctx.problem.a;
  Eigen::MatrixXd d_r = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto cols = a.row_cols(rows[i]);
    auto vals = a.row_vals(rows[i]);
    for (std::size_t k = 0; k < cols.size(); ++k) d_r.row(static_cast<Eigen::Index>(i)) += vals[k] * c_full.row(cols[k]);
  }

  const Eigen::MatrixXd n_r = rc.solve(rc.P(), c_r, g.middleCols(4, 2));
  const Eigen::MatrixXd m_r = rc.solve(rc.A(), n_r, g.middleCols(2, 2));
  const Eigen::MatrixXd w_r = rc.solve(rc.P(), m_r, g.middleCols(10, 2));
  const Eigen::MatrixXd u_r = rc.solve(rc.A(), w_r, g.middleCols(8, 2));
  const Eigen::MatrixXd r_r = rc.solve(rc.P(), u_r, g.middleCols(6, 2));
  const Eigen::MatrixXd x_r = rc.solve(rc.A(), rc.b_rows(2) - r_r, g.middleCols(12, 2));

  SolverState out = ctx.current;
  const std::pair<const char*, const Eigen::MatrixXd*> blocks[] = {{"x", &x_r}, {"r", &r_r}, {"u", &u_r}, {"w", &w_r},
                                                                   {"m", &m_r}, {"n", &n_r}, {"c", &c_r}, {"d", &d_r}};
  for (const auto& [name, mat] : blocks) {
    rc.place(out, name, *mat, 0);
    rc.place(out, std::string(name) + "_next", *mat, 1);
  }
  out.s["gamma"] = sc[0];
  out.s["gamma_next"] = sc[1];
  out.s["zeta_next"] = sc[2];
  out.s["eta_next"] = sc[3];
  out.s["theta_next"] = 1.0 - sc[2];
  for (int k = 0; k < 8; ++k) out.s["lambda" + std::to_string(k + 1)] = sc[4 + k];
  out.s["delta_next"] = sc[4];  // delta(i+1) = lambda_1
  out.s["rnorm2"] = sc[12];
  out.s["rnorm2_next"] = sc[13];
  out.s["delta"] = sc[14];  // trace only
  rc.finish();
  return out;
}

SolverState recover(Method m, const RecoveryContext& ctx, RecoveryReport& report) {
  switch (m) {
    case Method::pcg: return recover_pcg(ctx, report);
    case Method::ppcg: return recover_ppcg(ctx, report);
    case Method::ppcr: return recover_ppcr(ctx, report);
    case Method::tppcg: return recover_2ppcg(ctx, report);
  }
  throw InvalidArgument("recover: unknown method");
}

std::map<std::string, double> compare_blocks(const SolverState& recovered, const SolverState& reference,
                                             std::span<const int> ranks) {
  std::map<std::string, double> out;
  for (const auto& [name, ref] : reference.v) {
    auto it = recovered.v.find(name);
    if (it == recovered.v.end()) {
      out[name] = std::numeric_limits<double>::infinity();
      continue;
    }
    double diff = 0, norm = 0;
    for (int f : ranks) {
      auto a = it->second.block(f);
      auto b = ref.block(f);
      for (std::size_t i = 0; i < b.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        norm += b[i] * b[i];
      }
    }
    out[name] = std::sqrt(diff) / std::max(std::sqrt(norm), 1e-300);
  }
  for (const auto& [name, ref] : reference.s) {
    auto it = recovered.s.find(name);
    const double got = it == recovered.s.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
    out["#" + name] = std::abs(got - ref) / std::max(std::abs(ref), 1e-300);
  }
  return out;
}

}  // namespace kp
