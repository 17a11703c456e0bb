#include "kp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "kp/error.hpp"

namespace kp {

using nlohmann::json;

CsrMatrix poisson2d(int k) {
  if (k < 2) throw InvalidArgument("poisson2d: grid size must be >= 2");
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(5) * k * k);
  auto id = [k](int i, int j) { return i * k + j; };
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const int row = id(i, j);
      t.push_back({row, row, 4.0});
      if (i > 0) t.push_back({row, id(i - 1, j), -1.0});
      if (i + 1 < k) t.push_back({row, id(i + 1, j), -1.0});
      if (j > 0) t.push_back({row, id(i, j - 1), -1.0});
      if (j + 1 < k) t.push_back({row, id(i, j + 1), -1.0});
    }
  auto a = csr_from_triplets(k * k, std::move(t));
  a.symmetric = true;
  return a;
}

CsrMatrix tridiag(int n) {
  if (n < 2) throw InvalidArgument("tridiag: size must be >= 2");
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) {
    t.push_back({i, i, 2.0});
    if (i > 0) t.push_back({i, i - 1, -1.0});
    if (i + 1 < n) t.push_back({i, i + 1, -1.0});
  }
  auto a = csr_from_triplets(n, std::move(t));
  a.symmetric = true;
  return a;
}

CsrMatrix random_spd(int n, int per_row, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("random_spd: size must be >= 2");
  if (per_row < 0) throw InvalidArgument("random_spd: negative entries per row");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> col(0, n - 1);
  std::uniform_real_distribution<double> val(0.1, 1.0);
  std::set<std::pair<int, int>> seen;
  std::vector<double> diag(n, 1.0);
  std::vector<Triplet> t;
  const std::int64_t target = static_cast<std::int64_t>(n) * per_row / 2;
  for (std::int64_t e = 0; e < target; ++e) {
    int i = col(rng), j = col(rng);
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    if (!seen.insert({i, j}).second) continue;
    const double v = -val(rng);
    t.push_back({i, j, v});
    t.push_back({j, i, v});
    diag[i] += -v;
    diag[j] += -v;
  }
  for (int i = 0; i < n; ++i) t.push_back({i, i, diag[i]});
  auto a = csr_from_triplets(n, std::move(t));
  a.symmetric = true;
  return a;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

int parse_int(const std::string& s, const std::string& ctx) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw InvalidArgument("bad integer '" + s + "' in " + ctx);
  return v;
}

double mean(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

CsrMatrix load_matrix_source(const std::string& source, std::uint64_t seed) {
  if (source.rfind("gen:", 0) == 0) {
    auto parts = split(source, ':');
    if (parts.size() >= 3 && parts[1] == "poisson2d" && parts.size() == 3) return poisson2d(parse_int(parts[2], source));
    if (parts.size() == 3 && parts[1] == "tridiag") return tridiag(parse_int(parts[2], source));
    if (parts.size() == 4 && parts[1] == "random")
      return random_spd(parse_int(parts[2], source), parse_int(parts[3], source), seed);
    throw InvalidArgument("unknown generator '" + source + "'");
  }
  return load_matrix_market(source);
}

std::string matrix_id(const std::string& source) {
  if (source.rfind("gen:", 0) == 0) return source.substr(4);
  return std::filesystem::path(source).stem().string();
}

std::vector<double> rhs_ones(const CsrMatrix& a) {
  std::vector<double> b(a.n, 0.0);
  for (int i = 0; i < a.n; ++i)
    for (double v : a.row_vals(i)) b[i] += v;
  return b;
}

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw InvalidArgument("repetitions must be >= 1");
  if (nodes < 1) throw InvalidArgument("nodes must be >= 1");
  if (matrix.empty()) throw InvalidArgument("matrix source is empty");
  SolverConfig s;
  s.method = method;
  s.rel_tol = rel_tol;
  s.max_iters = max_iters;
  s.rr_period = rr_period;
  s.n_redu = n_redu;
  s.failures = failures;
  s.validate(nodes);
}

namespace {

json event_to_json(const FailureEvent& ev) {
  json j;
  if (ev.at_progress) j["at_progress"] = *ev.at_progress;
  if (ev.at_iteration) j["at_iteration"] = *ev.at_iteration;
  j["phase"] = std::string(to_string(ev.phase));
  j["victims"] = ev.victims;
  return j;
}

FailureEvent event_from_json(const json& j) {
  FailureEvent ev;
  if (j.contains("at_progress")) ev.at_progress = j.at("at_progress").get<double>();
  if (j.contains("at_iteration")) ev.at_iteration = j.at("at_iteration").get<int>();
  if (j.contains("phase")) ev.phase = parse_failure_phase(j.at("phase").get<std::string>());
  ev.victims = j.at("victims").get<std::vector<int>>();
  return ev;
}

SolverConfig solver_config(const ExperimentConfig& c, int n_redu, FailureScript failures) {
  SolverConfig s;
  s.method = c.method;
  s.rel_tol = c.rel_tol;
  s.max_iters = c.max_iters;
  s.rr_period = c.rr_period;
  s.n_redu = n_redu;
  s.rule = c.rule;
  s.failures = std::move(failures);
  s.verify_recovery = c.verify_recovery;
  return s;
}

SetResult run_set(const Problem& p, const SolverConfig& s, int reps) {
  SetResult out;
  out.ran = true;
  for (int k = 0; k < reps; ++k) {
    try {
      out.report = solve(p, s);
    } catch (const Error& e) {
      out.error = e.what();
      out.converged = false;
      return out;
    }
    out.wall_samples.push_back(out.report.wall_seconds);
  }
  out.converged = out.report.converged;
  out.wall_mean = mean(out.wall_samples);
  return out;
}

bool same_trace(const std::vector<IterationRecord>& a, const std::vector<IterationRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x[] = {a[i].gamma, a[i].delta, a[i].alpha, a[i].beta, a[i].rel_residual};
    const double y[] = {b[i].gamma, b[i].delta, b[i].alpha, b[i].beta, b[i].rel_residual};
    if (std::memcmp(x, y, sizeof x) != 0) return false;
  }
  return true;
}

}  // namespace

ExperimentConfig experiment_from_json(const json& j, ExperimentConfig c) {
  if (!j.is_object()) throw InvalidArgument("experiment config must be a JSON object");
  static const std::set<std::string> known = {"matrix", "method", "nodes", "n_redu", "rule", "precond",
                                              "rel_tol", "max_iters", "rr_period", "failures", "repetitions",
                                              "seed", "verify_recovery"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw InvalidArgument("unknown config key '" + key + "'");
  try {
    if (j.contains("matrix")) c.matrix = j["matrix"].get<std::string>();
    if (j.contains("method")) c.method = parse_method(j["method"].get<std::string>());
    if (j.contains("nodes")) c.nodes = j["nodes"].get<int>();
    if (j.contains("n_redu")) c.n_redu = j["n_redu"].get<int>();
    if (j.contains("rule")) c.rule = parse_redundancy_rule(j["rule"].get<std::string>());
    if (j.contains("precond")) c.precond = parse_precond_kind(j["precond"].get<std::string>());
    if (j.contains("rel_tol")) c.rel_tol = j["rel_tol"].get<double>();
    if (j.contains("max_iters")) c.max_iters = j["max_iters"].get<int>();
    if (j.contains("rr_period")) c.rr_period = j["rr_period"].get<int>();
    if (j.contains("repetitions")) c.repetitions = j["repetitions"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("verify_recovery")) c.verify_recovery = j["verify_recovery"].get<bool>();
    if (j.contains("failures")) {
      c.failures.events.clear();
      for (const auto& e : j["failures"]) c.failures.events.push_back(event_from_json(e));
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("experiment config: ") + e.what());
  }
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["matrix"] = c.matrix;
  j["method"] = std::string(to_string(c.method));
  j["nodes"] = c.nodes;
  j["n_redu"] = c.n_redu;
  j["rule"] = std::string(to_string(c.rule));
  j["precond"] = std::string(to_string(c.precond));
  j["rel_tol"] = c.rel_tol;
  j["max_iters"] = c.max_iters;
  j["rr_period"] = c.rr_period;
  j["repetitions"] = c.repetitions;
  j["seed"] = c.seed;
  j["verify_recovery"] = c.verify_recovery;
  j["failures"] = json::array();
  for (const auto& ev : c.failures.events) j["failures"].push_back(event_to_json(ev));
  return j;
}

json to_json(const RecoveryReport& r) {
  json j;
  j["failed_ranks"] = r.failed_ranks;
  j["phase"] = std::string(to_string(r.phase));
  j["failure_iteration"] = r.failure_iteration;
  j["recovered_iteration"] = r.recovered_iteration;
  j["restarted"] = r.restarted;
  j["reconstruction_errors"] = r.reconstruction_errors;
  j["local_solves"] = r.local.solves;
  j["local_solve_iterations"] = r.local.iterations;
  j["local_solve_max_residual"] = r.local.max_residual;
  j["recovery_elements"] = r.recovery_elements;
  j["recovery_messages"] = r.recovery_messages;
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

json to_json(const ConvergenceReport& r, bool with_x) {
  json j;
  j["method"] = std::string(to_string(r.method));
  j["converged"] = r.converged;
  j["stop_reason"] = r.stop_reason;
  j["iterations"] = r.iterations;
  j["final_rel_residual"] = r.final_rel_residual;
  j["true_rel_residual"] = r.true_rel_residual;
  j["residual_replacements"] = r.residual_replacements;
  json trace = json::array();
  for (const auto& t : r.trace) trace.push_back({t.gamma, t.delta, t.alpha, t.beta, t.rel_residual});
  j["trace"] = std::move(trace);
  j["trace_columns"] = {"gamma", "delta", "alpha", "beta", "rel_residual"};
  json audits = json::array();
  for (const auto& a : r.audits)
    audits.push_back({{"iteration", a.iteration}, {"true_rel", a.true_rel}, {"recurrence_rel", a.recurrence_rel}});
  j["audits"] = std::move(audits);
  const auto& v = r.volume;
  j["volume"] = {{"messages", v.messages},
                 {"pattern_elements", v.pattern_elements},
                 {"redundant_elements", v.redundant_elements},
                 {"precond_elements", v.precond_elements},
                 {"recovery_elements", v.recovery_elements},
                 {"reductions", v.reductions},
                 {"redundant_by_sender", v.redundant_by_sender}};
  json rec = json::array();
  for (const auto& x : r.recoveries) rec.push_back(to_json(x));
  j["recovery"] = std::move(rec);
  j["wall_seconds"] = r.wall_seconds;
  j["recovery_seconds"] = r.recovery_seconds;
  if (with_x) j["x"] = r.x;
  return j;
}

namespace {

json to_json(const SetResult& s) {
  if (!s.ran) return nullptr;
  json j;
  j["converged"] = s.converged;
  if (!s.error.empty()) j["error"] = s.error;
  j["wall_seconds"] = s.wall_samples;
  j["wall_seconds_mean"] = s.wall_mean;
  if (s.error.empty()) j["report"] = to_json(s.report);
  return j;
}

}  // namespace

json to_json(const OverheadRecord& r) {
  json j;
  j["id"] = r.id;
  j["config"] = to_json(r.config);
  j["n"] = r.n;
  j["nnz"] = r.nnz;
  j["t0_seconds"] = r.t0;
  j["baseline"] = to_json(r.baseline);
  j["redundancy"] = to_json(r.redundancy);
  j["failure"] = to_json(r.failure);
  j["failure_iteration"] = r.failure_iteration ? json(*r.failure_iteration) : json(nullptr);
  j["redundancy_overhead_pct"] = r.redundancy_overhead_pct ? json(*r.redundancy_overhead_pct) : json(nullptr);
  j["failure_overhead_pct"] = r.failure_overhead_pct ? json(*r.failure_overhead_pct) : json(nullptr);
  j["traces_identical"] = r.traces_identical ? json(*r.traces_identical) : json(nullptr);
  return j;
}

json to_json(const RedundancyPlan& plan) {
  json j;
  j["n_redu"] = plan.n_redu;
  j["rule"] = std::string(to_string(plan.rule));
  j["max_redundant_per_node"] = plan.max_redundant_per_node();
  json nodes = json::array();
  for (int jn = 0; jn < plan.nodes(); ++jn) {
    json node;
    node["rank"] = jn;
    json sends = json::object();
    for (int k = 0; k < plan.nodes(); ++k)
      if (!plan.sets.S(jn, k).empty()) sends[std::to_string(k)] = plan.sets.S(jn, k);
    node["send"] = std::move(sends);
    json red = json::array();
    for (int k = 1; k <= plan.n_redu; ++k)
      red.push_back({{"k", k}, {"target", plan.target(jn, k)},
                     {"elements", std::vector<int>(plan.R(jn, k).begin(), plan.R(jn, k).end())}});
    node["redundant"] = std::move(red);
    nodes.push_back(std::move(node));
  }
  j["nodes"] = std::move(nodes);
  return j;
}

OverheadRecord run_experiment_set(const ExperimentConfig& config) {
  config.validate();
  OverheadRecord rec;
  rec.config = config;
  rec.id = matrix_id(config.matrix);
  auto a = load_matrix_source(config.matrix, config.seed);
  rec.n = a.n;
  rec.nnz = a.nnz();
  auto b = rhs_ones(a);
  // Setup (distribution, preconditioner factorization) stays out of the timings.
  const Problem p = make_problem(std::move(a), std::move(b), config.nodes, config.precond);

  rec.baseline = run_set(p, solver_config(config, 0, {}), config.repetitions);
  rec.t0 = rec.baseline.wall_mean;
  if (config.n_redu > 0) {
    rec.redundancy = run_set(p, solver_config(config, config.n_redu, {}), config.repetitions);
    if (rec.redundancy.error.empty() && rec.baseline.error.empty())
      rec.traces_identical = same_trace(rec.baseline.report.trace, rec.redundancy.report.trace);
    if (rec.t0 > 0 && rec.redundancy.error.empty())
      rec.redundancy_overhead_pct = 100.0 * (rec.redundancy.wall_mean - rec.t0) / rec.t0;
  }
  if (!config.failures.empty() && rec.baseline.error.empty()) {
    auto script = resolve_failures(config.failures, rec.baseline.report.iterations, config.method);
    rec.failure_iteration = script.events.front().at_iteration;
    rec.failure = run_set(p, solver_config(config, config.n_redu, script), config.repetitions);
    if (rec.t0 > 0 && rec.failure.error.empty())
      rec.failure_overhead_pct = 100.0 * (rec.failure.wall_mean - rec.t0) / rec.t0;
  }
  return rec;
}

std::string csv_report(std::span<const OverheadRecord> records) {
  std::vector<const OverheadRecord*> rows;
  for (const auto& r : records) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const OverheadRecord* x, const OverheadRecord* y) {
    if (x->id != y->id) return x->id < y->id;
    return to_string(x->config.method) < to_string(y->config.method);
  });
  std::ostringstream out;
  out << std::setprecision(10);
  out << "id,method,nodes,n_redu,t0_seconds,iterations,redundancy_overhead_pct,iterations_with_failure,"
         "failure_overhead_pct,pattern_elements,redundant_elements,reductions\n";
  auto opt = [&out](const std::optional<double>& v) {
    if (v) out << *v;
  };
  for (const auto* r : rows) {
    out << r->id << ',' << to_string(r->config.method) << ',' << r->config.nodes << ',' << r->config.n_redu << ','
        << r->t0 << ',';
    if (r->baseline.error.empty()) out << r->baseline.report.iterations;
    out << ',';
    opt(r->redundancy_overhead_pct);
    out << ',';
    if (r->failure.ran && r->failure.error.empty()) out << r->failure.report.iterations;
    out << ',';
    opt(r->failure_overhead_pct);
    const SetResult& vol = r->redundancy.ran && r->redundancy.error.empty() ? r->redundancy : r->baseline;
    out << ',' << vol.report.volume.pattern_elements << ',' << vol.report.volume.redundant_elements << ','
        << vol.report.volume.reductions << '\n';
  }
  return out.str();
}

void emit_report(std::span<const OverheadRecord> records, const std::filesystem::path& dir) {
  if (records.empty()) throw InvalidArgument("emit_report: no records");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InvalidArgument("cannot create output directory " + dir.string() + ": " + ec.message());
  json all = json::array();
  for (const auto& r : records) all.push_back(to_json(r));
  {
    std::ofstream f(dir / "results.json");
    if (!f) throw InvalidArgument("cannot write " + (dir / "results.json").string());
    f << all.dump(2) << '\n';
  }
  std::ofstream f(dir / "results.csv");
  if (!f) throw InvalidArgument("cannot write " + (dir / "results.csv").string());
  f << csv_report(records);
}

}  // namespace kp
