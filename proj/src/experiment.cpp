#include "anderson/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace anderson {

using nlohmann::json;

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

std::string normalize_key(std::string k) {
  std::replace(k.begin(), k.end(), '_', '-');
  return k;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& field, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("field '" + field + "': expected a number, got '" + s + "'");
  }
}

long long parse_integer(const std::string& field, const std::string& s) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("field '" + field + "': expected an integer, got '" + s + "'");
  }
}

double as_double(const std::string& field, const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return parse_double(field, v.get<std::string>());
  throw ConfigError("field '" + field + "': expected a number");
}

long long as_integer(const std::string& field, const json& v) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d == std::floor(d)) return static_cast<long long>(d);
  }
  if (v.is_string()) return parse_integer(field, v.get<std::string>());
  throw ConfigError("field '" + field + "': expected an integer");
}

std::string as_string(const std::string& field, const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return v.dump();
  throw ConfigError("field '" + field + "': expected a string");
}

Termination termination_from_string(const std::string& s) {
  if (s == "converged") return Termination::converged;
  if (s == "max_iterations") return Termination::max_iterations;
  if (s == "diverged") return Termination::diverged;
  throw ConfigError("unknown termination '" + s + "'");
}

std::vector<HistoryRow> history_rows(const RunReport<double>& run, const BoundCheck* check) {
  std::vector<HistoryRow> rows;
  rows.reserve(run.steps.size());
  for (std::size_t i = 0; i < run.steps.size(); ++i) {
    const auto& s = run.steps[i];
    HistoryRow r;
    r.k = s.k;
    r.res_norm = s.residual_norm;
    r.theta = s.theta;
    r.ratio = i == 0 ? nan : s.residual_norm / run.steps[i - 1].residual_norm;
    r.bound_lower = r.bound_higher = r.bound_total = nan;
    if (check && check->rows[i].bound) {
      r.bound_lower = check->rows[i].bound->lower_order;
      r.bound_higher = check->rows[i].bound->higher_order;
      r.bound_total = check->rows[i].bound->total;
    }
    r.m_k = s.m_k_used;
    r.beta_k = s.beta_used;
    r.rank_events = s.rank_events;
    rows.push_back(r);
  }
  return rows;
}

double mean_theta(const std::vector<HistoryRow>& rows) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (std::isfinite(rows[i].theta)) {
      sum += rows[i].theta;
      ++n;
    }
  return n ? sum / n : nan;
}

} // namespace

const char* to_string(ProblemKind p) {
  switch (p) {
  case ProblemKind::polynomial: return "polynomial";
  case ProblemKind::nlh: return "nlh";
  case ProblemKind::linear: return "linear";
  case ProblemKind::external_trace: return "external-trace";
  }
  return "unknown";
}

ProblemKind problem_kind_from_string(const std::string& s) {
  if (s == "polynomial") return ProblemKind::polynomial;
  if (s == "nlh") return ProblemKind::nlh;
  if (s == "linear") return ProblemKind::linear;
  if (s == "external-trace" || s == "external_trace") return ProblemKind::external_trace;
  throw ConfigError("field 'problem': unknown problem '" + s +
                    "' (expected polynomial, nlh, linear or external-trace)");
}

DepthPolicy parse_depth_policy(const std::string& spec, int m, double switch_tol) {
  if (spec == "fixed") return FixedDepth{m};
  if (spec == "unbounded") return UnboundedDepth{};
  if (spec.rfind("fixed:", 0) == 0)
    return FixedDepth{int(parse_integer("depth-policy", spec.substr(6)))};
  if (spec.rfind("switch:", 0) == 0) {
    const std::string rest = spec.substr(7);
    const auto comma = rest.find(',');
    if (comma == std::string::npos)
      throw ConfigError("field 'depth-policy': expected switch:<low>,<high>, got '" + spec + "'");
    SwitchOnResidual s;
    s.m_low = int(parse_integer("depth-policy", rest.substr(0, comma)));
    s.m_high = int(parse_integer("depth-policy", rest.substr(comma + 1)));
    s.switch_tol = switch_tol;
    return s;
  }
  throw ConfigError("field 'depth-policy': unknown policy '" + spec + "'");
}

std::string to_string(const DepthPolicy& p) {
  return std::visit(
      [](const auto& d) -> std::string {
        using P = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<P, FixedDepth>) return "fixed:" + std::to_string(d.m);
        else if constexpr (std::is_same_v<P, UnboundedDepth>) return "unbounded";
        else return "switch:" + std::to_string(d.m_low) + "," + std::to_string(d.m_high) + "@" + fmt(d.switch_tol);
      },
      p);
}

void ExperimentConfig::finalize() {
  if (problem == ProblemKind::polynomial) {
    // Constants reported for this system: |g'(x*)| = 6.609, sigma = sigma_f / 2 = 1.
    if (!kappa_g) kappa_g = 6.609;
    if (!kappa_hat_g) kappa_hat_g = 1.0;
    if (!sigma) sigma = 1.0;
  } else if (problem == ProblemKind::linear) {
    // Exact for the generated map: |A| = 0.9, g' constant.
    if (!kappa_g) kappa_g = 0.9;
    if (!kappa_hat_g) kappa_hat_g = 0.0;
    if (!sigma) sigma = 1.0 - *kappa_g;
  } else if (problem == ProblemKind::nlh) {
    nlh.validate();
  } else if (trace.empty()) {
    throw ConfigError("field 'trace': external-trace problems need a trace CSV");
  }
  if (problem == ProblemKind::linear && dimension < 1)
    throw ConfigError("field 'dimension': must be positive");
  try {
    accel.validate();
  } catch (const InvalidConfig& e) {
    throw ConfigError(e.what());
  }
  if (const auto c = constants()) {
    try {
      c->validate();
    } catch (const InvalidConstants& e) {
      throw ConfigError(std::string("bound constants: ") + e.what());
    }
  }
}

std::optional<OperatorConstants> ExperimentConfig::constants() const {
  if (!kappa_g || !kappa_hat_g || !sigma) return std::nullopt;
  OperatorConstants c;
  c.kappa_g = *kappa_g;
  c.kappa_hat_g = *kappa_hat_g;
  c.sigma = *sigma;
  c.sigma_source = SigmaSource::user;
  return c;
}

BoundMode ExperimentConfig::effective_bound_mode() const {
  if (bound_mode) return *bound_mode;
  const auto* f = std::get_if<FixedDepth>(&accel.depth);
  return f && f->m == 1 ? BoundMode::m1 : BoundMode::general;
}

std::string ExperimentConfig::problem_signature() const {
  switch (problem) {
  case ProblemKind::polynomial: return "polynomial";
  case ProblemKind::nlh:
    return "nlh(L=" + fmt(nlh.length) + ",h=" + fmt(nlh.h) + ",k0=" + fmt(nlh.k0) +
           ",epsilon=" + fmt(nlh.epsilon) + ")";
  case ProblemKind::linear:
    return "linear(n=" + std::to_string(dimension) + ",seed=" + std::to_string(seed) + ")";
  case ProblemKind::external_trace: return "external-trace(" + trace + ")";
  }
  return "unknown";
}

ExperimentConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a flat key/value object");
  std::map<std::string, json> kv;
  for (const auto& [k, v] : doc.items()) {
    if (v.is_object() || v.is_array())
      throw ConfigError("field '" + k + "': nested values are not supported");
    kv[normalize_key(k)] = v;
  }
  const auto has = [&](const char* k) { return kv.count(k) && !kv.at(k).is_null(); };

  ExperimentConfig c;
  if (has("problem")) c.problem = problem_kind_from_string(as_string("problem", kv["problem"]));
  if (has("epsilon")) c.nlh.epsilon = as_double("epsilon", kv["epsilon"]);
  if (has("k0")) c.nlh.k0 = as_double("k0", kv["k0"]);
  if (has("grid-h")) c.nlh.h = as_double("grid-h", kv["grid-h"]);
  if (has("length")) c.nlh.length = as_double("length", kv["length"]);
  if (has("dimension")) c.dimension = Index(as_integer("dimension", kv["dimension"]));

  int m = 1;
  if (has("m")) m = int(as_integer("m", kv["m"]));
  double switch_tol = 0.005;
  if (has("switch-tol")) switch_tol = as_double("switch-tol", kv["switch-tol"]);
  c.accel.depth = FixedDepth{m};
  if (has("depth-policy"))
    c.accel.depth = parse_depth_policy(as_string("depth-policy", kv["depth-policy"]), m, switch_tol);
  if (has("beta")) c.accel.damping = as_double("beta", kv["beta"]);
  if (has("tol")) c.accel.residual_tolerance = as_double("tol", kv["tol"]);
  if (has("max-iters")) c.accel.max_iterations = int(as_integer("max-iters", kv["max-iters"]));
  if (has("rank-policy")) {
    const auto p = as_string("rank-policy", kv["rank-policy"]);
    if (p == "drop-oldest") c.accel.rank_policy = RankPolicy::drop_oldest_on_deficiency;
    else if (p == "fail") c.accel.rank_policy = RankPolicy::fail_on_deficiency;
    else throw ConfigError("field 'rank-policy': expected drop-oldest or fail, got '" + p + "'");
  }

  if (has("kappa-g")) c.kappa_g = as_double("kappa-g", kv["kappa-g"]);
  if (has("kappa-hat-g")) c.kappa_hat_g = as_double("kappa-hat-g", kv["kappa-hat-g"]);
  if (has("sigma")) c.sigma = as_double("sigma", kv["sigma"]);
  if (has("cs-mode")) {
    const auto s = as_string("cs-mode", kv["cs-mode"]);
    if (s == "measured") c.cs_mode = GeometryChoice{};
    else if (s.rfind("fixed:", 0) == 0) {
      try {
        c.cs_mode = GeometryChoice::fixed(parse_double("cs-mode", s.substr(6)));
      } catch (const InvalidConstants& e) {
        throw ConfigError(std::string("field 'cs-mode': ") + e.what());
      }
    } else
      throw ConfigError("field 'cs-mode': expected measured or fixed:<v>, got '" + s + "'");
  }
  if (has("bound-mode")) {
    const auto s = as_string("bound-mode", kv["bound-mode"]);
    if (s == "m1") c.bound_mode = BoundMode::m1;
    else if (s == "general") c.bound_mode = BoundMode::general;
    else throw ConfigError("field 'bound-mode': expected m1 or general, got '" + s + "'");
  }
  if (has("out")) c.out = as_string("out", kv["out"]);
  if (has("trace")) c.trace = as_string("trace", kv["trace"]);
  if (has("seed")) c.seed = std::uint64_t(as_integer("seed", kv["seed"]));
  if (has("label")) c.label = as_string("label", kv["label"]);

  static const char* known[] = {"problem", "epsilon", "k0", "grid-h", "length", "dimension", "m",
                                "switch-tol", "depth-policy", "beta", "tol", "max-iters",
                                "rank-policy", "kappa-g", "kappa-hat-g", "sigma", "cs-mode",
                                "bound-mode", "out", "trace", "seed", "label"};
  for (const auto& [k, v] : kv)
    if (std::find(std::begin(known), std::end(known), k) == std::end(known))
      throw ConfigError("field '" + k + "': unknown key");

  try {
    c.finalize();
  } catch (const InvalidConfig& e) {
    throw ConfigError(e.what());
  }
  if (c.label.empty()) c.label = std::string(to_string(c.problem)) + " " + to_string(c.accel.depth);
  return c;
}

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t at = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + long(at ? at - 1 : 0), '\n');
    throw ConfigError(path + ":" + std::to_string(line) + ": " + e.what());
  }
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  ExperimentConfig cfg = config;
  cfg.finalize();
  if (cfg.problem == ProblemKind::external_trace)
    return check_trace(cfg, read_history_csv(cfg.trace));

  FixedPointProblem<double> problem;
  Eigen::VectorXd x0;
  switch (cfg.problem) {
  case ProblemKind::polynomial:
    problem = polynomial_problem();
    x0 = polynomial_initial_iterate();
    break;
  case ProblemKind::nlh:
    problem = nlh_problem(cfg.nlh);
    x0 = complex_to_real(nlh_initial_iterate(cfg.nlh));
    break;
  case ProblemKind::linear:
    problem = linear_problem(cfg.dimension, cfg.seed, 0.9);
    x0 = Eigen::VectorXd::Zero(cfg.dimension);
    break;
  case ProblemKind::external_trace: break;
  }

  ExperimentReport rep;
  rep.config = cfg;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    rep.run = solve<double>(problem, x0, cfg.accel);
  } catch (const DivergenceError<double>& e) {
    rep.run = e.report();
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::optional<BoundCheck> check;
  if (const auto consts = cfg.constants()) {
    try {
      check = check_run_against_bounds(rep.run, *consts, cfg.effective_bound_mode(), cfg.cs_mode);
    } catch (const InsufficientHistory&) {
    } catch (const InvalidConstants&) {
      // non-finite gains at divergence; leave the bounds blank
    }
  }
  rep.rows = history_rows(rep.run, check ? &*check : nullptr);

  auto& s = rep.summary;
  s.label = cfg.label;
  s.problem = cfg.problem_signature();
  s.depth_policy = to_string(cfg.accel.depth);
  s.beta = cfg.accel.damping;
  s.iterations = rep.run.iterations();
  s.final_residual = rep.run.final_residual();
  s.mean_theta = mean_theta(rep.rows);
  s.termination = rep.run.termination;
  s.wall_time_s = wall;
  if (check) {
    s.bound_checked = check->checked();
    s.bound_violations = check->violations();
  }
  for (const auto& st : rep.run.steps)
    if (st.switched) {
      s.switch_row = st.k;
      break;
    }
  return rep;
}

ExperimentReport check_trace(const ExperimentConfig& config, const std::vector<HistoryRow>& rows) {
  ExperimentReport rep;
  rep.config = config;
  const auto consts = config.constants();
  if (!consts) throw ConfigError("bounds-check needs --kappa-g, --kappa-hat-g and --sigma");
  const BoundMode mode = config.effective_bound_mode();
  if (mode == BoundMode::general && config.cs_mode.measured)
    throw ConfigError("field 'cs-mode': a recorded trace has no column geometry; use fixed:<v>");
  GainTrace t;
  for (const auto& r : rows) {
    t.residual_norms.push_back(r.res_norm);
    t.thetas.push_back(r.theta);
    t.betas.push_back(r.beta_k);
    t.depths.push_back(r.m_k);
  }
  const BoundCheck check = check_run_against_bounds(t, *consts, mode, config.cs_mode);
  rep.rows = rows;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& r = rep.rows[i];
    r.ratio = i == 0 ? nan : rows[i].res_norm / rows[i - 1].res_norm;
    const auto& b = check.rows[i].bound;
    r.bound_lower = b ? b->lower_order : nan;
    r.bound_higher = b ? b->higher_order : nan;
    r.bound_total = b ? b->total : nan;
  }
  auto& s = rep.summary;
  s.label = config.label;
  s.problem = config.problem_signature();
  s.iterations = int(rows.size());
  s.final_residual = rows.empty() ? nan : rows.back().res_norm;
  s.mean_theta = mean_theta(rows);
  s.termination = !rows.empty() && rows.back().res_norm < config.accel.residual_tolerance
                      ? Termination::converged
                      : Termination::max_iterations;
  s.bound_checked = check.checked();
  s.bound_violations = check.violations();
  return rep;
}

int exit_code(Termination t) {
  switch (t) {
  case Termination::converged: return 0;
  case Termination::max_iterations: return 2;
  case Termination::diverged: return 3;
  }
  return 1;
}

const char* const history_csv_header =
    "k,res_norm,theta,ratio,bound_lower,bound_higher,bound_total,m_k,beta_k,rank_events";

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::string out = std::string(history_csv_header) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.k) + "," + fmt(r.res_norm) + "," + fmt(r.theta) + "," + fmt(r.ratio) +
           "," + fmt(r.bound_lower) + "," + fmt(r.bound_higher) + "," + fmt(r.bound_total) + "," +
           std::to_string(r.m_k) + "," + fmt(r.beta_k) + "," + std::to_string(r.rank_events) + "\n";
  }
  return out;
}

void emit_history_csv(const std::vector<HistoryRow>& rows, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << history_csv(rows);
  if (!f) throw Error("write to '" + path + "' failed");
}

std::vector<HistoryRow> read_history_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open trace '" + path + "'");
  std::string line;
  if (!std::getline(f, line) || line != history_csv_header)
    throw ConfigError(path + ":1: unexpected header");
  std::vector<HistoryRow> rows;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 10)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 10 fields");
    const std::string where = path + ":" + std::to_string(lineno);
    const auto num = [&](const std::string& s) { return s.empty() ? nan : parse_double(where, s); };
    HistoryRow r;
    r.k = int(parse_integer(where, cells[0]));
    r.res_norm = num(cells[1]);
    r.theta = num(cells[2]);
    r.ratio = num(cells[3]);
    r.bound_lower = num(cells[4]);
    r.bound_higher = num(cells[5]);
    r.bound_total = num(cells[6]);
    r.m_k = int(parse_integer(where, cells[7]));
    r.beta_k = num(cells[8]);
    r.rank_events = int(parse_integer(where, cells[9]));
    if (!rows.empty() && r.k <= rows.back().k)
      throw ConfigError(where + ": rows must be strictly increasing in k");
    rows.push_back(r);
  }
  return rows;
}

json summary_to_json(const RunSummary& s) {
  const auto num = [](double v) -> json { return std::isfinite(v) ? json(v) : json(nullptr); };
  return json{{"label", s.label},
              {"problem", s.problem},
              {"depth_policy", s.depth_policy},
              {"beta", s.beta},
              {"iterations", s.iterations},
              {"final_residual", num(s.final_residual)},
              {"mean_theta", num(s.mean_theta)},
              {"termination", to_string(s.termination)},
              {"wall_time_s", s.wall_time_s},
              {"bound_checked", s.bound_checked},
              {"bound_violations", s.bound_violations},
              {"switch_row", s.switch_row}};
}

RunSummary summary_from_json(const json& j) {
  const auto num = [&](const char* k) {
    return j.contains(k) && j.at(k).is_number() ? j.at(k).get<double>() : nan;
  };
  try {
    RunSummary s;
    s.label = j.at("label").get<std::string>();
    s.problem = j.at("problem").get<std::string>();
    s.depth_policy = j.value("depth_policy", "");
    s.beta = j.value("beta", 1.0);
    s.iterations = j.at("iterations").get<int>();
    s.final_residual = num("final_residual");
    s.mean_theta = num("mean_theta");
    s.termination = termination_from_string(j.at("termination").get<std::string>());
    s.wall_time_s = j.value("wall_time_s", 0.0);
    s.bound_checked = j.value("bound_checked", 0);
    s.bound_violations = j.value("bound_violations", 0);
    s.switch_row = j.value("switch_row", 0);
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("summary: ") + e.what());
  }
}

void write_summary(const RunSummary& s, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << summary_to_json(s).dump(2) << "\n";
}

RunSummary read_summary(const std::string& path) {
  return summary_from_json(read_config_file(path));
}

Comparison compare_runs(const std::vector<RunSummary>& runs) {
  if (runs.size() < 2) throw ComparisonError("compare needs at least two runs");
  for (const auto& r : runs)
    if (r.problem != runs.front().problem)
      throw ComparisonError("runs are on different problems: '" + runs.front().problem +
                            "' and '" + r.problem + "'");
  Comparison c;
  c.problem = runs.front().problem;
  const auto& base = runs.front();
  for (const auto& r : runs) {
    ComparisonRow row;
    row.label = r.label;
    row.iterations = r.iterations;
    row.final_residual = r.final_residual;
    row.mean_theta = r.mean_theta;
    row.termination = r.termination;
    row.iterations_delta = r.iterations - base.iterations;
    row.residual_delta = r.final_residual - base.final_residual;
    row.mean_theta_delta = r.mean_theta - base.mean_theta;
    c.rows.push_back(row);
  }
  // Rank converged runs by iteration count; ties share a rank. Others come last.
  for (auto& row : c.rows) {
    if (row.termination != Termination::converged) continue;
    row.rank = 1;
    for (const auto& other : c.rows)
      if (other.termination == Termination::converged && other.iterations < row.iterations)
        ++row.rank;
  }
  return c;
}

std::string Comparison::format() const {
  std::string out = "problem: " + problem + "\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-4s %-28s %10s %14s %10s %8s %14s\n", "rank", "label",
                "iterations", "final_res", "mean_theta", "d_iter", "termination");
  out += buf;
  for (const auto& r : rows) {
    const std::string rank = r.rank ? std::to_string(r.rank) : "-";
    std::snprintf(buf, sizeof buf, "%-4s %-28s %10d %14.6e %10.6f %+8d %14s\n", rank.c_str(),
                  r.label.c_str(), r.iterations, r.final_residual, r.mean_theta,
                  r.iterations_delta, to_string(r.termination));
    out += buf;
  }
  return out;
}

} // namespace anderson
