#pragma once

#include "anderson/accelerator.hpp"
#include "anderson/bounds.hpp"
#include "anderson/problems.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace anderson {

enum class ProblemKind { polynomial, nlh, linear, external_trace };

const char* to_string(ProblemKind p);
ProblemKind problem_kind_from_string(const std::string& s);

/// Parses "fixed", "fixed:<m>", "unbounded" or "switch:<low>,<high>".
/// `m` supplies the depth for plain "fixed", `switch_tol` the switch tolerance.
DepthPolicy parse_depth_policy(const std::string& spec, int m, double switch_tol);
std::string to_string(const DepthPolicy& p);

struct ExperimentConfig {
  ProblemKind problem = ProblemKind::polynomial;
  NLHProblem nlh;
  Index dimension = 8; ///< linear problem only
  AcceleratorConfig accel;
  // Bound-checking constants; the check runs when all three are known.
  std::optional<double> kappa_g, kappa_hat_g, sigma;
  GeometryChoice cs_mode;
  std::optional<BoundMode> bound_mode; ///< default: m1 for fixed depth one, else general
  std::string out;
  std::string trace; ///< CSV input for external-trace runs
  std::uint64_t seed = 0;
  std::string label;

  /// Fill in defaults that depend on the problem (reported constants for the
  /// polynomial system, exact ones for the linear map) and validate.
  void finalize();
  std::optional<OperatorConstants> constants() const;
  BoundMode effective_bound_mode() const;
  /// Text identifying the problem instance; runs compare only when equal.
  std::string problem_signature() const;
};

/// Build a config from a flat key/value document. Keys may use dashes or
/// underscores; numbers may be given as JSON numbers or strings.
ExperimentConfig config_from_json(const nlohmann::json& doc);
/// Parse a config file, reporting the line of a syntax error.
nlohmann::json read_config_file(const std::string& path);

struct HistoryRow {
  int k = 0;
  double res_norm = 0.0;
  double theta = 0.0;
  double ratio = 0.0; ///< NaN when undefined
  double bound_lower = 0.0, bound_higher = 0.0, bound_total = 0.0; ///< NaN when undefined
  int m_k = 0;
  double beta_k = 1.0;
  int rank_events = 0;
};

struct RunSummary {
  std::string label;
  std::string problem;
  std::string depth_policy;
  double beta = 1.0;
  int iterations = 0;
  double final_residual = 0.0;
  double mean_theta = 0.0; ///< over rows k >= 2; NaN if none
  Termination termination = Termination::max_iterations;
  double wall_time_s = 0.0;
  int bound_checked = 0;
  int bound_violations = 0;
  int switch_row = 0; ///< first row run at the high depth of a switch policy, 0 if never
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<HistoryRow> rows;
  RunSummary summary;
  RunReport<double> run; ///< empty for external traces
};

ExperimentReport run_experiment(const ExperimentConfig& config);
/// Recompute ratios and bounds for a recorded history.
ExperimentReport check_trace(const ExperimentConfig& config, const std::vector<HistoryRow>& rows);

int exit_code(Termination t);

extern const char* const history_csv_header;
void emit_history_csv(const std::vector<HistoryRow>& rows, const std::string& path);
std::string history_csv(const std::vector<HistoryRow>& rows);
std::vector<HistoryRow> read_history_csv(const std::string& path);

nlohmann::json summary_to_json(const RunSummary& s);
RunSummary summary_from_json(const nlohmann::json& j);
void write_summary(const RunSummary& s, const std::string& path);
RunSummary read_summary(const std::string& path);

struct ComparisonRow {
  std::string label;
  int iterations = 0;
  double final_residual = 0.0;
  double mean_theta = 0.0;
  Termination termination = Termination::max_iterations;
  int rank = 0;              ///< 1 = fewest iterations among converged runs
  int iterations_delta = 0;  ///< relative to the first run
  double residual_delta = 0; ///< relative to the first run
  double mean_theta_delta = 0;
};

struct Comparison {
  std::string problem;
  std::vector<ComparisonRow> rows;
  std::string format() const;
};

/// Needs at least two summaries of the same problem; throws ComparisonError.
Comparison compare_runs(const std::vector<RunSummary>& runs);

} // namespace anderson
