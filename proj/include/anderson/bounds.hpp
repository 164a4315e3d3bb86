#pragma once

#include "anderson/accelerator.hpp"
#include "anderson/core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace anderson {

enum class SigmaSource { contractive, jacobian_lower_bound, user };

/// Constants entering the one-step residual bounds.
struct OperatorConstants {
  double kappa_g = 0.0;     ///< bound on |g'(x)|
  double kappa_hat_g = 0.0; ///< Lipschitz constant of g'
  double sigma = 1.0;       ///< |w_{j+1} - w_j| >= sigma |e_j|
  SigmaSource sigma_source = SigmaSource::user;
  double c_s = 1.0; ///< lower bound on the direction sines
  double c_t = 0.0; ///< upper bound on the direction cosines

  /// sigma = 1 - kappa_g; requires kappa_g < 1.
  static OperatorConstants contractive(double kappa_g, double kappa_hat_g, double c_s = 1.0,
                                       double c_t = 0.0);
  /// sigma = sigma_f / 2 from a lower bound sigma_f on the smallest singular
  /// value of the Jacobian of f = g - I.
  static OperatorConstants from_jacobian(double kappa_g, double kappa_hat_g, double sigma_f,
                                         double c_s = 1.0, double c_t = 0.0);

  void validate() const;
  OperatorConstants with_geometry(double c_s, double c_t) const;
};

struct BoundInputs {
  std::vector<double> thetas;         ///< oldest first, ending at theta_k
  std::vector<double> betas;          ///< beta_{j-1} paired with each theta_j
  std::vector<double> residual_norms; ///< |w_j| paired with each theta_j
};

struct BoundBreakdown {
  double lower_order = 0.0;
  double higher_order = 0.0;
  double total = 0.0;
  BoundInputs inputs;
};

double c_f_constant(int m, const OperatorConstants& c);
/// C_{n,j+1} for a window of depth m; requires j - m <= n <= j.
double c_n_constant(int n, int j, int m, const OperatorConstants& c);

double h_function(double theta_j, double beta_jm1, double c_f_j);
double h_j_function(double theta_k, double beta_km1, double c_jk);

/// Ratio bound |w_{k+1}| / |w_k| for depth one.
BoundBreakdown bound_step_m1(double theta_k, double theta_km1, double beta_km1, double beta_km2,
                             double w_k_norm, double w_km1_norm, const OperatorConstants& c);

/// Ratio bound for depth m. Window vectors have m + 1 entries ordered
/// k - m, ..., k; betas[i] is the damping of the step that produced thetas[i].
BoundBreakdown bound_step_general(const std::vector<double>& thetas,
                                  const std::vector<double>& betas,
                                  const std::vector<double>& residual_norms, int m,
                                  const OperatorConstants& c);

/// Right-hand side that |w_k| + |w_{k-1}| must stay below for a monotone
/// residual at depth one (contractive g).
double monotonicity_threshold_m1(const OperatorConstants& c);
/// theta kappa_g + sqrt(2) kappa_hat (1 - kappa_g)^-2 sqrt(1 - theta^2) (|w_k| + |w_{k-1}|)
double simplified_ratio_bound_m1(double theta_k, double w_k_norm, double w_km1_norm,
                                 const OperatorConstants& c);

/// max{ r^{m-1} / (sigma c_s), C_F } with sigma = 1 - kappa_g and r = (c_t + c_s) / c_s.
double monotonicity_constant_general(int m, const OperatorConstants& c);
/// Threshold for the weighted window sum |w_j| + 2 sum |w_n| + |w_{j-m}|.
double monotonicity_threshold_general(int m, const OperatorConstants& c);

/// Per-row data needed to check a run against the bounds. Row i holds
/// residual w_{i+1}.
struct GainTrace {
  std::vector<double> residual_norms;
  std::vector<double> thetas;
  std::vector<double> betas;
  std::vector<int> depths;
  /// Per-row sine/cosine estimates of the window used at that row; empty if
  /// the trace carries no geometry.
  std::vector<double> c_s;
  std::vector<double> c_t;

  std::size_t size() const { return residual_norms.size(); }
  bool has_geometry() const { return !c_s.empty(); }
  void validate() const;
};

GainTrace gain_trace(const RunReport<double>& report);

enum class BoundMode { m1, general };

struct GeometryChoice {
  bool measured = true;
  double c_s = 1.0; ///< used when not measured
  double c_t = 0.0;
  /// Fixed sine value v with the matching cosine bound sqrt(1 - v^2).
  static GeometryChoice fixed(double c_s);
};

struct BoundCheckRow {
  int k = 0;        ///< residual index of the numerator, |w_k| / |w_{k-1}|
  double ratio = 0; ///< NaN on the first row
  std::optional<BoundBreakdown> bound;
  bool satisfied = true; ///< true when no bound applies
};

struct BoundCheck {
  std::vector<BoundCheckRow> rows;
  int checked() const;
  int violations() const;
};

/// Compare measured ratios with the predicted bound at every row where
/// enough history exists. Throws InsufficientHistory when no row qualifies.
BoundCheck check_run_against_bounds(const GainTrace& trace, const OperatorConstants& consts,
                                    BoundMode mode, const GeometryChoice& geometry = {});
BoundCheck check_run_against_bounds(const RunReport<double>& report,
                                    const OperatorConstants& consts, BoundMode mode,
                                    const GeometryChoice& geometry = {});

} // namespace anderson
