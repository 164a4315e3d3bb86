#include "anderson/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace anderson {

namespace {

double binomial(int n, int k) {
  double b = 1.0;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return b;
}

void require_unit(double theta, const char* what) {
  if (!(theta >= 0.0 && theta <= 1.0))
    throw InvalidConstants(std::string(what) + ": gain must lie in [0, 1]");
}

double co(double theta) { return std::sqrt(std::max(0.0, 1.0 - theta * theta)); }

} // namespace

OperatorConstants OperatorConstants::contractive(double kappa_g, double kappa_hat_g, double c_s,
                                                 double c_t) {
  if (!(kappa_g < 1.0)) throw NotContractive("contractive constants need kappa_g < 1");
  OperatorConstants c{kappa_g, kappa_hat_g, 1.0 - kappa_g, SigmaSource::contractive, c_s, c_t};
  c.validate();
  return c;
}

OperatorConstants OperatorConstants::from_jacobian(double kappa_g, double kappa_hat_g,
                                                   double sigma_f, double c_s, double c_t) {
  OperatorConstants c{kappa_g, kappa_hat_g, sigma_f / 2.0, SigmaSource::jacobian_lower_bound,
                      c_s, c_t};
  c.validate();
  return c;
}

void OperatorConstants::validate() const {
  if (!(kappa_g >= 0.0) || !(kappa_hat_g >= 0.0))
    throw InvalidConstants("kappa_g and kappa_hat_g must be nonnegative");
  if (!(sigma > 0.0)) throw InvalidConstants("sigma must be positive");
  if (!(c_s > 0.0 && c_s <= 1.0)) throw InvalidConstants("c_s must lie in (0, 1]");
  if (!(c_t >= 0.0 && c_t < 1.0)) throw InvalidConstants("c_t must lie in [0, 1)");
  if (sigma_source == SigmaSource::contractive) {
    if (!(kappa_g < 1.0)) throw InvalidConstants("contractive sigma needs kappa_g < 1");
    if (std::abs(sigma - (1.0 - kappa_g)) > 1e-15)
      throw InvalidConstants("contractive sigma must equal 1 - kappa_g");
  }
}

OperatorConstants OperatorConstants::with_geometry(double s, double t) const {
  OperatorConstants c = *this;
  c.c_s = s;
  c.c_t = t;
  c.validate();
  return c;
}

double c_f_constant(int m, const OperatorConstants& c) {
  c.validate();
  if (m < 1) throw InvalidConstants("c_f_constant: m must be at least 1");
  double sum = 0.0;
  for (int l = 1; l <= m - 1; ++l)
    sum += binomial(m - 1, l) * std::pow(c.c_t, l - 1) * std::pow(c.c_s, m - l - 1);
  return (1.0 + (1.0 + c.c_t) * sum / std::pow(c.c_s, m - 1)) / c.sigma;
}

double c_n_constant(int n, int j, int m, const OperatorConstants& c) {
  c.validate();
  if (m < 1) throw InvalidConstants("c_n_constant: m must be at least 1");
  if (n > j || n < j - m)
    throw InvalidConstants("c_n_constant: index n=" + std::to_string(n) + " outside window [" +
                           std::to_string(j - m) + ", " + std::to_string(j) + "]");
  const double r = (c.c_t + c.c_s) / c.c_s;
  if (n == j) return std::pow(r, m - 1) / c.sigma;
  return std::pow(r, m - (j - n + 1)) / (c.sigma * c.c_s);
}

double h_function(double theta_j, double beta_jm1, double c_f_j) {
  return c_f_j * co(theta_j) + beta_jm1 * theta_j;
}

double h_j_function(double theta_k, double beta_km1, double c_jk) {
  return c_jk * beta_km1 * co(theta_k);
}

BoundBreakdown bound_step_m1(double theta_k, double theta_km1, double beta_km1, double beta_km2,
                             double w_k_norm, double w_km1_norm, const OperatorConstants& c) {
  c.validate();
  require_unit(theta_k, "bound_step_m1");
  require_unit(theta_km1, "bound_step_m1");
  if (!(w_k_norm >= 0.0 && w_km1_norm >= 0.0))
    throw InvalidConstants("bound_step_m1: residual norms must be nonnegative");
  const double si = 1.0 / c.sigma;
  BoundBreakdown b;
  b.lower_order = theta_k * ((1.0 - beta_km1) + c.kappa_g * beta_km1);
  b.higher_order = c.kappa_hat_g * si * co(theta_k) *
                   (w_k_norm * (si * co(theta_k) + beta_km1 * theta_k) +
                    w_km1_norm * (si * co(theta_km1) + beta_km2 * theta_km1));
  b.total = b.lower_order + b.higher_order;
  b.inputs = {{theta_km1, theta_k}, {beta_km2, beta_km1}, {w_km1_norm, w_k_norm}};
  return b;
}

BoundBreakdown bound_step_general(const std::vector<double>& thetas,
                                  const std::vector<double>& betas,
                                  const std::vector<double>& residual_norms, int m,
                                  const OperatorConstants& c) {
  c.validate();
  if (m < 1) throw InvalidConstants("bound_step_general: m must be at least 1");
  const std::size_t len = std::size_t(m) + 1;
  if (thetas.size() != len || betas.size() != len || residual_norms.size() != len)
    throw DimensionError("bound_step_general: window vectors must have m + 1 entries");
  for (std::size_t i = 0; i < len; ++i) {
    require_unit(thetas[i], "bound_step_general");
    if (!(residual_norms[i] >= 0.0))
      throw InvalidConstants("bound_step_general: residual norms must be nonnegative");
  }

  // Window position i corresponds to index k - m + i.
  const int k = m;
  const double theta_k = thetas[m];
  const double beta_km1 = betas[m];
  const double c_f = c_f_constant(m, c);
  const auto h = [&](int i) { return h_function(thetas[i], betas[i], c_f); };
  // Coupling coefficient of e_j gamma_j for j = k - m, ..., k - 1. It carries
  // no damping factor, so it is evaluated with beta = 1.
  const auto hj = [&](int j) { return h_j_function(theta_k, 1.0, c_n_constant(j, k - 1, m, c)); };
  const auto tail = [&](int from) {
    double s = 0.0;
    for (int j = from; j <= k - 1; ++j) s += hj(j);
    return s;
  };

  BoundBreakdown b;
  b.lower_order = theta_k * ((1.0 - beta_km1) + c.kappa_g * beta_km1);
  double bracket = residual_norms[m] * h(m) * hj(k - 1);
  for (int n = 1; n <= m - 1; ++n) bracket += 2.0 * residual_norms[n] * h(n) * tail(n);
  bracket += residual_norms[0] * h(0) * tail(0);
  // Full kappa_hat prefactor, as in the depth-one bound (the halved form is
  // not what the depth-one result states, and the larger value stays valid).
  b.higher_order = c.kappa_hat_g * bracket;
  b.total = b.lower_order + b.higher_order;
  b.inputs = {thetas, betas, residual_norms};
  return b;
}

double monotonicity_threshold_m1(const OperatorConstants& c) {
  if (!(c.kappa_g < 1.0)) throw NotContractive("monotonicity threshold needs kappa_g < 1");
  if (!(c.kappa_hat_g > 0.0)) throw InvalidConstants("kappa_hat_g must be positive");
  const double k = c.kappa_g;
  return std::sqrt(1.0 - k * k) * (1.0 - k) * (1.0 - k) / (std::sqrt(2.0) * c.kappa_hat_g);
}

double simplified_ratio_bound_m1(double theta_k, double w_k_norm, double w_km1_norm,
                                 const OperatorConstants& c) {
  if (!(c.kappa_g < 1.0)) throw NotContractive("simplified bound needs kappa_g < 1");
  require_unit(theta_k, "simplified_ratio_bound_m1");
  const double s = 1.0 - c.kappa_g;
  return theta_k * c.kappa_g +
         std::sqrt(2.0) * c.kappa_hat_g / (s * s) * co(theta_k) * (w_k_norm + w_km1_norm);
}

double monotonicity_constant_general(int m, const OperatorConstants& c) {
  if (!(c.kappa_g < 1.0)) throw NotContractive("monotonicity constant needs kappa_g < 1");
  if (m < 1) throw InvalidConstants("monotonicity_constant_general: m must be at least 1");
  OperatorConstants s = c;
  s.sigma = 1.0 - c.kappa_g;
  s.sigma_source = SigmaSource::contractive;
  const double r = (s.c_t + s.c_s) / s.c_s;
  return std::max(std::pow(r, m - 1) / (s.sigma * s.c_s), c_f_constant(m, s));
}

double monotonicity_threshold_general(int m, const OperatorConstants& c) {
  if (!(c.kappa_hat_g > 0.0)) throw InvalidConstants("kappa_hat_g must be positive");
  const double C = monotonicity_constant_general(m, c);
  return 2.0 * (1.0 - c.kappa_g) / (C * std::sqrt(1.0 + C * C) * c.kappa_hat_g);
}

void GainTrace::validate() const {
  const std::size_t n = residual_norms.size();
  if (thetas.size() != n || betas.size() != n || depths.size() != n)
    throw DimensionError("gain trace columns have different lengths");
  if (c_s.size() != c_t.size() || (!c_s.empty() && c_s.size() != n))
    throw DimensionError("gain trace geometry columns have the wrong length");
}

GainTrace gain_trace(const RunReport<double>& report) {
  GainTrace t;
  for (const auto& s : report.steps) {
    t.residual_norms.push_back(s.residual_norm);
    t.thetas.push_back(s.theta);
    t.betas.push_back(s.beta_used);
    t.depths.push_back(s.m_k_used);
    t.c_s.push_back(s.geometry.c_s_estimate);
    t.c_t.push_back(s.geometry.c_t_estimate);
  }
  return t;
}

GeometryChoice GeometryChoice::fixed(double c_s) {
  if (!(c_s > 0.0 && c_s <= 1.0)) throw InvalidConstants("fixed c_s must lie in (0, 1]");
  return {false, c_s, std::sqrt(std::max(0.0, 1.0 - c_s * c_s))};
}

int BoundCheck::checked() const {
  return int(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.bound.has_value(); }));
}

int BoundCheck::violations() const {
  return int(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.satisfied; }));
}

BoundCheck check_run_against_bounds(const GainTrace& trace, const OperatorConstants& consts,
                                    BoundMode mode, const GeometryChoice& geometry) {
  trace.validate();
  consts.validate();
  if (geometry.measured && mode == BoundMode::general && !trace.has_geometry())
    throw InvalidConstants("measured c_s/c_t requested but the trace carries no geometry");

  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  // Largest c_t accepted from measurements; the bounds are undefined at 1.
  constexpr double c_t_cap = 1.0 - 1e-12;
  const int K = int(trace.size());
  BoundCheck out;
  out.rows.reserve(trace.size());
  for (int row = 0; row < K; ++row) {
    BoundCheckRow r;
    r.k = row + 1;
    r.ratio = row == 0 ? nan : trace.residual_norms[row] / trace.residual_norms[row - 1];
    // The bound on |w_{k+1}| / |w_k| uses rows up to k = r.k - 1, i.e. index p.
    const int p = row - 1;
    if (p >= 0 && std::isfinite(r.ratio)) {
      if (mode == BoundMode::m1 && p >= 1) {
        r.bound = bound_step_m1(trace.thetas[p], trace.thetas[p - 1], trace.betas[p],
                                trace.betas[p - 1], trace.residual_norms[p],
                                trace.residual_norms[p - 1], consts);
      } else if (mode == BoundMode::general) {
        const int m = trace.depths[p];
        if (m >= 1 && p - m >= 0) {
          OperatorConstants c = consts;
          if (geometry.measured) {
            double s = 1.0, t = 0.0;
            for (int i = p - m; i <= p; ++i) {
              s = std::min(s, trace.c_s[i]);
              t = std::max(t, trace.c_t[i]);
            }
            c.c_s = std::max(s, std::numeric_limits<double>::min());
            c.c_t = std::min(t, c_t_cap);
          } else {
            c.c_s = geometry.c_s;
            c.c_t = std::min(geometry.c_t, c_t_cap);
          }
          const auto first = trace.thetas.begin() + (p - m);
          std::vector<double> th(first, first + m + 1);
          std::vector<double> be(trace.betas.begin() + (p - m), trace.betas.begin() + p + 1);
          std::vector<double> wn(trace.residual_norms.begin() + (p - m),
                                 trace.residual_norms.begin() + p + 1);
          r.bound = bound_step_general(th, be, wn, m, c);
        }
      }
    }
    if (r.bound) r.satisfied = r.ratio <= r.bound->total * (1.0 + 1e-9);
    out.rows.push_back(std::move(r));
  }
  if (out.checked() == 0)
    throw InsufficientHistory("run has " + std::to_string(K) +
                              " rows; too short for a bound check in this mode");
  return out;
}

BoundCheck check_run_against_bounds(const RunReport<double>& report,
                                    const OperatorConstants& consts, BoundMode mode,
                                    const GeometryChoice& geometry) {
  return check_run_against_bounds(gain_trace(report), consts, mode, geometry);
}

} // namespace anderson
