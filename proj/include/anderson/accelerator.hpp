#pragma once

#include "anderson/core.hpp"
#include "anderson/thin_qr.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace anderson {

/// A map g: R^n -> R^n whose fixed point is sought. The residual
/// f(x) = g(x) - x is formed by the accelerator.
template <typename Scalar = double>
struct FixedPointProblem {
  Index dimension = 0;
  std::function<Vector<Scalar>(const Vector<Scalar>&)> evaluate;
  std::string description;
};

struct FixedDepth {
  int m = 1;
};
/// m_k = k - 1, limited only by the ambient dimension.
struct UnboundedDepth {};
/// Depth m_low until the residual first drops below switch_tol, then m_high
/// for the rest of the run.
struct SwitchOnResidual {
  int m_low = 3;
  int m_high = 10;
  double switch_tol = 0.005;
};

using DepthPolicy = std::variant<FixedDepth, UnboundedDepth, SwitchOnResidual>;

enum class RankPolicy { drop_oldest_on_deficiency, fail_on_deficiency };

struct AcceleratorConfig {
  DepthPolicy depth = FixedDepth{1};
  double damping = 1.0;
  double residual_tolerance = 1e-8;
  int max_iterations = 1000;
  RankPolicy rank_policy = RankPolicy::drop_oldest_on_deficiency;
  /// Record the sine/cosine geometry of each least-squares window. Costs one
  /// extra O(n m^2) factorization per step.
  bool record_geometry = true;
  QrTolerances<double> qr;

  void validate() const {
    if (!(damping > 0.0 && damping <= 1.0))
      throw InvalidConfig("damping must lie in (0, 1]");
    if (!(residual_tolerance > 0.0)) throw InvalidConfig("residual tolerance must be positive");
    if (max_iterations < 1) throw InvalidConfig("max_iterations must be positive");
    if (const auto* f = std::get_if<FixedDepth>(&depth); f && f->m < 0)
      throw InvalidConfig("depth m must be nonnegative");
    if (const auto* s = std::get_if<SwitchOnResidual>(&depth)) {
      if (s->m_low < 0 || s->m_high < 0) throw InvalidConfig("switch depths must be nonnegative");
      if (!(s->switch_tol > 0.0)) throw InvalidConfig("switch tolerance must be positive");
    }
  }
};

struct DepthChoice {
  int depth = 0;
  bool switched = false;
};

/// Depth for step k (k >= 1), given the residual norm just computed at that
/// step. `cap` bounds the window by the ambient dimension.
inline DepthChoice next_depth(const DepthPolicy& policy, int k, double residual_norm,
                              bool switched, Index cap = std::numeric_limits<int>::max()) {
  const auto limit = [&](long m) {
    return static_cast<int>(std::max<long>(0, std::min<long>({m, long(k), long(cap)})));
  };
  return std::visit(
      [&](const auto& p) -> DepthChoice {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FixedDepth>) {
          return {limit(p.m), switched};
        } else if constexpr (std::is_same_v<P, UnboundedDepth>) {
          return {limit(long(k) - 1), switched};
        } else {
          const bool latched = switched || residual_norm < p.switch_tol;
          return {limit(latched ? p.m_high : p.m_low), latched};
        }
      },
      policy);
}

template <typename Scalar = double>
struct StepDiagnostics {
  int k = 0; ///< index of the residual w_k this record describes
  Scalar residual_norm{0};
  Scalar ls_residual_norm{0};
  Scalar theta{1};
  Vector<Scalar> gamma; ///< newest difference first
  Vector<Scalar> alpha; ///< oldest iterate first; sums to one
  ColumnGeometry<Scalar> geometry;
  int m_k_used = 0;
  Scalar beta_used{1};
  int rank_events = 0;
  bool switched = false;
};

/// Gain of the least-squares step: |w^alpha| / |w|.
template <typename Scalar>
Scalar compute_gain(Scalar residual_norm, Scalar ls_residual_norm) {
  if (residual_norm == Scalar(0)) throw ConvergedSignal("compute_gain: residual is exactly zero");
  if (!(residual_norm > Scalar(0))) throw InvalidConstants("compute_gain: negative residual norm");
  const Scalar ls = std::clamp(ls_residual_norm, Scalar(0), residual_norm);
  return ls / residual_norm;
}

/// Constrained coefficients (oldest first) from unconstrained ones (newest first).
template <typename Scalar>
Vector<Scalar> alpha_from_gamma(const Eigen::Ref<const Vector<Scalar>>& gamma) {
  const Index m = gamma.size();
  Vector<Scalar> alpha(m + 1);
  // gamma(0) pairs with the newest difference, gamma(m-1) with the oldest.
  if (m == 0) {
    alpha(0) = Scalar(1);
    return alpha;
  }
  alpha(0) = gamma(m - 1);
  for (Index i = 1; i < m; ++i) alpha(i) = gamma(m - 1 - i) - gamma(m - i);
  alpha(m) = Scalar(1) - gamma(0);
  return alpha;
}

/// Depth-one coefficient (w_next, w_next - w_prev) / |w_next - w_prev|^2.
template <typename Scalar>
Scalar gamma_m1_closed_form(const Eigen::Ref<const Vector<Scalar>>& w_next,
                            const Eigen::Ref<const Vector<Scalar>>& w_prev) {
  const Vector<Scalar> d = w_next - w_prev;
  const Scalar dd = d.squaredNorm();
  if (dd == Scalar(0)) throw DegenerateDifference("gamma_m1_closed_form: w_next == w_prev");
  return w_next.dot(d) / dd;
}

/// Depth-one gain: |sin| of the angle between w_next and w_next - w_prev.
template <typename Scalar>
Scalar theta_m1_closed_form(const Eigen::Ref<const Vector<Scalar>>& w_next,
                            const Eigen::Ref<const Vector<Scalar>>& w_prev) {
  const Vector<Scalar> d = w_next - w_prev;
  const Scalar wn = w_next.norm(), dn = d.norm();
  if (wn == Scalar(0) || dn == Scalar(0))
    throw DegenerateDifference("theta_m1_closed_form: zero residual or zero difference");
  const Scalar c = w_next.dot(d) / (wn * dn);
  return std::sqrt(std::max(Scalar(0), Scalar(1) - c * c));
}

/// Anderson acceleration with depth policy and constant damping.
///
/// Construction performs the undamped first step x1 = x0 + (g(x0) - x0).
/// Each call to step() evaluates w_{k+1} = g(x_k) - x_k, updates the difference
/// windows, solves min |w_{k+1} - F_k gamma| and moves to
/// x_{k+1} = (x_k - E_k gamma) + beta (w_{k+1} - F_k gamma).
template <typename Scalar = double>
class AndersonAccelerator {
public:
  using VectorType = Vector<Scalar>;
  using MatrixType = Matrix<Scalar>;

  AndersonAccelerator(FixedPointProblem<Scalar> problem, VectorType x0, AcceleratorConfig config)
      : problem_(std::move(problem)), config_(std::move(config)) {
    config_.validate();
    if (problem_.dimension < 1 || !problem_.evaluate)
      throw InvalidConfig("problem must have a positive dimension and an evaluate function");
    if (x0.size() != problem_.dimension)
      throw DimensionError("initial iterate has length " + std::to_string(x0.size()) +
                           ", problem dimension is " + std::to_string(problem_.dimension));
    const QrTolerances<Scalar> tol{Scalar(config_.qr.orthogonality),
                                   Scalar(config_.qr.reconstruction), Scalar(config_.qr.rank)};
    f_qr_ = ThinQR<Scalar>(problem_.dimension, tol);

    const VectorType w1 = residual_at(x0);
    first_.k = 1;
    first_.residual_norm = w1.norm();
    first_.ls_residual_norm = first_.residual_norm;
    first_.theta = Scalar(1);
    first_.alpha = VectorType::Ones(1);
    first_.beta_used = Scalar(1);
    x_prev_ = x0;
    x_ = x0 + w1;
    w_ = w1;
    healthy_ = std::isfinite(double(first_.residual_norm));
    remember(x0, w1);
    remember_iterate(x_);
  }

  /// Diagnostics of the initial (unaccelerated) step.
  const StepDiagnostics<Scalar>& initial_diagnostics() const { return first_; }

  StepDiagnostics<Scalar> step() {
    if (!healthy_) throw Error("step: accelerator holds a non-finite residual");
    StepDiagnostics<Scalar> d;
    const VectorType w_next = residual_at(x_);
    d.k = k_ + 1;
    d.residual_norm = w_next.norm();
    d.beta_used = Scalar(config_.damping);
    if (!std::isfinite(double(d.residual_norm))) {
      healthy_ = false;
      d.theta = std::numeric_limits<Scalar>::quiet_NaN();
      return d;
    }

    const DepthChoice depth =
        next_depth(config_.depth, k_, double(d.residual_norm), switched_, problem_.dimension);
    switched_ = depth.switched;
    d.switched = switched_;

    update_windows(w_next - w_, x_ - x_prev_, depth.depth, d.rank_events);
    const Index m = f_qr_.cols();
    d.m_k_used = int(m);

    VectorType w_alpha = w_next;
    VectorType x_alpha = x_;
    VectorType gamma_oldest_first = VectorType::Zero(m);
    if (d.residual_norm == Scalar(0)) {
      d.theta = Scalar(0);
      d.ls_residual_norm = Scalar(0);
    } else if (m == 0) {
      d.theta = Scalar(1);
      d.ls_residual_norm = d.residual_norm;
    } else {
      const auto sol = f_qr_.solve(w_next);
      gamma_oldest_first = sol.coefficients;
      d.ls_residual_norm = sol.residual_norm;
      d.theta = compute_gain(d.residual_norm, sol.residual_norm);
      w_alpha.noalias() -= f_qr_.columns() * gamma_oldest_first;
      for (Index j = 0; j < m; ++j) x_alpha.noalias() -= gamma_oldest_first(j) * e_window_[j];
      if (config_.record_geometry) d.geometry = newest_first_geometry();
    }
    d.gamma = gamma_oldest_first.reverse();
    d.alpha = alpha_from_gamma<Scalar>(d.gamma);

    x_prev_ = x_;
    x_ = x_alpha + Scalar(config_.damping) * w_alpha;
    w_ = w_next;
    ++k_;
    remember(x_prev_, w_next);
    remember_iterate(x_);
    return d;
  }

  /// Current iterate x_k.
  const VectorType& iterate() const { return x_; }
  /// x_{k-1}; its residual is the most recently computed one.
  const VectorType& previous_iterate() const { return x_prev_; }
  /// Most recent residual w_k = g(x_{k-1}) - x_{k-1}.
  const VectorType& last_residual() const { return w_; }
  int k() const { return k_; }
  bool switched() const { return switched_; }
  const ThinQR<Scalar>& f_factorization() const { return f_qr_; }
  /// Iterate differences, oldest first, paired column-by-column with f_factorization().
  const std::deque<VectorType>& e_window() const { return e_window_; }
  const std::deque<VectorType>& x_history() const { return x_history_; }
  const std::deque<VectorType>& w_history() const { return w_history_; }
  const AcceleratorConfig& config() const { return config_; }
  const FixedPointProblem<Scalar>& problem() const { return problem_; }

private:
  VectorType residual_at(const VectorType& x) const {
    VectorType gx;
    try {
      gx = problem_.evaluate(x);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw ProblemEvaluationError(std::string("problem evaluation failed: ") + e.what());
    }
    if (gx.size() != x.size())
      throw ProblemEvaluationError("problem evaluation returned a vector of the wrong length");
    return gx - x;
  }

  void drop_oldest_column() {
    f_qr_.drop_oldest();
    e_window_.pop_front();
  }

  void update_windows(const VectorType& df, const VectorType& de, int depth, int& rank_events) {
    if (depth == 0) {
      f_qr_.clear();
      e_window_.clear();
      return;
    }
    while (f_qr_.cols() > depth - 1) drop_oldest_column();
    while (!f_qr_.try_append(df)) {
      if (config_.rank_policy == RankPolicy::fail_on_deficiency)
        throw RankDeficiency("step " + std::to_string(k_) +
                             ": residual difference is dependent on the window");
      ++rank_events;
      if (f_qr_.empty()) return; // df itself is (numerically) zero
      drop_oldest_column();
    }
    e_window_.push_back(de);
  }

  ColumnGeometry<Scalar> newest_first_geometry() const {
    const auto cols = f_qr_.columns();
    return column_geometry<Scalar>(cols.rowwise().reverse().eval());
  }

  // History windows sized to the current depth (everything for Unbounded).
  void remember(const VectorType& x, const VectorType& w) {
    w_history_.push_back(w);
    if (x_history_.empty()) x_history_.push_back(x);
    trim_history();
  }
  void remember_iterate(const VectorType& x) {
    x_history_.push_back(x);
    trim_history();
  }
  void trim_history() {
    if (std::holds_alternative<UnboundedDepth>(config_.depth)) return;
    const std::size_t keep = std::size_t(f_qr_.cols()) + 2;
    while (x_history_.size() > keep) x_history_.pop_front();
    while (w_history_.size() > keep) w_history_.pop_front();
  }

  FixedPointProblem<Scalar> problem_;
  AcceleratorConfig config_;
  ThinQR<Scalar> f_qr_;
  std::deque<VectorType> e_window_;
  std::deque<VectorType> x_history_;
  std::deque<VectorType> w_history_;
  VectorType x_prev_, x_, w_;
  StepDiagnostics<Scalar> first_;
  int k_ = 1;
  bool switched_ = false;
  bool healthy_ = true;
};

enum class Termination { converged, max_iterations, diverged };

inline const char* to_string(Termination t) {
  switch (t) {
  case Termination::converged: return "converged";
  case Termination::max_iterations: return "max_iterations";
  case Termination::diverged: return "diverged";
  }
  return "unknown";
}

template <typename Scalar = double>
struct RunReport {
  /// steps[i] describes residual w_{i+1}; steps[0] is the undamped first step.
  std::vector<StepDiagnostics<Scalar>> steps;
  /// The iterate whose residual is steps.back().
  Vector<Scalar> final_iterate;
  Termination termination = Termination::max_iterations;
  int iterations() const { return int(steps.size()); }
  Scalar final_residual() const { return steps.empty() ? Scalar(0) : steps.back().residual_norm; }
};

template <typename Scalar = double>
class DivergenceError : public Error {
public:
  DivergenceError(const std::string& what, RunReport<Scalar> report)
      : Error(what), report_(std::make_shared<RunReport<Scalar>>(std::move(report))) {}
  const RunReport<Scalar>& report() const { return *report_; }

private:
  std::shared_ptr<const RunReport<Scalar>> report_;
};

/// Run until |w_k| < tolerance or max_iterations residual evaluations.
/// Throws DivergenceError (carrying the history so far) on a non-finite residual.
template <typename Scalar>
RunReport<Scalar> solve(const FixedPointProblem<Scalar>& problem, const Vector<Scalar>& x0,
                        const AcceleratorConfig& config) {
  AndersonAccelerator<Scalar> acc(problem, x0, config);
  RunReport<Scalar> report;
  report.steps.push_back(acc.initial_diagnostics());
  const auto tol = Scalar(config.residual_tolerance);
  for (;;) {
    const auto& last = report.steps.back();
    if (!std::isfinite(double(last.residual_norm))) {
      report.termination = Termination::diverged;
      report.final_iterate = acc.previous_iterate();
      throw DivergenceError<Scalar>("non-finite residual at k = " + std::to_string(last.k),
                                    std::move(report));
    }
    if (last.residual_norm < tol) {
      report.termination = Termination::converged;
      break;
    }
    if (report.iterations() >= config.max_iterations) {
      report.termination = Termination::max_iterations;
      break;
    }
    report.steps.push_back(acc.step());
  }
  report.final_iterate = acc.previous_iterate();
  return report;
}

} // namespace anderson
