#pragma once

#include "anderson/accelerator.hpp"
#include "anderson/core.hpp"

#include <complex>
#include <cstdint>

namespace anderson {

using Complex = std::complex<double>;
using ComplexGridFunction = Eigen::VectorXcd;

// 4D polynomial test system with fixed point (1, 1, 1, 1).

Eigen::Vector4d poly_g(const Eigen::Vector4d& x);
Eigen::Matrix4d poly_g_jacobian(const Eigen::Vector4d& x);
Eigen::Vector4d polynomial_fixed_point();
Eigen::Vector4d polynomial_initial_iterate();
FixedPointProblem<double> polynomial_problem();

// 1D nonlinear Helmholtz on [0, L] with radiating (Robin) ends:
//   u'' + k0^2 (1 + eps |u|^2) u = 0,  u' + i k0 u = 2 i k0 at 0,  u' - i k0 u = 0 at L.
// One fixed-point step freezes |u|^2 at the previous iterate and solves the
// resulting linear tridiagonal system.

struct NLHProblem {
  double length = 10.0;
  double h = 0.01;
  double k0 = 10.0;
  double epsilon = 0.22;

  void validate() const;
  Index nodes() const;
  Eigen::VectorXd grid() const;
};

/// Tridiagonal system: lower(i) couples row i to i-1, upper(i) to i+1.
/// lower(0) and upper(n-1) are unused.
struct TridiagonalSystem {
  Eigen::VectorXcd lower, main, upper, rhs;

  Eigen::VectorXcd apply(const Eigen::VectorXcd& u) const;
  /// |A u - rhs| / |rhs|, or the absolute residual when rhs is zero.
  double relative_residual(const Eigen::VectorXcd& u) const;
};

/// Thomas elimination; falls back to elimination with partial pivoting when a
/// pivot drops below `pivot_floor` in magnitude. Throws SingularSystem.
Eigen::VectorXcd solve_tridiagonal(const TridiagonalSystem& s, double pivot_floor = 1e-14);

TridiagonalSystem nlh_assemble(const NLHProblem& p, const ComplexGridFunction& u_prev);
ComplexGridFunction nlh_fixed_point_map(const NLHProblem& p, const ComplexGridFunction& u_prev);
ComplexGridFunction nlh_initial_iterate(const NLHProblem& p);

/// Interleaved (re, im) layout.
Eigen::VectorXd complex_to_real(const ComplexGridFunction& u);
ComplexGridFunction real_to_complex(const Eigen::VectorXd& v);

/// The NLH map on real vectors of length 2 * nodes.
FixedPointProblem<double> nlh_problem(const NLHProblem& p);

/// Affine map g(x) = A x + b with |A|_2 = contraction, drawn from a seeded
/// generator. Fixed point is returned through `fixed_point` when requested.
FixedPointProblem<double> linear_problem(Index n, std::uint64_t seed, double contraction = 0.9,
                                         Eigen::VectorXd* fixed_point = nullptr);

} // namespace anderson
