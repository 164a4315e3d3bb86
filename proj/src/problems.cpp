#include "anderson/problems.hpp"

#include <cmath>
#include <random>
#include <string>

namespace anderson {

Eigen::Vector4d poly_g(const Eigen::Vector4d& x) {
  const double s = 1.0 / 6.0;
  Eigen::Vector4d g;
  g(0) = s * x(0) * x(0) * x(0) + 4 * x(0) + x(1) + 0.5 * x(2) + x(3) - (5.5 + s);
  g(1) = x(0) + s * x(1) * x(1) * x(1) + 3 * x(1) + 0.5 * x(2) + 0.5 * x(3) - (4 + s);
  g(2) = 0.5 * x(0) + 0.5 * x(1) + s * x(2) * x(2) * x(2) + 5 * x(2) + x(3) - (6 + s);
  g(3) = x(0) + 0.5 * x(1) + x(2) + 4 * x(3) - 5.5;
  return g;
}

Eigen::Matrix4d poly_g_jacobian(const Eigen::Vector4d& x) {
  Eigen::Matrix4d j;
  // clang-format off
  j << 0.5 * x(0) * x(0) + 4, 1,                      0.5,                    1,
       1,                      0.5 * x(1) * x(1) + 3, 0.5,                    0.5,
       0.5,                    0.5,                    0.5 * x(2) * x(2) + 5, 1,
       1,                      0.5,                    1,                      4;
  // clang-format on
  return j;
}

Eigen::Vector4d polynomial_fixed_point() { return Eigen::Vector4d::Ones(); }
Eigen::Vector4d polynomial_initial_iterate() { return Eigen::Vector4d::Constant(1.2); }

FixedPointProblem<double> polynomial_problem() {
  FixedPointProblem<double> p;
  p.dimension = 4;
  p.description = "polynomial";
  p.evaluate = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return poly_g(Eigen::Vector4d(x));
  };
  return p;
}

void NLHProblem::validate() const {
  if (!(length > 0.0)) throw InvalidConfig("nlh: domain length must be positive");
  if (!(h > 0.0) || h > length) throw InvalidConfig("nlh: grid spacing must lie in (0, L]");
  const double cells = length / h;
  if (std::abs(cells - std::round(cells)) > 1e-9 * cells)
    throw InvalidConfig("nlh: grid spacing must divide the domain length");
  if (!(k0 > 0.0)) throw InvalidConfig("nlh: k0 must be positive");
  if (!(epsilon >= 0.0)) throw InvalidConfig("nlh: epsilon must be nonnegative");
}

Index NLHProblem::nodes() const { return Index(std::llround(length / h)) + 1; }

Eigen::VectorXd NLHProblem::grid() const {
  const Index n = nodes();
  Eigen::VectorXd x(n);
  for (Index i = 0; i < n; ++i) x(i) = double(i) * h;
  return x;
}

Eigen::VectorXcd TridiagonalSystem::apply(const Eigen::VectorXcd& u) const {
  const Index n = main.size();
  Eigen::VectorXcd y(n);
  for (Index i = 0; i < n; ++i) {
    Complex v = main(i) * u(i);
    if (i > 0) v += lower(i) * u(i - 1);
    if (i + 1 < n) v += upper(i) * u(i + 1);
    y(i) = v;
  }
  return y;
}

double TridiagonalSystem::relative_residual(const Eigen::VectorXcd& u) const {
  const double r = (apply(u) - rhs).norm();
  const double b = rhs.norm();
  return b > 0.0 ? r / b : r;
}

namespace {

bool thomas(const TridiagonalSystem& s, double floor, Eigen::VectorXcd& x) {
  const Index n = s.main.size();
  Eigen::VectorXcd c(n), d(n);
  Complex piv = s.main(0);
  if (std::abs(piv) < floor) return false;
  c(0) = n > 1 ? s.upper(0) / piv : Complex(0);
  d(0) = s.rhs(0) / piv;
  for (Index i = 1; i < n; ++i) {
    piv = s.main(i) - s.lower(i) * c(i - 1);
    if (std::abs(piv) < floor) return false;
    c(i) = i + 1 < n ? s.upper(i) / piv : Complex(0);
    d(i) = (s.rhs(i) - s.lower(i) * d(i - 1)) / piv;
  }
  x.resize(n);
  x(n - 1) = d(n - 1);
  for (Index i = n - 2; i >= 0; --i) x(i) = d(i) - c(i) * x(i + 1);
  return true;
}

// Gaussian elimination with row interchanges; U gains a second superdiagonal.
Eigen::VectorXcd pivoted(const TridiagonalSystem& s) {
  const Index n = s.main.size();
  Eigen::VectorXcd dl = s.lower, d = s.main, du = s.upper, du2 = Eigen::VectorXcd::Zero(n),
                   b = s.rhs;
  for (Index i = 0; i + 1 < n; ++i) {
    // row i: (d(i), du(i), du2(i)); row i+1: (dl(i+1), d(i+1), du(i+1))
    if (std::abs(dl(i + 1)) > std::abs(d(i))) {
      std::swap(d(i), dl(i + 1));
      std::swap(du(i), d(i + 1));
      if (i + 2 < n) std::swap(du2(i), du(i + 1));
      std::swap(b(i), b(i + 1));
    }
    if (d(i) == Complex(0)) throw SingularSystem("tridiagonal solve: zero pivot at row " + std::to_string(i));
    const Complex f = dl(i + 1) / d(i);
    d(i + 1) -= f * du(i);
    if (i + 2 < n) du(i + 1) -= f * du2(i);
    b(i + 1) -= f * b(i);
  }
  if (d(n - 1) == Complex(0)) throw SingularSystem("tridiagonal solve: matrix is singular");
  Eigen::VectorXcd x(n);
  for (Index i = n - 1; i >= 0; --i) {
    Complex v = b(i);
    if (i + 1 < n) v -= du(i) * x(i + 1);
    if (i + 2 < n) v -= du2(i) * x(i + 2);
    x(i) = v / d(i);
  }
  return x;
}

} // namespace

Eigen::VectorXcd solve_tridiagonal(const TridiagonalSystem& s, double pivot_floor) {
  const Index n = s.main.size();
  if (n == 0) return {};
  if (s.lower.size() != n || s.upper.size() != n || s.rhs.size() != n)
    throw DimensionError("tridiagonal solve: band lengths differ");
  Eigen::VectorXcd x;
  if (!thomas(s, pivot_floor, x)) x = pivoted(s);
  if (!x.allFinite()) throw SingularSystem("tridiagonal solve produced non-finite values");
  return x;
}

TridiagonalSystem nlh_assemble(const NLHProblem& p, const ComplexGridFunction& u_prev) {
  p.validate();
  const Index n = p.nodes();
  if (u_prev.size() != n)
    throw DimensionError("nlh: iterate has " + std::to_string(u_prev.size()) + " nodes, grid has " +
                         std::to_string(n));
  const double h2 = 1.0 / (p.h * p.h);
  const double k2 = p.k0 * p.k0;
  const Complex ik(0.0, p.k0);
  TridiagonalSystem s;
  s.lower = Eigen::VectorXcd::Constant(n, h2);
  s.upper = Eigen::VectorXcd::Constant(n, h2);
  s.rhs = Eigen::VectorXcd::Zero(n);
  s.main.resize(n);
  for (Index i = 0; i < n; ++i) s.main(i) = -2.0 * h2 + k2 * (1.0 + p.epsilon * std::norm(u_prev(i)));
  s.lower(0) = 0.0;
  s.upper(n - 1) = 0.0;
  // Ghost nodes eliminated with the centered boundary derivative.
  s.main(0) += 2.0 * ik / p.h;
  s.upper(0) = 2.0 * h2;
  s.rhs(0) = 4.0 * ik / p.h;
  s.main(n - 1) += 2.0 * ik / p.h;
  s.lower(n - 1) = 2.0 * h2;
  return s;
}

ComplexGridFunction nlh_fixed_point_map(const NLHProblem& p, const ComplexGridFunction& u_prev) {
  return solve_tridiagonal(nlh_assemble(p, u_prev));
}

ComplexGridFunction nlh_initial_iterate(const NLHProblem& p) {
  p.validate();
  const Eigen::VectorXd x = p.grid();
  ComplexGridFunction u(x.size());
  for (Index i = 0; i < x.size(); ++i) u(i) = std::exp(Complex(0.0, p.k0 * x(i)));
  return u;
}

Eigen::VectorXd complex_to_real(const ComplexGridFunction& u) {
  Eigen::VectorXd v(2 * u.size());
  for (Index i = 0; i < u.size(); ++i) {
    v(2 * i) = u(i).real();
    v(2 * i + 1) = u(i).imag();
  }
  return v;
}

ComplexGridFunction real_to_complex(const Eigen::VectorXd& v) {
  if (v.size() % 2 != 0) throw LayoutError("real_to_complex: odd-length vector");
  ComplexGridFunction u(v.size() / 2);
  for (Index i = 0; i < u.size(); ++i) u(i) = Complex(v(2 * i), v(2 * i + 1));
  return u;
}

FixedPointProblem<double> nlh_problem(const NLHProblem& p) {
  p.validate();
  FixedPointProblem<double> fp;
  fp.dimension = 2 * p.nodes();
  fp.description = "nlh";
  fp.evaluate = [p](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return complex_to_real(nlh_fixed_point_map(p, real_to_complex(v)));
  };
  return fp;
}

FixedPointProblem<double> linear_problem(Index n, std::uint64_t seed, double contraction,
                                         Eigen::VectorXd* fixed_point) {
  if (n < 1) throw InvalidConfig("linear problem: dimension must be positive");
  if (!(contraction >= 0.0 && contraction < 1.0))
    throw InvalidConfig("linear problem: contraction must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(n, n);
  Eigen::VectorXd b(n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) a(i, j) = normal(rng);
  for (Index i = 0; i < n; ++i) b(i) = normal(rng);
  const double s = Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()(0);
  if (s > 0.0) a *= contraction / s;
  if (fixed_point)
    *fixed_point = (Eigen::MatrixXd::Identity(n, n) - a).partialPivLu().solve(b);
  FixedPointProblem<double> p;
  p.dimension = n;
  p.description = "linear:" + std::to_string(n) + ":" + std::to_string(seed);
  p.evaluate = [a, b](const Eigen::VectorXd& x) -> Eigen::VectorXd { return a * x + b; };
  return p;
}

} // namespace anderson
