#include "anderson/accelerator.hpp"
#include "anderson/problems.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace anderson;
using doctest::Approx;

TEST_CASE("poly_g: fixed point, constants, x0 fixture") {
  CHECK((poly_g(polynomial_fixed_point()) - polynomial_fixed_point()).cwiseAbs().maxCoeff() <=
        1e-14);
  const Eigen::Vector4d c = poly_g(Eigen::Vector4d::Zero());
  CHECK(c(0) == Approx(-(5.5 + 1.0 / 6)));
  CHECK(c(1) == Approx(-(4 + 1.0 / 6)));
  CHECK(c(2) == Approx(-(6 + 1.0 / 6)));
  CHECK(c(3) == -5.5);
  // exact rational evaluation at (1.2, 1.2, 1.2, 1.2)
  const Eigen::Vector4d g0 = poly_g(polynomial_initial_iterate());
  CHECK(g0(0) == Approx(908.0 / 375).epsilon(1e-15));
  CHECK(g0(1) == Approx(1591.0 / 750).epsilon(1e-15));
  CHECK(g0(2) == Approx(1891.0 / 750).epsilon(1e-15));
  CHECK(g0(3) == Approx(2.3).epsilon(1e-15));
}

TEST_CASE("poly_g_jacobian: symmetric and equal to central differences") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const auto f = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return poly_g(Eigen::Vector4d(x));
  };
  for (int t = 0; t < 10; ++t) {
    Eigen::Vector4d x;
    for (int i = 0; i < 4; ++i) x(i) = u(rng);
    const Eigen::Matrix4d j = poly_g_jacobian(x);
    CHECK((j - j.transpose()).norm() == 0.0);
    const Eigen::MatrixXd fd = oracle::central_difference_jacobian(f, x, 1e-5);
    CHECK((fd - j).norm() <= 1e-6 * j.norm());
  }
}

TEST_CASE("nlh grid") {
  NLHProblem p;
  CHECK(p.nodes() == 1001);
  CHECK(p.grid()(1000) == Approx(10.0));
  p.h = 0.03;
  CHECK_THROWS_AS(p.validate(), InvalidConfig);
  p.h = 0.01;
  p.epsilon = -1;
  CHECK_THROWS_AS(p.validate(), InvalidConfig);
}

TEST_CASE("nlh initial iterate") {
  NLHProblem p;
  p.k0 = 8.0;
  const auto u = nlh_initial_iterate(p);
  CHECK(u(0) == Complex(1.0, 0.0));
  CHECK(std::abs(u(1000) - std::exp(Complex(0, 80.0))) < 1e-12);
  CHECK((u.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("complex/real adapters") {
  ComplexGridFunction u(1);
  u << Complex(1, 2);
  const auto v = complex_to_real(u);
  CHECK(v(0) == 1.0);
  CHECK(v(1) == 2.0);
  CHECK(real_to_complex(v)(0) == u(0));
  CHECK(complex_to_real(ComplexGridFunction()).size() == 0);
  CHECK(real_to_complex(Eigen::VectorXd()).size() == 0);
  CHECK_THROWS_AS(real_to_complex(Eigen::VectorXd::Zero(3)), LayoutError);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto re = oracle::random_vector(rng, 17), im = oracle::random_vector(rng, 17);
    ComplexGridFunction w(17);
    for (int i = 0; i < 17; ++i) w(i) = Complex(re(i), im(i));
    const auto r = complex_to_real(w);
    CHECK(std::abs(r.norm() - w.norm()) <= 1e-14 * w.norm());
    CHECK((real_to_complex(r) - w).norm() == 0.0);
  }
}

TEST_CASE("tridiagonal solver: certificate, pivoting fallback, singular systems") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d;
  for (int t = 0; t < 20; ++t) {
    const int n = 5 + t;
    TridiagonalSystem s;
    s.lower.resize(n);
    s.main.resize(n);
    s.upper.resize(n);
    s.rhs.resize(n);
    for (int i = 0; i < n; ++i) {
      s.lower(i) = Complex(d(rng), d(rng));
      s.upper(i) = Complex(d(rng), d(rng));
      s.main(i) = Complex(d(rng), d(rng));
      s.rhs(i) = Complex(d(rng), d(rng));
    }
    s.lower(0) = s.upper(n - 1) = 0.0;
    if (t % 2) s.main(0) = 0.0; // forces the pivoting path
    const auto x = solve_tridiagonal(s);
    CHECK(s.relative_residual(x) <= 1e-10);
  }
  TridiagonalSystem z;
  z.lower = Eigen::VectorXcd::Zero(3);
  z.upper = Eigen::VectorXcd::Zero(3);
  z.main = Eigen::VectorXcd::Zero(3);
  z.rhs = Eigen::VectorXcd::Ones(3);
  CHECK_THROWS_AS(solve_tridiagonal(z), SingularSystem);
}

TEST_CASE("nlh map satisfies the assembled system") {
  NLHProblem p;
  p.epsilon = 0.22;
  auto u = nlh_initial_iterate(p);
  for (int i = 0; i < 3; ++i) {
    const auto s = nlh_assemble(p, u);
    const auto next = nlh_fixed_point_map(p, u);
    CHECK(s.relative_residual(next) <= 1e-12);
    u = next;
  }
  CHECK_THROWS_AS(nlh_fixed_point_map(p, ComplexGridFunction::Zero(10)), DimensionError);
}

TEST_CASE("nlh: the map ignores its input when epsilon = 0") {
  NLHProblem p;
  p.epsilon = 0.0;
  const auto u0 = nlh_initial_iterate(p);
  const auto u1 = nlh_fixed_point_map(p, u0);
  const auto u2 = nlh_fixed_point_map(p, u1);
  CHECK((u2 - u1).norm() <= 1e-10 * u1.norm());
  AcceleratorConfig cfg;
  cfg.depth = FixedDepth{0};
  cfg.residual_tolerance = 1e-10 * u1.norm();
  const auto rep = solve<double>(nlh_problem(p), complex_to_real(u0), cfg);
  CHECK(rep.termination == Termination::converged);
  CHECK(rep.iterations() == 2);
}

TEST_CASE("nlh: second-order convergence under refinement at epsilon = 0") {
  // the plane wave exp(i k0 x) solves the continuous problem exactly
  const auto error = [](double h) {
    NLHProblem p;
    p.k0 = 2.0;
    p.epsilon = 0.0;
    p.h = h;
    const auto u = nlh_fixed_point_map(p, nlh_initial_iterate(p));
    return (u - nlh_initial_iterate(p)).cwiseAbs().maxCoeff();
  };
  const double e1 = error(0.04), e2 = error(0.02), e3 = error(0.01);
  CHECK(std::log2(e1 / e2) >= 1.9);
  CHECK(std::log2(e2 / e3) >= 1.9);
}

TEST_CASE("linear problem") {
  Eigen::VectorXd xs;
  const auto p = linear_problem(6, 42, 0.5, &xs);
  CHECK((p.evaluate(xs) - xs).norm() <= 1e-12 * (1 + xs.norm()));
  const auto q = linear_problem(6, 42, 0.5);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(6, -1, 1);
  CHECK((p.evaluate(x) - q.evaluate(x)).norm() == 0.0);
  CHECK_THROWS_AS(linear_problem(0, 1), InvalidConfig);
  CHECK_THROWS_AS(linear_problem(3, 1, 1.0), InvalidConfig);
}
