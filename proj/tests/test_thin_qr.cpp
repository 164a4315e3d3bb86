#include "anderson/thin_qr.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace anderson;
using doctest::Approx;

namespace {

Eigen::MatrixXd cols2(double a, double b, double c, double d) {
  Eigen::MatrixXd m(2, 2);
  m << a, c, b, d; // columns (a,b) and (c,d)
  return m;
}

void check_equivalent(const ThinQR<double>& qr, const Eigen::MatrixXd& columns, double tol) {
  const auto ref = ThinQR<double>::factor(columns);
  REQUIRE(qr.cols() == ref.cols());
  CHECK((qr.r() - ref.r()).cwiseAbs().maxCoeff() <= tol * (1 + ref.r().cwiseAbs().maxCoeff()));
  CHECK((qr.q() - ref.q()).cwiseAbs().maxCoeff() <= tol);
  CHECK((qr.columns() - columns).cwiseAbs().maxCoeff() == 0.0);
}

} // namespace

TEST_CASE("factor: two columns from hand Gram-Schmidt") {
  const auto qr = ThinQR<double>::factor(cols2(1, 0, 1, 1));
  Eigen::Matrix2d r;
  r << 1, 1, 0, 1;
  CHECK((qr.r() - r).norm() < 1e-15);
  CHECK((qr.q() - Eigen::Matrix2d::Identity()).norm() < 1e-15);
}

TEST_CASE("factor: single column normalizes") {
  Eigen::MatrixXd a(2, 1);
  a << 3, 4;
  const auto qr = ThinQR<double>::factor(a);
  CHECK(qr.r()(0, 0) == Approx(5.0).epsilon(1e-15));
  CHECK(qr.q()(0, 0) == Approx(0.6).epsilon(1e-15));
  CHECK(qr.q()(1, 0) == Approx(0.8).epsilon(1e-15));
}

TEST_CASE("factor: orthogonal columns give diagonal R") {
  const auto qr = ThinQR<double>::factor(cols2(2, 0, 0, 3));
  CHECK(qr.r()(0, 0) == Approx(2.0));
  CHECK(qr.r()(1, 1) == Approx(3.0));
  CHECK(std::abs(qr.r()(0, 1)) < 1e-15);
}

TEST_CASE("factor: errors") {
  CHECK_THROWS_AS(ThinQR<double>::factor(Eigen::MatrixXd::Ones(2, 3)), DimensionError);
  CHECK_THROWS_AS(ThinQR<double>::factor(cols2(1, 0, 0, 0)), DegenerateColumn);
  CHECK_THROWS_AS(ThinQR<double>::factor(Eigen::MatrixXd(3, 0)), DimensionError);
  CHECK_THROWS_AS(ThinQR<double>::factor(cols2(1, 1, 2, 2)), RankDeficiency);
}

TEST_CASE("factor: invariants on random matrices") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    const long n = 3 + t % 10, m = 1 + t % std::min<long>(n, 6);
    const auto a = oracle::random_matrix(rng, n, m);
    const auto qr = ThinQR<double>::factor(a);
    CHECK(qr.orthogonality_error() <= 1e-10);
    CHECK(qr.reconstruction_error() <= 1e-10);
    for (long j = 0; j < m; ++j) CHECK(qr.r()(j, j) > 0);
    const auto r_ref = oracle::gram_schmidt_r(a);
    CHECK((qr.r() - r_ref).cwiseAbs().maxCoeff() <= 1e-10 * r_ref.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("append matches factor") {
  ThinQR<double> qr(2);
  Eigen::VectorXd a(2), b(2);
  a << 1, 0;
  b << 1, 1;
  qr.append(a);
  qr.append(b);
  check_equivalent(qr, cols2(1, 0, 1, 1), 1e-12);
}

TEST_CASE("append: parallel column is rank deficient and leaves the factorization alone") {
  ThinQR<double> qr(3);
  Eigen::VectorXd a(3);
  a << 1, 2, 3;
  qr.append(a);
  CHECK_FALSE(qr.try_append(2.0 * a));
  CHECK(qr.cols() == 1);
  CHECK_THROWS_AS(qr.append(-a), RankDeficiency);
  CHECK_FALSE(qr.try_append(Eigen::VectorXd::Zero(3)));
}

TEST_CASE("append: orthogonal column adds zero off-diagonals") {
  ThinQR<double> qr(3);
  qr.append(Eigen::Vector3d(1, 1, 0));
  qr.append(Eigen::Vector3d(1, -1, 0));
  qr.append(Eigen::Vector3d(0, 0, 2));
  CHECK(std::abs(qr.r()(0, 2)) < 1e-12);
  CHECK(std::abs(qr.r()(1, 2)) < 1e-12);
  CHECK(std::abs(qr.r()(0, 1)) < 1e-12);
}

TEST_CASE("append: dimension checks") {
  ThinQR<double> qr(2);
  CHECK_THROWS_AS(qr.append(Eigen::Vector3d(1, 0, 0)), DimensionError);
  qr.append(Eigen::Vector2d(1, 0));
  qr.append(Eigen::Vector2d(0, 1));
  CHECK_THROWS_AS(qr.append(Eigen::Vector2d(1, 1)), DimensionError);
}

TEST_CASE("drop_oldest") {
  ThinQR<double> qr(2);
  CHECK_THROWS_AS(qr.drop_oldest(), EmptyFactorization);
  qr.append(Eigen::Vector2d(1, 0));
  qr.append(Eigen::Vector2d(1, 1));
  qr.drop_oldest();
  REQUIRE(qr.cols() == 1);
  CHECK(qr.r()(0, 0) == Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(qr.q()(0, 0) == Approx(1 / std::sqrt(2.0)).epsilon(1e-14));
  qr.drop_oldest();
  CHECK(qr.empty());
}

TEST_CASE("append then drop equals the shifted window") {
  std::mt19937_64 rng(3);
  const auto a = oracle::random_matrix(rng, 8, 5);
  auto qr = ThinQR<double>::factor(a.leftCols(4));
  qr.append(a.col(4));
  qr.drop_oldest();
  check_equivalent(qr, a.rightCols(4), 1e-10);
}

TEST_CASE("sliding window stress: 200 random columns") {
  std::mt19937_64 rng(2024);
  const long n = 10, window = 6;
  ThinQR<double> qr(n);
  Eigen::MatrixXd all = oracle::random_matrix(rng, n, 200);
  for (long j = 0; j < 200; ++j) {
    if (qr.cols() == window) qr.drop_oldest();
    qr.append(all.col(j));
    CHECK(qr.orthogonality_error() <= qr.tolerances().orthogonality);
    const long m = qr.cols();
    if (j % 20 == 0) check_equivalent(qr, all.middleCols(j - m + 1, m), 1e-10);
  }
  check_equivalent(qr, all.rightCols(window), 1e-10);
}

TEST_CASE("drop triggers a recompute when drift exceeds the tolerance") {
  std::mt19937_64 rng(5);
  QrTolerances<double> tol;
  tol.orthogonality = 0.0; // every downdate counts as drift
  ThinQR<double> qr(6, tol);
  const auto a = oracle::random_matrix(rng, 6, 4);
  for (long j = 0; j < 4; ++j) qr.append(a.col(j));
  qr.drop_oldest();
  CHECK(qr.recompute_count() >= 1);
  check_equivalent(qr, a.rightCols(3), 1e-12);
}

TEST_CASE("solve: exact, orthogonal and hand cases") {
  std::mt19937_64 rng(8);
  const auto a = oracle::random_matrix(rng, 7, 3);
  const auto qr = ThinQR<double>::factor(a);
  const Eigen::VectorXd c = oracle::random_vector(rng, 3);
  const Eigen::VectorXd rhs = a * c;
  const auto s = qr.solve(rhs);
  CHECK(s.residual_norm <= 1e-10 * rhs.norm());
  CHECK((s.coefficients - c).norm() <= 1e-10 * c.norm());

  ThinQR<double> q2(3);
  q2.append(Eigen::Vector3d(1, 0, 0));
  q2.append(Eigen::Vector3d(0, 1, 0));
  const auto o = q2.solve(Eigen::Vector3d(0, 0, 2));
  CHECK(o.coefficients.norm() == 0.0);
  CHECK(o.residual_norm == Approx(2.0));

  ThinQR<double> q3(3);
  q3.append(Eigen::Vector3d(1, -1, 0));
  const auto h = q3.solve(Eigen::Vector3d(1, 0, 0));
  CHECK(h.coefficients(0) == Approx(0.5).epsilon(1e-15));
  CHECK(h.residual_norm == Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
  Eigen::MatrixXd f(3, 1);
  f << 1, -1, 0;
  CHECK(oracle::normal_equations(f, Eigen::Vector3d(1, 0, 0))(0) == Approx(0.5).epsilon(1e-15));
}

TEST_CASE("solve: Pythagorean split and normal-equation agreement") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 200; ++t) {
    const long n = 4 + t % 9, m = 1 + t % 4;
    const auto a = oracle::random_matrix(rng, n, m);
    const auto rhs = oracle::random_vector(rng, n);
    const auto s = ThinQR<double>::factor(a).solve(rhs);
    const double fit = (a * s.coefficients).squaredNorm();
    CHECK(std::abs(rhs.squaredNorm() - fit - s.residual_norm * s.residual_norm) <=
          1e-8 * rhs.squaredNorm());
    const auto c = oracle::normal_equations(a, rhs);
    CHECK((s.coefficients - c).norm() <= 1e-8 * (1 + c.norm()));
  }
}

TEST_CASE("geometry: hand cases") {
  const auto g = ThinQR<double>::factor(cols2(1, 0, 1, 1)).geometry();
  CHECK(g.sines[0] == 1.0);
  CHECK(g.sines[1] == Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(g.max_cosines[1] == Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(g.c_s_estimate == Approx(1 / std::sqrt(2.0)));
  CHECK(g.c_t_estimate == Approx(1 / std::sqrt(2.0)));

  const auto o = ThinQR<double>::factor(cols2(2, 0, 0, 3)).geometry();
  CHECK(o.sines[0] == 1.0);
  CHECK(o.sines[1] == 1.0);
  CHECK(o.c_t_estimate == 0.0);

  Eigen::MatrixXd one(2, 1);
  one << 1, 2;
  const auto s = ThinQR<double>::factor(one).geometry();
  REQUIRE(s.sines.size() == 1);
  CHECK(s.sines[0] == Approx(1.0));
  CHECK(s.c_s_estimate == 1.0);
}

TEST_CASE("geometry: sines against explicit projection, and sin^2 + sum cos^2 = 1") {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 200; ++t) {
    const long n = 3 + t % 10, m = 1 + t % std::min<long>(n, 6);
    const auto a = oracle::random_matrix(rng, n, m);
    const auto qr = ThinQR<double>::factor(a);
    const auto g = qr.geometry();
    for (long j = 0; j < m; ++j) {
      CHECK(g.sines[j] == Approx(oracle::projection_sine(a, j)).epsilon(1e-10));
      CHECK(g.sines[j] == qr.r()(j, j) / a.col(j).norm());
      double c2 = 0;
      for (long i = 0; i < j; ++i) c2 += std::pow(qr.r()(i, j) / a.col(j).norm(), 2);
      CHECK(std::abs(g.sines[j] * g.sines[j] + c2 - 1.0) <= 1e-10);
    }
  }
}

TEST_CASE("inverse_r_bounds: 2x2 hand case is tight") {
  // A with |a1| = 2, |a2| = sqrt(2) and R = [[2, 1], [0, 1]]
  const auto qr = ThinQR<double>::factor(cols2(2, 0, 1, 1));
  const double c = 1 / std::sqrt(2.0);
  const auto b = qr.inverse_r_bounds(c, c);
  const Eigen::MatrixXd s = oracle::dense_inverse(qr.r());
  CHECK(s(0, 0) == Approx(0.5));
  CHECK(s(0, 1) == Approx(-0.5));
  CHECK(s(1, 1) == Approx(1.0));
  CHECK(b(0, 0) == Approx(0.5));
  CHECK(b(0, 1) == Approx(0.5));
  CHECK(b(1, 1) == Approx(1.0));
}

TEST_CASE("inverse_r_bounds: orthogonal columns") {
  const auto qr = ThinQR<double>::factor(Eigen::MatrixXd(Eigen::Vector3d(1, 2, 3).asDiagonal()));
  const auto b = qr.inverse_r_bounds(1.0, 0.0);
  const auto s = oracle::dense_inverse(qr.r());
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) CHECK(b(i, j) == 0.0);
  CHECK((b.diagonal() - s.diagonal()).norm() < 1e-15);
}

TEST_CASE("inverse_r_bounds: invalid constants") {
  const auto qr = ThinQR<double>::factor(cols2(2, 0, 1, 1));
  CHECK_THROWS_AS(qr.inverse_r_bounds(0.0, 0.5), InvalidConstants);
  CHECK_THROWS_AS(qr.inverse_r_bounds(1.1, 0.5), InvalidConstants);
  CHECK_THROWS_AS(qr.inverse_r_bounds(0.5, 1.0), InvalidConstants);
  CHECK_THROWS_AS(qr.inverse_r_bounds(0.5, -0.1), InvalidConstants);
}

TEST_CASE("column_geometry on arbitrary column sets") {
  std::mt19937_64 rng(12);
  const auto a = oracle::random_matrix(rng, 6, 3);
  const auto g1 = column_geometry<double>(a);
  const auto g2 = ThinQR<double>::factor(a).geometry();
  for (int j = 0; j < 3; ++j) CHECK(g1.sines[j] == Approx(g2.sines[j]).epsilon(1e-12));
  CHECK(column_geometry<double>(Eigen::MatrixXd(6, 0)).sines.empty());
}

TEST_CASE("float instantiation") {
  Eigen::MatrixXf a(3, 2);
  a << 1, 1, 0, 1, 0, 0;
  const auto qr = ThinQR<float>::factor(a);
  CHECK(qr.r()(1, 1) == doctest::Approx(1.0f));
}
