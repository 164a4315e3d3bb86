#pragma once

#include "anderson/core.hpp"

#include <Eigen/Householder>
#include <Eigen/Jacobi>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace anderson {

template <typename Scalar>
struct QrTolerances {
  Scalar orthogonality = Scalar(1e-10); ///< max |Q^T Q - I| before a full recompute
  Scalar reconstruction = Scalar(1e-10);
  Scalar rank = Scalar(1e-10); ///< minimum r_jj / |a_j| accepted on append
};

template <typename Scalar>
struct LeastSquaresSolution {
  Vector<Scalar> coefficients;
  Scalar residual_norm{0};
};

/// Direction sines/cosines of the factored columns against the span of the
/// columns that precede them. Index 0 is the first column, which has no prior
/// subspace: its sine is 1 and its max cosine 0.
template <typename Scalar>
struct ColumnGeometry {
  std::vector<Scalar> sines;
  std::vector<Scalar> max_cosines;
  Scalar c_s_estimate{1};
  Scalar c_t_estimate{0};
};

namespace detail {

template <typename Scalar>
ColumnGeometry<Scalar> geometry_from_r(const Eigen::Ref<const Matrix<Scalar>>& r,
                                       const std::vector<Scalar>& norms) {
  const Index m = r.cols();
  ColumnGeometry<Scalar> g;
  g.sines.resize(m);
  g.max_cosines.resize(m);
  for (Index j = 0; j < m; ++j) {
    const Scalar a = norms[j];
    g.sines[j] = std::abs(r(j, j)) / a;
    Scalar cmax{0};
    for (Index i = 0; i < j; ++i) cmax = std::max(cmax, std::abs(r(i, j)) / a);
    g.max_cosines[j] = cmax;
    if (j >= 1) g.c_s_estimate = std::min(g.c_s_estimate, g.sines[j]);
    g.c_t_estimate = std::max(g.c_t_estimate, cmax);
  }
  return g;
}

// Householder thin QR with a positive diagonal.
template <typename Scalar>
void householder_thin_qr(const Eigen::Ref<const Matrix<Scalar>>& a, Matrix<Scalar>& q,
                         Matrix<Scalar>& r) {
  const Index n = a.rows(), m = a.cols();
  Eigen::HouseholderQR<Matrix<Scalar>> qr(a);
  q = qr.householderQ() * Matrix<Scalar>::Identity(n, m);
  r = qr.matrixQR().topRows(m).template triangularView<Eigen::Upper>();
  for (Index j = 0; j < m; ++j) {
    if (r(j, j) < Scalar(0)) {
      r.row(j) *= Scalar(-1);
      q.col(j) *= Scalar(-1);
    }
  }
}

} // namespace detail

/// Economy QR factorization A = Q R of an n x m column window, maintained
/// incrementally: new columns are appended on the right (Gram-Schmidt with one
/// reorthogonalization pass) and the oldest column is removed from the left
/// (Givens downdate). The original columns are kept so the factorization can be
/// rebuilt from scratch when orthogonality drifts.
template <typename Scalar = double>
class ThinQR {
public:
  using VectorType = Vector<Scalar>;
  using MatrixType = Matrix<Scalar>;

  ThinQR() = default;

  explicit ThinQR(Index n, QrTolerances<Scalar> tol = {}) : n_(n), tol_(tol) {
    if (n < 1) throw DimensionError("ThinQR: ambient dimension must be positive");
  }

  /// Factor the given columns from scratch (Householder).
  static ThinQR factor(const Eigen::Ref<const MatrixType>& columns, QrTolerances<Scalar> tol = {}) {
    const Index n = columns.rows(), m = columns.cols();
    if (m < 1) throw DimensionError("qr_factor: need at least one column");
    if (m > n)
      throw DimensionError("qr_factor: " + std::to_string(m) + " columns exceed dimension " +
                           std::to_string(n));
    ThinQR qr(n, tol);
    qr.reserve(m);
    qr.norms_.resize(m);
    for (Index j = 0; j < m; ++j) {
      qr.norms_[j] = columns.col(j).norm();
      if (!(qr.norms_[j] > Scalar(0)))
        throw DegenerateColumn("qr_factor: column " + std::to_string(j) + " has zero norm");
    }
    qr.cols_.leftCols(m) = columns;
    qr.m_ = m;
    qr.recompute();
    for (Index j = 0; j < m; ++j) {
      if (qr.r_(j, j) < tol.rank * qr.norms_[j])
        throw RankDeficiency("qr_factor: column " + std::to_string(j) +
                             " is numerically dependent on its predecessors");
    }
    return qr;
  }

  /// Append a column; returns false (leaving the factorization untouched) if
  /// the column is numerically in the span of the current columns.
  [[nodiscard]] bool try_append(const Eigen::Ref<const VectorType>& col) {
    if (col.size() != n_)
      throw DimensionError("qr_append: column has length " + std::to_string(col.size()) +
                           ", expected " + std::to_string(n_));
    if (m_ >= n_) throw DimensionError("qr_append: factorization already has n columns");
    const Scalar norm_a = col.norm();
    if (!(norm_a > Scalar(0))) return false;

    reserve(m_ + 1);
    VectorType v = col;
    VectorType h = VectorType::Zero(m_);
    if (m_ > 0) {
      auto q = q_.leftCols(m_);
      // classical Gram-Schmidt, twice
      for (int pass = 0; pass < 2; ++pass) {
        const VectorType hp = q.transpose() * v;
        v.noalias() -= q * hp;
        h += hp;
      }
    }
    const Scalar rho = v.norm();
    if (!(rho >= tol_.rank * norm_a)) return false;

    q_.col(m_) = v / rho;
    r_.col(m_).head(m_) = h;
    r_(m_, m_) = rho;
    r_.row(m_).head(m_).setZero();
    cols_.col(m_) = col;
    norms_.push_back(norm_a);
    ++m_;
    return true;
  }

  void append(const Eigen::Ref<const VectorType>& col) {
    if (!try_append(col))
      throw RankDeficiency("qr_append: new column is numerically dependent on the window");
  }

  /// Remove the first (oldest) column.
  void drop_oldest() {
    if (m_ == 0) throw EmptyFactorization("qr_drop_oldest: factorization is empty");
    if (m_ == 1) {
      m_ = 0;
      norms_.clear();
      return;
    }
    // R without its first column is upper Hessenberg; chase the subdiagonal
    // away with Givens rotations applied to the rows of R and columns of Q.
    for (Index j = 0; j + 1 < m_; ++j) r_.col(j).head(m_) = r_.col(j + 1).head(m_);
    for (Index j = 0; j + 1 < m_; ++j) {
      Eigen::JacobiRotation<Scalar> g;
      Scalar diag;
      g.makeGivens(r_(j, j), r_(j + 1, j), &diag);
      r_.block(0, j, m_, m_ - 1 - j).applyOnTheLeft(j, j + 1, g.adjoint());
      r_(j, j) = diag;
      r_(j + 1, j) = Scalar(0);
      q_.leftCols(m_).applyOnTheRight(j, j + 1, g);
    }
    for (Index j = 0; j + 1 < m_; ++j) cols_.col(j) = cols_.col(j + 1);
    norms_.erase(norms_.begin());
    --m_;
    r_.row(m_).head(m_ + 1).setZero();
    r_.col(m_).head(m_ + 1).setZero();
    for (Index j = 0; j < m_; ++j) {
      if (r_(j, j) < Scalar(0)) {
        r_.row(j).segment(j, m_ - j) *= Scalar(-1);
        q_.col(j) *= Scalar(-1);
      }
    }
    if (orthogonality_error() > tol_.orthogonality) {
      recompute();
      ++recomputes_;
    }
  }

  void clear() {
    m_ = 0;
    norms_.clear();
  }

  /// Least-squares solution of A c = rhs and the norm of its residual.
  LeastSquaresSolution<Scalar> solve(const Eigen::Ref<const VectorType>& rhs) const {
    if (rhs.size() != n_) throw DimensionError("ls_solve: right-hand side has wrong length");
    LeastSquaresSolution<Scalar> out;
    if (m_ == 0) {
      out.coefficients.resize(0);
      out.residual_norm = rhs.norm();
      return out;
    }
    const auto q = q_.leftCols(m_);
    const VectorType y = q.transpose() * rhs;
    out.coefficients = r().template triangularView<Eigen::Upper>().solve(y);
    // Residual of the projection, formed explicitly: the difference of squares
    // |rhs|^2 - |Q^T rhs|^2 cancels badly when the residual is small.
    VectorType res = rhs - q * y;
    res.noalias() -= q * (q.transpose() * res);
    out.residual_norm = std::min(res.norm(), rhs.norm());
    return out;
  }

  ColumnGeometry<Scalar> geometry() const {
    return detail::geometry_from_r<Scalar>(r(), norms_);
  }

  /// Entrywise upper bounds on |inv(R)| in terms of the column norms and the
  /// sine/cosine constants c_s, c_t.
  MatrixType inverse_r_bounds(Scalar c_s, Scalar c_t) const {
    if (!(c_s > Scalar(0) && c_s <= Scalar(1)))
      throw InvalidConstants("inv_r_entry_bounds: c_s must lie in (0, 1]");
    if (!(c_t >= Scalar(0) && c_t < Scalar(1)))
      throw InvalidConstants("inv_r_entry_bounds: c_t must lie in [0, 1)");
    MatrixType b = MatrixType::Zero(m_, m_);
    for (Index i = 0; i < m_; ++i) {
      const Scalar a = norms_[i];
      b(i, i) = i == 0 ? Scalar(1) / a : Scalar(1) / (a * c_s);
      for (Index j = i + 1; j < m_; ++j) {
        if (i == 0)
          b(i, j) = c_t * std::pow(c_t + c_s, Scalar(j - 1)) / (a * std::pow(c_s, Scalar(j)));
        else
          b(i, j) =
              c_t * std::pow(c_t + c_s, Scalar(j - i - 1)) / (a * std::pow(c_s, Scalar(j - i + 1)));
      }
    }
    return b;
  }

  Scalar orthogonality_error() const {
    if (m_ == 0) return Scalar(0);
    const auto q = q_.leftCols(m_);
    return (q.transpose() * q - MatrixType::Identity(m_, m_)).cwiseAbs().maxCoeff();
  }

  Scalar reconstruction_error() const {
    if (m_ == 0) return Scalar(0);
    const MatrixType diff = q() * r() - columns();
    Scalar worst{0};
    for (Index j = 0; j < m_; ++j) worst = std::max(worst, diff.col(j).norm() / norms_[j]);
    return worst;
  }

  /// Rebuild Q and R from the stored columns.
  void recompute() {
    if (m_ == 0) return;
    MatrixType q, r;
    detail::householder_thin_qr<Scalar>(cols_.leftCols(m_), q, r);
    q_.leftCols(m_) = q;
    r_.topLeftCorner(m_, m_) = r;
  }

  Index rows() const { return n_; }
  Index cols() const { return m_; }
  bool empty() const { return m_ == 0; }
  auto q() const { return q_.leftCols(m_); }
  auto r() const { return r_.topLeftCorner(m_, m_); }
  auto columns() const { return cols_.leftCols(m_); }
  auto column(Index j) const { return cols_.col(j); }
  const std::vector<Scalar>& column_norms() const { return norms_; }
  const QrTolerances<Scalar>& tolerances() const { return tol_; }
  /// Number of drift-triggered full recomputes so far.
  int recompute_count() const { return recomputes_; }

private:
  void reserve(Index m) {
    if (m <= q_.cols()) return;
    const Index cap = std::min(n_, std::max<Index>(m, 2 * q_.cols()));
    q_.conservativeResize(n_, cap);
    cols_.conservativeResize(n_, cap);
    MatrixType r = MatrixType::Zero(cap, cap);
    r.topLeftCorner(m_, m_) = r_.topLeftCorner(m_, m_);
    r_ = std::move(r);
  }

  Index n_ = 0;
  Index m_ = 0;
  QrTolerances<Scalar> tol_;
  MatrixType q_;
  MatrixType r_;
  MatrixType cols_;
  std::vector<Scalar> norms_;
  int recomputes_ = 0;
};

/// Geometry of an arbitrary column set without the rank checks of
/// ThinQR::factor. Columns must be nonzero.
template <typename Scalar>
ColumnGeometry<Scalar> column_geometry(const Eigen::Ref<const Matrix<Scalar>>& columns) {
  if (columns.cols() == 0) return {};
  if (columns.cols() > columns.rows())
    throw DimensionError("column_geometry: more columns than rows");
  std::vector<Scalar> norms(columns.cols());
  for (Index j = 0; j < columns.cols(); ++j) {
    norms[j] = columns.col(j).norm();
    if (!(norms[j] > Scalar(0))) throw DegenerateColumn("column_geometry: zero column");
  }
  Matrix<Scalar> q, r;
  detail::householder_thin_qr<Scalar>(columns, q, r);
  return detail::geometry_from_r<Scalar>(r, norms);
}

} // namespace anderson
