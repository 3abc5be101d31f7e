#pragma once

// Dense symmetric eigensolver.
//
// 1. Householder reduction to tridiagonal form, A = Q T Q^T, working on the
//    lower triangle; each reflector I - tau v v^T is applied as a symmetric
//    rank-2 update of the trailing block.
// 2. Q is formed by backward accumulation of the reflectors.
// 3. Implicit-shift QL iteration on T (the tql2 scheme of Bowdler, Martin,
//    Reinsch and Wilkinson), with each Givens rotation applied to two
//    contiguous columns of Q.

#include "lossgeom/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace lossgeom {

namespace detail {

struct TridiagonalForm {
  std::vector<double> diag;     // n
  std::vector<double> offdiag;  // n, offdiag[i] couples i and i + 1; last entry 0
};

/// Reduces `a` (lower triangle referenced, overwritten by the reflectors) and
/// returns T. Fills `q` when non-null.
inline TridiagonalForm tridiagonalize(Matrix& a, Matrix* q) {
  const Index n = a.rows();
  TridiagonalForm t;
  t.diag.assign(static_cast<std::size_t>(n), 0.0);
  t.offdiag.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<double> taus(static_cast<std::size_t>(std::max<Index>(n - 2, 0)), 0.0);

  Vector v;
  Vector p;
  for (Index k = 0; k + 2 < n; ++k) {
    const Index m = n - k - 1;
    v = a.col(k).tail(m);
    const double alpha = v(0);
    const double xnorm = v.tail(m - 1).norm();
    double tau = 0.0;
    if (xnorm == 0.0) {
      t.offdiag[static_cast<std::size_t>(k)] = alpha;
    } else {
      const double beta = -std::copysign(std::hypot(alpha, xnorm), alpha);
      tau = (beta - alpha) / beta;
      v.tail(m - 1) /= (alpha - beta);
      v(0) = 1.0;
      t.offdiag[static_cast<std::size_t>(k)] = beta;

      auto trailing = a.bottomRightCorner(m, m);
      p.noalias() = tau * (trailing.selfadjointView<Eigen::Lower>() * v);
      p -= (0.5 * tau * p.dot(v)) * v;
      trailing.selfadjointView<Eigen::Lower>().rankUpdate(v, p, -1.0);
    }
    a.col(k).tail(m) = v;
    t.diag[static_cast<std::size_t>(k)] = a(k, k);
    taus[static_cast<std::size_t>(k)] = tau;
  }
  if (n >= 2) {
    t.diag[static_cast<std::size_t>(n - 2)] = a(n - 2, n - 2);
    t.offdiag[static_cast<std::size_t>(n - 2)] = a(n - 1, n - 2);
  }
  t.diag[static_cast<std::size_t>(n - 1)] = a(n - 1, n - 1);

  if (q != nullptr) {
    q->setIdentity(n, n);
    Eigen::RowVectorXd w;
    for (Index k = n - 3; k >= 0; --k) {
      const double tau = taus[static_cast<std::size_t>(k)];
      if (tau == 0.0) continue;
      const Index m = n - k - 1;
      auto block = q->bottomRightCorner(m, m);
      const auto vk = a.col(k).tail(m);
      w.noalias() = vk.transpose() * block;
      block.noalias() -= tau * vk * w;
    }
  }
  return t;
}

/// Implicit QL on (diag, offdiag); rotations are accumulated into z when non-null.
inline void tridiagonal_ql(TridiagonalForm& t, Matrix* z, int max_sweeps_per_eigenvalue = 60) {
  auto& d = t.diag;
  auto& e = t.offdiag;
  const auto n = static_cast<Index>(d.size());
  const Index rows = z != nullptr ? z->rows() : 0;
  constexpr double eps = std::numeric_limits<double>::epsilon();

  double shift_total = 0.0;
  double tst1 = 0.0;
  for (Index l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    Index m = l;
    while (m < n - 1 && std::abs(e[m]) > eps * tst1) ++m;

    if (m > l) {
      int sweeps = 0;
      do {
        if (++sweeps > max_sweeps_per_eigenvalue)
          throw NumericalError("symmetric eigensolver: QL iteration did not converge for eigenvalue " +
                               std::to_string(l));
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (Index i = l + 2; i < n; ++i) d[i] -= h;
        shift_total += h;

        p = d[m];
        double c = 1.0;
        double c2 = c;
        double c3 = c;
        const double el1 = e[l + 1];
        double s = 0.0;
        double s2 = 0.0;
        for (Index i = m - 1; i >= l; --i) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          if (z != nullptr) {
            double* zi = z->col(i).data();
            double* zi1 = z->col(i + 1).data();
            for (Index k = 0; k < rows; ++k) {
              const double hk = zi1[k];
              zi1[k] = s * zi[k] + c * hk;
              zi[k] = c * zi[k] - s * hk;
            }
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += shift_total;
    e[l] = 0.0;
  }
}

inline void check_symmetric(const Matrix& h) {
  if (h.rows() != h.cols() || h.rows() == 0) throw ValidationError("eigh: matrix must be square and non-empty");
  if (!h.allFinite()) throw ValidationError("eigh: matrix has non-finite entries");
  const double scale = h.cwiseAbs().maxCoeff();
  const double asym = (h - h.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8 * scale) throw ValidationError("eigh: matrix is not symmetric (max |H - H^T| = " +
                                                 std::to_string(asym) + ")");
}

inline std::vector<Index> descending_order(const std::vector<double>& values) {
  std::vector<Index> order(values.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(j)]; });
  return order;
}

}  // namespace detail

/// Eigenvalues in descending order.
inline Vector symmetric_eigenvalues(const Matrix& h) {
  detail::check_symmetric(h);
  Matrix work = h;
  auto t = detail::tridiagonalize(work, nullptr);
  detail::tridiagonal_ql(t, nullptr);
  std::sort(t.diag.begin(), t.diag.end(), std::greater<>());
  return Eigen::Map<const Vector>(t.diag.data(), static_cast<Index>(t.diag.size()));
}

/// Eigenvalues (descending) and matching orthonormal eigenvectors as columns.
/// Each eigenvector is signed so that its largest-magnitude component
/// (lowest index on ties) is positive.
inline void symmetric_eigensystem(const Matrix& h, Vector& eigenvalues, Matrix& eigenvectors) {
  detail::check_symmetric(h);
  const Index n = h.rows();
  Matrix work = h;
  Matrix z;
  auto t = detail::tridiagonalize(work, &z);
  work.resize(0, 0);
  detail::tridiagonal_ql(t, &z);

  const auto order = detail::descending_order(t.diag);
  eigenvalues.resize(n);
  eigenvectors.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    const Index src = order[static_cast<std::size_t>(j)];
    eigenvalues(j) = t.diag[static_cast<std::size_t>(src)];
    auto col = eigenvectors.col(j);
    col = z.col(src);
    Index pivot = 0;
    col.cwiseAbs().maxCoeff(&pivot);
    if (col(pivot) < 0.0) col = -col;
  }
}

}  // namespace lossgeom
