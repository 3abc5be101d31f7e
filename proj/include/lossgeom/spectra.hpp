#pragma once

// Spectral diagnostics of model Hessians: eigensystems, spectral norm,
// the Trace(H)/||H|| statistic, outlier detection, gradient/eigenvector
// overlaps and random-hyperplane projections.

#include "lossgeom/gradient_hessian.hpp"
#include "lossgeom/rand_core.hpp"
#include "lossgeom/symmetric_eigen.hpp"
#include "lossgeom/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace lossgeom {

struct SymmetricSpectrum {
  Vector eigenvalues;   // descending
  Matrix eigenvectors;  // column i pairs with eigenvalues(i); empty when values only

  Index size() const { return eigenvalues.size(); }
  bool has_eigenvectors() const { return eigenvectors.cols() == eigenvalues.size() && eigenvalues.size() > 0; }
};

struct OutlierReport {
  Index n_outliers = 0;
  double bulk_edge = 0.0;
  std::vector<double> outlier_values;
  double gap_ratio = 0.0;  // largest relative gap found in the window
};

struct GradientOverlaps {
  Vector cosines;           // <g, v_i> / |g|
  Vector cumulative_power;  // running sum of cosines^2; entry j covers the top j + 1 eigenvectors
};

inline SymmetricSpectrum eigh(const Matrix& h) {
  SymmetricSpectrum s;
  symmetric_eigensystem(h, s.eigenvalues, s.eigenvectors);
  return s;
}

inline SymmetricSpectrum eigh(const HessianMatrix& h) { return eigh(h.values); }

/// Eigenvalues only; eigenvectors stay empty.
inline SymmetricSpectrum eigvalsh(const Matrix& h) {
  SymmetricSpectrum s;
  s.eigenvalues = symmetric_eigenvalues(h);
  return s;
}

inline double spectral_norm(const Vector& eigenvalues) {
  return eigenvalues.size() == 0 ? 0.0 : eigenvalues.cwiseAbs().maxCoeff();
}

inline double spectral_norm(const SymmetricSpectrum& s) { return spectral_norm(s.eigenvalues); }

/// Trace(H) / max |lambda|. Undefined (NumericalError) for the zero matrix.
inline double trace_norm_ratio(const Vector& eigenvalues) {
  const double norm = spectral_norm(eigenvalues);
  if (!(norm > 0.0)) throw NumericalError("trace_norm_ratio: spectral norm is zero, ratio undefined");
  return eigenvalues.sum() / norm;
}

inline double trace_norm_ratio(const SymmetricSpectrum& s) { return trace_norm_ratio(s.eigenvalues); }

/// Largest-relative-gap outlier detection over the top `max_candidates`
/// eigenvalues (descending input). The gap after index i is
/// (lambda_i - lambda_{i+1}) / max(lambda_{i+1}, eps), eps = 1e-12 * max|lambda|.
/// Indices 0..i are outliers iff the largest gap exceeds `tau`.
inline OutlierReport detect_outliers(const Vector& eigenvalues, Index max_candidates, double tau = 2.0) {
  const Index n = eigenvalues.size();
  if (n == 0) throw ValidationError("detect_outliers: empty spectrum");
  if (max_candidates < 1 || max_candidates > n)
    throw ValidationError("detect_outliers: max_candidates must lie in [1, D]");

  const double eps = std::max(1e-12 * spectral_norm(eigenvalues), std::numeric_limits<double>::min());
  const Index gaps = std::min(max_candidates, n - 1);
  Index best = -1;
  double best_ratio = 0.0;
  for (Index i = 0; i < gaps; ++i) {
    const double ratio = (eigenvalues(i) - eigenvalues(i + 1)) / std::max(eigenvalues(i + 1), eps);
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = i;
    }
  }

  OutlierReport report;
  report.gap_ratio = best_ratio;
  if (best >= 0 && best_ratio > tau) {
    report.n_outliers = best + 1;
    report.bulk_edge = eigenvalues(best + 1);
    report.outlier_values.assign(eigenvalues.data(), eigenvalues.data() + best + 1);
  } else {
    report.bulk_edge = eigenvalues(0);
  }
  return report;
}

inline OutlierReport detect_outliers(const SymmetricSpectrum& s, Index max_candidates, double tau = 2.0) {
  return detect_outliers(s.eigenvalues, max_candidates, tau);
}

inline GradientOverlaps gradient_overlaps(const SymmetricSpectrum& s, const Vector& g) {
  if (!s.has_eigenvectors()) throw ValidationError("gradient_overlaps: spectrum has no eigenvectors");
  if (g.size() != s.size()) throw ValidationError("gradient_overlaps: gradient length does not match spectrum");
  const double norm = g.norm();
  if (!(norm > 0.0)) throw NumericalError("gradient_overlaps: zero gradient");
  GradientOverlaps out;
  out.cosines = s.eigenvectors.transpose() * (g / norm);
  out.cumulative_power.resize(out.cosines.size());
  double running = 0.0;
  for (Index i = 0; i < out.cosines.size(); ++i) {
    running += out.cosines(i) * out.cosines(i);
    out.cumulative_power(i) = running;
  }
  return out;
}

inline GradientOverlaps gradient_overlaps(const SymmetricSpectrum& s, const WeightGradient& g) {
  return gradient_overlaps(s, g.values);
}

/// Fraction of gradient power in the top `k` eigenvectors (k clipped to D).
inline double top_power(const GradientOverlaps& o, Index k) {
  return o.cumulative_power(std::min(k, o.cumulative_power.size()) - 1);
}

/// dim x d matrix with orthonormal columns: modified Gram-Schmidt, applied
/// twice, over i.i.d. Gaussian columns. A column that loses more than eight
/// digits to projection is redrawn.
inline Matrix random_orthonormal_basis(Index dim, Index d, RngStream& stream) {
  if (d < 1 || d > dim) throw ValidationError("random_orthonormal_basis: need 1 <= d <= D");
  Matrix basis(dim, d);
  constexpr int max_redraws = 16;
  for (Index j = 0; j < d; ++j) {
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt > max_redraws) throw NumericalError("random_orthonormal_basis: repeated rank deficiency");
      Vector col = gaussian_matrix(stream, dim, 1, 1.0).col(0);
      const double original = col.norm();
      for (int pass = 0; pass < 2; ++pass)
        for (Index i = 0; i < j; ++i) col -= basis.col(i).dot(col) * basis.col(i);
      const double remaining = col.norm();
      if (remaining > 1e-8 * original) {
        basis.col(j) = col / remaining;
        break;
      }
    }
  }
  return basis;
}

inline Matrix random_orthonormal_basis(const ModelParams& params, RngStream& stream) {
  return random_orthonormal_basis(params.n_weights, params.hyperplane_dim, stream);
}

/// B^T H B, symmetrized.
inline Matrix project_hessian(const Matrix& h, const Matrix& basis) {
  if (h.rows() != basis.rows()) throw ValidationError("project_hessian: basis rows must equal D");
  const Matrix hb = h * basis;
  Matrix out = basis.transpose() * hb;
  return 0.5 * (out + out.transpose());
}

inline Matrix project_hessian(const HessianMatrix& h, const Matrix& basis) { return project_hessian(h.values, basis); }

}  // namespace lossgeom
