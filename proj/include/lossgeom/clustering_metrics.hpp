#pragma once

// Logit-gradient clustering statistics.
//
//   q_slsc  mean cosine between same-logit gradients of two distinct examples
//           that both carry label k, averaged over k;
//   q_sl    same, over all pairs of distinct examples;
//   q_dl    mean cosine between gradients of different logits k != l of two
//           distinct examples.
//
// All pair sums are exact and use |sum_i u_i|^2 - sum_i |u_i|^2 =
// sum_{i != j} <u_i, u_j> over unit vectors u, which turns the O(N^2 D)
// pair loops into O(N D) sums.

#include "lossgeom/gradient_hessian.hpp"
#include "lossgeom/types.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace lossgeom {

struct ClusteringReport {
  double q_slsc = 0.0;
  double q_sl = 0.0;
  double q_dl = 0.0;
  std::vector<double> per_class_q;  // per-class same-logit-same-class averages
};

inline double cosine(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v) {
  if (u.size() != v.size()) throw ValidationError("cosine: length mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) throw NumericalError("cosine: zero vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

inline double predicted_q_sl(double sigma_c, double sigma_e) {
  if (sigma_c == 0.0 && sigma_e == 0.0) throw ValidationError("predicted_q_sl: sigma_c and sigma_e are both zero");
  if (sigma_e == 0.0) return 1.0;
  const double snr = (sigma_c * sigma_c) / (sigma_e * sigma_e);
  return snr / (snr + 1.0);
}

namespace detail {

inline RowMatrix unit_rows(const GradientTensor& t) {
  RowMatrix u = t.data;
  for (Index r = 0; r < u.rows(); ++r) {
    const double norm = u.row(r).norm();
    if (!(norm > 0.0))
      throw NumericalError("zero logit gradient for example " + std::to_string(r / t.n_classes) + ", logit " +
                           std::to_string(r % t.n_classes));
    u.row(r) /= norm;
  }
  return u;
}

inline void check_labels(const GradientTensor& t, const std::vector<int>& labels) {
  if (static_cast<Index>(labels.size()) != t.n_examples)
    throw ValidationError("label count does not match the number of examples");
  for (int y : labels)
    if (y < 0 || y >= t.n_classes) throw ValidationError("label " + std::to_string(y) + " out of range");
}

inline double pair_mean(const Eigen::RowVectorXd& sum, double self_sum, Index count) {
  const double pairs = static_cast<double>(count) * static_cast<double>(count - 1);
  return (sum.squaredNorm() - self_sum) / pairs;
}

inline std::vector<double> slsc_per_class(const RowMatrix& u, const GradientTensor& t, const std::vector<int>& labels) {
  const Index c = t.n_classes;
  std::vector<Index> counts(static_cast<std::size_t>(c), 0);
  RowMatrix sums = RowMatrix::Zero(c, t.n_weights());
  std::vector<double> self(static_cast<std::size_t>(c), 0.0);
  for (Index mu = 0; mu < t.n_examples; ++mu) {
    const int k = labels[static_cast<std::size_t>(mu)];
    const auto row = u.row(mu * c + k);
    sums.row(k) += row;
    self[static_cast<std::size_t>(k)] += row.squaredNorm();
    ++counts[static_cast<std::size_t>(k)];
  }
  std::vector<double> q(static_cast<std::size_t>(c));
  for (Index k = 0; k < c; ++k) {
    const Index nk = counts[static_cast<std::size_t>(k)];
    if (nk < 2)
      throw ValidationError("q_slsc: class " + std::to_string(k) + " has " + std::to_string(nk) +
                            " example(s), need at least 2");
    q[static_cast<std::size_t>(k)] =
        std::clamp(pair_mean(sums.row(k), self[static_cast<std::size_t>(k)], nk), -1.0, 1.0);
  }
  return q;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double q_sl_unit(const RowMatrix& u, const GradientTensor& t) {
  const Index n = t.n_examples;
  const Index c = t.n_classes;
  if (n < 2) throw ValidationError("q_sl: need at least 2 examples");
  double total = 0.0;
  for (Index k = 0; k < c; ++k) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(t.n_weights());
    double self = 0.0;
    for (Index mu = 0; mu < n; ++mu) {
      sum += u.row(mu * c + k);
      self += u.row(mu * c + k).squaredNorm();
    }
    total += pair_mean(sum, self, n);
  }
  return std::clamp(total / static_cast<double>(c), -1.0, 1.0);
}

inline double q_dl_unit(const RowMatrix& u, const GradientTensor& t) {
  const Index n = t.n_examples;
  const Index c = t.n_classes;
  if (n < 2 || c < 2) throw ValidationError("q_dl: need at least 2 examples and 2 classes");
  RowMatrix sums = RowMatrix::Zero(c, t.n_weights());
  Matrix same_example = Matrix::Zero(c, c);  // sum_mu <u_mu_k, u_mu_l>
  for (Index mu = 0; mu < n; ++mu) {
    const auto block = u.middleRows(mu * c, c);
    sums += block;
    same_example.noalias() += block * block.transpose();
  }
  const Matrix cross = sums * sums.transpose() - same_example;
  const double off_diagonal = cross.sum() - cross.trace();
  const double denom = static_cast<double>(c) * static_cast<double>(c - 1) * static_cast<double>(n) *
                       static_cast<double>(n - 1);
  return std::clamp(off_diagonal / denom, -1.0, 1.0);
}

}  // namespace detail

inline double q_slsc(const GradientTensor& t, const std::vector<int>& labels) {
  detail::check_labels(t, labels);
  return detail::mean_of(detail::slsc_per_class(detail::unit_rows(t), t, labels));
}

inline double q_sl(const GradientTensor& t) { return detail::q_sl_unit(detail::unit_rows(t), t); }

inline double q_dl(const GradientTensor& t) { return detail::q_dl_unit(detail::unit_rows(t), t); }

/// All three statistics from one normalization pass.
inline ClusteringReport clustering_report(const GradientTensor& t, const std::vector<int>& labels) {
  detail::check_labels(t, labels);
  const RowMatrix u = detail::unit_rows(t);
  ClusteringReport r;
  r.per_class_q = detail::slsc_per_class(u, t, labels);
  r.q_slsc = detail::mean_of(r.per_class_q);
  r.q_sl = detail::q_sl_unit(u, t);
  r.q_dl = detail::q_dl_unit(u, t);
  return r;
}

/// Row k = mean of the logit-k gradients over examples labeled k.
inline RowMatrix empirical_class_means(const GradientTensor& t, const std::vector<int>& labels) {
  detail::check_labels(t, labels);
  const Index c = t.n_classes;
  RowMatrix means = RowMatrix::Zero(c, t.n_weights());
  std::vector<Index> counts(static_cast<std::size_t>(c), 0);
  for (Index mu = 0; mu < t.n_examples; ++mu) {
    const int k = labels[static_cast<std::size_t>(mu)];
    means.row(k) += t.row(mu, k);
    ++counts[static_cast<std::size_t>(k)];
  }
  for (Index k = 0; k < c; ++k) {
    const Index nk = counts[static_cast<std::size_t>(k)];
    if (nk == 0) throw ValidationError("empirical_class_means: class " + std::to_string(k) + " has no examples");
    means.row(k) /= static_cast<double>(nk);
  }
  return means;
}

}  // namespace lossgeom
