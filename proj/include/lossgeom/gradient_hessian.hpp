#pragma once

// Weight-space gradient and G-term Hessian of the random model.
//
// The logit gradient of example mu and logit k is composed as
//   dz^mu_k / dW = means[k] + residuals[mu * C + k].
// The Hessian assembly uses the identity
//   J^T (diag(p) - p p^T) J = sum_k p_k (j_k - u)(j_k - u)^T,  u = sum_l p_l j_l,
// so H = G^T G / N with rows sqrt(p_k)(j_k - u); the result is PSD by
// construction and costs one symmetric rank-k update per block of examples.

#include "lossgeom/logit_model.hpp"
#include "lossgeom/rand_core.hpp"
#include "lossgeom/types.hpp"

#include <cmath>
#include <cstddef>
#include <string>

namespace lossgeom {

/// Dense logit-gradient tensor, N x C x D, stored as (N*C) x D rows in
/// example-major, logit-next order.
struct GradientTensor {
  Index n_examples = 0;
  Index n_classes = 0;
  RowMatrix data;

  Index n_weights() const { return data.cols(); }
  auto row(Index mu, Index k) const { return data.row(mu * n_classes + k); }
  auto row(Index mu, Index k) { return data.row(mu * n_classes + k); }
};

struct LogitGradientSet {
  RowMatrix means;      // C x D
  RowMatrix residuals;  // (N*C) x D

  Index n_classes() const { return means.rows(); }
  Index n_weights() const { return means.cols(); }
  Index n_examples() const { return n_classes() == 0 ? 0 : residuals.rows() / n_classes(); }

  bool residuals_vanish() const { return residuals.isZero(0.0); }

  GradientTensor compose() const {
    GradientTensor t;
    t.n_examples = n_examples();
    t.n_classes = n_classes();
    t.data = residuals;
    for (Index mu = 0; mu < t.n_examples; ++mu) t.data.middleRows(mu * t.n_classes, t.n_classes) += means;
    return t;
  }

  /// Ingested tensors carry no mean/residual split: the data become the
  /// residuals over zero means.
  static LogitGradientSet from_tensor(const GradientTensor& t) {
    LogitGradientSet s;
    s.means = RowMatrix::Zero(t.n_classes, t.n_weights());
    s.residuals = t.data;
    return s;
  }
};

struct ClassCouplingMatrix {
  Matrix values;  // C x C
};

struct HessianMatrix {
  Matrix values;  // D x D, symmetric
};

struct WeightGradient {
  Vector values;  // D
};

struct ClusteredHessian {
  HessianMatrix signal;
  HessianMatrix noise;
};

struct HessianOptions {
  std::size_t memory_budget_bytes = std::size_t{2} << 30;
  Index examples_per_block = 32;
};

/// Row k is Normal(0, sigma_c^2) scaled by 1 + length_beta * k / (C - 1).
inline RowMatrix sample_mean_logit_gradients(const ModelParams& params, RngStream& stream) {
  RowMatrix means = gaussian_matrix(stream, params.n_classes, params.n_weights, params.sigma_c);
  const double denom = static_cast<double>(params.n_classes - 1);
  for (Index k = 0; k < params.n_classes; ++k)
    means.row(k) *= 1.0 + params.length_beta * static_cast<double>(k) / denom;
  return means;
}

inline RowMatrix sample_residuals(const ModelParams& params, RngStream& stream) {
  return gaussian_matrix(stream, params.n_examples * params.n_classes, params.n_weights, params.sigma_e);
}

namespace detail {

inline void check_shapes(const LogitGradientSet& set, const LogitEnsemble& ensemble) {
  if (set.n_classes() != ensemble.n_classes() || set.residuals.rows() != ensemble.n_examples() * ensemble.n_classes() ||
      set.residuals.cols() != set.means.cols())
    throw ValidationError("logit gradient set does not match the ensemble shape");
  if (static_cast<Index>(ensemble.labels.size()) != ensemble.n_examples())
    throw ValidationError("ensemble label count does not match its probability rows");
}

inline void check_budget(Index d, const HessianOptions& options) {
  const double bytes = static_cast<double>(d) * static_cast<double>(d) * sizeof(double);
  if (bytes > static_cast<double>(options.memory_budget_bytes))
    throw ValidationError("dense " + std::to_string(d) + "x" + std::to_string(d) +
                          " Hessian exceeds the memory budget of " + std::to_string(options.memory_budget_bytes) +
                          " bytes");
}

/// means^T P means, symmetrized.
inline Matrix signal_term(const RowMatrix& means, const Matrix& coupling) {
  const Matrix pc = coupling * means;
  Matrix h = means.transpose() * pc;
  return 0.5 * (h + h.transpose());
}

/// (1/N) sum_mu J_mu^T A_mu J_mu with J_mu = [means +] residual block.
inline Matrix gterm(const RowMatrix& means, const RowMatrix& residuals, const RowMatrix& probs, bool with_means,
                    const HessianOptions& options) {
  const Index n = probs.rows();
  const Index c = probs.cols();
  const Index d = residuals.cols();
  const Index block = std::max<Index>(1, options.examples_per_block);
  Matrix h = Matrix::Zero(d, d);
  RowMatrix g(block * c, d);
  RowMatrix jac(c, d);
  for (Index start = 0; start < n; start += block) {
    const Index count = std::min(block, n - start);
    for (Index i = 0; i < count; ++i) {
      const Index mu = start + i;
      jac = residuals.middleRows(mu * c, c);
      if (with_means) jac += means;
      const Eigen::RowVectorXd center = probs.row(mu) * jac;
      for (Index k = 0; k < c; ++k) g.row(i * c + k) = std::sqrt(probs(mu, k)) * (jac.row(k) - center);
    }
    h.selfadjointView<Eigen::Lower>().rankUpdate(g.topRows(count * c).transpose(), 1.0 / static_cast<double>(n));
  }
  h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
  return h;
}

}  // namespace detail

/// g = (1/N) sum_mu sum_k (y - p)_k (means[k] + residuals[mu, k]).
inline WeightGradient weight_gradient(const LogitGradientSet& set, const LogitEnsemble& ensemble) {
  detail::check_shapes(set, ensemble);
  const Index n = ensemble.n_examples();
  const Index c = ensemble.n_classes();
  RowMatrix r = -ensemble.probs;
  for (Index mu = 0; mu < n; ++mu) r(mu, ensemble.labels[static_cast<std::size_t>(mu)]) += 1.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  const Vector class_weight = r.colwise().sum().transpose() * inv_n;
  Eigen::Map<const Vector> flat(r.data(), n * c);
  WeightGradient g;
  g.values = set.means.transpose() * class_weight + inv_n * (set.residuals.transpose() * flat);
  return g;
}

/// P_kl = (1/N) sum_mu p_k (delta_kl - p_l).
inline ClassCouplingMatrix class_coupling_matrix(const RowMatrix& probs) {
  const double inv_n = 1.0 / static_cast<double>(probs.rows());
  ClassCouplingMatrix p;
  p.values = -(probs.transpose() * probs) * inv_n;
  p.values.diagonal() += probs.colwise().sum().transpose() * inv_n;
  p.values = 0.5 * (p.values + p.values.transpose());
  return p;
}

/// G-term model Hessian (1/N) sum_mu J_mu^T A_mu J_mu. Vanishing residuals
/// take the factored path means^T P means.
inline HessianMatrix model_hessian(const LogitGradientSet& set, const LogitEnsemble& ensemble,
                                   const HessianOptions& options = {}) {
  detail::check_shapes(set, ensemble);
  detail::check_budget(set.n_weights(), options);
  if (set.residuals_vanish())
    return {detail::signal_term(set.means, class_coupling_matrix(ensemble.probs).values)};
  return {detail::gterm(set.means, set.residuals, ensemble.probs, true, options)};
}

/// Clustered approximation: signal = means^T P means, noise = the residual-only
/// G-term. Their sum differs from model_hessian by the mean/residual cross terms.
inline ClusteredHessian clustered_hessian(const LogitGradientSet& set, const LogitEnsemble& ensemble,
                                          const HessianOptions& options = {}) {
  detail::check_shapes(set, ensemble);
  detail::check_budget(set.n_weights(), options);
  ClusteredHessian out;
  out.signal.values = detail::signal_term(set.means, class_coupling_matrix(ensemble.probs).values);
  if (set.residuals_vanish())
    out.noise.values = Matrix::Zero(set.n_weights(), set.n_weights());
  else
    out.noise.values = detail::gterm(set.means, set.residuals, ensemble.probs, false, options);
  return out;
}

}  // namespace lossgeom
