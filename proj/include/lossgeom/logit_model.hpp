#pragma once

// Softmax / cross-entropy layer of the random model: logits, probabilities,
// labels, and the logit-space gradient and Hessian of the loss.
//
// Sign convention: logit_gradient returns y - p, the form used throughout the
// model (and hence by weight_gradient). The derivative of the cross-entropy
// with respect to the logits is its negation, p - y. The Hessian p_k(d_kl - p_l)
// is the negative Jacobian of logit_gradient.

#include "lossgeom/rand_core.hpp"
#include "lossgeom/types.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace lossgeom {

struct LogitEnsemble {
  RowMatrix logits;         // N x C
  RowMatrix probs;          // N x C
  std::vector<int> labels;  // length N, class index per example

  Index n_examples() const { return probs.rows(); }
  Index n_classes() const { return probs.cols(); }
};

struct FreezingStats {
  double mean_entropy = 0.0;  // bits
  double mean_max_prob = 0.0;
};

inline RowMatrix sample_logits(const ModelParams& params, RngStream& stream) {
  return gaussian_matrix(stream, params.n_examples, params.n_classes, params.sigma_z);
}

/// Numerically stable softmax of one row.
inline Vector softmax(const Eigen::Ref<const Vector>& z) {
  const double shift = z.maxCoeff();
  Vector p(z.size());
  double total = 0.0;
  for (Index k = 0; k < z.size(); ++k) total += (p(k) = std::exp(z(k) - shift));
  p /= total;
  return p;
}

/// Row-wise softmax in max-subtracted form.
inline RowMatrix softmax_probs(const RowMatrix& logits) {
  RowMatrix probs(logits.rows(), logits.cols());
  for (Index mu = 0; mu < logits.rows(); ++mu) {
    const double shift = logits.row(mu).maxCoeff();
    double total = 0.0;
    for (Index k = 0; k < logits.cols(); ++k) {
      const double e = std::exp(logits(mu, k) - shift);
      probs(mu, k) = e;
      total += e;
    }
    probs.row(mu) /= total;
  }
  return probs;
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Row>
Index argmax(const Row& row) {
  Index best = 0;
  for (Index k = 1; k < row.size(); ++k)
    if (row(k) > row(best)) best = k;
  return best;
}

/// Mean cross-entropy -(1/N) sum log p_{y}. Returns +infinity when some
/// labeled probability has underflowed to exactly zero.
inline double cross_entropy_loss(const RowMatrix& probs, const std::vector<int>& labels) {
  if (static_cast<Index>(labels.size()) != probs.rows())
    throw ValidationError("cross_entropy_loss: label count does not match probability rows");
  double total = 0.0;
  for (Index mu = 0; mu < probs.rows(); ++mu) {
    const int y = labels[static_cast<std::size_t>(mu)];
    if (y < 0 || y >= probs.cols()) throw ValidationError("cross_entropy_loss: label out of range");
    const double p = probs(mu, y);
    if (p == 0.0) return std::numeric_limits<double>::infinity();
    total -= std::log(p);
  }
  return total / static_cast<double>(probs.rows());
}

/// y - p for one example.
inline Vector logit_gradient(const Eigen::Ref<const Vector>& probs, int label) {
  if (label < 0 || label >= probs.size()) throw ValidationError("logit_gradient: label out of range");
  Vector g = -probs;
  g(label) += 1.0;
  return g;
}

/// p_k (delta_kl - p_l) for one example.
inline Matrix logit_hessian(const Eigen::Ref<const Vector>& probs) {
  Matrix a = -probs * probs.transpose();
  a.diagonal() += probs;
  return a;
}

/// Shannon entropy in bits, with 0 log 0 = 0.
inline double shannon_entropy(const Eigen::Ref<const Vector>& probs) {
  double s = 0.0;
  for (Index k = 0; k < probs.size(); ++k) {
    const double p = probs(k);
    if (p > 0.0) s -= p * std::log2(p);
  }
  return s;
}

/// Labels with exactly round(target_accuracy * N) argmax labels on a uniformly
/// random subset of examples; every other example gets a class drawn uniformly
/// from the C - 1 classes that are not its argmax.
inline std::vector<int> assign_labels(const RowMatrix& probs, double target_accuracy, RngStream& stream) {
  if (!(target_accuracy >= 0.0 && target_accuracy <= 1.0))
    throw ValidationError("target_accuracy: must lie in [0, 1]");
  const Index n = probs.rows();
  const Index c = probs.cols();
  if (c < 2) throw ValidationError("assign_labels: need at least two classes");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  // Fisher-Yates.
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(stream.bounded(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }

  const auto n_correct = static_cast<Index>(std::llround(target_accuracy * static_cast<double>(n)));
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Index mu = order[static_cast<std::size_t>(i)];
    const auto best = static_cast<int>(argmax(probs.row(mu)));
    if (i < n_correct) {
      labels[static_cast<std::size_t>(mu)] = best;
    } else {
      const auto r = static_cast<int>(stream.bounded(static_cast<std::uint64_t>(c - 1)));
      labels[static_cast<std::size_t>(mu)] = r < best ? r : r + 1;
    }
  }
  return labels;
}

inline FreezingStats freezing_stats(const RowMatrix& probs) {
  FreezingStats stats;
  for (Index mu = 0; mu < probs.rows(); ++mu) {
    const Vector row = probs.row(mu).transpose();
    stats.mean_entropy += shannon_entropy(row);
    stats.mean_max_prob += row.maxCoeff();
  }
  const auto n = static_cast<double>(probs.rows());
  stats.mean_entropy /= n;
  stats.mean_max_prob /= n;
  return stats;
}

inline FreezingStats freezing_stats(const LogitEnsemble& ensemble) { return freezing_stats(ensemble.probs); }

/// Logits from `logit_stream`, labels from `label_stream`.
inline LogitEnsemble make_ensemble(const ModelParams& params, RngStream& logit_stream, RngStream& label_stream) {
  LogitEnsemble e;
  e.logits = sample_logits(params, logit_stream);
  e.probs = softmax_probs(e.logits);
  e.labels = assign_labels(e.probs, params.target_accuracy, label_stream);
  return e;
}

}  // namespace lossgeom
