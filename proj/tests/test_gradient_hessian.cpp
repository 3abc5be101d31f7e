#include "lossgeom/experiments.hpp"
#include "lossgeom/gradient_hessian.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lossgeom;

namespace {

struct Instance {
  LogitGradientSet set;
  LogitEnsemble ensemble;
};

Instance random_instance(oracle::Gen& gen, Index n, Index c, Index d, double sigma_c = 1.0, double sigma_e = 0.7,
                         double sigma_z = 2.0) {
  Instance in;
  in.set.means = gen.normal_rows(c, d, sigma_c);
  in.set.residuals = gen.normal_rows(n * c, d, sigma_e);
  in.ensemble.logits = gen.normal_rows(n, c, sigma_z);
  in.ensemble.probs = softmax_probs(in.ensemble.logits);
  for (Index mu = 0; mu < n; ++mu) in.ensemble.labels.push_back(static_cast<int>(gen.integer(0, c - 1)));
  return in;
}

oracle::LinearLogitNet as_network(const Instance& in) {
  return {in.ensemble.logits, in.set.compose().data, in.ensemble.labels};
}

ModelDraw default_draw(std::uint64_t seed = 1) {
  ModelParams p;
  p.seed = seed;
  return sample_model(p);
}

}  // namespace

TEST(MeanLogitGradients, ZeroScale) {
  ModelParams p;
  p.sigma_c = 0.0;
  auto s = substream(1, "means");
  EXPECT_TRUE((sample_mean_logit_gradients(p, s).array() == 0.0).all());
}

TEST(MeanLogitGradients, RowNormsNearOne) {
  ModelParams p;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto s = substream(seed, "means");
    const auto m = sample_mean_logit_gradients(p, s);
    for (Index k = 0; k < 10; ++k) EXPECT_NEAR(m.row(k).norm(), 1.0, 0.1);
  }
}

TEST(MeanLogitGradients, DistinctRowsNearlyOrthogonal) {
  ModelParams p;
  int pairs = 0, small = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto s = substream(seed, "means");
    const auto m = sample_mean_logit_gradients(p, s);
    for (Index k = 0; k < 10; ++k)
      for (Index l = k + 1; l < 10; ++l, ++pairs) small += std::abs(oracle::naive_cosine(m.row(k), m.row(l))) < 0.1;
  }
  EXPECT_GT(static_cast<double>(small) / pairs, 0.99);
}

TEST(MeanLogitGradients, LengthMultipliersAreLinearInClass) {
  ModelParams p;
  p.length_beta = 1.5;
  auto a = substream(4, "means");
  auto b = substream(4, "means");
  ModelParams flat = p;
  flat.length_beta = 0.0;
  const auto scaled = sample_mean_logit_gradients(p, a);
  const auto base = sample_mean_logit_gradients(flat, b);
  for (Index k = 0; k < 10; ++k)
    EXPECT_NEAR(scaled.row(k).norm() / base.row(k).norm(), 1.0 + 1.5 * k / 9.0, 1e-14);
}

TEST(Residuals, ZeroScaleAndMoments) {
  ModelParams p;
  p.sigma_e = 0.0;
  auto s = substream(1, "residuals");
  EXPECT_TRUE((sample_residuals(p, s).array() == 0.0).all());

  ModelParams q;
  auto r = substream(2, "residuals");
  const auto e = sample_residuals(q, r);
  EXPECT_EQ(e.rows(), 3000);
  EXPECT_EQ(e.cols(), 1000);
  const double var = e.array().square().mean();
  EXPECT_NEAR(var / (q.sigma_e * q.sigma_e), 1.0, 0.02);
  auto again = substream(2, "residuals");
  EXPECT_EQ(sample_residuals(q, again), e);
}

TEST(WeightGradient, FrozenCorrectPredictionsGiveZero) {
  oracle::Gen gen(1);
  auto in = random_instance(gen, 6, 4, 9);
  in.ensemble.probs.setZero();
  for (Index mu = 0; mu < 6; ++mu) in.ensemble.probs(mu, in.ensemble.labels[static_cast<std::size_t>(mu)]) = 1.0;
  EXPECT_EQ(weight_gradient(in.set, in.ensemble).values, Vector::Zero(9));
}

TEST(WeightGradient, TwoClassSingleExample) {
  oracle::Gen gen(2);
  LogitGradientSet set;
  set.means = gen.normal_rows(2, 5);
  set.residuals = RowMatrix::Zero(2, 5);
  LogitEnsemble e;
  e.probs = RowMatrix::Constant(1, 2, 0.5);
  e.labels = {0};
  const Vector expected = 0.5 * (set.means.row(0) - set.means.row(1)).transpose();
  EXPECT_LT((weight_gradient(set, e).values - expected).cwiseAbs().maxCoeff(), 1e-16);
}

TEST(WeightGradient, MatchesNaiveLoopAtDefaults) {
  const auto draw = default_draw(3);
  const auto g = weight_gradient(draw.grads, draw.ensemble);
  const auto ref = oracle::naive_weight_gradient(draw.grads.compose().data, draw.ensemble.probs, draw.ensemble.labels);
  EXPECT_LT((g.values - ref).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(g.values.allFinite());
}

TEST(WeightGradient, ConfinedToMeanRowSpaceWithoutResiduals) {
  ModelParams p;
  p.sigma_e = 0.0;
  const auto draw = sample_model(p);
  const Vector g = weight_gradient(draw.grads, draw.ensemble).values;
  const Matrix mt = draw.grads.means.transpose();
  const Vector coef = mt.colPivHouseholderQr().solve(g);
  EXPECT_LT((mt * coef - g).norm() / g.norm(), 1e-10);
}

TEST(ClassCoupling, Examples) {
  RowMatrix onehot = RowMatrix::Zero(3, 3);
  onehot(0, 0) = onehot(1, 2) = onehot(2, 2) = 1.0;
  EXPECT_EQ(class_coupling_matrix(onehot).values, Matrix::Zero(3, 3));

  Matrix half(2, 2);
  half << 0.25, -0.25, -0.25, 0.25;
  EXPECT_EQ(class_coupling_matrix(RowMatrix::Constant(1, 2, 0.5)).values, half);

  const auto u = class_coupling_matrix(RowMatrix::Constant(7, 10, 0.1)).values;
  const Matrix expected = 0.1 * Matrix::Identity(10, 10) - 0.01 * Matrix::Ones(10, 10);
  EXPECT_LT((u - expected).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::SelfAdjointEigenSolver<Matrix> es(u);
  EXPECT_NEAR(es.eigenvalues().maxCoeff(), 0.1, 1e-15);
}

TEST(ClassCoupling, InvariantsOnRandomProbabilities) {
  oracle::Gen gen(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = gen.integer(1, 40), c = gen.integer(2, 12);
    RowMatrix probs(n, c);
    for (Index mu = 0; mu < n; ++mu) probs.row(mu) = gen.probability_row(c, gen.uniform(0.1, 10.0)).transpose();
    const auto p = class_coupling_matrix(probs).values;
    EXPECT_LT((p - p.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((p * Vector::Ones(c)).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> es(p);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
    Index rank = 0;
    for (Index i = 0; i < c; ++i) rank += es.eigenvalues()(i) > 1e-12;
    EXPECT_LE(rank, c - 1);
  }
}

TEST(ModelHessian, FrozenPredictionsGiveZero) {
  oracle::Gen gen(6);
  auto in = random_instance(gen, 5, 3, 8);
  in.ensemble.probs.setZero();
  for (Index mu = 0; mu < 5; ++mu) in.ensemble.probs(mu, mu % 3) = 1.0;
  EXPECT_EQ(model_hessian(in.set, in.ensemble).values, Matrix::Zero(8, 8));
}

TEST(ModelHessian, SmallInstanceMatchesFiniteDifferences) {
  oracle::Gen gen(7);
  const auto in = random_instance(gen, 5, 3, 8);
  const auto net = as_network(in);
  EXPECT_LT(oracle::rel_frobenius(model_hessian(in.set, in.ensemble).values, net.fd_hessian()), 1e-5);
  EXPECT_LT((weight_gradient(in.set, in.ensemble).values + net.fd_gradient()).norm() / net.fd_gradient().norm(), 1e-6);
}

TEST(ModelHessian, OracleEquivalenceProperty) {
  oracle::Gen gen(8);
  for (int trial = 0; trial < 25; ++trial) {
    const Index n = gen.integer(1, 10), c = gen.integer(2, 3), d = gen.integer(1, 10);
    const auto in = random_instance(gen, n, c, d, gen.uniform(0.1, 2.0), gen.uniform(0.0, 2.0), gen.uniform(0.0, 4.0));
    const auto net = as_network(in);
    const auto h = model_hessian(in.set, in.ensemble).values;
    EXPECT_LT(oracle::rel_frobenius(h, net.fd_hessian()), 1e-5) << "trial " << trial;
    const Matrix naive = oracle::naive_model_hessian(in.set.compose().data, in.ensemble.probs);
    EXPECT_LT(oracle::rel_frobenius(h, naive), 1e-13) << "trial " << trial;
  }
}

TEST(ModelHessian, BlockSizeDoesNotChangeResultBeyondRounding) {
  oracle::Gen gen(9);
  const auto in = random_instance(gen, 70, 4, 30);
  HessianOptions one;
  one.examples_per_block = 1;
  const auto a = model_hessian(in.set, in.ensemble).values;
  const auto b = model_hessian(in.set, in.ensemble, one).values;
  EXPECT_LT(oracle::rel_frobenius(a, b), 1e-14);
  EXPECT_EQ(a, a.transpose());
}

TEST(ModelHessian, PsdAndSignalRankAtDefaults) {
  const auto draw = default_draw(4);
  const auto h = model_hessian(draw.grads, draw.ensemble).values;
  const auto ev = symmetric_eigenvalues(h);
  EXPECT_GE(ev(ev.size() - 1), -1e-8 * ev(0));

  ModelParams p;
  p.sigma_e = 0.0;
  const auto clean = sample_model(p);
  const auto ev0 = symmetric_eigenvalues(model_hessian(clean.grads, clean.ensemble).values);
  Index above = 0;
  for (Index i = 0; i < ev0.size(); ++i) above += ev0(i) > 1e-10 * ev0(0);
  EXPECT_LE(above, 9);
}

TEST(ModelHessian, ScalingCovariance) {
  oracle::Gen gen(10);
  for (int trial = 0; trial < 10; ++trial) {
    const auto in = random_instance(gen, gen.integer(1, 40), gen.integer(2, 6), gen.integer(1, 25));
    const auto h = model_hessian(in.set, in.ensemble).values;
    const auto g = weight_gradient(in.set, in.ensemble).values;
    for (double s : {2.0, 0.5, 0.25}) {
      Instance scaled = in;
      scaled.set.means *= s;
      scaled.set.residuals *= s;
      EXPECT_EQ(model_hessian(scaled.set, scaled.ensemble).values, (s * s) * h);
      EXPECT_EQ(weight_gradient(scaled.set, scaled.ensemble).values, s * g);
    }
    Instance scaled = in;
    scaled.set.means *= 1.7;
    scaled.set.residuals *= 1.7;
    EXPECT_LT(oracle::rel_frobenius(model_hessian(scaled.set, scaled.ensemble).values, 2.89 * h), 1e-14);
  }
}

TEST(ModelHessian, MemoryBudgetFailsFast) {
  oracle::Gen gen(11);
  const auto in = random_instance(gen, 2, 2, 100);
  HessianOptions tight;
  tight.memory_budget_bytes = 100 * 100 * 8 - 1;
  EXPECT_THROW(model_hessian(in.set, in.ensemble, tight), ValidationError);
  EXPECT_THROW(clustered_hessian(in.set, in.ensemble, tight), ValidationError);
  tight.memory_budget_bytes += 1;
  EXPECT_NO_THROW(model_hessian(in.set, in.ensemble, tight));
}

TEST(ModelHessian, ShapeMismatchRejected) {
  oracle::Gen gen(12);
  auto in = random_instance(gen, 4, 3, 5);
  in.set.residuals.conservativeResize(11, 5);
  EXPECT_THROW(model_hessian(in.set, in.ensemble), ValidationError);
  EXPECT_THROW(weight_gradient(in.set, in.ensemble), ValidationError);
}

TEST(ClusteredHessian, NoResidualsMeansExactSignal) {
  oracle::Gen gen(13);
  auto in = random_instance(gen, 20, 4, 12);
  in.set.residuals.setZero();
  const auto parts = clustered_hessian(in.set, in.ensemble);
  EXPECT_EQ(parts.noise.values, Matrix::Zero(12, 12));
  EXPECT_EQ(parts.signal.values, model_hessian(in.set, in.ensemble).values);
  const Matrix naive = oracle::naive_model_hessian(in.set.compose().data, in.ensemble.probs);
  EXPECT_LT(oracle::rel_frobenius(parts.signal.values, naive), 1e-13);
}

TEST(ClusteredHessian, NoSignalWithoutMeans) {
  oracle::Gen gen(14);
  auto in = random_instance(gen, 20, 4, 12);
  in.set.means.setZero();
  const auto parts = clustered_hessian(in.set, in.ensemble);
  EXPECT_EQ(parts.signal.values, Matrix::Zero(12, 12));
  EXPECT_LT(oracle::rel_frobenius(parts.noise.values, model_hessian(in.set, in.ensemble).values), 1e-14);
}

TEST(ClusteredHessian, CrossTermsSmallAtDefaults) {
  const auto draw = default_draw(5);
  const auto h = model_hessian(draw.grads, draw.ensemble).values;
  const auto parts = clustered_hessian(draw.grads, draw.ensemble);
  const double rel = (h - parts.signal.values - parts.noise.values).norm() / h.norm();
  RecordProperty("cross_term_relative_frobenius", std::to_string(rel));
  std::printf("    cross-term relative Frobenius norm at defaults: %.4f\n", rel);
  EXPECT_LT(rel, 0.2);
}
