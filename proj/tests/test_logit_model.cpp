#include "lossgeom/logit_model.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace lossgeom;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST(SampleLogits, ZeroScaleGivesUniformRows) {
  ModelParams p;
  p.sigma_z = 0.0;
  p.n_examples = 20;
  auto s = substream(1, "logits");
  const auto z = sample_logits(p, s);
  EXPECT_TRUE((z.array() == 0.0).all());
  const auto probs = softmax_probs(z);
  EXPECT_LT((probs.array() - 0.1).abs().maxCoeff(), 1e-16);
}

TEST(SampleLogits, EntryStdMatchesScale) {
  ModelParams p;
  p.n_examples = 10000;
  auto s = substream(11, "logits");
  const auto z = sample_logits(p, s);
  const double sd = std::sqrt((z.array() - z.mean()).square().sum() / static_cast<double>(z.size() - 1));
  EXPECT_NEAR(sd / 15.0, 1.0, 0.02);
  auto again = substream(11, "logits");
  EXPECT_EQ(sample_logits(p, again), z);
}

TEST(Softmax, Examples) {
  EXPECT_LT((softmax(vec({0, 0, 0, 0})) - Vector::Constant(4, 0.25)).cwiseAbs().maxCoeff(), 1e-16);
  const auto p = softmax(vec({std::numbers::ln2, 0}));
  EXPECT_NEAR(p(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(1), 1.0 / 3.0, 1e-15);
  const auto big = softmax(vec({1000, 0}));
  EXPECT_EQ(big(0), 1.0);
  EXPECT_GE(big(1), 0.0);
  EXPECT_LT(big(1), 1e-300);
  EXPECT_TRUE(big.allFinite());
}

TEST(Softmax, RowsMatchMatrixForm) {
  oracle::Gen gen(3);
  const RowMatrix z = gen.normal_rows(30, 7, 20.0);
  const auto probs = softmax_probs(z);
  for (Index mu = 0; mu < z.rows(); ++mu) {
    const Vector row = z.row(mu).transpose();
    EXPECT_EQ(softmax(row), Vector(probs.row(mu).transpose()));
  }
}

TEST(Softmax, RowStochasticProperty) {
  oracle::Gen gen(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Index c = gen.integer(2, 40);
    const RowMatrix z = gen.normal_rows(5, c, gen.uniform(0.0, 300.0));
    const auto p = softmax_probs(z);
    for (Index mu = 0; mu < z.rows(); ++mu) {
      EXPECT_NEAR(p.row(mu).sum(), 1.0, 1e-12);
      EXPECT_TRUE((p.row(mu).array() >= 0.0).all());
    }
  }
}

TEST(Softmax, MatchesLongDoubleOracle) {
  oracle::Gen gen(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Index c = gen.integer(2, 20);
    Vector z(c);
    std::vector<long double> zl(static_cast<std::size_t>(c));
    for (Index k = 0; k < c; ++k) zl[static_cast<std::size_t>(k)] = z(k) = gen.normal(5.0);
    const auto p = softmax(z);
    const auto q = oracle::softmax_ld(zl);
    for (Index k = 0; k < c; ++k) EXPECT_NEAR(p(k), static_cast<double>(q[static_cast<std::size_t>(k)]), 4e-16 + 1e-14 * p(k));
  }
}

// With logits on a dyadic grid and integer shifts, z + c is exact, and the
// max-subtracted form sees identical differences.
TEST(Softmax, ShiftInvarianceExactOnDyadicGrid) {
  oracle::Gen gen(23);
  for (int trial = 0; trial < 300; ++trial) {
    const Index c = gen.integer(2, 12);
    Vector z(c);
    for (Index k = 0; k < c; ++k) z(k) = std::ldexp(std::round(gen.normal(20.0) * 1048576.0), -20);
    const double shift = static_cast<double>(gen.integer(-100, 100));
    EXPECT_EQ(softmax(z), softmax((z.array() + shift).matrix()));
  }
}

TEST(Softmax, ShiftInvarianceGeneralInputs) {
  oracle::Gen gen(29);
  for (int trial = 0; trial < 300; ++trial) {
    const Index c = gen.integer(2, 12);
    const Vector z = gen.normal_matrix(c, 1, 5.0).col(0);
    const double shift = gen.uniform(-100.0, 100.0);
    const Vector a = softmax(z);
    const Vector b = softmax((z.array() + shift).matrix());
    for (Index k = 0; k < c; ++k) EXPECT_NEAR(a(k), b(k), 1e-12 * a(k) + 1e-300);
  }
}

TEST(CrossEntropy, Examples) {
  RowMatrix uniform = RowMatrix::Constant(4, 10, 0.1);
  EXPECT_NEAR(cross_entropy_loss(uniform, {0, 3, 9, 5}), std::log(10.0), 1e-15);
  RowMatrix onehot = RowMatrix::Zero(3, 4);
  onehot(0, 1) = onehot(1, 0) = onehot(2, 3) = 1.0;
  EXPECT_EQ(cross_entropy_loss(onehot, {1, 0, 3}), 0.0);
  RowMatrix two(2, 2);
  two << 0.5, 0.5, 0.75, 0.25;
  EXPECT_NEAR(cross_entropy_loss(two, {0, 1}), 1.5 * std::numbers::ln2, 1e-15);
}

TEST(CrossEntropy, UnderflowSentinel) {
  const auto probs = softmax_probs(RowMatrix{{1000.0, 0.0}});
  EXPECT_TRUE(std::isinf(cross_entropy_loss(probs, {1})));
  EXPECT_THROW(cross_entropy_loss(probs, {2}), ValidationError);
}

TEST(LogitGradient, Examples) {
  EXPECT_EQ(logit_gradient(vec({0.5, 0.5}), 0), vec({0.5, -0.5}));
  EXPECT_EQ(logit_gradient(vec({1, 0, 0}), 0), Vector::Zero(3));
  oracle::Gen gen(31);
  for (int trial = 0; trial < 100; ++trial) {
    const Index c = gen.integer(2, 15);
    const auto p = gen.probability_row(c);
    EXPECT_NEAR(logit_gradient(p, static_cast<int>(gen.integer(0, c - 1))).sum(), 0.0, 1e-15);
  }
}

TEST(LogitHessian, Examples) {
  Matrix expected(2, 2);
  expected << 0.25, -0.25, -0.25, 0.25;
  EXPECT_EQ(logit_hessian(vec({0.5, 0.5})), expected);
  EXPECT_EQ(logit_hessian(vec({0, 1, 0})), Matrix::Zero(3, 3));
}

// Hessian = -(d/dz) of (y - p(z)), central differences on the softmax map.
TEST(LogitHessian, MatchesFiniteDifferenceOfGradient) {
  oracle::Gen gen(37);
  auto check = [](const Vector& z, int label) {
    const Index c = z.size();
    const double h = 1e-5;
    Matrix fd(c, c);
    for (Index l = 0; l < c; ++l) {
      Vector up = z, down = z;
      up(l) += h;
      down(l) -= h;
      fd.col(l) = -(logit_gradient(softmax(up), label) - logit_gradient(softmax(down), label)) / (2 * h);
    }
    return oracle::rel_frobenius(fd, logit_hessian(softmax(z)));
  };
  EXPECT_LT(check(Vector::Zero(10), 0), 1e-6);
  for (int trial = 0; trial < 50; ++trial) {
    const Index c = gen.integer(2, 12);
    EXPECT_LT(check(gen.normal_matrix(c, 1, 2.0).col(0), static_cast<int>(gen.integer(0, c - 1))), 1e-5);
  }
}

TEST(LogitHessian, PsdWithNullOnes) {
  oracle::Gen gen(41);
  for (int trial = 0; trial < 200; ++trial) {
    const Index c = gen.integer(2, 20);
    const auto a = logit_hessian(gen.probability_row(c, gen.uniform(0.1, 20.0)));
    EXPECT_EQ(a, a.transpose());
    EXPECT_LT((a * Vector::Ones(c)).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
  }
}

TEST(Entropy, Examples) {
  EXPECT_DOUBLE_EQ(shannon_entropy(Vector::Constant(4, 0.25)), 2.0);
  EXPECT_EQ(shannon_entropy(vec({0, 1, 0})), 0.0);
  EXPECT_DOUBLE_EQ(shannon_entropy(vec({0.5, 0.5, 0, 0})), 1.0);
}

TEST(AssignLabels, Extremes) {
  oracle::Gen gen(43);
  RowMatrix probs(50, 6);
  for (Index mu = 0; mu < 50; ++mu) probs.row(mu) = gen.probability_row(6).transpose();
  auto s = substream(1, "labels");
  const auto all = assign_labels(probs, 1.0, s);
  const auto none = assign_labels(probs, 0.0, s);
  for (Index mu = 0; mu < 50; ++mu) {
    EXPECT_EQ(all[static_cast<std::size_t>(mu)], argmax(probs.row(mu)));
    EXPECT_NE(none[static_cast<std::size_t>(mu)], argmax(probs.row(mu)));
    EXPECT_GE(none[static_cast<std::size_t>(mu)], 0);
    EXPECT_LT(none[static_cast<std::size_t>(mu)], 6);
  }
  EXPECT_THROW(assign_labels(probs, 1.01, s), ValidationError);
  EXPECT_THROW(assign_labels(probs, -0.1, s), ValidationError);
}

TEST(AssignLabels, ExactAccuracyCount) {
  ModelParams p;
  auto ls = substream(5, "logits");
  auto lab = substream(5, "labels");
  const auto e = make_ensemble(p, ls, lab);
  int correct = 0;
  for (Index mu = 0; mu < 300; ++mu) correct += e.labels[static_cast<std::size_t>(mu)] == argmax(e.probs.row(mu));
  EXPECT_EQ(correct, 285);
}

TEST(AssignLabels, WrongLabelsSpreadOverOtherClasses) {
  RowMatrix probs = RowMatrix::Constant(40000, 4, 0.1);
  probs.col(2).setConstant(0.7);
  auto s = substream(8, "labels");
  const auto labels = assign_labels(probs, 0.0, s);
  std::vector<int> counts(4, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  EXPECT_EQ(counts[2], 0);
  for (int k : {0, 1, 3}) EXPECT_NEAR(counts[static_cast<std::size_t>(k)], 40000.0 / 3.0, 400.0);
}

TEST(Argmax, TiesGoToLowestIndex) {
  EXPECT_EQ(argmax(vec({0.2, 0.4, 0.4})), 1);
  EXPECT_EQ(argmax(vec({0.25, 0.25, 0.25, 0.25})), 0);
}

TEST(FreezingStats, UniformLimit) {
  ModelParams p;
  p.sigma_z = 1e-9;
  p.n_examples = 100;
  auto a = substream(1, "l");
  auto b = substream(1, "y");
  const auto s = freezing_stats(make_ensemble(p, a, b));
  EXPECT_NEAR(s.mean_entropy, std::log2(10.0), 1e-9);
  EXPECT_NEAR(s.mean_max_prob, 0.1, 1e-9);
}

// Independent sampler (std::mt19937_64 + std::normal_distribution) and a
// long-double softmax agree with the library on the frozen regime.
TEST(FreezingStats, LargeScaleEntropyBelowFifthOfBit) {
  ModelParams p;
  p.sigma_z = 100.0;
  p.n_examples = 3000;
  auto a = substream(2, "l");
  auto b = substream(2, "y");
  const auto s = freezing_stats(make_ensemble(p, a, b));

  oracle::Gen gen(2);
  double entropy = 0;
  for (int mu = 0; mu < 3000; ++mu) {
    std::vector<long double> z(10);
    for (auto& v : z) v = gen.normal(100.0);
    for (long double q : oracle::softmax_ld(z))
      if (q > 0) entropy -= static_cast<double>(q * std::log2(q));
  }
  entropy /= 3000.0;
  EXPECT_LT(entropy, 0.2);
  EXPECT_LT(s.mean_entropy, 0.2);
  EXPECT_NEAR(s.mean_entropy, entropy, 0.03);
}

TEST(FreezingStats, EntropyNonIncreasingOverLogGrid) {
  ModelParams p;
  p.n_examples = 3000;
  std::vector<double> entropy;
  for (int i = 0; i < 25; ++i) {
    p.sigma_z = std::pow(10.0, -3.0 + 5.0 * i / 24.0);
    auto a = substream(3, "grid/" + std::to_string(i));
    entropy.push_back(freezing_stats(softmax_probs(sample_logits(p, a))).mean_entropy);
  }
  for (std::size_t i = 1; i < entropy.size(); ++i) EXPECT_LE(entropy[i], entropy[i - 1] * 1.01) << "point " << i;
}
