// Copyright 2026 The aoisched Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "aoisched/losses.hpp"
#include "test_util.hpp"

using namespace aoisched;

namespace {

// Reference implementations written straight from the definitions, sharing no
// code with the library.

double shannon(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0) h -= x * std::log2(x);
  return h;
}

/// H(Y | X) for a 2-axis joint p[y][x] stored row-major.
double shannon_cond(const JointPmf& j) {
  const auto ny = j.shape()[0], nx = j.shape()[1];
  std::vector<double> px(nx, 0.0);
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x) px[x] += j.probs()[y * nx + x];
  double h = 0.0;
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x) {
      double v = j.probs()[y * nx + x];
      if (v > 0) h -= v * std::log2(v / px[x]);
    }
  return h;
}

double shannon_mi(const JointPmf& j) {
  const auto ny = j.shape()[0], nx = j.shape()[1];
  std::vector<double> px(nx, 0.0), py(ny, 0.0);
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x) {
      px[x] += j.probs()[y * nx + x];
      py[y] += j.probs()[y * nx + x];
    }
  double i = 0.0;
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x) {
      double v = j.probs()[y * nx + x];
      if (v > 0) i += v * std::log2(v / (px[x] * py[y]));
    }
  return i;
}

/// I(A; C | B) for a joint over (A, B, C).
double shannon_cmi_acb(const JointPmf& j) {
  const auto na = j.shape()[0], nb = j.shape()[1], nc = j.shape()[2];
  auto at = [&](std::size_t a, std::size_t b, std::size_t c) { return j.probs()[(a * nb + b) * nc + c]; };
  double i = 0.0;
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t c = 0; c < nc; ++c) {
        double v = at(a, b, c);
        if (v <= 0) continue;
        double pb = 0, pab = 0, pbc = 0;
        for (std::size_t a2 = 0; a2 < na; ++a2)
          for (std::size_t c2 = 0; c2 < nc; ++c2) pb += at(a2, b, c2);
        for (std::size_t c2 = 0; c2 < nc; ++c2) pab += at(a, b, c2);
        for (std::size_t a2 = 0; a2 < na; ++a2) pbc += at(a2, b, c);
        i += v * std::log2(v * pb / (pab * pbc));
      }
  return i;
}

/// Swap axes 0 and 2 of a 3-axis joint.
JointPmf swap_outer(const JointPmf& j) {
  const auto a = j.shape()[0], b = j.shape()[1], c = j.shape()[2];
  std::vector<double> out(j.probs().size());
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t k = 0; k < b; ++k)
      for (std::size_t l = 0; l < c; ++l) out[(l * b + k) * a + i] = j.probs()[(i * b + k) * c + l];
  return JointPmf({c, b, a}, out);
}

/// Independent closed-form L-entropies for the brute-force checks.
double entropy_ref(const std::vector<double>& p, const std::vector<double>& lab, const LossSpec& loss) {
  switch (loss.kind) {
    case LossKind::quadratic: {
      double m = 0, m2 = 0;
      for (std::size_t i = 0; i < p.size(); ++i) m += p[i] * lab[i], m2 += p[i] * lab[i] * lab[i];
      return m2 - m * m;
    }
    case LossKind::log: return shannon(p);
    case LossKind::brier: {
      double s = 0;
      for (double x : p) s += x * x;
      return 1 - s;
    }
    case LossKind::zero_one: {
      double m = 0;
      for (double x : p) m = std::max(m, x);
      return 1 - m;
    }
    case LossKind::alpha: {
      double s = 0;
      for (double x : p) s += std::pow(x, loss.alpha);
      return loss.alpha / (loss.alpha - 1) * (1 - std::pow(s, 1 / loss.alpha));
    }
  }
  return NAN;
}

/// H_L(axis 0 | axis `c`) by explicit marginalisation of an N-axis joint.
double cond_entropy_ref(const JointPmf& j, std::size_t c, const LossSpec& loss) {
  const auto& shape = j.shape();
  std::vector<std::vector<double>> m(shape[c], std::vector<double>(shape[0], 0.0));
  std::vector<std::size_t> idx(shape.size(), 0);
  for (double v : j.probs()) {
    m[idx[c]][idx[0]] += v;
    for (std::size_t a = shape.size(); a-- > 0;) {
      if (++idx[a] < shape[a]) break;
      idx[a] = 0;
    }
  }
  double h = 0;
  for (auto& row : m) {
    double px = 0;
    for (double v : row) px += v;
    if (px <= 0) continue;
    for (double& v : row) v /= px;
    h += px * entropy_ref(row, *j.labels(0), loss);
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// Validation

TEST(Pmf, RejectsInvalidInputs) {
  EXPECT_THROW(Pmf({0.5, 0.6}), InvalidArgument);
  EXPECT_THROW(Pmf({-0.1, 1.1}), InvalidArgument);
  EXPECT_THROW(Pmf(std::vector<double>{}), InvalidArgument);
  EXPECT_THROW(Pmf({0.5, 0.5}, std::vector<double>{1.0}), InvalidArgument);
  EXPECT_NO_THROW(Pmf({0.5, 0.5 + 5e-13}));
}

TEST(LossSpec, AlphaMustBePositiveAndNotOne) {
  EXPECT_THROW(LossSpec::alpha_loss(1.0), InvalidArgument);
  EXPECT_THROW(LossSpec::alpha_loss(0.0), InvalidArgument);
  EXPECT_THROW(LossSpec::alpha_loss(-2.0), InvalidArgument);
  EXPECT_EQ(LossSpec::alpha_loss(0.5).alpha, 0.5);
}

// ---------------------------------------------------------------------------
// bayes_action

TEST(BayesAction, QuadraticIsTheMean) {
  auto a = bayes_action(Pmf({0.5, 0.5}, std::vector<double>{0, 1}), LossSpec::quadratic());
  EXPECT_DOUBLE_EQ(std::get<PointAction>(a).value, 0.5);
}

TEST(BayesAction, QuadraticWithoutLabelsIsIncompatible) {
  EXPECT_THROW(bayes_action(Pmf({0.5, 0.5}), LossSpec::quadratic()), IncompatibleLoss);
  EXPECT_THROW(l_entropy(Pmf({0.5, 0.5}), LossSpec::quadratic()), IncompatibleLoss);
}

TEST(BayesAction, ZeroOneIsArgmaxWithLowestIndexTies) {
  EXPECT_EQ(std::get<SymbolAction>(bayes_action(Pmf({0.7, 0.3}), LossSpec::zero_one())).symbol, 0u);
  EXPECT_EQ(std::get<SymbolAction>(bayes_action(Pmf({0.2, 0.4, 0.4}), LossSpec::zero_one())).symbol, 1u);
}

TEST(BayesAction, LogAndBrierReturnTheDistribution) {
  Pmf p({0.2, 0.3, 0.5});
  EXPECT_EQ(std::get<std::vector<double>>(bayes_action(p, LossSpec::log())), p.probs());
  EXPECT_EQ(std::get<std::vector<double>>(bayes_action(p, LossSpec::brier())), p.probs());
}

TEST(BayesAction, AlphaTiltedDistributionMinimisesExpectedLoss) {
  // Golden-section search of E_p[alpha-loss(Y, q)] over q = (q0, 1 - q0).
  const double a = 2.0, p0 = 0.8, p1 = 0.2, e = (a - 1) / a;
  auto f = [&](double q0) { return a / (a - 1) * (p0 * (1 - std::pow(q0, e)) + p1 * (1 - std::pow(1 - q0, e))); };
  double lo = 1e-9, hi = 1 - 1e-9;
  const double g = (std::sqrt(5.0) - 1) / 2;
  for (int i = 0; i < 200; ++i) {
    double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
    if (f(x1) < f(x2))
      hi = x2;
    else
      lo = x1;
  }
  const double q0_numeric = 0.5 * (lo + hi);
  EXPECT_NEAR(q0_numeric, 0.64 / 0.68, 1e-7);

  auto q = std::get<std::vector<double>>(bayes_action(Pmf({p0, p1}), LossSpec::alpha_loss(a)));
  EXPECT_NEAR(q[0], q0_numeric, 1e-7);
  EXPECT_NEAR(q[0], 0.9412, 5e-5);
  EXPECT_NEAR(q[1], 0.0588, 5e-5);
}

// ---------------------------------------------------------------------------
// l_entropy

TEST(LEntropy, ClosedFormExamples) {
  EXPECT_DOUBLE_EQ(l_entropy(Pmf::uniform(4), LossSpec::log()), 2.0);
  EXPECT_DOUBLE_EQ(l_entropy(Pmf({0.5, 0.5}), LossSpec::brier()), 0.5);
  EXPECT_DOUBLE_EQ(l_entropy(Pmf({0.5, 0.5}, std::vector<double>{0, 1}), LossSpec::quadratic()), 0.25);
  EXPECT_DOUBLE_EQ(l_entropy(Pmf({0.7, 0.3}), LossSpec::zero_one()), 0.3);
}

TEST(LEntropy, EqualsExpectedLossOfOwnBayesAction) {
  std::mt19937_64 rng(11);
  for (const auto& loss : testutil::all_losses())
    for (int i = 0; i < 50; ++i) {
      Pmf p(testutil::random_simplex(rng, 4, i % 2 == 0), testutil::labels(4));
      EXPECT_NEAR(l_entropy(p, loss), l_cross_entropy(p, p, loss), 1e-12) << to_string(loss.kind);
    }
}

TEST(LEntropy, AlphaEntropyApproachesShannonAsAlphaTendsToOne) {
  Pmf p({0.1, 0.2, 0.7});
  const double h_nats = shannon(p.probs()) * std::log(2.0);
  EXPECT_NEAR(l_entropy(p, LossSpec::alpha_loss(1.0 + 1e-6)), h_nats, 1e-5);
}

// ---------------------------------------------------------------------------
// l_cross_entropy / l_divergence

TEST(LCrossEntropy, Examples) {
  EXPECT_DOUBLE_EQ(l_cross_entropy(Pmf({1, 0}), Pmf({0.5, 0.5}), LossSpec::log()), 1.0);
  // E_p[(Y - mu_q)^2] = Var_p + (mu_p - mu_q)^2 = 0.25 + 0.4^2.
  const std::vector<double> lab{0, 1};
  EXPECT_NEAR(l_cross_entropy(Pmf({0.5, 0.5}, lab), Pmf({0.9, 0.1}, lab), LossSpec::quadratic()), 0.41, 1e-15);
  EXPECT_THROW(l_cross_entropy(Pmf({1.0}), Pmf({0.5, 0.5}), LossSpec::log()), AlphabetMismatch);
}

TEST(LCrossEntropy, LogLossInfiniteWhenQMissesSupport) {
  EXPECT_TRUE(std::isinf(l_cross_entropy(Pmf({0.5, 0.5}), Pmf({1, 0}), LossSpec::log())));
}

TEST(LDivergence, LogLossIsKullbackLeiblerInBits) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    Pmf p(testutil::random_simplex(rng, 5)), q(testutil::random_simplex(rng, 5));
    double kl = 0;
    for (std::size_t k = 0; k < 5; ++k) kl += p[k] * std::log2(p[k] / q[k]);
    EXPECT_NEAR(l_divergence(p, q, LossSpec::log()), kl, 1e-12);
  }
}

TEST(LDivergence, QuadraticIsSquaredMeanGap) {
  std::mt19937_64 rng(4);
  const auto lab = testutil::labels(4);
  for (int i = 0; i < 100; ++i) {
    Pmf p(testutil::random_simplex(rng, 4), lab), q(testutil::random_simplex(rng, 4), lab);
    double mp = 0, mq = 0;
    for (std::size_t k = 0; k < 4; ++k) mp += p[k] * lab[k], mq += q[k] * lab[k];
    EXPECT_NEAR(l_divergence(p, q, LossSpec::quadratic()), (mp - mq) * (mp - mq), 1e-12);
  }
}

TEST(LDivergence, ZeroOnSelf) {
  Pmf p({0.1, 0.6, 0.3}, testutil::labels(3));
  for (const auto& loss : testutil::all_losses()) EXPECT_NEAR(l_divergence(p, p, loss), 0.0, 1e-15);
}

TEST(LDivergenceProperty, NonNegativeOverRandomPairs) {
  std::mt19937_64 rng(2024);
  for (const auto& loss : testutil::all_losses())
    for (int i = 0; i < 1000; ++i) {
      const std::size_t n = 2 + i % 5;
      Pmf p(testutil::random_simplex(rng, n, i % 3 == 0), testutil::labels(n));
      Pmf q(testutil::random_simplex(rng, n, i % 7 == 0), testutil::labels(n));
      EXPECT_GE(l_divergence(p, q, loss), -1e-12) << to_string(loss.kind) << " #" << i;
    }
}

// ---------------------------------------------------------------------------
// Conditional quantities

TEST(LCondEntropy, IndependentEqualsMarginalEntropy) {
  Pmf py({0.2, 0.8}, std::vector<double>{0, 1}), px({0.3, 0.3, 0.4});
  std::vector<double> probs;
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 3; ++x) probs.push_back(py[y] * px[x]);
  JointPmf j({2, 3}, probs, {py.labels(), std::nullopt});
  for (const auto& loss : testutil::all_losses())
    EXPECT_NEAR(l_cond_entropy(j, 0, {1}, loss), l_entropy(py, loss), 1e-12) << to_string(loss.kind);
}

TEST(LCondEntropy, DeterministicTargetHasZeroEntropy) {
  JointPmf j({3, 3}, {0.2, 0, 0, 0, 0.5, 0, 0, 0, 0.3}, {testutil::labels(3), std::nullopt});
  for (const auto& loss : testutil::all_losses()) EXPECT_NEAR(l_cond_entropy(j, 0, {1}, loss), 0.0, 1e-12);
}

TEST(LCondEntropy, LogLossMatchesShannonBruteForce) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    auto j = testutil::random_joint(rng, {3, 3}, i % 2 == 1);
    const double hy = shannon(j.axis_marginal(0).probs());
    EXPECT_NEAR(l_cond_entropy(j, 0, {1}, LossSpec::log()), hy - shannon_mi(j), 1e-12);
    EXPECT_NEAR(l_cond_entropy(j, 0, {1}, LossSpec::log()), shannon_cond(j), 1e-12);
  }
}

TEST(LCondEntropy, AxisErrors) {
  auto j = JointPmf({2, 2}, {0.25, 0.25, 0.25, 0.25});
  EXPECT_THROW(l_cond_entropy(j, 0, {2}, LossSpec::log()), AxisError);
  EXPECT_THROW(l_cond_entropy(j, 0, {0}, LossSpec::log()), AxisError);
}

TEST(LCondCrossEntropy, SelfEqualsConditionalEntropy) {
  std::mt19937_64 rng(6);
  for (const auto& loss : testutil::all_losses()) {
    auto j = testutil::random_joint(rng, {3, 4});
    EXPECT_NEAR(l_cond_cross_entropy(j, j, loss), l_cond_entropy(j, 0, {1}, loss), 1e-12);
  }
}

TEST(LCondCrossEntropy, IndependentReducesToMarginalCrossEntropy) {
  const std::vector<double> lab{0, 1};
  Pmf py({0.3, 0.7}, lab), qy({0.6, 0.4}, lab), px({0.5, 0.5});
  std::vector<double> pj, qj;
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 2; ++x) pj.push_back(py[y] * px[x]), qj.push_back(qy[y] * px[x]);
  JointPmf p({2, 2}, pj, {lab, std::nullopt}), q({2, 2}, qj, {lab, std::nullopt});
  for (const auto& loss : testutil::all_losses())
    EXPECT_NEAR(l_cond_cross_entropy(p, q, loss), l_cross_entropy(py, qy, loss), 1e-12);
}

TEST(LCondCrossEntropy, BrierMatchesDefinitionSum) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    auto p = testutil::random_joint(rng, {2, 2}), q = testutil::random_joint(rng, {2, 2});
    double ref = 0;
    for (std::size_t x = 0; x < 2; ++x) {
      const double qx = q.probs()[x] + q.probs()[2 + x];
      for (std::size_t y = 0; y < 2; ++y) {
        // Brier loss of outcome y against forecast q(.|x): sum_k (q_k - [k == y])^2.
        double l = 0;
        for (std::size_t k = 0; k < 2; ++k) {
          double qk = q.probs()[k * 2 + x] / qx;
          l += (qk - (k == y ? 1.0 : 0.0)) * (qk - (k == y ? 1.0 : 0.0));
        }
        ref += p.probs()[y * 2 + x] * l;
      }
    }
    EXPECT_NEAR(l_cond_cross_entropy(p, q, LossSpec::brier()), ref, 1e-12);
  }
}

TEST(LCondCrossEntropy, ErrorsOnShapeMismatchAndDegenerateReference) {
  JointPmf p({2, 2}, {0.25, 0.25, 0.25, 0.25}), q3({2, 3}, {0.2, 0.1, 0.2, 0.2, 0.1, 0.2});
  EXPECT_THROW(l_cond_cross_entropy(p, q3, LossSpec::log()), AlphabetMismatch);
  JointPmf q({2, 2}, {0.5, 0.0, 0.5, 0.0});  // Q_X(1) = 0 while P_X(1) = 0.5
  EXPECT_THROW(l_cond_cross_entropy(p, q, LossSpec::log()), DegenerateConditional);
}

TEST(LCondCrossEntropyProperty, BoundedBelowByConditionalEntropy) {
  std::mt19937_64 rng(8);
  for (const auto& loss : testutil::all_losses())
    for (int i = 0; i < 200; ++i) {
      auto p = testutil::random_joint(rng, {3, 3}), q = testutil::random_joint(rng, {3, 3});
      EXPECT_GE(l_cond_cross_entropy(p, q, loss), l_cond_entropy(p, 0, {1}, loss) - 1e-12);
    }
}

// ---------------------------------------------------------------------------
// Mutual information

TEST(LMutualInfo, Examples) {
  JointPmf indep({2, 2}, {0.25, 0.25, 0.25, 0.25}, {std::vector<double>{0, 1}, std::nullopt});
  for (const auto& loss : testutil::all_losses()) EXPECT_NEAR(l_mutual_info(indep, loss), 0.0, 1e-15);
  JointPmf same({2, 2}, {0.5, 0, 0, 0.5});
  EXPECT_DOUBLE_EQ(l_mutual_info(same, LossSpec::log()), 1.0);
  EXPECT_THROW(l_mutual_info(JointPmf({2, 2, 1}, {0.25, 0.25, 0.25, 0.25}), LossSpec::log()), AxisError);
}

TEST(LCondMutualInfo, LogMatchesShannonDefinition) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    auto j = testutil::random_joint(rng, {2, 2, 2});
    // I(Y; X | Z) with axes (Y, X, Z): reorder to (Y, Z, X) for the reference.
    std::vector<double> r(8);
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 2; ++x)
        for (std::size_t z = 0; z < 2; ++z) r[(y * 2 + z) * 2 + x] = j.probs()[(y * 2 + x) * 2 + z];
    EXPECT_NEAR(l_cond_mutual_info(j, LossSpec::log()), shannon_cmi_acb(JointPmf({2, 2, 2}, r)), 1e-12);
  }
  EXPECT_THROW(l_cond_mutual_info(JointPmf({2, 2}, {0.25, 0.25, 0.25, 0.25}), LossSpec::log()), AxisError);
}

TEST(LMutualInfoProperty, NonNegativeForAllLosses) {
  std::mt19937_64 rng(10);
  for (const auto& loss : testutil::all_losses())
    for (int i = 0; i < 1000; ++i) {
      auto j2 = testutil::random_joint(rng, {3, 3}, i % 4 == 0);
      EXPECT_GE(l_mutual_info(j2, loss), -1e-12);
      auto j3 = testutil::random_joint(rng, {2, 3, 2}, i % 5 == 0);
      EXPECT_GE(l_cond_mutual_info(j3, loss), -1e-12);
    }
}

// ---------------------------------------------------------------------------
// epsilon-Markov gap

TEST(EpsilonMarkovGap, ZeroOnMarkovChain) {
  std::mt19937_64 rng(12);
  // P(y, x, z) = P(x) P(y | x) P(z | x).
  auto px = testutil::random_simplex(rng, 3);
  auto py = testutil::random_stochastic(rng, 3, 2), pz = testutil::random_stochastic(rng, 3, 2);
  std::vector<double> probs;
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 3; ++x)
      for (std::size_t z = 0; z < 2; ++z) probs.push_back(px[x] * py[x][y] * pz[x][z]);
  double s = 0;
  for (double v : probs) s += v;
  for (double& v : probs) v /= s;
  EXPECT_NEAR(epsilon_markov_gap(JointPmf({2, 3, 2}, probs)), 0.0, 1e-12);
}

TEST(EpsilonMarkovGap, CopiedBitThroughIndependentMiddleIsOneBit) {
  // Y = Z uniform, X independent uniform.
  std::vector<double> probs(8, 0.0);
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 2; ++x) probs[(y * 2 + x) * 2 + y] = 0.25;
  EXPECT_NEAR(epsilon_markov_gap(JointPmf({2, 2, 2}, probs)), 1.0, 1e-15);
}

TEST(EpsilonMarkovGap, MatchesShannonCmiDefinition) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) {
    auto j = testutil::random_joint(rng, {3, 2, 3}, i % 2 == 0);
    EXPECT_NEAR(epsilon_markov_gap(j), shannon_cmi_acb(j), 1e-12);
  }
}

TEST(EpsilonMarkovGapProperty, SymmetricInOuterAxes) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 1000; ++i) {
    auto j = testutil::random_joint(rng, {std::size_t(2 + i % 3), std::size_t(2 + i % 2), 3}, i % 3 == 0);
    EXPECT_NEAR(epsilon_markov_gap(j), epsilon_markov_gap(swap_outer(j)), 1e-12);
  }
}

// ---------------------------------------------------------------------------
// g decomposition and mixtures

TEST(GDecomposition, DeltaZeroIsConditionalEntropyAndZero) {
  std::mt19937_64 rng(15);
  auto j = testutil::random_joint(rng, {2, 2, 2, 2});
  for (const auto& loss : testutil::all_losses()) {
    auto g = g_decomposition(j, loss, 0);
    EXPECT_NEAR(g.g1, l_cond_entropy(j, 0, {1}, loss), 1e-15);
    EXPECT_EQ(g.g2, 0.0);
  }
  EXPECT_THROW(g_decomposition(j, LossSpec::log(), 3), InvalidArgument);
}

TEST(GDecomposition, MarkovProcessHasZeroG2) {
  std::mt19937_64 rng(16);
  auto P = testutil::random_stochastic(rng, 3, 3);
  auto pi = testutil::stationary(P);
  auto ch = testutil::random_stochastic(rng, 3, 2);
  auto proc = testutil::markov_process(P, pi, ch, 3);
  for (const auto& loss : testutil::all_losses())
    for (std::size_t d = 0; d <= 3; ++d) EXPECT_NEAR(g_decomposition(proc, loss, d).g2, 0.0, 1e-9);
}

TEST(GDecompositionProperty, IdentityOnRandomNonMarkovProcesses) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 20; ++i) {
    auto proc = testutil::random_joint(rng, {2, 2, 2, 2, 2});
    for (const auto& loss : testutil::all_losses())
      for (std::size_t d = 0; d <= 3; ++d) {
        auto g = g_decomposition(proc, loss, d);
        EXPECT_NEAR(g.g1 - g.g2, cond_entropy_ref(proc, 1 + d, loss), 1e-9) << to_string(loss.kind) << " d=" << d;
      }
  }
}

TEST(MarkovProperty, EntropyVersusAgeIsNonDecreasing) {
  std::mt19937_64 rng(18);
  for (int i = 0; i < 20; ++i) {
    auto P = testutil::random_stochastic(rng, 3, 3);
    auto proc = testutil::markov_process(P, testutil::stationary(P), testutil::random_stochastic(rng, 3, 3), 4);
    for (const auto& loss : testutil::all_losses())
      for (std::size_t d = 0; d < 4; ++d)
        EXPECT_LE(l_cond_entropy(proc, 0, {1 + d}, loss), l_cond_entropy(proc, 0, {2 + d}, loss) + 1e-12);
  }
}

TEST(MixtureCondEntropy, Examples) {
  const std::vector<double> curve{0.0, 0.3, 0.5, 0.6};
  EXPECT_DOUBLE_EQ(mixture_cond_entropy(Pmf({1.0}, std::vector<double>{2}), curve), 0.5);
  EXPECT_DOUBLE_EQ(mixture_cond_entropy(Pmf({0.5, 0.5}, std::vector<double>{1, 2}), curve), 0.4);
  EXPECT_THROW(mixture_cond_entropy(Pmf({1.0}, std::vector<double>{7}), curve), InvalidArgument);
  EXPECT_THROW(mixture_cond_entropy(Pmf({1.0}), curve), InvalidArgument);
}

TEST(MixtureCondEntropyProperty, StochasticallyOlderAgesCostMore) {
  std::mt19937_64 rng(19);
  const std::size_t K = 5;
  for (int i = 0; i < 20; ++i) {
    auto P = testutil::random_stochastic(rng, 3, 3);
    auto proc = testutil::markov_process(P, testutil::stationary(P), testutil::random_stochastic(rng, 3, 2), K);
    for (const auto& loss : testutil::all_losses()) {
      std::vector<double> curve;
      for (std::size_t d = 0; d <= K; ++d) curve.push_back(l_cond_entropy(proc, 0, {1 + d}, loss));
      // Coupling: Theta2 = min(Theta1 + S, K) with S >= 0 independent.
      auto t1 = testutil::random_simplex(rng, K + 1);
      auto shift = testutil::random_simplex(rng, 3);
      std::vector<double> t2(K + 1, 0.0), ages(K + 1);
      for (std::size_t a = 0; a <= K; ++a) {
        ages[a] = static_cast<double>(a);
        for (std::size_t s = 0; s < 3; ++s) t2[std::min(a + s, K)] += t1[a] * shift[s];
      }
      double s2 = 0;
      for (double v : t2) s2 += v;
      for (double& v : t2) v /= s2;
      EXPECT_LE(mixture_cond_entropy(Pmf(t1, ages), curve), mixture_cond_entropy(Pmf(t2, ages), curve) + 1e-12);
    }
  }
}

// ---------------------------------------------------------------------------
// CSV

TEST(JointCsv, RoundTrip) {
  std::mt19937_64 rng(20);
  auto j = testutil::random_joint(rng, {2, 3, 2});
  auto path = std::filesystem::temp_directory_path() / "aoisched_joint_roundtrip.csv";
  export_joint_csv(j, path);
  auto k = import_joint_csv(path);
  EXPECT_EQ(k.shape(), j.shape());
  EXPECT_EQ(k.probs(), j.probs());
  std::filesystem::remove(path);
}

TEST(JointCsv, RejectsBadHeader) {
  auto path = std::filesystem::temp_directory_path() / "aoisched_joint_bad.csv";
  { std::ofstream(path) << "a,b,prob\n0,0,1\n"; }
  EXPECT_THROW(import_joint_csv(path), ParseError);
  std::filesystem::remove(path);
}
