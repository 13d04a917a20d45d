#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tdlab/errors.hpp"
#include "tdlab/markov.hpp"

using namespace tdlab;

TEST(MarkovChain, AcceptsDoublyStochastic) {
  EXPECT_NO_THROW(MarkovChain::build(Eigen::MatrixXd::Constant(2, 2, 0.5)));
}

TEST(MarkovChain, RejectsPeriodicChain) {
  Eigen::MatrixXd P(2, 2);
  P << 0, 1, 1, 0;
  EXPECT_THROW(MarkovChain::build(P), Periodic);
}

TEST(MarkovChain, RejectsReducibleChain) {
  EXPECT_THROW(MarkovChain::build(Eigen::MatrixXd::Identity(2, 2)), NotIrreducible);
}

TEST(MarkovChain, RejectsRowSumOutsideTolerance) {
  Eigen::MatrixXd P(2, 2);
  P << 0.5, 0.5 + 1e-9, 0.5, 0.5;
  EXPECT_THROW(MarkovChain::build(P), NotStochastic);
}

TEST(MarkovChain, RejectsNegativeEntries) {
  Eigen::MatrixXd P(2, 2);
  P << 1.5, -0.5, 0.5, 0.5;
  EXPECT_THROW(MarkovChain::build(P), NotStochastic);
}

TEST(MarkovChain, RejectsNonSquare) { EXPECT_THROW(MarkovChain::build(Eigen::MatrixXd::Ones(2, 3)), ValidationError); }

TEST(MarkovChain, DetectsPeriodThreeCycle) {
  Eigen::MatrixXd P(3, 3);
  P << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  EXPECT_THROW(MarkovChain::build(P), Periodic);
}

TEST(MarkovChain, AcceptsCycleWithSelfLoop) {
  Eigen::MatrixXd P(3, 3);
  P << 0.5, 0.5, 0, 0, 0, 1, 1, 0, 0;
  EXPECT_NO_THROW(MarkovChain::build(P));
}

TEST(Stationary, UniformForDoublyStochastic) {
  const auto pi = stationary_distribution(MarkovChain::build(Eigen::MatrixXd::Constant(2, 2, 0.5)));
  EXPECT_NEAR(pi.pi(0), 0.5, 1e-14);
  EXPECT_NEAR(pi.pi(1), 0.5, 1e-14);
}

TEST(Stationary, TwoStateMatchesBalanceEquations) {
  Eigen::MatrixXd P(2, 2);
  P << 0.9, 0.1, 0.2, 0.8;
  const auto pi = stationary_distribution(MarkovChain::build(P));
  // Balance: pi0 * 0.1 = pi1 * 0.2 and pi0 + pi1 = 1.
  EXPECT_NEAR(pi.pi(0), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(pi.pi(1), 1.0 / 3.0, 1e-12);
}

TEST(Stationary, SingleState) {
  const auto pi = stationary_distribution(MarkovChain::build(Eigen::MatrixXd::Ones(1, 1)));
  EXPECT_EQ(pi.pi(0), 1.0);
}

TEST(Stationary, AgreesWithPowerIterationAndIsInvariant) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = tdtest::random_instance(seed, 6, 2, 0.5, 0.5);
    const auto pi = stationary_distribution(MarkovChain::build(inst.P));
    const Eigen::VectorXd oracle = tdtest::stationary_by_power(inst.P);
    EXPECT_LT((pi.pi - oracle).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((pi.pi.transpose() * inst.P - pi.pi.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(pi.pi.sum(), 1.0, 1e-12);
    EXPECT_GT(pi.pi.minCoeff(), 0.0);
  }
}

TEST(SamplePath, SingleStateStaysPut) {
  RngStream rng(1);
  const auto path = sample_path(MarkovChain::build(Eigen::MatrixXd::Ones(1, 1)), 0, 5, rng);
  EXPECT_EQ(path, (std::vector<StateIndex>{0, 0, 0, 0, 0}));
}

TEST(SamplePath, ReproducibleForEqualStreams) {
  const auto chain = MarkovChain::build(tdtest::random_instance(3, 5, 2, 0.5, 0.5).P);
  RngStream a(42, 7), b(42, 7), c(42, 8);
  const auto pa = sample_path(chain, 2, 1000, a);
  EXPECT_EQ(pa, sample_path(chain, 2, 1000, b));
  EXPECT_NE(pa, sample_path(chain, 2, 1000, c));
  EXPECT_EQ(pa.front(), 2);
}

TEST(SamplePath, VisitFrequenciesMatchStationary) {
  const auto inst = tdtest::random_instance(11, 4, 2, 0.5, 0.5);
  const auto chain = MarkovChain::build(inst.P);
  const Eigen::VectorXd pi = tdtest::stationary_by_power(inst.P);
  RngStream rng(2024);
  const long n = 1'000'000;
  const auto path = sample_path(chain, 0, n, rng);
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(4);
  for (StateIndex y : path) freq(y) += 1.0;
  freq /= static_cast<double>(n);
  // Batch-means standard error accounts for the correlation along the path.
  const long batches = 100;
  const long len = n / batches;
  for (int i = 0; i < 4; ++i) {
    double s = 0, s2 = 0;
    for (long b = 0; b < batches; ++b) {
      double f = 0;
      for (long k = b * len; k < (b + 1) * len; ++k) f += path[static_cast<size_t>(k)] == i ? 1.0 : 0.0;
      f /= static_cast<double>(len);
      s += f;
      s2 += f * f;
    }
    const double mean = s / batches;
    const double se = std::sqrt((s2 / batches - mean * mean) / (batches - 1));
    EXPECT_LE(std::abs(freq(i) - pi(i)), 3.0 * se) << "state " << i;
  }
}

TEST(HittingSums, ZeroIntegrandGivesZero) {
  const auto chain = MarkovChain::build(tdtest::random_instance(5, 3, 2, 0.5, 0.5).P);
  RngStream rng(9);
  const auto est = expected_hitting_sums(chain, 0, Eigen::MatrixXd::Zero(3, 2), 100, rng);
  EXPECT_EQ(est.mean.cwiseAbs().maxCoeff(), 0.0);
}

TEST(HittingSums, SingleStateCenteredIsZero) {
  const auto chain = MarkovChain::build(Eigen::MatrixXd::Ones(1, 1));
  RngStream rng(9);
  const auto est = expected_hitting_sums(chain, 0, Eigen::MatrixXd::Zero(1, 1), 10, rng);
  EXPECT_EQ(est.mean(0, 0), 0.0);
  EXPECT_EQ(est.mean_return_time(0), 1.0);
}

TEST(HittingSums, MeanReturnTimeIsInverseStationaryMass) {
  Eigen::MatrixXd P(2, 2);
  P << 0.9, 0.1, 0.2, 0.8;
  RngStream rng(5);
  const auto est = expected_hitting_sums(MarkovChain::build(P), 0, Eigen::MatrixXd::Zero(2, 1), 100'000, rng);
  // Kac: E_0[tau_0] = 1 / pi(0) = 1.5.
  EXPECT_NEAR(est.mean_return_time(0), 1.5, 0.01);
}
