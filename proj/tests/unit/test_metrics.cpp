#include "support.hpp"

#include <gtest/gtest.h>

using namespace dmet;

namespace {

Trajectory along_x(const std::vector<double>& xs) {
  Trajectory t;
  for (double x : xs) {
    Vector h = Vector::Zero(2);
    h[0] = x;
    t.states.push_back(h);
  }
  return t;
}

Matrix random_rotation(int d, std::uint64_t seed) {
  Eigen::HouseholderQR<Matrix> qr(testing_support::gaussian_cloud(d, d, seed));
  return qr.householderQ();
}

}  // namespace

TEST(Continuity, UnitStepsOnALine) {
  const Trajectory t = testing_support::line_trajectory(5);
  EXPECT_DOUBLE_EQ(continuity(t, false).C, 1.0);
}

TEST(Continuity, StationaryTrajectoryIsZero) {
  Trajectory t;
  t.states.assign(6, Vector::Ones(3));
  EXPECT_DOUBLE_EQ(continuity(t, false).C, 0.0);
  EXPECT_DOUBLE_EQ(continuity(t, true).C, 0.0);
}

TEST(Continuity, NormalizedAntipodalStepIsTwo) {
  const Trajectory t = along_x({1.0, -3.0});
  EXPECT_DOUBLE_EQ(continuity(t, true).C, 2.0);
  EXPECT_DOUBLE_EQ(continuity(t, false).C, 4.0);
}

TEST(Continuity, ZeroStateCannotBeNormalized) {
  const Trajectory t = along_x({0.0, 1.0});
  EXPECT_THROW(continuity(t, true), DegenerateError);
  EXPECT_NO_THROW(continuity(t, false));
}

TEST(Continuity, RawIsHomogeneousNormalizedIsScaleFree) {
  Trajectory t = testing_support::random_trajectory(20, 5, 3);
  const double raw = continuity(t, false).C, norm = continuity(t, true).C;
  for (auto& h : t.states) h *= 3.5;
  EXPECT_NEAR(continuity(t, false).C, 3.5 * raw, 1e-12);
  EXPECT_NEAR(continuity(t, true).C, norm, 1e-12);
}

TEST(Continuity, RotationInvariant) {
  Trajectory t = testing_support::random_trajectory(30, 6, 5);
  const double raw = continuity(t, false).C, norm = continuity(t, true).C;
  const Matrix R = random_rotation(6, 9);
  for (auto& h : t.states) h = R * h;
  EXPECT_NEAR(continuity(t, false).C, raw, 1e-12);
  EXPECT_NEAR(continuity(t, true).C, norm, 1e-12);
}

TEST(Continuity, MatchesDefinition) {
  const Trajectory t = testing_support::random_trajectory(12, 4, 8);
  double sum = 0.0;
  for (std::size_t i = 1; i < t.states.size(); ++i)
    sum += (t.states[i] / t.states[i].norm() - t.states[i - 1] / t.states[i - 1].norm()).norm();
  EXPECT_NEAR(continuity(t, true).C, sum / 12.0, 1e-14);
}

TEST(Jumps, SingleOutlierUnderBothRules) {
  const StepDistances d = step_distances(along_x({0, 1, 2, 3, 13}), false);
  ASSERT_EQ(d.delta, (std::vector<double>{1, 1, 1, 10}));
  EXPECT_TRUE(detect_jumps(d, JumpMethod::mean_z, 2.0).indices.empty());
  EXPECT_EQ(detect_jumps(d, JumpMethod::median_mad, 2.0).indices, (std::vector<std::size_t>{4}));
}

TEST(Jumps, ThresholdFormulas) {
  const StepDistances d{{1, 2, 3, 4, 20}};
  // mean 6, population std sqrt(50) = 7.0711
  EXPECT_NEAR(detect_jumps(d, JumpMethod::mean_z, 1.0).threshold, 6.0 + std::sqrt(50.0), 1e-12);
  // median 3, deviations {2,1,0,1,17} with median 1
  EXPECT_NEAR(detect_jumps(d, JumpMethod::median_mad, 3.0).threshold, 3.0 + 3.0 * 1.4826, 1e-12);
}

TEST(Jumps, ConstantDistancesHaveNoJumps) {
  const StepDistances d{{0.5, 0.5, 0.5, 0.5}};
  EXPECT_TRUE(detect_jumps(d, JumpMethod::mean_z).indices.empty());
  EXPECT_TRUE(detect_jumps(d, JumpMethod::median_mad).indices.empty());
}

TEST(Jumps, RejectsBadInput) {
  EXPECT_THROW(detect_jumps(StepDistances{{1.0}}), ValidationError);
  EXPECT_THROW(detect_jumps(StepDistances{{1.0, 2.0}}, JumpMethod::mean_z, 0.0), ValidationError);
}

TEST(Kl, PointMassAgainstUniformIsLog2) {
  const std::vector<double> p{1.0, 0.0}, q{0.5, 0.5};
  EXPECT_NEAR(smoothed_kl(p, q), std::log(2.0), 1e-8);
  EXPECT_NEAR(smoothed_kl(q, q), 0.0, 1e-15);
}

TEST(Kl, TruncatedZerosStayFinite) {
  const std::vector<double> p{0.5, 0.5, 0.0}, q{0.0, 0.5, 0.5};
  const double kl = smoothed_kl(p, q);
  EXPECT_TRUE(std::isfinite(kl));
  EXPECT_GT(kl, 1.0);
}

TEST(Kl, MeanOverSuccessivePairs) {
  Trajectory t = along_x({1, 2, 3, 4});
  t.token_distributions = std::vector<std::vector<double>>{{1.0, 0.0}, {0.5, 0.5}, {0.5, 0.5}};
  const KLReport r = mean_successive_kl(t);
  ASSERT_EQ(r.per_step.size(), 2u);
  EXPECT_NEAR(r.mean_kl, std::log(2.0) / 2.0, 1e-8);
}

TEST(Kl, UnavailableWithoutDistributions) {
  EXPECT_THROW(mean_successive_kl(along_x({1, 2, 3})), ValidationError);
}
