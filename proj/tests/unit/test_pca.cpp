#include "support.hpp"

#include <gtest/gtest.h>

using namespace dmet;

namespace {

Matrix rotation(int d, std::uint64_t seed) {
  Eigen::HouseholderQR<Matrix> qr(testing_support::gaussian_cloud(d, d, seed));
  return qr.householderQ();
}

}  // namespace

TEST(Pca, CollinearPoints) {
  Matrix x(3, 2);
  x << 0, 0, 1, 1, 2, 2;
  const PcaModel m = pca_fit(x);
  EXPECT_EQ(m.dims(), 2);
  EXPECT_NEAR(m.explained_ratio[0], 1.0, 1e-12);
  EXPECT_NEAR(m.components(0, 0), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(m.components(0, 1), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_FALSE(m.below_target);
}

TEST(Pca, IsotropicSampleFallsShort) {
  const PcaModel m = pca_fit(testing_support::gaussian_cloud(1000, 4, 21));
  EXPECT_EQ(m.dims(), 3);
  EXPECT_TRUE(m.below_target);
  EXPECT_NEAR(m.cumulative_ratio(), 0.75, 0.05);
}

TEST(Pca, PlaneInsideTenDimensions) {
  const Matrix coeffs = testing_support::gaussian_cloud(200, 2, 4);
  const Matrix basis = rotation(10, 5).leftCols(2).transpose();
  Matrix x = coeffs * basis;
  x.rowwise() += Eigen::RowVectorXd::LinSpaced(10, -1.0, 1.0);
  const PcaModel m = pca_fit(x);
  EXPECT_EQ(m.dims(), 2);
  EXPECT_NEAR(m.cumulative_ratio(), 1.0, 1e-9);
  const Matrix back = pca_inverse_transform(m, pca_transform(m, x));
  EXPECT_LT((back - x).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Pca, MeanMapsToOrigin) {
  const Matrix x = testing_support::gaussian_cloud(50, 5, 6);
  const PcaModel m = pca_fit(x);
  const Matrix z = pca_transform(m, m.mean.transpose());
  EXPECT_LT(z.norm(), 1e-12);
}

TEST(Pca, ComponentsOrthonormalAndRatiosOrdered) {
  Matrix x = testing_support::gaussian_cloud(300, 6, 7);
  x.col(0) *= 5.0;
  x.col(3) *= 2.0;
  const PcaModel m = pca_fit(x);
  const Matrix gram = m.components * m.components.transpose();
  EXPECT_LT((gram - Matrix::Identity(m.dims(), m.dims())).cwiseAbs().maxCoeff(), 1e-8);
  for (Eigen::Index i = 1; i < m.explained_ratio.size(); ++i) EXPECT_LE(m.explained_ratio[i], m.explained_ratio[i - 1]);
  EXPECT_LE(m.cumulative_ratio(), 1.0 + 1e-9);
  for (Eigen::Index c = 0; c < m.dims(); ++c) {
    Eigen::Index arg = 0;
    m.components.row(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(m.components(c, arg), 0.0);
  }
  // Projected data has diagonal covariance with non-increasing variances.
  const Matrix z = pca_transform(m, x);
  const Matrix cov = z.transpose() * z / static_cast<double>(z.rows() - 1);
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    for (Eigen::Index j = 0; j < cov.cols(); ++j)
      if (i != j) EXPECT_NEAR(cov(i, j), 0.0, 1e-9);
  for (Eigen::Index i = 1; i < cov.rows(); ++i) EXPECT_LE(cov(i, i), cov(i - 1, i - 1));
}

TEST(Pca, RatiosInvariantUnderRotationAndTranslation) {
  Matrix x = testing_support::gaussian_cloud(200, 5, 8);
  x.col(1) *= 3.0;
  x.col(2) *= 2.0;
  const PcaModel a = pca_fit(x);
  Matrix y = x * rotation(5, 9).transpose();
  y.rowwise() += Eigen::RowVectorXd::Constant(5, 4.0);
  const PcaModel b = pca_fit(y);
  ASSERT_EQ(a.dims(), b.dims());
  EXPECT_LT((a.explained_ratio - b.explained_ratio).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Pca, Errors) {
  EXPECT_THROW(pca_fit(Matrix::Zero(1, 3)), ValidationError);
  EXPECT_THROW(pca_fit(Matrix::Ones(5, 3)), DegenerateError);
  const PcaModel m = pca_fit(testing_support::gaussian_cloud(10, 3, 1));
  EXPECT_THROW(pca_transform(m, Matrix::Zero(2, 4)), ValidationError);
}
