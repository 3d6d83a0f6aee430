#pragma once

#include "dmet/error.hpp"
#include "dmet/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace dmet {

/// How many components to keep: the smallest k in [min_dims, max_dims]
/// whose cumulative explained ratio exceeds min_variance.
struct PcaTarget {
  int min_dims = 2;
  int max_dims = 3;
  double min_variance = 0.85;
};

struct PcaModel {
  Vector mean;
  /// k x d, orthonormal rows. Each row's largest-magnitude entry is positive.
  Matrix components;
  /// Explained-variance share of each kept component, non-increasing.
  Vector explained_ratio;
  /// Set when even max_dims components fall short of min_variance.
  bool below_target = false;

  Eigen::Index dims() const { return components.rows(); }
  double cumulative_ratio() const { return explained_ratio.sum(); }
};

/// Fits on the d x d covariance; d is small compared with the number of points.
inline PcaModel pca_fit(const Matrix& points, const PcaTarget& target = {}) {
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  if (n < 2) throw ValidationError("PCA needs at least 2 points");
  if (d < 1) throw ValidationError("PCA needs dimension >= 1");
  if (!points.allFinite()) throw ValidationError("PCA input has non-finite entries");
  if (target.min_dims < 1 || target.max_dims < target.min_dims)
    throw ValidationError("PCA target needs 1 <= min_dims <= max_dims");

  PcaModel model;
  model.mean = points.colwise().mean().transpose();
  const Matrix centered = points.rowwise() - model.mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  const double total = cov.trace();
  if (!(total > 1e-24 * (1.0 + model.mean.squaredNorm()))) throw DegenerateError("zero variance");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("PCA eigendecomposition failed");
  // Eigen returns ascending eigenvalues; flip to descending.
  Vector values = eig.eigenvalues().reverse().cwiseMax(0.0);
  Matrix vectors = eig.eigenvectors().rowwise().reverse();
  const Vector ratios = values / values.sum();

  const Eigen::Index lo = std::min<Eigen::Index>(target.min_dims, d);
  const Eigen::Index hi = std::min<Eigen::Index>(target.max_dims, d);
  Eigen::Index k = hi;
  model.below_target = true;
  for (Eigen::Index cand = lo; cand <= hi; ++cand) {
    if (ratios.head(cand).sum() > target.min_variance) {
      k = cand;
      model.below_target = false;
      break;
    }
  }

  model.components.resize(k, d);
  for (Eigen::Index c = 0; c < k; ++c) {
    Vector v = vectors.col(c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    model.components.row(c) = v.transpose();
  }
  model.explained_ratio = ratios.head(k);
  return model;
}

/// Row i of the result is components * (point_i - mean).
inline Matrix pca_transform(const PcaModel& model, const Matrix& points) {
  if (points.cols() != model.mean.size())
    throw ValidationError("PCA transform: point dimension " + std::to_string(points.cols()) + " != model dimension " +
                          std::to_string(model.mean.size()));
  return (points.rowwise() - model.mean.transpose()) * model.components.transpose();
}

/// Maps reduced coordinates back into the original space.
inline Matrix pca_inverse_transform(const PcaModel& model, const Matrix& reduced) {
  if (reduced.cols() != model.dims()) throw ValidationError("PCA inverse: coordinate dimension mismatch");
  return (reduced * model.components).rowwise() + model.mean.transpose();
}

}  // namespace dmet
