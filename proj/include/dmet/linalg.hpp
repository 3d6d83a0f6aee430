#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace dmet {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline bool all_finite(const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) return false;
  return true;
}

/// Rows of the result are the given vectors; all must share one length.
inline Matrix stack_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) return Matrix(0, 0);
  Matrix out(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return out;
}

/// Largest pairwise Euclidean distance between rows.
inline double point_cloud_diameter(const Matrix& points) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (Eigen::Index j = i + 1; j < points.rows(); ++j)
      best = std::max(best, (points.row(i) - points.row(j)).norm());
  return best;
}

}  // namespace dmet
