#pragma once

// k-means++ attractor clustering and silhouette quality Q.

#include "dmet/error.hpp"
#include "dmet/linalg.hpp"
#include "dmet/random.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

namespace dmet {

struct ClusterAssignment {
  std::vector<int> labels;
  Matrix centroids;
  double inertia = 0.0;
  std::uint64_t seed = 0;
  int iterations = 0;
  /// Inertia after every centroid update; non-increasing.
  std::vector<double> inertia_trace;

  int k() const { return static_cast<int>(centroids.rows()); }
};

inline constexpr int kKmeansMaxIterations = 300;

namespace detail {

inline double sq_dist(const Matrix& points, Eigen::Index i, const Matrix& centroids, Eigen::Index c) {
  return (points.row(i) - centroids.row(c)).squaredNorm();
}

inline Matrix kmeanspp_init(const Matrix& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  Matrix centroids(k, points.cols());
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  Eigen::Index first = pick(rng);
  centroids.row(0) = points.row(first);
  chosen[static_cast<std::size_t>(first)] = 1;

  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = sq_dist(points, i, centroids, 0);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    Eigen::Index next = -1;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (acc >= target && d2[static_cast<std::size_t>(i)] > 0.0) {
          next = i;
          break;
        }
      }
      if (next < 0)  // rounding at the tail
        for (Eigen::Index i = n - 1; i >= 0; --i)
          if (d2[static_cast<std::size_t>(i)] > 0.0) {
            next = i;
            break;
          }
    } else {
      // Every remaining point coincides with a centroid.
      for (Eigen::Index i = 0; i < n; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) {
          next = i;
          break;
        }
    }
    chosen[static_cast<std::size_t>(next)] = 1;
    centroids.row(c) = points.row(next);
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sq_dist(points, i, centroids, c));
  }
  return centroids;
}

inline double inertia_of(const Matrix& points, const std::vector<int>& labels, const Matrix& centroids) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) s += sq_dist(points, i, centroids, labels[static_cast<std::size_t>(i)]);
  return s;
}

/// Recomputes centroids as member means. An empty cluster takes the point
/// farthest from its own centroid (drawn from a cluster with >= 2 members).
inline void update_centroids(const Matrix& points, std::vector<int>& labels, Matrix& centroids) {
  const int k = static_cast<int>(centroids.rows());
  auto recompute = [&]() {
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    centroids.setZero();
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const int l = labels[static_cast<std::size_t>(i)];
      centroids.row(l) += points.row(i);
      ++counts[static_cast<std::size_t>(l)];
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0) centroids.row(c) /= counts[static_cast<std::size_t>(c)];
    return counts;
  };
  auto counts = recompute();
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) continue;
    Eigen::Index far = -1;
    double best = -1.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const int l = labels[static_cast<std::size_t>(i)];
      if (counts[static_cast<std::size_t>(l)] < 2) continue;
      const double dist = sq_dist(points, i, centroids, l);
      if (dist > best) {
        best = dist;
        far = i;
      }
    }
    labels[static_cast<std::size_t>(far)] = c;
    counts = recompute();
  }
}

}  // namespace detail

/// Lloyd iterations from a k-means++ start. Converges when no label
/// changes or after kKmeansMaxIterations; deterministic for a given seed.
inline ClusterAssignment kmeans(const Matrix& points, int k, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw ValidationError("k-means needs k >= 1");
  if (k > n) throw ValidationError("k-means: k=" + std::to_string(k) + " exceeds point count " + std::to_string(n));

  Rng rng(seed);
  ClusterAssignment out;
  out.seed = seed;
  out.centroids = detail::kmeanspp_init(points, k, rng);
  out.labels.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double bd = detail::sq_dist(points, i, out.centroids, 0);
    for (int c = 1; c < k; ++c) {
      const double dd = detail::sq_dist(points, i, out.centroids, c);
      if (dd < bd) {
        bd = dd;
        best = c;
      }
    }
    out.labels[static_cast<std::size_t>(i)] = best;
  }

  for (int iter = 0; iter < kKmeansMaxIterations; ++iter) {
    detail::update_centroids(points, out.labels, out.centroids);
    out.inertia_trace.push_back(detail::inertia_of(points, out.labels, out.centroids));
    out.iterations = iter + 1;
    // A point moves only to a strictly closer centroid.
    std::size_t changed = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int& label = out.labels[static_cast<std::size_t>(i)];
      int best = label;
      double bd = detail::sq_dist(points, i, out.centroids, label);
      for (int c = 0; c < k; ++c) {
        const double dd = detail::sq_dist(points, i, out.centroids, c);
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      if (best != label) {
        label = best;
        ++changed;
      }
    }
    if (changed == 0) break;
    if (iter + 1 == kKmeansMaxIterations) {
      detail::update_centroids(points, out.labels, out.centroids);
      out.inertia_trace.push_back(detail::inertia_of(points, out.labels, out.centroids));
    }
  }
  out.inertia = detail::inertia_of(points, out.labels, out.centroids);
  return out;
}

/// Best of n_init runs seeded seed, seed+1, ...: lowest inertia, then lowest seed.
inline ClusterAssignment kmeans_restarts(const Matrix& points, int k, std::uint64_t seed, int n_init) {
  if (n_init < 1) throw ValidationError("k-means needs n_init >= 1");
  ClusterAssignment best = kmeans(points, k, seed);
  for (int r = 1; r < n_init; ++r) {
    ClusterAssignment cand = kmeans(points, k, seed + static_cast<std::uint64_t>(r));
    if (cand.inertia < best.inertia) best = std::move(cand);
  }
  return best;
}

struct SilhouetteReport {
  std::vector<double> per_point;
  std::vector<double> a;
  std::vector<double> b;
  double Q = 0.0;
};

/// a(i): mean distance to the other members of i's cluster (0 for a singleton).
/// b(i): smallest mean distance to another cluster.
/// s(i) = (b - a) / max(a, b), with s(i) = 0 when max(a, b) = 0.
inline SilhouetteReport silhouette(const Matrix& points, std::span<const int> labels) {
  const Eigen::Index n = points.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ValidationError("silhouette: label count != point count");
  std::map<int, int> index;
  for (int l : labels) index.emplace(l, 0);
  if (index.size() < 2) throw ValidationError("silhouette undefined for k=1");
  int next = 0;
  for (auto& [label, idx] : index) idx = next++;
  const int k = next;

  std::vector<int> cluster(static_cast<std::size_t>(n));
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    cluster[static_cast<std::size_t>(i)] = index[labels[static_cast<std::size_t>(i)]];
    ++sizes[static_cast<std::size_t>(cluster[static_cast<std::size_t>(i)])];
  }

  SilhouetteReport r;
  r.per_point.resize(static_cast<std::size_t>(n));
  r.a.resize(static_cast<std::size_t>(n));
  r.b.resize(static_cast<std::size_t>(n));
  std::vector<double> sums(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      sums[static_cast<std::size_t>(cluster[static_cast<std::size_t>(j)])] += (points.row(i) - points.row(j)).norm();
    }
    const int own = cluster[static_cast<std::size_t>(i)];
    const int own_size = sizes[static_cast<std::size_t>(own)];
    const double a = own_size > 1 ? sums[static_cast<std::size_t>(own)] / (own_size - 1) : 0.0;
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != own) b = std::min(b, sums[static_cast<std::size_t>(c)] / sizes[static_cast<std::size_t>(c)]);
    const double m = std::max(a, b);
    const auto ui = static_cast<std::size_t>(i);
    r.a[ui] = a;
    r.b[ui] = b;
    r.per_point[ui] = m > 0.0 ? (b - a) / m : 0.0;
    r.Q += r.per_point[ui];
  }
  r.Q /= static_cast<double>(n);
  return r;
}

struct KSelection {
  int k = 0;
  ClusterAssignment assignment;
  SilhouetteReport silhouette;
  /// Mean silhouette for k = 2 .. k_max.
  std::vector<double> q_by_k;
};

inline constexpr int kDefaultKMax = 8;

/// Picks k in [2, k_max] maximizing mean silhouette; ties go to the smaller k.
/// k_max is capped at the number of points.
inline KSelection select_k(const Matrix& points, int k_max = kDefaultKMax, std::uint64_t seed = 0, int n_init = 10) {
  const Eigen::Index n = points.rows();
  if (n < 2) throw ValidationError("select_k needs at least 2 points");
  if (k_max < 2) throw ValidationError("select_k needs k_max >= 2");
  bool spread = false;
  for (Eigen::Index i = 1; i < n && !spread; ++i) spread = points.row(i) != points.row(0);
  if (!spread) throw DegenerateError("zero variance");

  const int cap = static_cast<int>(std::min<Eigen::Index>(k_max, n));
  KSelection best;
  for (int k = 2; k <= cap; ++k) {
    ClusterAssignment a = kmeans_restarts(points, k, seed, n_init);
    SilhouetteReport s = silhouette(points, a.labels);
    best.q_by_k.push_back(s.Q);
    if (best.k == 0 || s.Q > best.silhouette.Q) {
      best.k = k;
      best.assignment = std::move(a);
      best.silhouette = std::move(s);
    }
  }
  return best;
}

}  // namespace dmet
