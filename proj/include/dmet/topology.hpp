#pragma once

// Vietoris-Rips persistent homology in dimensions 0 and 1.
//
// Two routes compute the same diagram:
//  * rips_filtration + persistence_diagram: explicit simplex list and a
//    boundary-matrix reduction over Z/2, usable on any filtration.
//  * rips_persistence: union-find for H0 and a coboundary (cohomology)
//    reduction for H1 that never materializes the triangle list.
//
// Simplices are totally ordered by (value, dimension, sorted vertex tuple).
// Zero-length H0 bars are kept, so there is one H0 bar per point; zero-length
// H1 bars (an edge and a triangle entering together) are dropped.

#include "dmet/error.hpp"
#include "dmet/linalg.hpp"
#include "dmet/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace dmet {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct Simplex {
  /// Sorted ascending; entries past dim are unused (-1).
  std::array<int, 3> vertices{-1, -1, -1};
  int dim = 0;
  double value = 0.0;

  bool operator==(const Simplex&) const = default;
};

inline bool filtration_less(const Simplex& a, const Simplex& b) {
  return std::tie(a.value, a.dim, a.vertices) < std::tie(b.value, b.dim, b.vertices);
}

struct Filtration {
  std::vector<Simplex> simplices;
};

struct PersistenceBar {
  int dim = 0;
  double birth = 0.0;
  double death = kInfinity;
  bool significant = false;

  bool finite() const { return std::isfinite(death); }
  double lifespan() const { return death - birth; }
  bool operator==(const PersistenceBar&) const = default;
};

struct PersistenceDiagram {
  std::vector<PersistenceBar> bars;
  /// Filtration range the diagram was computed over.
  double max_radius = kInfinity;
  /// 95th percentile of the permutation null (set by significant_features).
  std::optional<double> null_threshold;

  std::size_t count(int dim) const {
    return static_cast<std::size_t>(std::count_if(bars.begin(), bars.end(), [&](const auto& b) { return b.dim == dim; }));
  }
};

inline void sort_bars(std::vector<PersistenceBar>& bars) {
  std::sort(bars.begin(), bars.end(), [](const PersistenceBar& a, const PersistenceBar& b) {
    return std::tie(a.dim, a.birth, a.death) < std::tie(b.dim, b.birth, b.death);
  });
}

namespace detail {

inline Matrix distance_matrix(const Matrix& points) {
  const Eigen::Index n = points.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (points.row(i) - points.row(j)).norm();
  return d;
}

inline void check_points(const Matrix& points) {
  if (points.rows() < 1) throw ValidationError("persistence needs at least one point");
  if (!points.allFinite()) throw ValidationError("point cloud has non-finite coordinates");
}

}  // namespace detail

/// Rips complex up to dimension 2: vertices at 0, edges at their length,
/// triangles at their longest edge; only simplices with value <= max_radius.
inline Filtration rips_filtration(const Matrix& points, double max_radius) {
  detail::check_points(points);
  if (!(max_radius >= 0.0)) throw ValidationError("max_radius must be >= 0");
  const int n = static_cast<int>(points.rows());
  const Matrix dist = detail::distance_matrix(points);
  Filtration f;
  for (int i = 0; i < n; ++i) f.simplices.push_back({{i, -1, -1}, 0, 0.0});
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (dist(i, j) <= max_radius) f.simplices.push_back({{i, j, -1}, 1, dist(i, j)});
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (dist(i, j) > max_radius) continue;
      for (int k = j + 1; k < n; ++k) {
        const double v = std::max({dist(i, j), dist(i, k), dist(j, k)});
        if (v <= max_radius) f.simplices.push_back({{i, j, k}, 2, v});
      }
    }
  std::sort(f.simplices.begin(), f.simplices.end(), filtration_less);
  return f;
}

/// Boundary-matrix reduction (with clearing) of an explicit filtration of
/// dimension <= 2. Requires every face to precede its cofaces.
inline PersistenceDiagram persistence_diagram(const Filtration& filtration) {
  const auto& s = filtration.simplices;
  const std::size_t m = s.size();
  std::map<std::pair<int, std::array<int, 3>>, std::size_t> index;
  for (std::size_t i = 0; i < m; ++i) {
    if (s[i].dim < 0 || s[i].dim > 2) throw ValidationError("filtration simplices must have dimension 0..2");
    if (i > 0 && filtration_less(s[i], s[i - 1])) throw ValidationError("filtration is not sorted");
    index[{s[i].dim, s[i].vertices}] = i;
  }

  std::vector<std::vector<std::size_t>> columns(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Simplex& sx = s[i];
    if (sx.dim == 0) continue;
    for (int drop = 0; drop <= sx.dim; ++drop) {
      std::array<int, 3> face{-1, -1, -1};
      for (int v = 0, w = 0; v <= sx.dim; ++v)
        if (v != drop) face[static_cast<std::size_t>(w++)] = sx.vertices[static_cast<std::size_t>(v)];
      auto it = index.find({sx.dim - 1, face});
      if (it == index.end() || it->second >= i) throw ValidationError("filtration: a face does not precede its coface");
      if (s[it->second].value > sx.value) throw ValidationError("filtration: a face has a larger value than its coface");
      columns[i].push_back(it->second);
    }
    std::sort(columns[i].begin(), columns[i].end());
  }

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> pivot_owner(m, kNone);  // row -> column whose low it is
  std::vector<std::size_t> low(m, kNone);
  std::vector<char> cleared(m, 0);

  auto reduce = [&](std::size_t j) {
    auto& col = columns[j];
    while (!col.empty()) {
      const std::size_t l = col.back();
      const std::size_t other = pivot_owner[l];
      if (other == kNone) {
        pivot_owner[l] = j;
        low[j] = l;
        return;
      }
      std::vector<std::size_t> sum;
      std::set_symmetric_difference(col.begin(), col.end(), columns[other].begin(), columns[other].end(),
                                    std::back_inserter(sum));
      col.swap(sum);
    }
  };

  // Clearing: reduce triangles first; an edge that is a triangle's pivot is positive.
  for (int dim = 2; dim >= 1; --dim)
    for (std::size_t j = 0; j < m; ++j) {
      if (s[j].dim != dim || cleared[j]) continue;
      reduce(j);
      if (low[j] != kNone) cleared[low[j]] = 1;
    }

  PersistenceDiagram out;
  std::vector<char> paired(m, 0);
  for (std::size_t j = 0; j < m; ++j) {
    if (low[j] == kNone) continue;
    const std::size_t i = low[j];
    paired[i] = paired[j] = 1;
    const int dim = s[i].dim;
    if (dim > 1) continue;
    if (dim == 1 && !(s[j].value > s[i].value)) continue;
    out.bars.push_back({dim, s[i].value, s[j].value, false});
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (paired[i] || s[i].dim > 1) continue;
    // Unpaired with a zero column: an essential class.
    if (s[i].dim == 1 && !columns[i].empty()) continue;
    out.bars.push_back({s[i].dim, s[i].value, kInfinity, false});
  }
  sort_bars(out.bars);
  return out;
}

/// Minimum over points of the distance to the farthest other point. At this
/// radius the Rips complex is a cone, so no finite feature outlives it.
inline double enclosing_radius(const Matrix& dist) {
  double best = kInfinity;
  for (Eigen::Index i = 0; i < dist.rows(); ++i) best = std::min(best, dist.row(i).maxCoeff());
  return dist.rows() == 0 ? 0.0 : best;
}

namespace detail {

struct Triangle {
  double value;
  int a, b, c;  // a < b < c

  bool operator==(const Triangle& o) const { return a == o.a && b == o.b && c == o.c; }
  bool operator>(const Triangle& o) const { return std::tie(value, a, b, c) > std::tie(o.value, o.a, o.b, o.c); }
  bool operator<(const Triangle& o) const { return std::tie(value, a, b, c) < std::tie(o.value, o.a, o.b, o.c); }
};

struct Edge {
  double value;
  int a, b;  // a < b
};

class CoboundaryReducer {
 public:
  CoboundaryReducer(const Matrix& dist, double radius, std::vector<Edge> edges)
      : dist_(dist), radius_(radius), edges_(std::move(edges)), n_(static_cast<int>(dist.rows())) {}

  template <class Visit>
  void for_each_cofacet(std::size_t e, Visit&& visit) const {
    const Edge& ed = edges_[e];
    // Columns are contiguous; the matrix is symmetric.
    const double* da = dist_.col(ed.a).data();
    const double* db = dist_.col(ed.b).data();
    for (int c = 0; c < n_; ++c) {
      const double v = std::max(ed.value, std::max(da[c], db[c]));
      if (v > radius_ || c == ed.a || c == ed.b) continue;
      int lo = ed.a, mid = ed.b, hi = c;
      if (hi < mid) std::swap(hi, mid);
      if (mid < lo) std::swap(mid, lo);
      visit(Triangle{v, lo, mid, hi});
    }
  }

  std::optional<Triangle> min_cofacet(std::size_t e) const {
    const Edge& ed = edges_[e];
    if (n_ < 3) return std::nullopt;
    const auto far = dist_.col(ed.a).cwiseMax(dist_.col(ed.b));
    double m = kInfinity;
    if (ed.a > 0) m = std::min(m, far.head(ed.a).minCoeff());
    if (ed.b - ed.a > 1) m = std::min(m, far.segment(ed.a + 1, ed.b - ed.a - 1).minCoeff());
    if (ed.b + 1 < n_) m = std::min(m, far.tail(n_ - ed.b - 1).minCoeff());
    const double v = std::max(ed.value, m);
    if (v > radius_) return std::nullopt;
    // With a < b fixed, the sorted triple grows with the third vertex, so the
    // first vertex reaching the minimal value gives the minimal cofacet.
    for (int c = 0; c < n_; ++c) {
      if (c == ed.a || c == ed.b || far[c] > v) continue;
      int lo = ed.a, mid = ed.b, hi = c;
      if (hi < mid) std::swap(hi, mid);
      if (mid < lo) std::swap(mid, lo);
      return Triangle{v, lo, mid, hi};
    }
    return std::nullopt;
  }

  std::int64_t key(const Triangle& t) const {
    return (static_cast<std::int64_t>(t.a) * n_ + t.b) * n_ + t.c;
  }

  /// Reduces the coboundary column of edge e against earlier columns.
  /// Returns the death triangle, or nullopt for an essential class.
  std::optional<Triangle> reduce(std::size_t e) {
    auto first = min_cofacet(e);
    if (!first) return std::nullopt;
    if (!pivots_.contains(key(*first))) {
      pivots_.emplace(key(*first), std::vector<std::size_t>{e});
      return first;
    }
    std::priority_queue<Triangle, std::vector<Triangle>, std::greater<>> column;
    std::vector<std::size_t> combo{e};
    for_each_cofacet(e, [&](const Triangle& t) { column.push(t); });
    while (true) {
      auto pivot = pop_pivot(column);
      if (!pivot) return std::nullopt;
      auto it = pivots_.find(key(*pivot));
      if (it == pivots_.end()) {
        pivots_.emplace(key(*pivot), std::move(combo));
        return pivot;
      }
      for (std::size_t f : it->second) for_each_cofacet(f, [&](const Triangle& t) { column.push(t); });
      std::vector<std::size_t> sum;
      std::set_symmetric_difference(combo.begin(), combo.end(), it->second.begin(), it->second.end(),
                                    std::back_inserter(sum));
      combo.swap(sum);
      // The pivot itself cancelled; push it back so pop_pivot sees an even count.
      column.push(*pivot);
    }
  }

 private:
  using Heap = std::priority_queue<Triangle, std::vector<Triangle>, std::greater<>>;

  static std::optional<Triangle> pop_pivot(Heap& column) {
    while (!column.empty()) {
      Triangle top = column.top();
      column.pop();
      if (!column.empty() && column.top() == top) {
        column.pop();
        continue;
      }
      return top;
    }
    return std::nullopt;
  }

  const Matrix& dist_;
  double radius_;
  std::vector<Edge> edges_;
  int n_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> pivots_;
};

inline int find_root(std::vector<int>& parent, int x) {
  while (parent[static_cast<std::size_t>(x)] != x) {
    parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    x = parent[static_cast<std::size_t>(x)];
  }
  return x;
}

}  // namespace detail

/// Rips persistence (H0 and H1) without building the triangle list.
/// Produces the same bars as persistence_diagram(rips_filtration(points, max_radius)).
inline PersistenceDiagram rips_persistence(const Matrix& points, double max_radius) {
  detail::check_points(points);
  if (!(max_radius >= 0.0)) throw ValidationError("max_radius must be >= 0");
  const int n = static_cast<int>(points.rows());
  const Matrix dist = detail::distance_matrix(points);
  const double radius = std::min(max_radius, enclosing_radius(dist));

  std::vector<detail::Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (dist(i, j) <= radius) edges.push_back({dist(i, j), i, j});
  std::sort(edges.begin(), edges.end(), [](const detail::Edge& x, const detail::Edge& y) {
    return std::tie(x.value, x.a, x.b) < std::tie(y.value, y.a, y.b);
  });

  PersistenceDiagram out;
  out.max_radius = max_radius;

  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<char> merges(edges.size(), 0);
  int components = n;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const int ra = detail::find_root(parent, edges[e].a);
    const int rb = detail::find_root(parent, edges[e].b);
    if (ra == rb) continue;
    parent[static_cast<std::size_t>(std::max(ra, rb))] = std::min(ra, rb);
    merges[e] = 1;
    --components;
    out.bars.push_back({0, 0.0, edges[e].value, false});
  }
  for (int c = 0; c < components; ++c) out.bars.push_back({0, 0.0, kInfinity, false});

  detail::CoboundaryReducer reducer(dist, radius, edges);
  for (std::size_t e = edges.size(); e-- > 0;) {
    if (merges[e]) continue;
    auto death = reducer.reduce(e);
    if (!death) {
      out.bars.push_back({1, edges[e].value, kInfinity, false});
    } else if (death->value > edges[e].value) {
      out.bars.push_back({1, edges[e].value, death->value, false});
    }
  }
  sort_bars(out.bars);
  return out;
}

/// Sum of lifespans of bars in the given dimension. Infinite bars are
/// skipped when finite_only is set; otherwise they make the sum infinite.
inline double total_persistence(const PersistenceDiagram& diagram, int dim, bool finite_only = true) {
  double total = 0.0;
  for (const auto& bar : diagram.bars) {
    if (bar.dim != dim) continue;
    if (!bar.finite() && finite_only) continue;
    total += std::abs(bar.death - bar.birth);
  }
  return total;
}

struct PersistenceConfig {
  /// Filtration range; defaults to the point-cloud diameter.
  std::optional<double> max_radius;
  /// Minimum lifespan as a fraction of max_radius.
  double rho = 0.2;
  int n_permutations = 200;
  std::uint64_t seed = 0;
};

namespace detail {

/// Lifespan used for significance; essential bars are cut at max_radius.
inline double capped_lifespan(const PersistenceBar& bar, double max_radius) {
  return (bar.finite() ? bar.death : max_radius) - bar.birth;
}

inline double max_h1_lifespan(const PersistenceDiagram& d, double max_radius) {
  double best = 0.0;
  for (const auto& bar : d.bars)
    if (bar.dim == 1) best = std::max(best, capped_lifespan(bar, max_radius));
  return best;
}

}  // namespace detail

/// Flags H1 bars that beat a coordinate-shuffle null. Each replicate permutes
/// every coordinate column independently; a bar is significant iff its
/// lifespan exceeds the 95th percentile (nearest rank) of the replicates'
/// largest H1 lifespan and lifespan / max_radius > rho. H0 bars are never flagged.
inline PersistenceDiagram significant_features(const Matrix& points, const PersistenceConfig& config) {
  if (config.n_permutations < 1) throw ValidationError("n_permutations must be >= 1");
  if (!(config.rho > 0.0 && config.rho < 1.0)) throw ValidationError("rho must lie in (0, 1)");
  detail::check_points(points);
  const double max_radius = config.max_radius.value_or(point_cloud_diameter(points));
  if (!(max_radius > 0.0)) throw ValidationError("max_radius must be > 0");

  PersistenceDiagram diagram = rips_persistence(points, max_radius);

  std::vector<double> null_max;
  null_max.reserve(static_cast<std::size_t>(config.n_permutations));
  for (int r = 0; r < config.n_permutations; ++r) {
    Rng rng(derive_seed(config.seed, SeedStream::permutation, static_cast<std::uint64_t>(r)));
    Matrix shuffled = points;
    for (Eigen::Index c = 0; c < shuffled.cols(); ++c) {
      std::vector<double> column(shuffled.col(c).data(), shuffled.col(c).data() + shuffled.rows());
      std::shuffle(column.begin(), column.end(), rng);
      for (Eigen::Index i = 0; i < shuffled.rows(); ++i) shuffled(i, c) = column[static_cast<std::size_t>(i)];
    }
    null_max.push_back(detail::max_h1_lifespan(rips_persistence(shuffled, max_radius), max_radius));
  }
  std::sort(null_max.begin(), null_max.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(null_max.size())));
  const double threshold = null_max[std::max<std::size_t>(rank, 1) - 1];

  diagram.null_threshold = threshold;
  for (auto& bar : diagram.bars) {
    if (bar.dim != 1) continue;
    const double life = detail::capped_lifespan(bar, max_radius);
    bar.significant = life > threshold && life / max_radius > config.rho;
  }
  return diagram;
}

}  // namespace dmet
