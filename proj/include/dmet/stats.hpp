#pragma once

// Regression and correlation over per-trajectory metric rows: OLS, a
// two-stage random-intercept fit, Pearson/Spearman, LTTR and per-cell
// sweep aggregation.

#include "dmet/core.hpp"
#include "dmet/error.hpp"
#include "dmet/io.hpp"
#include "dmet/linalg.hpp"

#include <Eigen/QR>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dmet {

/// One analyzed trajectory: its cell, its dynamics metrics and, when
/// ingested, its quality scores.
struct MetricRow {
  std::string sample_id;
  GridCell cell;
  double C = 0.0;
  double Q = 0.0;
  double P = 0.0;
  std::optional<QualityScores> quality;
};

inline constexpr std::array<std::string_view, 3> kMetricFields{"C", "Q", "P"};

inline bool is_metric_field(std::string_view name) {
  return std::find(kMetricFields.begin(), kMetricFields.end(), name) != kMetricFields.end();
}

inline bool is_quality_field(std::string_view name) {
  return std::find(std::begin(kQualityFields), std::end(kQualityFields), name) != std::end(kQualityFields);
}

/// Value of a metric (C, Q, P) or quality field; throws if the row has no quality.
inline double row_value(const MetricRow& row, std::string_view name) {
  if (name == "C") return row.C;
  if (name == "Q") return row.Q;
  if (name == "P") return row.P;
  if (!is_quality_field(name)) throw ValidationError("unknown field '" + std::string(name) + "'");
  if (!row.quality) throw ValidationError("row " + row.sample_id + " has no quality scores");
  return quality_field(*row.quality, name);
}

// ---------------------------------------------------------------------------
// Ordinary least squares

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double t_value = 0.0;
  double p_value = 1.0;
};

struct OlsResult {
  std::vector<Coefficient> coefficients;
  Vector residuals;
  double rss = 0.0;
  double sigma2 = 0.0;
  int df = 0;
  std::size_t n = 0;
};

inline double two_sided_t_p(double t, int df) {
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(static_cast<double>(df));
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

namespace detail {

inline std::vector<std::string> default_names(Eigen::Index p) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

inline void fill_inference(OlsResult& r, const Matrix& X) {
  // Var(beta) = sigma^2 (X^T X)^{-1}, computed from the triangular factor.
  Eigen::ColPivHouseholderQR<Matrix> qr(X);
  const Eigen::Index p = X.cols();
  Matrix R = qr.matrixR().topLeftCorner(p, p).template triangularView<Eigen::Upper>();
  Matrix Rinv = R.template triangularView<Eigen::Upper>().solve(Matrix::Identity(p, p));
  const Matrix cov_perm = Rinv * Rinv.transpose();
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index a = 0; a < p; ++a) {
    auto& c = r.coefficients[static_cast<std::size_t>(perm[a])];
    c.std_error = std::sqrt(std::max(0.0, r.sigma2 * cov_perm(a, a)));
    if (c.std_error > 0.0) {
      c.t_value = c.estimate / c.std_error;
      c.p_value = two_sided_t_p(c.t_value, r.df);
    } else {
      // Exact fit: any nonzero estimate is infinitely significant.
      c.t_value = c.estimate == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), c.estimate);
      c.p_value = c.estimate == 0.0 ? 1.0 : 0.0;
    }
  }
}

}  // namespace detail

/// Least squares with classical standard errors and two-sided t p-values.
/// `df` defaults to n - p.
inline OlsResult ols_fit(const Matrix& X, const Vector& y, std::vector<std::string> names = {},
                         std::optional<int> df = std::nullopt) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (y.size() != n) throw ValidationError("OLS: response length != design rows");
  if (p < 1) throw ValidationError("OLS needs at least one predictor");
  if (n <= p) throw ValidationError("OLS needs n > p (n=" + std::to_string(n) + ", p=" + std::to_string(p) + ")");
  if (!X.allFinite() || !all_finite(y)) throw ValidationError("OLS input has non-finite entries");
  if (names.empty()) names = detail::default_names(p);
  if (static_cast<Eigen::Index>(names.size()) != p) throw ValidationError("OLS: name count != predictor count");

  Eigen::ColPivHouseholderQR<Matrix> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    // Pivoted QR moves the dependent columns to the back.
    std::vector<std::string> dependent;
    for (Eigen::Index a = qr.rank(); a < p; ++a) dependent.push_back(names[static_cast<std::size_t>(qr.colsPermutation().indices()[a])]);
    std::sort(dependent.begin(), dependent.end());
    std::string list;
    for (const auto& d : dependent) list += (list.empty() ? "" : ", ") + d;
    throw ValidationError("design matrix is rank deficient; collinear columns: " + list);
  }

  OlsResult r;
  r.n = static_cast<std::size_t>(n);
  const Vector beta = qr.solve(y);
  r.residuals = y - X * beta;
  r.rss = r.residuals.squaredNorm();
  r.df = df.value_or(static_cast<int>(n - p));
  if (r.df < 1) throw ValidationError("OLS: no residual degrees of freedom");
  r.sigma2 = r.rss / r.df;
  for (Eigen::Index j = 0; j < p; ++j) r.coefficients.push_back({names[static_cast<std::size_t>(j)], beta[j], 0.0, 0.0, 1.0});
  detail::fill_inference(r, X);
  return r;
}

// ---------------------------------------------------------------------------
// Random-intercept fit grouped by decoding cell

struct RegressionSpec {
  std::string response;
  std::vector<std::string> predictors{"C", "Q", "P"};
};

struct RegressionReport {
  std::string response;
  std::vector<Coefficient> coefficients;
  /// Method-of-moments variance of the cell intercepts, floored at 0.
  double group_variance = 0.0;
  /// F-test of "all cell intercepts equal".
  double group_p_value = 1.0;
  double sigma2 = 0.0;
  std::size_t n = 0;
  std::size_t groups = 0;
  int df = 0;
  /// Set when only one cell was present and a plain OLS fit with intercept was used.
  bool single_group_fallback = false;
};

inline std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

inline void validate(const RegressionSpec& spec) {
  if (spec.predictors.empty()) throw ValidationError("regression needs at least one predictor");
  if (!is_quality_field(spec.response)) throw ValidationError("unknown response '" + spec.response + "'");
  std::set<std::string> seen;
  for (const auto& p : spec.predictors) {
    if (!is_metric_field(p)) throw ValidationError("unknown predictor '" + p + "' (expected C, Q or P)");
    if (!seen.insert(p).second) throw ValidationError("duplicate predictor '" + p + "'");
  }
}

/// Two-stage estimate of y = X beta + u_cell + e:
///   1. OLS on cell-mean-centered y and X gives beta (within estimator);
///   2. the cell residual means r_j = ybar_j - xbar_j beta give the
///      intercept variance by moments, var(r_j) - mean(sigma^2 / n_j).
/// Residual df is n - p - G, one per absorbed cell mean.
inline RegressionReport grouped_fit(const RegressionSpec& spec, const std::vector<MetricRow>& rows) {
  validate(spec);
  if (rows.empty()) throw ValidationError("regression: no rows");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(spec.predictors.size());
  Matrix X(n, p);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    y[i] = row_value(row, spec.response);
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = row_value(row, spec.predictors[static_cast<std::size_t>(j)]);
  }

  std::map<GridCell, std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < n; ++i) groups[rows[static_cast<std::size_t>(i)].cell].push_back(i);

  RegressionReport rep;
  rep.response = spec.response;
  rep.n = rows.size();
  rep.groups = groups.size();

  if (groups.size() == 1) {
    Matrix Xi(n, p + 1);
    Xi.col(0).setOnes();
    Xi.rightCols(p) = X;
    std::vector<std::string> names{"intercept"};
    names.insert(names.end(), spec.predictors.begin(), spec.predictors.end());
    OlsResult fit = ols_fit(Xi, y, names);
    rep.coefficients.assign(fit.coefficients.begin() + 1, fit.coefficients.end());
    rep.sigma2 = fit.sigma2;
    rep.df = fit.df;
    rep.single_group_fallback = true;
    return rep;
  }

  Matrix Xc = X;
  Vector yc = y;
  for (const auto& [cell, idx] : groups) {
    if (idx.size() < 2)
      throw ValidationError("regression: cell (temperature=" + format_double(cell.temperature) +
                            ", top_p=" + format_double(cell.top_p) + ") has fewer than 2 rows");
    Vector xm = Vector::Zero(p);
    double ym = 0.0;
    for (auto i : idx) {
      xm += X.row(i).transpose();
      ym += y[i];
    }
    xm /= static_cast<double>(idx.size());
    ym /= static_cast<double>(idx.size());
    for (auto i : idx) {
      Xc.row(i) -= xm.transpose();
      yc[i] -= ym;
    }
  }
  const int G = static_cast<int>(groups.size());
  const int df = static_cast<int>(n - p) - G;
  if (df < 1) throw ValidationError("regression: too few rows for " + std::to_string(G) + " cells and " +
                                    std::to_string(p) + " predictors");
  OlsResult fit = ols_fit(Xc, yc, spec.predictors, df);
  rep.coefficients = fit.coefficients;
  rep.sigma2 = fit.sigma2;
  rep.df = fit.df;

  Vector beta(p);
  for (Eigen::Index j = 0; j < p; ++j) beta[j] = fit.coefficients[static_cast<std::size_t>(j)].estimate;
  std::vector<double> means, sizes;
  for (const auto& [cell, idx] : groups) {
    double r = 0.0;
    for (auto i : idx) r += y[i] - X.row(i).dot(beta);
    means.push_back(r / static_cast<double>(idx.size()));
    sizes.push_back(static_cast<double>(idx.size()));
  }
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / G;
  double between = 0.0, noise = 0.0, weighted = 0.0;
  for (int j = 0; j < G; ++j) {
    between += (means[j] - grand) * (means[j] - grand);
    noise += fit.sigma2 / sizes[j];
  }
  between /= (G - 1);
  noise /= G;
  rep.group_variance = std::max(0.0, between - noise);

  // F = (between-cell mean square) / sigma^2 on (G-1, df) degrees of freedom.
  double wmean = 0.0, wsum = 0.0;
  for (int j = 0; j < G; ++j) {
    wmean += sizes[j] * means[j];
    wsum += sizes[j];
  }
  wmean /= wsum;
  for (int j = 0; j < G; ++j) weighted += sizes[j] * (means[j] - wmean) * (means[j] - wmean);
  const double msb = weighted / (G - 1);
  if (fit.sigma2 > 0.0) {
    boost::math::fisher_f dist(G - 1, df);
    rep.group_p_value = std::clamp(boost::math::cdf(boost::math::complement(dist, msb / fit.sigma2)), 0.0, 1.0);
  } else {
    rep.group_p_value = msb > 0.0 ? 0.0 : 1.0;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Correlation

struct Correlation {
  double pearson = 0.0;
  double spearman = 0.0;
};

/// Average ranks (1-based); ties share the mean of their positions.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("correlation: length mismatch");
  if (x.size() < 3) throw ValidationError("correlation needs at least 3 pairs");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateError("correlation undefined: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("correlation: length mismatch");
  return pearson(average_ranks(x), average_ranks(y));
}

inline Correlation correlations(const std::vector<double>& x, const std::vector<double>& y) {
  return {pearson(x, y), spearman(x, y)};
}

inline Correlation correlations(const std::vector<MetricRow>& rows, std::string_view x, std::string_view y) {
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    xs.push_back(row_value(r, x));
    ys.push_back(row_value(r, y));
  }
  return correlations(xs, ys);
}

// ---------------------------------------------------------------------------
// Lexical diversity

/// log(#types) / log(#tokens); 0 for a single-type sequence.
template <class Token>
double lexical_diversity(const std::vector<Token>& tokens) {
  if (tokens.size() < 2) throw ValidationError("LTTR needs at least 2 tokens");
  std::set<Token> types(tokens.begin(), tokens.end());
  if (types.size() == 1) return 0.0;
  return std::log(static_cast<double>(types.size())) / std::log(static_cast<double>(tokens.size()));
}

// ---------------------------------------------------------------------------
// Sweep aggregation

struct Summary {
  double mean = 0.0;
  /// Sample standard deviation; 0 below two values.
  double std = 0.0;
  std::size_t count = 0;
};

inline Summary summarize(const std::vector<double>& v) {
  Summary s;
  s.count = v.size();
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct SweepRow {
  GridCell cell;
  std::size_t count = 0;
  /// Fewer than two samples in this cell.
  bool flagged = false;
  /// Keyed by C, Q, P and each quality field present in the cell.
  std::map<std::string, Summary> fields;
};

struct SweepTable {
  std::vector<SweepRow> rows;
};

inline const std::vector<std::string>& sweep_field_order() {
  static const std::vector<std::string> order = [] {
    std::vector<std::string> v{"C", "Q", "P"};
    for (auto f : kQualityFields) v.emplace_back(f);
    return v;
  }();
  return order;
}

/// One row per grid cell, in grid order (cells without samples are flagged).
inline SweepTable sweep_aggregate(const std::vector<MetricRow>& rows, const std::vector<GridCell>& grid) {
  if (rows.empty()) throw ValidationError("sweep aggregation: empty dataset");
  std::vector<GridCell> cells = grid;
  if (cells.empty()) {
    std::set<GridCell> seen;
    for (const auto& r : rows) seen.insert(r.cell);
    cells.assign(seen.begin(), seen.end());
  }
  SweepTable table;
  std::vector<char> used(rows.size(), 0);
  for (const auto& cell : cells) {
    SweepRow out;
    out.cell = cell;
    std::map<std::string, std::vector<double>> values;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (!cell.matches(r.cell.temperature, r.cell.top_p)) continue;
      used[i] = 1;
      ++out.count;
      values["C"].push_back(r.C);
      values["Q"].push_back(r.Q);
      values["P"].push_back(r.P);
      if (r.quality)
        for (auto f : kQualityFields) values[std::string(f)].push_back(quality_field(*r.quality, f));
    }
    out.flagged = out.count < 2;
    for (auto& [name, v] : values) out.fields[name] = summarize(v);
    table.rows.push_back(std::move(out));
  }
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (!used[i]) throw ValidationError("row " + rows[i].sample_id + " lies outside the grid");
  return table;
}

}  // namespace dmet
