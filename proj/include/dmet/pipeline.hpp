#pragma once

// Trajectory validation pipeline: distances and jumps, PCA reduction,
// attractor clustering and persistence, per trajectory and pooled over a
// dataset, plus the files an analysis run writes.

#include "dmet/clustering.hpp"
#include "dmet/core.hpp"
#include "dmet/io.hpp"
#include "dmet/metrics.hpp"
#include "dmet/pca.hpp"
#include "dmet/random.hpp"
#include "dmet/stats.hpp"
#include "dmet/topology.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace dmet {

struct AnalysisConfig {
  bool normalize = true;
  JumpMethod jump_method = JumpMethod::median_mad;
  double jump_z = 3.0;
  int k_max = kDefaultKMax;
  int n_init = 10;
  PcaTarget pca;
  /// One PCA fitted over every state of the dataset; otherwise one per trajectory.
  bool pooled = true;
  PersistenceConfig persistence;
  /// Point clouds larger than this are subsampled before persistence.
  std::size_t max_persistence_points = 300;
  std::uint64_t seed = 0;
};

struct DynamicsReport {
  std::string sample_id;
  GridCell cell;
  ContinuityReport continuity;
  JumpReport jumps;
  std::optional<KLReport> kl;
  int k = 0;
  double Q = 0.0;
  /// Total finite H1 persistence of the reduced trajectory.
  double P = 0.0;
  std::optional<QualityScores> quality;
};

struct PooledReport {
  PcaModel pca;
  /// Reduced coordinates of every state, trajectory after trajectory.
  std::vector<Matrix> coords;
  /// Endpoint clustering: one point per trajectory.
  KSelection endpoints;
  PersistenceDiagram persistence;
  std::size_t persistence_points = 0;
};

struct AnalysisResult {
  std::vector<DynamicsReport> reports;
  PooledReport pooled;
  std::vector<GridCell> grid;
};

inline const char* to_string(JumpMethod m) { return m == JumpMethod::mean_z ? "mean_z" : "median_mad"; }

inline JumpMethod parse_jump_method(std::string_view s) {
  if (s == "mean_z") return JumpMethod::mean_z;
  if (s == "median_mad") return JumpMethod::median_mad;
  throw ValidationError("unknown jump method '" + std::string(s) + "' (expected mean_z or median_mad)");
}

/// Rows in their original order when the cloud is small enough, otherwise a
/// seeded order-preserving sample of max_points rows.
inline Matrix subsample_rows(const Matrix& points, std::size_t max_points, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (n <= max_points) return points;
  std::vector<std::size_t> all(n), pick;
  std::iota(all.begin(), all.end(), 0);
  Rng rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(pick), max_points, rng);
  Matrix out(static_cast<Eigen::Index>(pick.size()), points.cols());
  for (std::size_t i = 0; i < pick.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = points.row(static_cast<Eigen::Index>(pick[i]));
  return out;
}

inline void validate(const AnalysisConfig& c) {
  if (!(c.jump_z > 0.0)) throw ValidationError("jump z must be > 0");
  if (c.k_max < 2) throw ValidationError("k_max must be >= 2");
  if (c.n_init < 1) throw ValidationError("n_init must be >= 1");
  if (c.max_persistence_points < 3) throw ValidationError("max_persistence_points must be >= 3");
  if (c.persistence.max_radius && !(*c.persistence.max_radius > 0.0)) throw ValidationError("max_radius must be > 0");
  if (!(c.persistence.rho > 0.0 && c.persistence.rho < 1.0)) throw ValidationError("rho must lie in (0, 1)");
  if (c.persistence.n_permutations < 1) throw ValidationError("n_permutations must be >= 1");
}

/// Metrics of one trajectory given its reduced coordinates.
inline DynamicsReport analyze_trajectory(const Trajectory& traj, const Matrix& reduced, const AnalysisConfig& config,
                                         std::uint64_t index) {
  DynamicsReport r;
  r.sample_id = traj.meta.sample_id;
  r.cell = {traj.meta.temperature, traj.meta.top_p};
  r.quality = traj.quality;
  r.continuity = continuity(traj, config.normalize);
  r.jumps.method = config.jump_method;
  if (traj.steps() >= 2) r.jumps = detect_jumps(r.continuity.delta, config.jump_method, config.jump_z);
  if (traj.token_distributions) r.kl = mean_successive_kl(traj);

  const KSelection sel = select_k(reduced, config.k_max, derive_seed(config.seed, SeedStream::cluster, index), config.n_init);
  r.k = sel.k;
  r.Q = sel.silhouette.Q;

  const Matrix cloud = subsample_rows(reduced, config.max_persistence_points, derive_seed(config.seed, SeedStream::subsample, index));
  const double radius = config.persistence.max_radius.value_or(point_cloud_diameter(cloud));
  r.P = radius > 0.0 ? total_persistence(rips_persistence(cloud, radius), 1) : 0.0;
  return r;
}

/// Runs the whole analysis; reports come back sorted by sample_id. Without
/// `pooled_artifacts` only the pooled PCA and the per-trajectory reports are computed.
inline AnalysisResult analyze(const Dataset& dataset, const AnalysisConfig& config, bool pooled_artifacts = true) {
  validate(dataset);
  validate(config);
  std::vector<const Trajectory*> trajs;
  for (const auto& t : dataset.trajectories) trajs.push_back(&t);
  std::sort(trajs.begin(), trajs.end(), [](auto* a, auto* b) { return a->meta.sample_id < b->meta.sample_id; });

  AnalysisResult out;
  out.grid = dataset.grid;
  std::vector<Matrix> raw;
  for (auto* t : trajs) raw.push_back(t->state_matrix());

  std::vector<Vector> all_states;
  for (auto* t : trajs) all_states.insert(all_states.end(), t->states.begin(), t->states.end());
  out.pooled.pca = pca_fit(stack_rows(all_states), config.pca);

  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const Matrix coords = pca_transform(out.pooled.pca, raw[i]);
    const Matrix reduced = config.pooled ? coords : pca_transform(pca_fit(raw[i], config.pca), raw[i]);
    try {
      out.reports.push_back(analyze_trajectory(*trajs[i], reduced, config, i));
    } catch (const Error& e) {
      throw DegenerateError(trajs[i]->meta.sample_id + ": " + e.what());
    }
    out.pooled.coords.push_back(coords);
  }
  if (!pooled_artifacts) return out;

  Matrix endpoints(static_cast<Eigen::Index>(trajs.size()), out.pooled.pca.dims());
  for (std::size_t i = 0; i < trajs.size(); ++i)
    endpoints.row(static_cast<Eigen::Index>(i)) = out.pooled.coords[i].row(out.pooled.coords[i].rows() - 1);
  if (trajs.size() >= 2)
    out.pooled.endpoints = select_k(endpoints, config.k_max, derive_seed(config.seed, SeedStream::cluster, trajs.size()), config.n_init);

  std::size_t total = 0;
  for (const auto& c : out.pooled.coords) total += static_cast<std::size_t>(c.rows());
  Matrix cloud(static_cast<Eigen::Index>(total), out.pooled.pca.dims());
  Eigen::Index row = 0;
  for (const auto& c : out.pooled.coords) {
    cloud.middleRows(row, c.rows()) = c;
    row += c.rows();
  }
  cloud = subsample_rows(cloud, config.max_persistence_points, derive_seed(config.seed, SeedStream::subsample, trajs.size()));
  PersistenceConfig pc = config.persistence;
  pc.seed = derive_seed(config.seed, SeedStream::permutation);
  out.pooled.persistence = significant_features(cloud, pc);
  out.pooled.persistence_points = static_cast<std::size_t>(cloud.rows());
  return out;
}

inline MetricRow metric_row(const DynamicsReport& r) { return {r.sample_id, r.cell, r.continuity.C, r.Q, r.P, r.quality}; }

// ---------------------------------------------------------------------------
// Output files

inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kPooledCoordsFile = "pooled_pca_coords.csv";
inline constexpr const char* kPooledLabelsFile = "pooled_cluster_labels.csv";
inline constexpr const char* kPooledPersistenceFile = "pooled_persistence.csv";
inline constexpr const char* kReportsDir = "reports";

inline std::vector<std::string> metrics_header() {
  std::vector<std::string> h{"sample_id", "temperature", "top_p", "C", "n_jumps", "mean_kl", "k", "Q", "P"};
  for (auto f : kQualityFields) h.emplace_back(f);
  return h;
}

inline std::string format_bound(double v) { return std::isinf(v) ? "inf" : format_double(v); }

inline json to_json(const DynamicsReport& r) {
  json j;
  j["sample_id"] = r.sample_id;
  j["temperature"] = r.cell.temperature;
  j["top_p"] = r.cell.top_p;
  j["normalized"] = r.continuity.normalized;
  j["C"] = r.continuity.C;
  j["delta"] = r.continuity.delta.delta;
  j["jumps"] = {{"method", to_string(r.jumps.method)}, {"threshold", r.jumps.threshold}, {"indices", r.jumps.indices}};
  if (r.kl) j["kl"] = {{"per_step", r.kl->per_step}, {"mean", r.kl->mean_kl}};
  else j["kl"] = nullptr;
  j["k"] = r.k;
  j["Q"] = r.Q;
  j["P"] = r.P;
  return j;
}

inline void write_analysis(const AnalysisResult& result, const AnalysisConfig& config, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / kReportsDir, ec);
  if (ec) throw IoError("cannot create '" + (dir / kReportsDir).string() + "': " + ec.message());

  CsvWriter metrics(metrics_header());
  for (const auto& r : result.reports) {
    std::vector<std::string> row{r.sample_id,
                                 format_double(r.cell.temperature),
                                 format_double(r.cell.top_p),
                                 format_double(r.continuity.C),
                                 std::to_string(r.jumps.indices.size()),
                                 r.kl ? format_double(r.kl->mean_kl) : "",
                                 std::to_string(r.k),
                                 format_double(r.Q),
                                 format_double(r.P)};
    for (auto f : kQualityFields) row.push_back(r.quality ? format_double(quality_field(*r.quality, f)) : "");
    metrics.row(row);
    detail::write_text(dir / kReportsDir / (r.sample_id + ".json"), to_json(r).dump(2) + "\n");
  }
  metrics.save(dir / kMetricsFile);

  const auto& pooled = result.pooled;
  std::vector<std::string> header{"sample_id", "t"};
  for (Eigen::Index c = 0; c < pooled.pca.dims(); ++c) header.push_back("pc" + std::to_string(c + 1));
  CsvWriter coords(header);
  for (std::size_t i = 0; i < result.reports.size(); ++i) {
    const Matrix& m = pooled.coords[i];
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
      std::vector<std::string> row{result.reports[i].sample_id, std::to_string(t)};
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(format_double(m(t, c)));
      coords.row(row);
    }
  }
  coords.save(dir / kPooledCoordsFile);

  CsvWriter labels({"sample_id", "label", "silhouette"});
  if (pooled.endpoints.k > 0)
    for (std::size_t i = 0; i < result.reports.size(); ++i)
      labels.row({result.reports[i].sample_id, std::to_string(pooled.endpoints.assignment.labels[i]),
                  format_double(pooled.endpoints.silhouette.per_point[i])});
  labels.save(dir / kPooledLabelsFile);

  CsvWriter bars({"dim", "birth", "death", "significant"});
  for (const auto& b : pooled.persistence.bars)
    bars.row({std::to_string(b.dim), format_double(b.birth), format_bound(b.death), b.significant ? "1" : "0"});
  bars.save(dir / kPooledPersistenceFile);

  json s;
  s["n_trajectories"] = result.reports.size();
  json grid = json::array();
  for (const auto& c : result.grid) grid.push_back({{"temperature", c.temperature}, {"top_p", c.top_p}});
  s["grid"] = grid;
  s["config"] = {{"normalize", config.normalize},
                 {"jump_method", to_string(config.jump_method)},
                 {"jump_z", config.jump_z},
                 {"k_max", config.k_max},
                 {"n_init", config.n_init},
                 {"pooled", config.pooled},
                 {"max_radius", config.persistence.max_radius ? json(*config.persistence.max_radius) : json(nullptr)},
                 {"rho", config.persistence.rho},
                 {"permutations", config.persistence.n_permutations},
                 {"seed", config.seed}};
  s["pca"] = {{"dims", pooled.pca.dims()},
              {"explained_ratio", std::vector<double>(pooled.pca.explained_ratio.begin(), pooled.pca.explained_ratio.end())},
              {"below_target", pooled.pca.below_target}};
  s["endpoints"] = {{"k", pooled.endpoints.k}, {"Q", pooled.endpoints.silhouette.Q}, {"q_by_k", pooled.endpoints.q_by_k}};
  std::size_t significant = 0;
  for (const auto& b : pooled.persistence.bars) significant += b.significant;
  s["persistence"] = {{"points", pooled.persistence_points},
                      {"max_radius", pooled.persistence.max_radius},
                      {"null_threshold", pooled.persistence.null_threshold ? json(*pooled.persistence.null_threshold) : json(nullptr)},
                      {"bars", pooled.persistence.bars.size()},
                      {"significant", significant}};
  detail::write_text(dir / kSummaryFile, s.dump(2) + "\n");
}

/// Metric rows and grid read back from an analysis directory. Quality
/// columns that are empty leave the row without quality.
struct AnalysisTable {
  std::vector<MetricRow> rows;
  std::vector<GridCell> grid;
  /// Quality columns with at least one empty entry.
  std::vector<std::string> missing_quality;
};

inline AnalysisTable read_analysis(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  for (const char* name : {kMetricsFile, kSummaryFile})
    if (!fs::exists(dir / name)) throw IoError("missing analysis output '" + (dir / name).string() + "'");
  AnalysisTable out;
  const json summary = detail::parse_file(dir / kSummaryFile);
  for (const auto& c : detail::field(summary, "grid", ""))
    out.grid.push_back({detail::number(detail::field(c, "temperature", "grid"), "grid.temperature"),
                        detail::number(detail::field(c, "top_p", "grid"), "grid.top_p")});

  const CsvTable csv = read_csv(dir / kMetricsFile);
  auto col = [&](std::string_view name) {
    auto c = csv.column(name);
    if (!c) throw ParseError(std::string(kMetricsFile) + ": missing column '" + std::string(name) + "'");
    return *c;
  };
  const std::size_t id = col("sample_id"), temp = col("temperature"), top = col("top_p"), C = col("C"), Q = col("Q"),
                    P = col("P");
  std::vector<std::size_t> qcols;
  for (auto f : kQualityFields) qcols.push_back(col(f));
  std::set<std::string> missing;
  for (const auto& r : csv.rows) {
    MetricRow m;
    m.sample_id = r[id];
    m.cell = {parse_double(r[temp], "temperature"), parse_double(r[top], "top_p")};
    m.C = parse_double(r[C], "C");
    m.Q = parse_double(r[Q], "Q");
    m.P = parse_double(r[P], "P");
    bool complete = true;
    for (std::size_t f = 0; f < qcols.size(); ++f)
      if (r[qcols[f]].empty()) {
        complete = false;
        missing.insert(kQualityFields[f]);
      }
    if (complete) {
      QualityScores q;
      for (std::size_t f = 0; f < qcols.size(); ++f) quality_field(q, kQualityFields[f]) = parse_double(r[qcols[f]], kQualityFields[f]);
      m.quality = q;
    }
    out.rows.push_back(std::move(m));
  }
  for (auto f : kQualityFields)
    if (missing.count(f)) out.missing_quality.emplace_back(f);
  return out;
}

}  // namespace dmet
