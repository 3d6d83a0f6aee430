#include "support.hpp"

#include <gtest/gtest.h>

using namespace dmet;
using testing_support::TempDir;

namespace {

Dataset small_synthetic(std::size_t steps = 40) {
  SimulatorConfig c = default_simulator_config();
  c.temperatures = {0.2, 1.5};
  c.top_ps = {1.0};
  c.samples_per_cell = 4;
  c.steps = steps;
  c.seed = 3;
  return synthesize_dataset(c);
}

AnalysisConfig quick_config() {
  AnalysisConfig c;
  c.persistence.n_permutations = 10;
  c.max_persistence_points = 100;
  return c;
}

}  // namespace

TEST(Analyze, ReportPerTrajectory) {
  const Dataset ds = small_synthetic();
  const AnalysisResult r = analyze(ds, quick_config());
  ASSERT_EQ(r.reports.size(), 8u);
  for (const auto& rep : r.reports) {
    EXPECT_GT(rep.continuity.C, 0.0);
    EXPECT_GE(rep.k, 2);
    EXPECT_GE(rep.Q, -1.0);
    EXPECT_LE(rep.Q, 1.0);
    EXPECT_GE(rep.P, 0.0);
    EXPECT_TRUE(rep.quality);
  }
  EXPECT_EQ(r.pooled.coords.size(), 8u);
  EXPECT_EQ(r.pooled.endpoints.assignment.labels.size(), 8u);
  EXPECT_LE(r.pooled.persistence_points, 100u);
  EXPECT_EQ(r.pooled.persistence.count(0), r.pooled.persistence_points);
}

TEST(Analyze, Deterministic) {
  const Dataset ds = small_synthetic();
  const AnalysisResult a = analyze(ds, quick_config()), b = analyze(ds, quick_config());
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    EXPECT_EQ(a.reports[i].continuity.C, b.reports[i].continuity.C);
    EXPECT_EQ(a.reports[i].Q, b.reports[i].Q);
    EXPECT_EQ(a.reports[i].P, b.reports[i].P);
  }
  EXPECT_EQ(a.pooled.persistence.bars, b.pooled.persistence.bars);
}

TEST(Analyze, HotterRunsAreRougher) {
  const AnalysisResult r = analyze(small_synthetic(), quick_config());
  double cold = 0.0, hot = 0.0;
  for (const auto& rep : r.reports) (rep.cell.temperature < 1.0 ? cold : hot) += rep.continuity.C;
  EXPECT_LT(cold, hot);
}

TEST(Analyze, PerTrajectoryPca) {
  AnalysisConfig c = quick_config();
  c.pooled = false;
  const AnalysisResult r = analyze(small_synthetic(), c);
  EXPECT_EQ(r.reports.size(), 8u);
}

TEST(Analyze, KlWhenDistributionsPresent) {
  Dataset ds = small_synthetic(10);
  for (auto& t : ds.trajectories) {
    std::vector<std::vector<double>> d;
    for (std::size_t i = 0; i < t.steps(); ++i) d.push_back(i % 2 ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.5, 0.5});
    t.token_distributions = d;
  }
  const AnalysisResult r = analyze(ds, quick_config());
  ASSERT_TRUE(r.reports[0].kl);
  EXPECT_GT(r.reports[0].kl->mean_kl, 0.0);
}

TEST(Analyze, ConfigValidation) {
  AnalysisConfig c = quick_config();
  c.k_max = 1;
  EXPECT_THROW(analyze(small_synthetic(), c), ValidationError);
  EXPECT_EQ(parse_jump_method("mean_z"), JumpMethod::mean_z);
  EXPECT_THROW(parse_jump_method("zscore"), ValidationError);
}

TEST(AnalysisFiles, WriteThenRead) {
  TempDir dir("analysis_rt");
  const Dataset ds = small_synthetic();
  const AnalysisConfig config = quick_config();
  const AnalysisResult r = analyze(ds, config);
  write_analysis(r, config, dir.path());
  for (const char* f : {kMetricsFile, kSummaryFile, kPooledCoordsFile, kPooledLabelsFile, kPooledPersistenceFile})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  const AnalysisTable t = read_analysis(dir.path());
  ASSERT_EQ(t.rows.size(), 8u);
  EXPECT_EQ(t.grid.size(), 2u);
  EXPECT_TRUE(t.missing_quality.empty());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_EQ(t.rows[i].sample_id, r.reports[i].sample_id);
    EXPECT_NEAR(t.rows[i].C, r.reports[i].continuity.C, 1e-15 * std::max(1.0, r.reports[i].continuity.C));
  }
  const CsvTable metrics = read_csv(dir / kMetricsFile);
  EXPECT_EQ(metrics.header, metrics_header());
  const CsvTable bars = read_csv(dir / kPooledPersistenceFile);
  EXPECT_EQ(bars.rows.size(), r.pooled.persistence.bars.size());
}

TEST(AnalysisFiles, MissingUpstream) {
  TempDir dir("analysis_missing");
  EXPECT_THROW(read_analysis(dir.path()), IoError);
}
