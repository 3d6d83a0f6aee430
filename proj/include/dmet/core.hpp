#pragma once

// Domain types shared by every module: latent states, trajectories with
// decoding metadata, quality scores and datasets over a decoding grid.

#include "dmet/error.hpp"
#include "dmet/linalg.hpp"

#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dmet {

/// Hidden state h_t. All entries finite, dimension >= 1.
using LatentState = Vector;

struct DecodingParams {
  /// Sampling temperature. Zero denotes greedy decoding (and a noiseless simulator run).
  double temperature = 1.0;
  double top_p = 1.0;
  std::string sample_id;
  std::string prompt;
  std::string model_id;
  int layer_index = -1;

  bool operator==(const DecodingParams&) const = default;
};

/// Text-quality scores. Computed elsewhere and ingested; lttr can be
/// computed locally with stats::lexical_diversity.
struct QualityScores {
  double log_ppl = 0.0;
  double lttr = 0.0;
  double spelling = 0.0;
  double grammar = 0.0;
  double coherence = 0.0;

  bool operator==(const QualityScores&) const = default;
};

inline constexpr const char* kQualityFields[] = {"log_ppl", "lttr", "spelling", "grammar", "coherence"};

inline double quality_field(const QualityScores& q, std::string_view name) {
  if (name == "log_ppl") return q.log_ppl;
  if (name == "lttr") return q.lttr;
  if (name == "spelling") return q.spelling;
  if (name == "grammar") return q.grammar;
  if (name == "coherence") return q.coherence;
  throw ValidationError("unknown quality field '" + std::string(name) + "'");
}

inline double& quality_field(QualityScores& q, std::string_view name) {
  if (name == "log_ppl") return q.log_ppl;
  if (name == "lttr") return q.lttr;
  if (name == "spelling") return q.spelling;
  if (name == "grammar") return q.grammar;
  if (name == "coherence") return q.coherence;
  throw ValidationError("unknown quality field '" + std::string(name) + "'");
}

struct Trajectory {
  /// h_0 .. h_T, so states.size() == T + 1.
  std::vector<LatentState> states;
  std::optional<std::vector<std::int64_t>> token_ids;
  std::optional<std::vector<std::vector<double>>> token_distributions;
  DecodingParams meta;
  std::optional<QualityScores> quality;

  /// Number of transitions T.
  std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
  Eigen::Index dim() const { return states.empty() ? 0 : states.front().size(); }
  /// (T+1) x d matrix with one state per row.
  Matrix state_matrix() const { return stack_rows(states); }
};

inline void validate(const DecodingParams& p) {
  if (!std::isfinite(p.temperature) || p.temperature < 0.0)
    throw ValidationError("meta.temperature must be finite and >= 0");
  if (!std::isfinite(p.top_p) || p.top_p <= 0.0 || p.top_p > 1.0)
    throw ValidationError("meta.top_p must lie in (0, 1]");
}

inline void validate(const QualityScores& q) {
  if (!std::isfinite(q.log_ppl)) throw ValidationError("quality.log_ppl must be finite");
  for (const char* name : {"lttr", "spelling", "grammar", "coherence"}) {
    const double v = quality_field(q, name);
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw ValidationError(std::string("quality.") + name + " must lie in [0, 1]");
  }
}

inline constexpr double kDistributionSumTolerance = 1e-6;

inline void validate(const Trajectory& traj) {
  if (traj.states.size() < 2) throw ValidationError("trajectory needs at least 2 states (T >= 1)");
  const Eigen::Index d = traj.states.front().size();
  if (d < 1) throw ValidationError("states must have dimension >= 1");
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    if (traj.states[t].size() != d)
      throw ValidationError("state " + std::to_string(t) + " has dimension " +
                            std::to_string(traj.states[t].size()) + ", expected " + std::to_string(d));
    if (!all_finite(traj.states[t]))
      throw ValidationError("state " + std::to_string(t) + " has a non-finite entry");
  }
  const std::size_t T = traj.steps();
  if (traj.token_ids && traj.token_ids->size() != T)
    throw ValidationError("token_ids has length " + std::to_string(traj.token_ids->size()) + ", expected " +
                          std::to_string(T));
  if (traj.token_distributions) {
    const auto& dists = *traj.token_distributions;
    if (dists.size() != T)
      throw ValidationError("token_distributions has length " + std::to_string(dists.size()) + ", expected " +
                            std::to_string(T));
    for (std::size_t t = 0; t < dists.size(); ++t) {
      double sum = 0.0;
      for (double p : dists[t]) {
        if (!std::isfinite(p) || p < 0.0)
          throw ValidationError("token_distributions[" + std::to_string(t) + "] has a negative or non-finite entry");
        sum += p;
      }
      if (dists[t].empty() || std::abs(sum - 1.0) > kDistributionSumTolerance)
        throw ValidationError("token_distributions[" + std::to_string(t) + "] does not sum to 1");
    }
  }
  validate(traj.meta);
  if (traj.quality) validate(*traj.quality);
}

/// One (temperature, top_p) decoding configuration.
struct GridCell {
  double temperature = 0.0;
  double top_p = 1.0;

  auto operator<=>(const GridCell&) const = default;

  /// Cells compare equal within 1e-9 so values that went through decimal text still match.
  bool matches(double t, double p) const {
    return std::abs(temperature - t) <= 1e-9 && std::abs(top_p - p) <= 1e-9;
  }
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  std::vector<GridCell> grid;

  /// Index into grid of the cell holding this trajectory, if any.
  std::optional<std::size_t> cell_of(const Trajectory& traj) const {
    for (std::size_t c = 0; c < grid.size(); ++c)
      if (grid[c].matches(traj.meta.temperature, traj.meta.top_p)) return c;
    return std::nullopt;
  }

  std::map<GridCell, std::size_t> cell_counts() const {
    std::map<GridCell, std::size_t> counts;
    for (const auto& cell : grid) counts[cell] = 0;
    for (const auto& traj : trajectories)
      if (auto c = cell_of(traj)) ++counts[grid[*c]];
    return counts;
  }
};

inline void validate(const Dataset& ds) {
  if (ds.trajectories.empty()) throw ValidationError("no trajectories");
  for (const auto& traj : ds.trajectories) {
    validate(traj);
    if (!ds.cell_of(traj))
      throw ValidationError("trajectory '" + traj.meta.sample_id + "' has (temperature=" +
                            std::to_string(traj.meta.temperature) + ", top_p=" + std::to_string(traj.meta.top_p) +
                            ") outside the manifest grid");
  }
}

}  // namespace dmet
