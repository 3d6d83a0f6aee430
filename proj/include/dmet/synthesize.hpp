#pragma once

// Synthetic sweep datasets: one simulated trajectory per (cell, sample),
// optional planted quality scores that depend linearly on the trajectory's
// own C, Q and P.

#include "dmet/io.hpp"
#include "dmet/pipeline.hpp"
#include "dmet/random.hpp"
#include "dmet/simulator.hpp"

#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dmet {

/// quality = intercept + sum_m coefficient[m] * metric_m + cell effect + noise,
/// cell effect ~ N(0, group_sd^2) shared by a cell, noise ~ N(0, noise_sd^2).
/// Bounded fields are clamped into [0, 1].
struct PlantedQuality {
  std::map<std::string, double> intercept;
  std::map<std::string, std::map<std::string, double>> coefficients;
  std::map<std::string, double> group_sd;
  std::map<std::string, double> noise_sd;
};

inline PlantedQuality default_planted_quality() {
  PlantedQuality q;
  q.intercept = {{"log_ppl", 3.0}, {"spelling", 0.9}, {"lttr", 0.7}, {"grammar", 0.85}, {"coherence", 0.6}};
  q.coefficients = {
      {"log_ppl", {{"C", -0.031}, {"Q", 0.044}, {"P", 0.0}}},
      {"spelling", {{"C", 0.0}, {"Q", -0.010}, {"P", 0.0}}},
      {"lttr", {{"C", -0.003}, {"Q", -0.074}, {"P", -0.003}}},
      {"grammar", {{"C", -0.001}, {"Q", 0.081}, {"P", 0.002}}},
      {"coherence", {{"C", 0.002}, {"Q", 0.047}, {"P", 0.009}}},
  };
  for (auto f : kQualityFields) {
    q.group_sd[f] = std::string_view(f) == "log_ppl" ? 0.3 : 0.02;
    q.noise_sd[f] = 1e-6;
  }
  return q;
}

/// h0 = center + spread * xi. Without a center, each trajectory starts around
/// a randomly chosen well center (or the quadratic center).
struct InitialSpread {
  std::optional<Vector> center;
  double spread = 0.5;
};

struct SimulatorConfig {
  EnergyLandscape landscape = EnergyLandscape::quadratic(1.0, Vector::Zero(2));
  ContextForce force;
  double dt = 0.05;
  std::size_t steps = 100;
  std::vector<double> temperatures;
  std::vector<double> top_ps;
  std::size_t samples_per_cell = 10;
  InitialSpread initial;
  std::uint64_t seed = 0;
  std::optional<PlantedQuality> quality;
  AnalysisConfig analysis;

  std::vector<GridCell> grid() const {
    std::vector<GridCell> cells;
    for (double t : temperatures)
      for (double p : top_ps) cells.push_back({t, p});
    return cells;
  }
};

/// Ten temperatures evenly spaced over [0.1, 2.0].
inline std::vector<double> default_temperatures() {
  std::vector<double> v;
  for (int i = 0; i < 10; ++i) v.push_back(0.1 + (2.0 - 0.1) * i / 9.0);
  return v;
}

inline std::vector<double> default_top_ps() { return {0.3, 0.6, 0.8, 1.0}; }

/// Two Gaussian wells at +-4 along the first axis of R^6; trajectories start
/// near the saddle between them.
inline SimulatorConfig default_simulator_config() {
  SimulatorConfig c;
  const int d = 6;
  Vector a = Vector::Zero(d), b = Vector::Zero(d);
  a[0] = 4.0;
  b[0] = -4.0;
  c.landscape = EnergyLandscape::wells({a, b}, {32.0, 32.0}, {2.0, 2.0});
  c.initial.center = Vector::Zero(d);
  c.temperatures = default_temperatures();
  c.top_ps = default_top_ps();
  c.quality = default_planted_quality();
  return c;
}

// ---------------------------------------------------------------------------
// JSON config

namespace detail {

inline Vector vector_from(const json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError("field '" + path + "': expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

inline std::vector<double> doubles_from(const json& j, const std::string& path) {
  const Vector v = vector_from(j, path);
  return {v.begin(), v.end()};
}

inline Matrix matrix_from(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ParseError("field '" + path + "': expected a non-empty array of rows");
  std::vector<Vector> rows;
  for (std::size_t i = 0; i < j.size(); ++i) rows.push_back(vector_from(j[i], path + "[" + std::to_string(i) + "]"));
  for (const auto& r : rows)
    if (r.size() != rows.front().size()) throw ParseError("field '" + path + "': rows differ in length");
  return stack_rows(rows);
}

inline std::string kind_of(const json& j, const std::string& path) {
  const json& k = field(j, "kind", path);
  if (!k.is_string()) throw ParseError("field '" + path + ".kind': expected a string");
  return k.get<std::string>();
}

inline EnergyLandscape landscape_from(const json& j) {
  const std::string kind = kind_of(j, "landscape");
  if (kind == "quadratic")
    return EnergyLandscape::quadratic(number(field(j, "lambda", "landscape"), "landscape.lambda"),
                                      vector_from(field(j, "center", "landscape"), "landscape.center"));
  if (kind == "gaussian_wells") {
    const json& cs = field(j, "centers", "landscape");
    if (!cs.is_array()) throw ParseError("field 'landscape.centers': expected an array");
    std::vector<Vector> centers;
    for (std::size_t i = 0; i < cs.size(); ++i) centers.push_back(vector_from(cs[i], "landscape.centers[" + std::to_string(i) + "]"));
    return EnergyLandscape::wells(std::move(centers), doubles_from(field(j, "depths", "landscape"), "landscape.depths"),
                                  doubles_from(field(j, "widths", "landscape"), "landscape.widths"));
  }
  throw ParseError("field 'landscape.kind': unknown kind '" + kind + "'");
}

inline ContextForce force_from(const json& j) {
  const std::string kind = kind_of(j, "force");
  if (kind == "zero") return ContextForce(ZeroForce{});
  if (kind == "constant") return ContextForce(ConstantForce{vector_from(field(j, "value", "force"), "force.value")});
  if (kind == "pull")
    return ContextForce(PullForce{vector_from(field(j, "target", "force"), "force.target"),
                                  number(field(j, "gain", "force"), "force.gain")});
  if (kind == "scripted") {
    const json& in = field(j, "inputs", "force");
    if (!in.is_array()) throw ParseError("field 'force.inputs': expected an array");
    ScriptedForce s;
    for (std::size_t i = 0; i < in.size(); ++i) s.inputs.push_back(vector_from(in[i], "force.inputs[" + std::to_string(i) + "]"));
    s.gain = number(field(j, "gain", "force"), "force.gain");
    return ContextForce(std::move(s));
  }
  if (kind == "linear")
    return ContextForce(LinearForce{matrix_from(field(j, "matrix", "force"), "force.matrix"),
                                    vector_from(field(j, "offset", "force"), "force.offset")});
  throw ParseError("field 'force.kind': unknown kind '" + kind + "'");
}

inline std::map<std::string, double> field_map(const json& j, const std::string& path) {
  if (!j.is_object()) throw ParseError("field '" + path + "': expected an object");
  std::map<std::string, double> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!is_quality_field(it.key())) throw ParseError("field '" + path + "': unknown quality field '" + it.key() + "'");
    out[it.key()] = number(it.value(), path + "." + it.key());
  }
  return out;
}

inline PlantedQuality quality_from(const json& j) {
  PlantedQuality q = default_planted_quality();
  if (j.contains("intercept")) for (auto& [k, v] : field_map(j["intercept"], "quality.intercept")) q.intercept[k] = v;
  if (j.contains("group_sd")) for (auto& [k, v] : field_map(j["group_sd"], "quality.group_sd")) q.group_sd[k] = v;
  if (j.contains("noise_sd")) for (auto& [k, v] : field_map(j["noise_sd"], "quality.noise_sd")) q.noise_sd[k] = v;
  if (j.contains("coefficients")) {
    const json& cs = j["coefficients"];
    if (!cs.is_object()) throw ParseError("field 'quality.coefficients': expected an object");
    for (auto it = cs.begin(); it != cs.end(); ++it) {
      const std::string path = "quality.coefficients." + it.key();
      if (!is_quality_field(it.key())) throw ParseError("field 'quality.coefficients': unknown quality field '" + it.key() + "'");
      if (!it.value().is_object()) throw ParseError("field '" + path + "': expected an object");
      for (auto m = it.value().begin(); m != it.value().end(); ++m) {
        if (!is_metric_field(m.key())) throw ParseError("field '" + path + "': unknown metric '" + m.key() + "'");
        q.coefficients[it.key()][m.key()] = number(m.value(), path + "." + m.key());
      }
    }
  }
  for (const auto& [k, v] : q.group_sd)
    if (!(v >= 0.0)) throw ParseError("field 'quality.group_sd." + k + "' must be >= 0");
  for (const auto& [k, v] : q.noise_sd)
    if (!(v >= 0.0)) throw ParseError("field 'quality.noise_sd." + k + "' must be >= 0");
  return q;
}

}  // namespace detail

/// Every key is optional; absent keys keep default_simulator_config() values.
/// "quality": null disables planted quality.
inline SimulatorConfig simulator_config_from_json(const json& j) {
  using namespace detail;
  if (!j.is_object()) throw ParseError("simulator config: expected a JSON object");
  SimulatorConfig c = default_simulator_config();
  if (j.contains("landscape")) c.landscape = landscape_from(j["landscape"]);
  if (j.contains("force")) c.force = force_from(j["force"]);
  if (j.contains("dt")) c.dt = number(j["dt"], "dt");
  if (j.contains("steps")) {
    const auto s = integer(j["steps"], "steps");
    if (s < 1) throw ParseError("field 'steps' must be >= 1");
    c.steps = static_cast<std::size_t>(s);
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    c.temperatures = doubles_from(field(g, "temperatures", "grid"), "grid.temperatures");
    c.top_ps = doubles_from(field(g, "top_ps", "grid"), "grid.top_ps");
  }
  if (j.contains("samples_per_cell")) {
    const auto s = integer(j["samples_per_cell"], "samples_per_cell");
    if (s < 1) throw ParseError("field 'samples_per_cell' must be >= 1");
    c.samples_per_cell = static_cast<std::size_t>(s);
  }
  if (j.contains("initial")) {
    const json& in = j["initial"];
    if (!in.is_object()) throw ParseError("field 'initial': expected an object");
    if (in.contains("center"))
      c.initial.center = in["center"].is_null() ? std::nullopt : std::optional(vector_from(in["center"], "initial.center"));
    if (in.contains("spread")) c.initial.spread = number(in["spread"], "initial.spread");
  } else if (j.contains("landscape")) {
    c.initial.center.reset();
  }
  if (j.contains("seed")) c.seed = static_cast<std::uint64_t>(integer(j["seed"], "seed"));
  if (j.contains("quality")) c.quality = j["quality"].is_null() ? std::nullopt : std::optional(quality_from(j["quality"]));
  return c;
}

inline void validate(const SimulatorConfig& c) {
  if (!(c.dt > 0.0)) throw ValidationError("dt must be > 0");
  if (c.temperatures.empty() || c.top_ps.empty()) throw ValidationError("grid needs at least one temperature and one top_p");
  for (double t : c.temperatures)
    if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("grid temperatures must be finite and >= 0");
  for (double p : c.top_ps)
    if (!(p > 0.0 && p <= 1.0)) throw ValidationError("grid top_p values must lie in (0, 1]");
  if (!(c.initial.spread >= 0.0)) throw ValidationError("initial spread must be >= 0");
  if (c.initial.center && c.initial.center->size() != c.landscape.dim())
    throw ValidationError("initial center dimension != landscape dimension");
  c.force.require_steps(c.steps);
}

// ---------------------------------------------------------------------------
// Synthesis

inline std::string synthetic_sample_id(std::size_t cell, std::size_t sample) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "c%02zu_s%02zu", cell, sample);
  return buf;
}

namespace detail {

inline Vector initial_state(const EnergyLandscape& landscape, const InitialSpread& init, std::uint64_t seed) {
  Rng rng(seed);
  Vector center;
  if (init.center) {
    if (init.center->size() != landscape.dim()) throw ValidationError("initial center dimension != landscape dimension");
    center = *init.center;
  } else if (auto* q = std::get_if<QuadraticWell>(&landscape.kind())) {
    center = q->center;
  } else {
    const auto& w = std::get<GaussianWells>(landscape.kind());
    std::uniform_int_distribution<std::size_t> pick(0, w.centers.size() - 1);
    center = w.centers[pick(rng)];
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector h = center;
  for (Eigen::Index i = 0; i < h.size(); ++i) h[i] += init.spread * normal(rng);
  return h;
}

}  // namespace detail

/// Simulates every (cell, sample); with a quality model, analyzes the result
/// with config.analysis and plants scores from each trajectory's metrics.
/// A divergence is reported with the cell that produced it.
inline Dataset synthesize_dataset(const SimulatorConfig& config) {
  validate(config);
  Dataset ds;
  ds.grid = config.grid();
  for (std::size_t c = 0; c < ds.grid.size(); ++c) {
    const GridCell& cell = ds.grid[c];
    for (std::size_t s = 0; s < config.samples_per_cell; ++s) {
      const std::uint64_t index = c * config.samples_per_cell + s;
      IntegratorConfig ic;
      ic.dt = config.dt;
      ic.steps = config.steps;
      ic.noise_temperature = cell.temperature;
      ic.clamp_p = cell.top_p;
      ic.seed = derive_seed(config.seed, SeedStream::simulate, index);
      ic.initial = detail::initial_state(config.landscape, config.initial, derive_seed(config.seed, SeedStream::initial_state, index));
      Trajectory traj;
      try {
        traj = simulate(config.landscape, config.force, ic);
      } catch (const DivergenceError& e) {
        throw DivergenceError("cell " + std::to_string(c) + " (temperature=" + format_double(cell.temperature) +
                              ", top_p=" + format_double(cell.top_p) + "): " + e.what());
      }
      traj.meta.sample_id = synthetic_sample_id(c, s);
      traj.meta.prompt = "synthetic";
      ds.trajectories.push_back(std::move(traj));
    }
  }
  if (!config.quality) return ds;

  AnalysisConfig ac = config.analysis;
  ac.seed = config.seed;
  const AnalysisResult analysis = analyze(ds, ac, false);
  const PlantedQuality& pq = *config.quality;
  std::map<std::string, std::vector<double>> cell_effect;
  for (std::size_t fi = 0; fi < std::size(kQualityFields); ++fi) {
    const char* f = kQualityFields[fi];
    Rng rng(derive_seed(config.seed, SeedStream::quality, fi));
    std::normal_distribution<double> normal(0.0, 1.0);
    auto& effects = cell_effect[f];
    for (std::size_t c = 0; c < ds.grid.size(); ++c) effects.push_back(pq.group_sd.at(f) * normal(rng));
  }
  std::map<std::string, const DynamicsReport*> by_id;
  for (const auto& r : analysis.reports) by_id[r.sample_id] = &r;
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    Trajectory& traj = ds.trajectories[i];
    const DynamicsReport& r = *by_id.at(traj.meta.sample_id);
    const std::size_t c = *ds.cell_of(traj);
    Rng rng(derive_seed(config.seed, SeedStream::quality, std::size(kQualityFields) + i));
    std::normal_distribution<double> normal(0.0, 1.0);
    QualityScores q;
    for (auto f : kQualityFields) {
      const auto& beta = pq.coefficients.at(f);
      auto coef = [&](const char* m) {
        auto it = beta.find(m);
        return it == beta.end() ? 0.0 : it->second;
      };
      double v = pq.intercept.at(f) + coef("C") * r.continuity.C + coef("Q") * r.Q + coef("P") * r.P +
                 cell_effect[f][c] + pq.noise_sd.at(f) * normal(rng);
      if (std::string_view(f) != "log_ppl") v = std::clamp(v, 0.0, 1.0);
      quality_field(q, f) = v;
    }
    traj.quality = q;
  }
  return ds;
}

}  // namespace dmet
