// dmet: simulate, analyze, regress and report on latent-trajectory datasets.
//
// Exit codes: 0 ok, 1 internal error, 2 input error, 3 missing quality
// fields, 4 missing upstream outputs.

#include "dmet/dmet.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace dmet;

namespace {

struct MissingFields : Error {
  using Error::Error;
};
struct MissingUpstream : Error {
  using Error::Error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string config;
  std::string output;
  std::uint64_t seed = 0;
};

void cmd_simulate(const SimulateArgs& args, const CLI::App& sub) {
  SimulatorConfig config = args.config.empty() ? default_simulator_config()
                                               : simulator_config_from_json(detail::parse_file(args.config));
  if (sub.count("--seed")) config.seed = args.seed;
  const Dataset ds = synthesize_dataset(config);
  save_dataset(ds, args.output);
  std::cerr << "wrote " << ds.trajectories.size() << " trajectories over " << ds.grid.size() << " cells to "
            << args.output << "\n";
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  std::string input;
  std::string output;
  std::string config;
  std::uint64_t seed = 0;
  bool normalize = true;
  std::string jump_method = "median_mad";
  double jump_z = 3.0;
  int k_max = kDefaultKMax;
  double max_radius = 0.0;
  double rho = 0.2;
  int permutations = 200;
  bool pooled = true;
};

// Config-file values apply only where the flag was not given.
AnalysisConfig analysis_config(const AnalyzeArgs& a, const CLI::App& sub) {
  AnalysisConfig c;
  json file = json::object();
  if (!a.config.empty()) {
    file = detail::parse_file(a.config);
    if (!file.is_object()) throw ParseError(a.config + ": expected a JSON object");
  }
  auto pick = [&](const char* flag, const char* key, auto flag_value, auto& target, auto read) {
    if (sub.count(flag)) target = flag_value;
    else if (file.contains(key)) target = read(file[key], std::string(key));
  };
  auto as_bool = [](const json& j, const std::string& key) {
    if (!j.is_boolean()) throw ParseError("config field '" + key + "': expected a boolean");
    return j.get<bool>();
  };
  auto as_int = [](const json& j, const std::string& key) { return static_cast<int>(detail::integer(j, "config." + key)); };
  auto as_double = [](const json& j, const std::string& key) { return detail::number(j, "config." + key); };

  pick("--normalize", "normalize", a.normalize, c.normalize, as_bool);
  std::string method = "median_mad";
  pick("--jump-method", "jump_method", a.jump_method, method,
       [](const json& j, const std::string& key) { return detail::string(j, "config." + key); });
  c.jump_method = parse_jump_method(method);
  pick("--jump-z", "jump_z", a.jump_z, c.jump_z, as_double);
  pick("--k-max", "k_max", a.k_max, c.k_max, as_int);
  double radius = 0.0;
  pick("--max-radius", "max_radius", a.max_radius, radius, as_double);
  if (sub.count("--max-radius") || file.contains("max_radius")) c.persistence.max_radius = radius;
  pick("--rho", "rho", a.rho, c.persistence.rho, as_double);
  pick("--permutations", "permutations", a.permutations, c.persistence.n_permutations, as_int);
  if (sub.count("--pooled") || sub.count("--per-trajectory")) c.pooled = a.pooled;
  else if (file.contains("pooled")) c.pooled = as_bool(file["pooled"], "pooled");
  std::uint64_t seed = 0;
  pick("--seed", "seed", a.seed, seed,
       [](const json& j, const std::string& key) { return static_cast<std::uint64_t>(detail::integer(j, "config." + key)); });
  c.seed = seed;
  return c;
}

void cmd_analyze(const AnalyzeArgs& args, const CLI::App& sub) {
  const AnalysisConfig config = analysis_config(args, sub);
  const Dataset ds = validate_dataset(args.input);
  const AnalysisResult result = analyze(ds, config);
  write_analysis(result, config, args.output);
  std::cerr << "analyzed " << result.reports.size() << " trajectories; pooled endpoints k=" << result.pooled.endpoints.k
            << "\n";
}

// ---------------------------------------------------------------------------
// regress

struct RegressArgs {
  std::string input;
  std::string output;
  std::string responses;
  std::string predictors = "C,Q,P";
};

json coefficient_json(const Coefficient& c) {
  return {{"estimate", c.estimate},
          {"std_error", c.std_error},
          {"p_value", c.p_value},
          {"stars", significance_stars(c.p_value)}};
}

std::string summary_cell(const SweepRow& row, const std::string& field, bool std_dev) {
  auto it = row.fields.find(field);
  if (it == row.fields.end()) return "";
  return format_double(std_dev ? it->second.std : it->second.mean);
}

void cmd_regress(const RegressArgs& args) {
  AnalysisTable table;
  try {
    table = read_analysis(args.input);
  } catch (const IoError& e) {
    throw MissingUpstream(e.what());
  }
  std::vector<std::string> responses = args.responses.empty() ? std::vector<std::string>(std::begin(kQualityFields), std::end(kQualityFields))
                                                              : split_list(args.responses);
  const std::vector<std::string> predictors = split_list(args.predictors);
  std::vector<std::string> missing;
  for (const auto& r : responses) {
    if (!is_quality_field(r)) throw ValidationError("unknown response '" + r + "'");
    if (std::find(table.missing_quality.begin(), table.missing_quality.end(), r) != table.missing_quality.end())
      missing.push_back(r);
  }
  if (!missing.empty()) throw MissingFields("missing quality fields: " + join(missing));

  json out;
  out["observations"] = table.rows.size();
  out["predictors"] = predictors;
  out["responses"] = responses;
  json rows = json::array();
  json random = json::object();
  json fits = json::object();
  std::vector<RegressionReport> reports;
  for (const auto& r : responses) reports.push_back(grouped_fit({r, predictors}, table.rows));
  for (std::size_t p = 0; p < predictors.size(); ++p) {
    json row{{"predictor", predictors[p]}};
    for (const auto& rep : reports) row[rep.response] = coefficient_json(rep.coefficients[p]);
    rows.push_back(row);
  }
  for (const auto& rep : reports) {
    random[rep.response] = {{"variance", rep.group_variance},
                            {"p_value", rep.group_p_value},
                            {"stars", significance_stars(rep.group_p_value)}};
    fits[rep.response] = {{"n", rep.n},
                          {"groups", rep.groups},
                          {"df", rep.df},
                          {"sigma2", rep.sigma2},
                          {"single_group_fallback", rep.single_group_fallback}};
  }
  out["coefficients"] = rows;
  out["random_effects"] = random;
  out["fits"] = fits;

  const fs::path dir = args.output.empty() ? fs::path(args.input) : fs::path(args.output);
  fs::create_directories(dir);
  detail::write_text(dir / "regression.json", out.dump(2) + "\n");

  const SweepTable sweep = sweep_aggregate(table.rows, table.grid);
  std::vector<std::string> header{"temperature", "top_p", "count", "flagged"};
  for (const auto& f : sweep_field_order()) {
    header.push_back(f + "_mean");
    header.push_back(f + "_std");
  }
  CsvWriter csv(header);
  for (const auto& row : sweep.rows) {
    std::vector<std::string> fields{format_double(row.cell.temperature), format_double(row.cell.top_p),
                                    std::to_string(row.count), row.flagged ? "1" : "0"};
    for (const auto& f : sweep_field_order()) {
      fields.push_back(summary_cell(row, f, false));
      fields.push_back(summary_cell(row, f, true));
    }
    csv.row(fields);
  }
  csv.save(dir / "sweep.csv");
  for (const auto& rep : reports)
    if (rep.single_group_fallback) std::cerr << "warning: " << rep.response << ": single cell, plain OLS used\n";
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::string input;
  std::string output;
};

CsvTable require_csv(const fs::path& path, const std::vector<std::string>& leading) {
  if (!fs::exists(path)) throw MissingUpstream("missing upstream output '" + path.string() + "'");
  CsvTable t = read_csv(path);
  for (std::size_t i = 0; i < leading.size(); ++i)
    if (i >= t.header.size() || t.header[i] != leading[i])
      throw ParseError("'" + path.string() + "': unexpected header");
  return t;
}

void copy_csv(const CsvTable& t, const fs::path& path) {
  CsvWriter w(t.header);
  for (const auto& r : t.rows) w.row(r);
  w.save(path);
}

void cmd_report(const ReportArgs& args) {
  const fs::path in(args.input), out(args.output);
  const CsvTable coords = require_csv(in / kPooledCoordsFile, {"sample_id", "t"});
  const CsvTable labels = require_csv(in / kPooledLabelsFile, {"sample_id", "label", "silhouette"});
  const CsvTable bars = require_csv(in / kPooledPersistenceFile, {"dim", "birth", "death", "significant"});
  AnalysisTable table;
  try {
    table = read_analysis(in);
  } catch (const IoError& e) {
    throw MissingUpstream(e.what());
  }

  fs::create_directories(out);
  copy_csv(coords, out / "pca_coords.csv");
  copy_csv(labels, out / "cluster_labels.csv");
  copy_csv(bars, out / "persistence_bars.csv");

  const SweepTable sweep = sweep_aggregate(table.rows, table.grid);
  std::vector<std::string> header{"temperature", "top_p", "count"};
  for (const auto& f : sweep_field_order()) header.push_back(f + "_mean");
  CsvWriter heat(header);
  for (const auto& row : sweep.rows) {
    std::vector<std::string> fields{format_double(row.cell.temperature), format_double(row.cell.top_p),
                                    std::to_string(row.count)};
    for (const auto& f : sweep_field_order()) fields.push_back(summary_cell(row, f, false));
    heat.row(fields);
  }
  heat.save(out / "sweep_heatmap.csv");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-trajectory dynamics: simulate, analyze, regress, report"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic sweep dataset");
  simulate->add_option("--config", sim.config, "Simulator config JSON (defaults to the built-in two-well system)");
  simulate->add_option("--output", sim.output, "Dataset directory")->required();
  simulate->add_option("--seed", sim.seed, "Seed (overrides the config)");

  AnalyzeArgs an;
  auto* analyze_cmd = app.add_subcommand("analyze", "Per-trajectory and pooled dynamics analysis");
  analyze_cmd->add_option("--input", an.input, "Dataset directory")->required();
  analyze_cmd->add_option("--output", an.output, "Analysis output directory")->required();
  analyze_cmd->add_option("--config", an.config, "Analysis config JSON; flags take precedence");
  analyze_cmd->add_option("--seed", an.seed, "Seed for clustering, subsampling and permutations");
  analyze_cmd->add_option("--normalize", an.normalize, "L2-normalize states before differencing (true/false)");
  analyze_cmd->add_option("--jump-method", an.jump_method, "mean_z or median_mad")
      ->check(CLI::IsMember({"mean_z", "median_mad"}));
  analyze_cmd->add_option("--jump-z", an.jump_z, "Jump threshold multiplier");
  analyze_cmd->add_option("--k-max", an.k_max, "Largest k tried by silhouette selection");
  analyze_cmd->add_option("--max-radius", an.max_radius, "Rips filtration range (default: cloud diameter)");
  analyze_cmd->add_option("--rho", an.rho, "Significance threshold on lifespan / max_radius");
  analyze_cmd->add_option("--permutations", an.permutations, "Permutation replicates for significance");
  auto* pooled_flag = analyze_cmd->add_flag("--pooled{true}", an.pooled, "Fit one PCA over the dataset (default)");
  analyze_cmd->add_flag("--per-trajectory{false}", an.pooled, "Fit one PCA per trajectory")->excludes(pooled_flag);

  RegressArgs rg;
  auto* regress = app.add_subcommand("regress", "Grouped regression of quality on C, Q, P");
  regress->add_option("--input", rg.input, "Analysis directory")->required();
  regress->add_option("--output", rg.output, "Output directory (default: the input directory)");
  regress->add_option("--response", rg.responses, "Comma-separated quality fields (default: all)");
  regress->add_option("--predictors", rg.predictors, "Comma-separated subset of C,Q,P");

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "Plot-ready CSV bundle from analysis outputs");
  report->add_option("--input", rp.input, "Analysis directory")->required();
  report->add_option("--output", rp.output, "Bundle directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) cmd_simulate(sim, *simulate);
    else if (*analyze_cmd) cmd_analyze(an, *analyze_cmd);
    else if (*regress) cmd_regress(rg);
    else if (*report) cmd_report(rp);
    return 0;
  } catch (const MissingFields& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const MissingUpstream& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
