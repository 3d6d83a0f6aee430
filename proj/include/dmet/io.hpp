#pragma once

// File formats: one JSON document per trajectory, a JSON manifest per
// dataset directory, and small CSV helpers for metric tables.

#include "dmet/core.hpp"
#include "dmet/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace dmet {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline const json& field(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ParseError("field '" + path + "': expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError("field '" + (path.empty() ? key : path + "." + key) + "' is missing");
  return *it;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError("field '" + path + "': expected a number");
  return j.get<double>();
}

inline std::int64_t integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ParseError("field '" + path + "': expected an integer");
  return j.get<std::int64_t>();
}

inline std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ParseError("field '" + path + "': expected a string");
  return j.get<std::string>();
}

inline std::vector<double> numbers(const json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError("field '" + path + "': expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

inline json to_json(const Trajectory& traj) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["meta"] = {{"model_id", traj.meta.model_id},       {"prompt", traj.meta.prompt},
               {"sample_id", traj.meta.sample_id},     {"temperature", traj.meta.temperature},
               {"top_p", traj.meta.top_p},             {"layer_index", traj.meta.layer_index}};
  j["hidden_dim"] = traj.dim();
  json states = json::array();
  for (const auto& s : traj.states) states.push_back(std::vector<double>(s.data(), s.data() + s.size()));
  j["states"] = std::move(states);
  if (traj.token_ids) j["token_ids"] = *traj.token_ids;
  if (traj.token_distributions) j["token_distributions"] = *traj.token_distributions;
  if (traj.quality) {
    const auto& q = *traj.quality;
    j["quality"] = {{"log_ppl", q.log_ppl},   {"lttr", q.lttr},         {"spelling", q.spelling},
                    {"grammar", q.grammar},   {"coherence", q.coherence}};
  }
  return j;
}

/// Parses and validates; parse errors name the offending field.
inline Trajectory trajectory_from_json(const json& j) {
  using namespace detail;
  Trajectory traj;
  const auto version = integer(field(j, "schema_version", ""), "schema_version");
  if (version != kSchemaVersion)
    throw ParseError("field 'schema_version': unsupported version " + std::to_string(version));

  const json& meta = field(j, "meta", "");
  traj.meta.model_id = string(field(meta, "model_id", "meta"), "meta.model_id");
  traj.meta.prompt = string(field(meta, "prompt", "meta"), "meta.prompt");
  traj.meta.sample_id = string(field(meta, "sample_id", "meta"), "meta.sample_id");
  traj.meta.temperature = number(field(meta, "temperature", "meta"), "meta.temperature");
  traj.meta.top_p = number(field(meta, "top_p", "meta"), "meta.top_p");
  traj.meta.layer_index = static_cast<int>(integer(field(meta, "layer_index", "meta"), "meta.layer_index"));

  const auto hidden_dim = integer(field(j, "hidden_dim", ""), "hidden_dim");
  const json& states = field(j, "states", "");
  if (!states.is_array()) throw ParseError("field 'states': expected an array");
  for (std::size_t t = 0; t < states.size(); ++t) {
    auto values = numbers(states[t], "states[" + std::to_string(t) + "]");
    traj.states.push_back(Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
  }

  if (auto it = j.find("token_ids"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError("field 'token_ids': expected an array");
    std::vector<std::int64_t> ids;
    for (std::size_t i = 0; i < it->size(); ++i) ids.push_back(integer((*it)[i], "token_ids[" + std::to_string(i) + "]"));
    traj.token_ids = std::move(ids);
  }
  if (auto it = j.find("token_distributions"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError("field 'token_distributions': expected an array");
    std::vector<std::vector<double>> dists;
    for (std::size_t i = 0; i < it->size(); ++i)
      dists.push_back(numbers((*it)[i], "token_distributions[" + std::to_string(i) + "]"));
    traj.token_distributions = std::move(dists);
  }
  if (auto it = j.find("quality"); it != j.end() && !it->is_null()) {
    QualityScores q;
    for (const char* name : kQualityFields)
      quality_field(q, name) = number(field(*it, name, "quality"), std::string("quality.") + name);
    traj.quality = q;
  }

  validate(traj);
  if (hidden_dim != traj.dim())
    throw ValidationError("hidden_dim is " + std::to_string(hidden_dim) + " but states have dimension " +
                          std::to_string(traj.dim()));
  return traj;
}

inline Trajectory load_trajectory(const std::filesystem::path& path) {
  try {
    return trajectory_from_json(detail::parse_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.filename().string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.filename().string() + ": " + e.what());
  }
}

/// Validates before touching the file system, so invalid trajectories never reach disk.
inline void save_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  validate(traj);
  detail::write_text(path, to_json(traj).dump() + "\n");
}

struct DatasetManifest {
  std::vector<std::string> files;
  std::vector<GridCell> grid;
};

inline json to_json(const DatasetManifest& m) {
  json grid = json::array();
  for (const auto& c : m.grid) grid.push_back({{"temperature", c.temperature}, {"top_p", c.top_p}});
  return {{"schema_version", kSchemaVersion}, {"grid", grid}, {"files", m.files}};
}

inline DatasetManifest manifest_from_json(const json& j) {
  using namespace detail;
  DatasetManifest m;
  const json& grid = field(j, "grid", "");
  if (!grid.is_array()) throw ParseError("field 'grid': expected an array");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::string path = "grid[" + std::to_string(i) + "]";
    m.grid.push_back({number(field(grid[i], "temperature", path), path + ".temperature"),
                      number(field(grid[i], "top_p", path), path + ".top_p")});
  }
  const json& files = field(j, "files", "");
  if (!files.is_array()) throw ParseError("field 'files': expected an array");
  for (std::size_t i = 0; i < files.size(); ++i) m.files.push_back(string(files[i], "files[" + std::to_string(i) + "]"));
  return m;
}

/// File name used for a trajectory inside a dataset directory.
inline std::string trajectory_file_name(const Trajectory& traj) { return traj.meta.sample_id + ".json"; }

/// Writes one file per trajectory plus the manifest. Trajectories are
/// written in sample_id order so the manifest is stable.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  validate(ds);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  std::vector<const Trajectory*> order;
  for (const auto& t : ds.trajectories) order.push_back(&t);
  std::sort(order.begin(), order.end(),
            [](const Trajectory* a, const Trajectory* b) { return a->meta.sample_id < b->meta.sample_id; });

  DatasetManifest manifest{.files = {}, .grid = ds.grid};
  std::set<std::string> seen;
  for (const Trajectory* t : order) {
    const std::string name = trajectory_file_name(*t);
    if (!seen.insert(name).second) throw ValidationError("duplicate sample_id '" + t->meta.sample_id + "'");
    save_trajectory(*t, dir / name);
    manifest.files.push_back(name);
  }
  detail::write_text(dir / kManifestName, to_json(manifest).dump(2) + "\n");
}

/// Loads every trajectory listed in the manifest. Fails on the first bad
/// file; a partially loaded dataset is never returned.
inline Dataset validate_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  const fs::path manifest_path = dir / kManifestName;
  if (!fs::exists(manifest_path)) {
    bool has_json = false;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().extension() == ".json") has_json = true;
    if (!has_json) throw ValidationError("no trajectories");
    throw ValidationError("missing " + std::string(kManifestName) + " in '" + dir.string() + "'");
  }
  DatasetManifest manifest;
  try {
    manifest = manifest_from_json(detail::parse_file(manifest_path));
  } catch (const ParseError& e) {
    throw ParseError(std::string(kManifestName) + ": " + e.what());
  }
  if (manifest.files.empty()) throw ValidationError("no trajectories");

  Dataset ds;
  ds.grid = manifest.grid;
  std::set<std::string> ids;
  for (const auto& name : manifest.files) {
    Trajectory traj = load_trajectory(dir / name);
    if (!ids.insert(traj.meta.sample_id).second)
      throw ValidationError(name + ": duplicate sample_id '" + traj.meta.sample_id + "'");
    if (!ds.cell_of(traj))
      throw ValidationError(name + ": (temperature=" + format_double(traj.meta.temperature) +
                            ", top_p=" + format_double(traj.meta.top_p) + ") is outside the manifest grid");
    ds.trajectories.push_back(std::move(traj));
  }
  std::sort(ds.trajectories.begin(), ds.trajectories.end(),
            [](const Trajectory& a, const Trajectory& b) { return a.meta.sample_id < b.meta.sample_id; });
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

  void row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) throw Error("CSV row has " + std::to_string(fields.size()) + " fields, expected " +
                                               std::to_string(columns_));
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_escape(fields[i]);
    }
    out_ << '\n';
  }

  std::string str() const { return out_.str(); }
  void save(const std::filesystem::path& path) const { detail::write_text(path, out_.str()); }

 private:
  std::size_t columns_;
  std::ostringstream out_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("'" + path.string() + "' is empty");
  table.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != table.header.size())
      throw ParseError("'" + path.filename().string() + "': row " + std::to_string(table.rows.size() + 1) + " has " +
                       std::to_string(fields.size()) + " fields, expected " + std::to_string(table.header.size()));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

inline double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ParseError(std::string(what) + ": '" + std::string(text) + "' is not a number");
  return v;
}

}  // namespace dmet
