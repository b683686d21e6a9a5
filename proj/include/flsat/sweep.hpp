// Parameter sweeps over scenario keys, trial averaging, and heatmap export.
#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "flsat/scenario.hpp"
#include "flsat/simulation.hpp"

namespace flsat::sweep {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kDefaultTrials = 5;

/// Base scenario plus axes; every combination of axis values is one config.
struct GridSpec {
  nlohmann::json base = nlohmann::json::object();
  std::map<std::string, std::vector<nlohmann::json>> axes;  // iterated in key order
  std::size_t trials = kDefaultTrials;
  std::uint64_t seed = 1;
  std::filesystem::path base_dir;
};

inline GridSpec grid_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using scenario::ConfigError;
  if (!j.is_object()) throw ConfigError("sweep: expected a JSON object");
  GridSpec g;
  g.base_dir = base_dir;
  for (const auto& [key, v] : j.items()) {
    if (key == "base") {
      if (!v.is_object()) throw ConfigError("base: expected an object of scenario keys");
      g.base = v;
    } else if (key == "grid") {
      if (!v.is_object()) throw ConfigError("grid: expected an object of key -> list");
      for (const auto& [axis, values] : v.items()) {
        if (!scenario::known_keys().count(axis)) throw ConfigError("grid." + axis + ": unknown key");
        if (!values.is_array() || values.empty())
          throw ConfigError("grid." + axis + ": expected a non-empty list");
        g.axes[axis] = std::vector<nlohmann::json>(values.begin(), values.end());
      }
    } else if (key == "trials") {
      if (!v.is_number_unsigned() || v.get<std::uint64_t>() < 1)
        throw ConfigError("trials: expected an integer >= 1");
      g.trials = v.get<std::size_t>();
    } else if (key == "seed") {
      if (!v.is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
      g.seed = v.get<std::uint64_t>();
    } else {
      throw ConfigError(key + ": unknown key");
    }
  }
  return g;
}

inline GridSpec load_grid(const std::string& path) {
  return grid_from_json(scenario::read_json_file(path), std::filesystem::path(path).parent_path());
}

/// One grid point: axis values in key order.
using GridPoint = std::vector<std::pair<std::string, nlohmann::json>>;

inline std::vector<GridPoint> expand(const GridSpec& g) {
  std::vector<GridPoint> out(1);
  for (const auto& [axis, values] : g.axes) {
    std::vector<GridPoint> next;
    for (const auto& p : out)
      for (const auto& v : values) {
        auto q = p;
        q.emplace_back(axis, v);
        next.push_back(std::move(q));
      }
    out = std::move(next);
  }
  return out;
}

enum class Status { Ok, InsufficientClients, Invalid, Failed };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Ok: return "ok";
    case Status::InsufficientClients: return "insufficient_clients";
    case Status::Invalid: return "invalid";
    case Status::Failed: return "failed";
  }
  return "?";
}

struct SweepRow {
  GridPoint point;
  std::string strategy;
  std::size_t clusters = 0;
  std::size_t sats_per_cluster = 0;
  std::size_t ground_stations = 0;
  std::size_t trials = 0;  // trial index for per-trial rows, count for averaged rows
  std::uint64_t seed = 0;
  Status status = Status::Ok;
  std::string message;
  double max_accuracy = 0.0;
  double mean_round_h = 0.0;
  double mean_idle_h = 0.0;
  double rounds = 0.0;
  std::optional<double> time_to_target_h;
  double span_h = 0.0;
};

struct SweepResult {
  std::vector<std::string> axes;
  std::vector<SweepRow> trials;   // one row per (config, trial)
  std::vector<SweepRow> averaged;  // one row per config
  std::size_t invalid_configs = 0;
};

namespace detail {

inline SweepRow run_one(const GridSpec& g, const GridPoint& p, std::size_t trial) {
  SweepRow row;
  row.point = p;
  row.trials = trial;
  row.seed = g.seed + trial;
  nlohmann::json j = g.base;
  for (const auto& [k, v] : p) j[k] = v;
  j["seed"] = row.seed;
  sim::ScenarioConfig cfg;
  try {
    cfg = scenario::scenario_from_json(j, g.base_dir);
  } catch (const std::exception& e) {
    row.status = Status::Invalid;
    row.message = e.what();
    return row;
  }
  row.strategy = cfg.strategy.label();
  row.clusters = cfg.clusters;
  row.sats_per_cluster = cfg.sats_per_cluster;
  row.ground_stations = cfg.ground_stations;
  try {
    const auto rep = sim::run_scenario(cfg);
    if (rep.insufficient_clients) row.status = Status::InsufficientClients;
    row.max_accuracy = rep.max_accuracy;
    row.mean_round_h = rep.mean_round_s / 3600.0;
    row.mean_idle_h = rep.mean_idle_s / 3600.0;
    row.rounds = static_cast<double>(rep.rounds_completed);
    if (rep.time_to_target_s) row.time_to_target_h = *rep.time_to_target_s / 3600.0;
    row.span_h = rep.span_s / 3600.0;
  } catch (const strategies::ConfigurationRejected& e) {
    row.status = Status::Invalid;
    row.message = e.what();
  } catch (const std::exception& e) {
    row.status = Status::Failed;
    row.message = e.what();
  }
  return row;
}

inline SweepRow average(const std::vector<SweepRow>& rows) {
  SweepRow a = rows.front();
  a.trials = rows.size();
  a.seed = rows.front().seed;
  std::size_t ok = 0, reached = 0;
  double acc = 0, dur = 0, idle = 0, rounds = 0, ttt = 0, span = 0;
  for (const auto& r : rows) {
    if (r.status == Status::Invalid || r.status == Status::Failed) {
      a.status = r.status;
      a.message = r.message;
    }
    if (r.status != Status::Ok) continue;
    ++ok;
    acc += r.max_accuracy;
    dur += r.mean_round_h;
    idle += r.mean_idle_h;
    rounds += r.rounds;
    span += r.span_h;
    if (r.time_to_target_h) {
      ++reached;
      ttt += *r.time_to_target_h;
    }
  }
  const double n = ok ? static_cast<double>(ok) : 1.0;
  a.max_accuracy = acc / n;
  a.mean_round_h = dur / n;
  a.mean_idle_h = idle / n;
  a.rounds = rounds / n;
  a.span_h = span / n;
  a.time_to_target_h.reset();
  if (ok && reached == ok) a.time_to_target_h = ttt / static_cast<double>(reached);
  return a;
}

}  // namespace detail

/// Runs every (grid point, trial) on `parallelism` workers. Row order and
/// content depend only on the grid, never on scheduling.
inline SweepResult run_sweep(const GridSpec& g, std::size_t parallelism = 1) {
  if (g.trials < 1) throw std::invalid_argument("trials must be >= 1");
  const auto points = expand(g);
  const std::size_t jobs = points.size() * g.trials;
  std::vector<SweepRow> rows(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs; i = next++)
      rows[i] = detail::run_one(g, points[i / g.trials], i % g.trials);
  };
  const std::size_t n = std::clamp<std::size_t>(parallelism, 1, std::max<std::size_t>(1, jobs));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SweepResult res;
  for (const auto& [axis, _] : g.axes) res.axes.push_back(axis);
  res.trials = rows;
  for (std::size_t p = 0; p < points.size(); ++p) {
    std::vector<SweepRow> group(rows.begin() + static_cast<std::ptrdiff_t>(p * g.trials),
                                rows.begin() + static_cast<std::ptrdiff_t>((p + 1) * g.trials));
    res.averaged.push_back(detail::average(group));
    if (res.averaged.back().status == Status::Invalid) ++res.invalid_configs;
  }
  return res;
}

// ---------------------------------------------------------------------------
// CSV.

inline std::string cell(const nlohmann::json& v) {
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '"', '\'');
  return s;
}

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {
      "strategy", "clusters", "sats_per_cluster", "ground_stations", "trials", "seed", "status",
      "max_accuracy", "mean_round_h", "mean_idle_h", "rounds", "time_to_target_h", "span_h", "message"};
  return cols;
}

inline void write_rows(std::ostream& out, const std::vector<std::string>& axes,
                       const std::vector<SweepRow>& rows) {
  out << "schema_version";
  for (const auto& a : axes) out << ",key." << a;
  for (const auto& c : metric_columns()) out << ',' << c;
  out << '\n';
  for (const auto& r : rows) {
    out << kSchemaVersion;
    for (const auto& [k, v] : r.point) out << ',' << cell(v);
    out << ',' << r.strategy;
    if (r.clusters == 0)  // config never parsed
      out << ",,,";
    else
      out << ',' << r.clusters << ',' << r.sats_per_cluster << ',' << r.ground_stations;
    out << ',' << r.trials << ',' << r.seed << ',' << to_string(r.status) << ','
        << num(r.max_accuracy) << ',' << num(r.mean_round_h) << ',' << num(r.mean_idle_h) << ','
        << num(r.rounds) << ',' << (r.time_to_target_h ? num(*r.time_to_target_h) : "") << ','
        << num(r.span_h) << ',' << cell(r.message) << '\n';
  }
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& r) { write_rows(out, r.axes, r.averaged); }
inline void write_trials_csv(std::ostream& out, const SweepResult& r) { write_rows(out, r.axes, r.trials); }

/// A parsed sweep table: header names and string cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("sweep table has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline Table read_table(std::istream& in) {
  Table t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string c;
    std::stringstream ss(l);
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) throw std::invalid_argument("sweep table is empty");
  t.header = split(line);
  if (t.header.empty() || t.header.front() != "schema_version")
    throw std::invalid_argument("not a sweep table: missing schema_version column");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) throw std::invalid_argument("sweep table row has wrong width");
    if (cells[0] != std::to_string(kSchemaVersion))
      throw std::invalid_argument("unsupported sweep schema version " + cells[0]);
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline Table to_table(const SweepResult& r) {
  std::stringstream ss;
  write_sweep_csv(ss, r);
  return read_table(ss);
}

inline const std::vector<std::string>& heatmap_metrics() {
  static const std::vector<std::string> m = {"accuracy", "round_duration_h", "idle_h"};
  return m;
}

inline std::string metric_column(const std::string& metric) {
  if (metric == "accuracy") return "max_accuracy";
  if (metric == "round_duration_h") return "mean_round_h";
  if (metric == "idle_h") return "mean_idle_h";
  throw std::invalid_argument("metric must be one of accuracy, round_duration_h, idle_h");
}

/// Rows = sats_per_cluster, columns = clusters, for one ground-station
/// count. Only rows passing `keep` are used. Missing cells stay empty;
/// configurations flagged insufficient_clients read as 0.
template <class Keep>
void export_heatmap(std::ostream& out, const Table& t, const std::string& metric, std::size_t gs, Keep keep) {
  const std::size_t mc = t.column(metric_column(metric));
  const std::size_t cc = t.column("clusters"), sc = t.column("sats_per_cluster");
  const std::size_t gc = t.column("ground_stations"), st = t.column("status");
  std::set<std::size_t> clusters, sats;
  std::map<std::pair<std::size_t, std::size_t>, std::string> cells;
  for (const auto& r : t.rows) {
    if (r[cc].empty() || r[sc].empty() || r[gc].empty()) continue;
    const std::size_t c = std::stoul(r[cc]), s = std::stoul(r[sc]);
    clusters.insert(c);
    sats.insert(s);
    if (std::stoul(r[gc]) != gs || !keep(r)) continue;
    if (r[st] == "ok") cells[{s, c}] = r[mc];
    else if (r[st] == "insufficient_clients") cells[{s, c}] = "0";
  }
  out << "sats_per_cluster\\clusters";
  for (auto c : clusters) out << ',' << c;
  out << '\n';
  for (auto s : sats) {
    out << s;
    for (auto c : clusters) {
      const auto it = cells.find({s, c});
      out << ',' << (it == cells.end() ? "" : it->second);
    }
    out << '\n';
  }
}

inline void export_heatmap(std::ostream& out, const Table& t, const std::string& metric, std::size_t gs) {
  export_heatmap(out, t, metric, gs, [](const std::vector<std::string>&) { return true; });
}

/// Writes one heatmap per (ground-station count, variant), where a variant
/// is a distinct combination of strategy and the remaining grid keys.
/// Returns the written paths.
inline std::vector<std::filesystem::path> export_heatmaps(const Table& t, const std::string& metric,
                                                          const std::filesystem::path& dir) {
  metric_column(metric);
  const std::size_t gc = t.column("ground_stations");
  std::vector<std::size_t> variant_cols;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    const auto& h = t.header[i];
    if (h == "strategy" || (h.rfind("key.", 0) == 0 && h != "key.clusters" && h != "key.sats_per_cluster" &&
                            h != "key.ground_stations"))
      variant_cols.push_back(i);
  }
  auto variant_of = [&](const std::vector<std::string>& r) {
    std::string v;
    for (auto i : variant_cols) {
      if (r[i].empty()) continue;
      if (!v.empty()) v += '_';
      v += t.header[i] == "strategy" ? r[i] : t.header[i].substr(4) + "-" + r[i];
    }
    for (auto& ch : v)
      if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '-';
    return v;
  };
  std::map<std::pair<std::size_t, std::string>, bool> groups;
  for (const auto& r : t.rows)
    if (!r[gc].empty()) groups[{std::stoul(r[gc]), variant_of(r)}] = true;
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [key, _] : groups) {
    const auto& [gs, variant] = key;
    std::string name = "heatmap_" + metric + "_gs" + std::to_string(gs);
    if (!variant.empty()) name += "_" + variant;
    const auto path = dir / (name + ".csv");
    std::ofstream out(path);
    export_heatmap(out, t, metric, gs, [&](const std::vector<std::string>& r) { return variant_of(r) == variant; });
    written.push_back(path);
  }
  return written;
}

}  // namespace flsat::sweep
