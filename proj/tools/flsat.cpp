// Command-line front end: run one scenario, sweep a grid, export heatmaps
// or dump contact windows.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "flsat/scenario.hpp"
#include "flsat/simulation.hpp"
#include "flsat/sweep.hpp"

namespace fs = std::filesystem;
using namespace flsat;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitFailed = 1;

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

int cmd_run(const std::string& config, const fs::path& dir, std::optional<std::uint64_t> seed) {
  auto cfg = scenario::load_scenario(config);
  if (seed) cfg.seed = *seed;
  const auto rep = sim::run_scenario(cfg);
  fs::create_directories(dir);
  open_out(dir / "report.json") << sim::to_json(rep).dump(2) << '\n';
  auto rounds = open_out(dir / "rounds.csv");
  sim::write_rounds_csv(rounds, rep.rounds);
  auto acc = open_out(dir / "accuracy.csv");
  sim::write_accuracy_csv(acc, rep);
  std::printf("%s: %zu rounds, max accuracy %.4f, mean round %.3f h, mean idle %.3f h, stop: %s\n",
              rep.strategy.c_str(), rep.rounds_completed, rep.max_accuracy, rep.mean_round_s / 3600.0,
              rep.mean_idle_s / 3600.0, rep.stop_reason.c_str());
  return 0;
}

int cmd_sweep(const std::string& config, const fs::path& dir, std::optional<std::size_t> trials,
              std::optional<std::uint64_t> seed, std::size_t parallelism) {
  auto grid = sweep::load_grid(config);
  if (trials) grid.trials = *trials;
  if (seed) grid.seed = *seed;
  const auto res = sweep::run_sweep(grid, parallelism);
  fs::create_directories(dir);
  auto avg = open_out(dir / "sweep.csv");
  sweep::write_sweep_csv(avg, res);
  auto per_trial = open_out(dir / "sweep_trials.csv");
  sweep::write_trials_csv(per_trial, res);
  std::size_t failed = 0;
  for (const auto& r : res.averaged) {
    if (r.status == sweep::Status::Invalid || r.status == sweep::Status::Failed)
      std::fprintf(stderr, "%s row: %s\n", sweep::to_string(r.status), r.message.c_str());
    if (r.status == sweep::Status::Failed) ++failed;
  }
  std::printf("%zu configurations x %zu trials -> %s\n", res.averaged.size(), grid.trials,
              (dir / "sweep.csv").string().c_str());
  if (res.invalid_configs) return kExitInvalid;
  return failed ? kExitFailed : 0;
}

int cmd_heatmap(const fs::path& table_path, const fs::path& dir, const std::string& metric) {
  std::ifstream in(table_path);
  if (!in) throw std::runtime_error("cannot open sweep table " + table_path.string());
  const auto table = sweep::read_table(in);
  for (const auto& m : metric == "all" ? sweep::heatmap_metrics() : std::vector<std::string>{metric})
    for (const auto& p : sweep::export_heatmaps(table, m, dir)) std::printf("%s\n", p.string().c_str());
  return 0;
}

int cmd_windows(const std::string& config, const fs::path& dir, std::optional<double> span) {
  const auto cfg = scenario::load_scenario(config);
  const double t1 = span ? *span : cfg.horizon_s;
  if (!(t1 > 0.0)) throw scenario::ConfigError("span-s: must be > 0");
  const auto constellation =
      orbital::build_walker_star(cfg.clusters, cfg.sats_per_cluster, cfg.altitude_km, cfg.inclination_deg);
  const auto stations = sim::select_stations(cfg);
  planner::ScanOptions scan;
  scan.step_s = cfg.scan_step_s;
  planner::IslOptions isl;
  isl.grazing_margin_km = cfg.isl_margin_km;
  isl.scan = scan;
  fs::create_directories(dir);
  const auto access = planner::compute_access_windows(constellation, stations, 0.0, t1, scan);
  auto a = open_out(dir / "access_windows.csv");
  planner::write_windows_csv(a, access);
  const auto links = planner::compute_isl_windows(constellation, 0.0, t1, isl);
  auto l = open_out(dir / "isl_windows.csv");
  planner::write_windows_csv(l, links);
  std::printf("%zu access windows, %zu isl windows over %.0f s\n", access.size(), links.size(), t1);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning over LEO constellations: scenario runner and sweeps"};
  app.require_subcommand(1);

  std::string config;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::size_t parallelism = 1;
  std::string metric = "all";
  std::string table;
  std::optional<double> span;

  auto* run = app.add_subcommand("run", "Run one scenario");
  run->add_option("--config", config, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  run->add_option("--out-dir", out_dir, "Output directory");
  run->add_option("--seed", seed, "Override the scenario seed");

  auto* sw = app.add_subcommand("sweep", "Run a parameter grid");
  sw->add_option("--config", config, "Sweep JSON file")->required()->check(CLI::ExistingFile);
  sw->add_option("--out-dir", out_dir, "Output directory");
  sw->add_option("--trials", trials, "Trials per configuration")->check(CLI::PositiveNumber);
  sw->add_option("--seed", seed, "Base seed; trial i uses seed + i");
  sw->add_option("--parallelism", parallelism, "Worker threads")->check(CLI::PositiveNumber);

  auto* hm = app.add_subcommand("heatmap", "Export heatmap matrices from a sweep table");
  hm->add_option("--out-dir", out_dir, "Directory holding sweep.csv; heatmaps are written here");
  hm->add_option("--config", table, "Sweep table to read (default: <out-dir>/sweep.csv)");
  hm->add_option("--metric", metric, "accuracy, round_duration_h, idle_h or all")
      ->check(CLI::IsMember({"accuracy", "round_duration_h", "idle_h", "all"}));

  auto* win = app.add_subcommand("windows", "Dump access and inter-satellite windows");
  win->add_option("--config", config, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  win->add_option("--out-dir", out_dir, "Output directory");
  win->add_option("--span-s", span, "Window span in seconds (default: the scenario horizon)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, out_dir, seed);
    if (*sw) return cmd_sweep(config, out_dir, trials, seed, parallelism);
    if (*hm) return cmd_heatmap(table.empty() ? fs::path(out_dir) / "sweep.csv" : fs::path(table), out_dir, metric);
    if (*win) return cmd_windows(config, out_dir, span);
  } catch (const scenario::ConfigError& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kExitInvalid;
  } catch (const strategies::ConfigurationRejected& e) {
    std::fprintf(stderr, "configuration rejected: %s\n", e.what());
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailed;
  }
  return 0;
}
