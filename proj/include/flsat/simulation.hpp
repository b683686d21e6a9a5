// Scenario runner: builds the constellation, contact windows and learning
// task for a ScenarioConfig, drives the chosen protocol round by round and
// summarises the run as a MetricsReport.
#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flsat/contact_planner.hpp"
#include "flsat/fl_engine.hpp"
#include "flsat/ground_stations.hpp"
#include "flsat/link_model.hpp"
#include "flsat/orbital.hpp"
#include "flsat/strategies.hpp"

namespace flsat::sim {

inline constexpr double kDefaultHorizonS = 90.0 * 86400.0;  // mid April to mid July
inline constexpr std::size_t kDefaultMaxRounds = 500;

struct ScenarioConfig {
  std::size_t clusters = 1;
  std::size_t sats_per_cluster = 1;
  double altitude_km = 500.0;
  double inclination_deg = 90.0;

  std::string ground_station_file;  // empty: built-in network
  std::size_t ground_stations = 13;  // first N stations in file order
  std::optional<double> elevation_mask_deg;  // overrides every station mask when set
  double isl_margin_km = 100.0;
  double scan_step_s = 10.0;

  strategies::StrategyConfig strategy;
  CommModel comm;
  ComputeModel compute;
  PowerModel power;

  std::string dataset_file;  // empty: synthetic blob task
  fl::BlobSpec blobs;
  std::size_t shards_per_client = 2;

  double horizon_s = kDefaultHorizonS;
  std::size_t max_rounds = kDefaultMaxRounds;
  std::uint64_t seed = 1;
  std::optional<double> target_accuracy;

  std::size_t num_satellites() const { return clusters * sats_per_cluster; }

  void validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
      throw std::invalid_argument(key + ": " + why);
    };
    if (clusters < 1) fail("clusters", "must be >= 1");
    if (sats_per_cluster < 1) fail("sats_per_cluster", "must be >= 1");
    if (!(altitude_km > isl_margin_km)) fail("altitude_km", "must exceed isl_margin_km");
    if (!(inclination_deg >= 0.0 && inclination_deg <= 180.0)) fail("inclination_deg", "must lie in [0, 180]");
    if (ground_stations < 1) fail("ground_stations", "must be >= 1");
    if (elevation_mask_deg && !(*elevation_mask_deg >= 0.0 && *elevation_mask_deg < 90.0))
      fail("elevation_mask_deg", "must lie in [0, 90)");
    if (!(isl_margin_km >= 0.0)) fail("isl_margin_km", "must be >= 0");
    if (!(scan_step_s > 0.0)) fail("scan_step_s", "must be > 0");
    if (!(horizon_s > 0.0)) fail("horizon_s", "must be > 0");
    if (max_rounds < 1) fail("max_rounds", "must be >= 1");
    if (target_accuracy && !(*target_accuracy > 0.0 && *target_accuracy <= 1.0))
      fail("target_accuracy", "must lie in (0, 1]");
    if (shards_per_client < 1) fail("shards_per_client", "must be >= 1");
    if (strategy.max_clients_per_round < 1) fail("max_clients_per_round", "must be >= 1");
    if (strategy.train.batch_size < 1) fail("batch_size", "must be >= 1");
    if (strategy.train.local_epochs < 1) fail("local_epochs", "must be >= 1");
    if (!(strategy.train.learning_rate > 0.0)) fail("learning_rate", "must be > 0");
    if (!(strategy.train.prox_mu >= 0.0)) fail("prox_mu", "must be >= 0");
    if (strategy.train.min_epochs < 1) fail("min_epochs", "must be >= 1");
    if (!(comm.data_rate_Bps > 0.0)) fail("data_rate_Bps", "must be > 0");
    if (!fl::supported_bit_width(comm.bits_per_param)) fail("bits_per_param", "must be one of 8, 10, 16, 32");
    if (!(compute.throughput_samples_per_s > 0.0)) fail("throughput_samples_per_s", "must be > 0");
    if (compute.max_simulated_epochs < 1) fail("max_simulated_epochs", "must be >= 1");
    if (blobs.samples_per_class < 1) fail("samples_per_class", "must be >= 1");
    if (blobs.test_per_class < 1) fail("test_per_class", "must be >= 1");
    if (!(blobs.center_scale > 0.0)) fail("blob_center_scale", "must be > 0");
    try {
      strategy.validate();
    } catch (const std::invalid_argument& e) {
      fail("augmentations", e.what());
    }
    try {
      power.validate();
    } catch (const std::invalid_argument& e) {
      fail("power", e.what());
    }
  }
};

using strategies::RoundRecord;

struct MetricsReport {
  std::string strategy;
  std::size_t satellites = 0;
  std::size_t ground_stations = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<double, double>> accuracy_trace;  // (sim time, accuracy)
  std::vector<RoundRecord> rounds;
  std::size_t rounds_completed = 0;
  double mean_round_s = 0.0;
  double max_round_s = 0.0;
  double mean_idle_s = 0.0;
  double max_accuracy = 0.0;
  double final_accuracy = 0.0;
  std::optional<double> time_to_target_s;
  double span_s = 0.0;
  double init_s = 0.0;  // AutoFLSat seeding time
  double oap_mW = 0.0;
  double payload_bytes = 0.0;
  std::size_t dropped_updates = 0;
  bool insufficient_clients = false;
  bool round_incomplete = false;
  std::string stop_reason;
};

struct IdleBreakdown {
  double sat_to_gs_s = 0.0;
  double gs_to_sat_s = 0.0;
  double isl_s = 0.0;
  double compute_s = 0.0;
  double idle_s = 0.0;
  double total_s = 0.0;  // summed round durations
};

/// Per-phase totals over rounds; the phases add up to total_s.
inline IdleBreakdown idle_breakdown(const std::vector<RoundRecord>& records) {
  IdleBreakdown b;
  for (const auto& r : records) {
    b.sat_to_gs_s += r.sat_to_gs_s;
    b.gs_to_sat_s += r.gs_to_sat_s;
    b.isl_s += r.isl_s;
    b.compute_s += r.compute_s;
    b.idle_s += r.idle_s;
    b.total_s += r.duration();
  }
  return b;
}

inline std::vector<orbital::GroundStation> select_stations(const ScenarioConfig& cfg) {
  auto all = cfg.ground_station_file.empty() ? default_ground_stations()
                                             : load_ground_stations(cfg.ground_station_file);
  if (cfg.ground_stations > all.size())
    throw std::invalid_argument("ground_stations: " + std::to_string(cfg.ground_stations) +
                                " requested but the network has " + std::to_string(all.size()));
  all.resize(cfg.ground_stations);
  if (cfg.elevation_mask_deg)
    for (auto& gs : all) gs.min_elevation_deg = *cfg.elevation_mask_deg;
  return all;
}

/// Training and test data for the scenario, partitioned over satellites.
inline strategies::LearningSetup make_learning(const ScenarioConfig& cfg) {
  strategies::LearningSetup ls;
  fl::ClientDataset train, test;
  if (cfg.dataset_file.empty()) {
    auto task = fl::make_blob_task(cfg.blobs, cfg.seed);
    train = std::move(task.train);
    test = std::move(task.test);
  } else {
    // Every fifth row of the file is held out for evaluation.
    const auto all = fl::load_dataset_csv(cfg.dataset_file);
    train.dims = test.dims = all.dims;
    train.num_classes = test.num_classes = all.num_classes;
    for (std::size_t i = 0; i < all.size(); ++i) {
      auto& dst = i % 5 == 4 ? test : train;
      const auto r = all.row(i);
      dst.features.insert(dst.features.end(), r.begin(), r.end());
      dst.labels.push_back(all.labels[i]);
    }
  }
  ls.model = fl::LinearModel{train.dims, train.num_classes};
  ls.clients = fl::partition(train, cfg.num_satellites(), cfg.shards_per_client, cfg.seed);
  ls.test = std::move(test);
  return ls;
}

namespace detail {
inline void summarise(MetricsReport& rep) {
  rep.rounds_completed = rep.rounds.size();
  double dur = 0.0, idle = 0.0;
  for (const auto& r : rep.rounds) {
    dur += r.duration();
    idle += r.idle_s;
    rep.max_round_s = std::max(rep.max_round_s, r.duration());
    rep.max_accuracy = std::max(rep.max_accuracy, r.accuracy);
  }
  if (!rep.rounds.empty()) {
    const auto n = static_cast<double>(rep.rounds.size());
    rep.mean_round_s = dur / n;
    rep.mean_idle_s = idle / n;
    rep.final_accuracy = rep.rounds.back().accuracy;
    rep.span_s = rep.rounds.back().end_s;
  }
}
}  // namespace detail

/// Runs one scenario to the horizon, the round cap or the target accuracy.
/// Deterministic in (config, seed).
inline MetricsReport run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  using strategies::StrategyKind;
  MetricsReport rep;
  rep.strategy = cfg.strategy.label();
  rep.satellites = cfg.num_satellites();
  rep.seed = cfg.seed;
  rep.oap_mW = orbital_average_power(cfg.power);
  const auto stations = select_stations(cfg);
  rep.ground_stations = stations.size();

  // A single client cannot federate anything.
  if (cfg.num_satellites() < 2 && cfg.strategy.kind != StrategyKind::AutoFlSat) {
    rep.insufficient_clients = true;
    rep.stop_reason = "insufficient_clients";
    return rep;
  }

  const auto constellation =
      orbital::build_walker_star(cfg.clusters, cfg.sats_per_cluster, cfg.altitude_km, cfg.inclination_deg);
  const auto learning = make_learning(cfg);
  const std::uint64_t params = cfg.comm.param_count ? cfg.comm.param_count : learning.model.param_count();
  rep.payload_bytes = static_cast<double>(fl::payload_bytes(params, cfg.comm.bits_per_param));

  planner::ScanOptions scan;
  scan.step_s = cfg.scan_step_s;
  planner::IslOptions isl;
  isl.grazing_margin_km = cfg.isl_margin_km;
  isl.scan = scan;
  const planner::ContactIndex contacts(
      planner::compute_access_windows(constellation, stations, 0.0, cfg.horizon_s, scan),
      constellation.size());
  planner::RelayIndex relays;
  if (cfg.strategy.has(strategies::Augmentation::IntraSl))
    relays = planner::RelayIndex(planner::compute_intra_sl_windows(constellation, 0.0, cfg.horizon_s, isl));
  std::optional<planner::InterSlPattern> inter;
  if (cfg.strategy.kind == StrategyKind::AutoFlSat && cfg.clusters >= 2)
    inter.emplace(constellation, 0.0, isl);

  strategies::SimContext ctx;
  ctx.constellation = &constellation;
  ctx.contacts = &contacts;
  ctx.relays = &relays;
  ctx.inter = inter ? &*inter : nullptr;
  ctx.learning = &learning;
  ctx.strategy = cfg.strategy;
  ctx.compute = cfg.compute;
  ctx.payload_bytes = rep.payload_bytes;
  ctx.data_rate_Bps = cfg.comm.data_rate_Bps;
  ctx.bits_per_param = cfg.comm.bits_per_param;
  ctx.isl_margin_km = cfg.isl_margin_km;
  ctx.horizon_s = cfg.horizon_s;
  ctx.seed = cfg.seed;

  strategies::ServerState st;
  st.global = learning.model.zeros();
  strategies::ActivityLog log(constellation.size());
  rep.accuracy_trace.emplace_back(0.0, fl::evaluate(learning.model, st.global, learning.test).accuracy);

  std::optional<strategies::FedBuffServer> fedbuff;
  std::optional<strategies::AutoFlSatRunner> autofl;
  std::function<RoundRecord()> next;
  switch (cfg.strategy.kind) {
    case StrategyKind::FedAvg:
      next = [&] { return strategies::fedavg_sat_round(st, log, ctx); };
      break;
    case StrategyKind::FedProx:
      next = [&] { return strategies::fedprox_sat_round(st, log, ctx); };
      break;
    case StrategyKind::FedBuff:
      fedbuff.emplace(ctx, 0.0);
      next = [&] { return strategies::fedbuff_sat_round(st, log, *fedbuff); };
      break;
    case StrategyKind::AutoFlSat:
      autofl.emplace(ctx);
      next = [&] { return autofl->next_round(st, log); };
      break;
  }

  rep.stop_reason = "max_rounds";
  try {
    if (autofl) rep.init_s = autofl->initialize(st, log);
    while (rep.rounds.size() < cfg.max_rounds) {
      RoundRecord rec = next();
      if (rec.end_s > cfg.horizon_s) {
        rep.round_incomplete = true;
        rep.stop_reason = "horizon";
        break;
      }
      rep.accuracy_trace.emplace_back(rec.end_s, rec.accuracy);
      rep.rounds.push_back(std::move(rec));
      if (cfg.target_accuracy && rep.rounds.back().accuracy >= *cfg.target_accuracy) {
        rep.time_to_target_s = rep.rounds.back().end_s;
        rep.stop_reason = "target";
        break;
      }
    }
  } catch (const planner::SchedulingHorizonExhausted&) {
    rep.round_incomplete = true;
    rep.stop_reason = "horizon";
  }
  if (fedbuff) rep.dropped_updates = fedbuff->dropped_updates();
  detail::summarise(rep);
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::ordered_json to_json(const RoundRecord& r) {
  nlohmann::ordered_json j;
  j["round"] = r.round_index;
  j["start_s"] = r.start_s;
  j["end_s"] = r.end_s;
  j["participants"] = r.participants;
  j["evaluators"] = r.evaluators;
  j["client_epochs"] = r.client_epochs;
  j["sat_to_gs_s"] = r.sat_to_gs_s;
  j["gs_to_sat_s"] = r.gs_to_sat_s;
  j["isl_s"] = r.isl_s;
  j["comm_s"] = r.comm_s;
  j["compute_s"] = r.compute_s;
  j["idle_s"] = r.idle_s;
  j["accuracy"] = r.accuracy;
  j["loss"] = r.loss;
  return j;
}

inline nlohmann::ordered_json to_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["strategy"] = m.strategy;
  j["satellites"] = m.satellites;
  j["ground_stations"] = m.ground_stations;
  j["seed"] = m.seed;
  j["rounds_completed"] = m.rounds_completed;
  j["mean_round_s"] = m.mean_round_s;
  j["max_round_s"] = m.max_round_s;
  j["mean_idle_s"] = m.mean_idle_s;
  j["max_accuracy"] = m.max_accuracy;
  j["final_accuracy"] = m.final_accuracy;
  j["time_to_target_s"] = nullptr;
  if (m.time_to_target_s) j["time_to_target_s"] = *m.time_to_target_s;
  j["span_s"] = m.span_s;
  j["init_s"] = m.init_s;
  j["oap_mW"] = m.oap_mW;
  j["payload_bytes"] = m.payload_bytes;
  j["dropped_updates"] = m.dropped_updates;
  j["insufficient_clients"] = m.insufficient_clients;
  j["round_incomplete"] = m.round_incomplete;
  j["stop_reason"] = m.stop_reason;
  const auto b = idle_breakdown(m.rounds);
  j["idle_breakdown"] = {{"sat_to_gs_s", b.sat_to_gs_s}, {"gs_to_sat_s", b.gs_to_sat_s},
                         {"isl_s", b.isl_s},             {"compute_s", b.compute_s},
                         {"idle_s", b.idle_s},           {"total_s", b.total_s}};
  auto& trace = j["accuracy_trace"] = nlohmann::ordered_json::array();
  for (const auto& [t, a] : m.accuracy_trace) trace.push_back({t, a});
  auto& rounds = j["rounds"] = nlohmann::ordered_json::array();
  for (const auto& r : m.rounds) rounds.push_back(to_json(r));
  return j;
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_rounds_csv(std::ostream& out, const std::vector<RoundRecord>& rounds) {
  out << "round,start_s,end_s,comm_s,compute_s,idle_s,accuracy,sat_to_gs_s,gs_to_sat_s,isl_s,"
         "participants\n";
  for (const auto& r : rounds)
    out << r.round_index << ',' << fmt_double(r.start_s) << ',' << fmt_double(r.end_s) << ','
        << fmt_double(r.comm_s) << ',' << fmt_double(r.compute_s) << ',' << fmt_double(r.idle_s)
        << ',' << fmt_double(r.accuracy) << ',' << fmt_double(r.sat_to_gs_s) << ','
        << fmt_double(r.gs_to_sat_s) << ',' << fmt_double(r.isl_s) << ',' << r.participants.size()
        << '\n';
}

inline void write_accuracy_csv(std::ostream& out, const MetricsReport& m) {
  out << "sim_time_s,accuracy\n";
  for (const auto& [t, a] : m.accuracy_trace) out << fmt_double(t) << ',' << fmt_double(a) << '\n';
}

}  // namespace flsat::sim
