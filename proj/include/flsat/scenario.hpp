// Scenario files: flat JSON objects whose keys map one-to-one onto
// ScenarioConfig fields. Unknown keys and ill-typed values are rejected with
// a message naming the key.
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "flsat/simulation.hpp"

namespace flsat::scenario {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "clusters", "sats_per_cluster", "altitude_km", "inclination_deg",
      "ground_station_file", "ground_stations", "elevation_mask_deg", "isl_margin_km", "scan_step_s",
      "strategy", "augmentations", "max_clients_per_round", "buffer_size", "staleness_bound",
      "batch_size", "local_epochs", "learning_rate", "prox_mu", "min_epochs",
      "data_rate_Bps", "bits_per_param", "param_count", "throughput_samples_per_s",
      "max_simulated_epochs",
      "power_idle_mW", "power_radio_tx_mW", "power_training_mW", "power_training_plus_tx_mW",
      "duty_idle", "duty_radio_tx", "duty_training", "duty_training_plus_tx", "power_count_idle",
      "dataset_file", "samples_per_class", "test_per_class", "blob_center_scale", "shards_per_client",
      "horizon_s", "max_rounds", "seed", "target_accuracy"};
  return keys;
}

/// Default proximal weight for FedProx when the file does not set one.
inline constexpr double kDefaultFedProxMu = 0.01;

namespace detail {

using json = nlohmann::json;

inline double get_number(const json& j, const std::string& key) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(key + ": expected a number");
  return v.get<double>();
}

inline std::uint64_t get_count(const json& j, const std::string& key) {
  const auto& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() < 0) throw ConfigError(key + ": must be >= 0");
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0.0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
  }
  throw ConfigError(key + ": expected a non-negative integer");
}

inline std::string get_string(const json& j, const std::string& key) {
  const auto& v = j.at(key);
  if (!v.is_string()) throw ConfigError(key + ": expected a string");
  return v.get<std::string>();
}

inline bool get_bool(const json& j, const std::string& key) {
  const auto& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(key + ": expected true or false");
  return v.get<bool>();
}

inline std::string resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? p : (base / path).lexically_normal().string();
}

}  // namespace detail

/// Builds a validated config from a JSON object. Relative file paths are
/// resolved against `base_dir`.
inline sim::ScenarioConfig scenario_from_json(const nlohmann::json& j,
                                              const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("scenario: expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known_keys().count(key)) throw ConfigError(key + ": unknown key");

  sim::ScenarioConfig c;
  auto has = [&](const char* k) { return j.contains(k) && !j.at(k).is_null(); };
  auto count = [&](const char* k, auto& field) {
    if (has(k)) field = static_cast<std::remove_reference_t<decltype(field)>>(get_count(j, k));
  };
  auto number = [&](const char* k, double& field) {
    if (has(k)) field = get_number(j, k);
  };

  count("clusters", c.clusters);
  count("sats_per_cluster", c.sats_per_cluster);
  number("altitude_km", c.altitude_km);
  number("inclination_deg", c.inclination_deg);
  if (has("ground_station_file")) c.ground_station_file = resolve(get_string(j, "ground_station_file"), base_dir);
  count("ground_stations", c.ground_stations);
  if (has("elevation_mask_deg")) c.elevation_mask_deg = get_number(j, "elevation_mask_deg");
  number("isl_margin_km", c.isl_margin_km);
  number("scan_step_s", c.scan_step_s);

  auto& s = c.strategy;
  if (has("strategy")) {
    try {
      s.kind = strategies::parse_strategy(get_string(j, "strategy"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("strategy: ") + e.what());
    }
  }
  if (has("augmentations")) {
    const auto& a = j.at("augmentations");
    if (!a.is_array()) throw ConfigError("augmentations: expected a list of names");
    for (const auto& name : a) {
      if (!name.is_string()) throw ConfigError("augmentations: expected a list of names");
      try {
        s.augmentations.insert(strategies::parse_augmentation(name.get<std::string>()));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("augmentations: ") + e.what());
      }
    }
  }
  count("max_clients_per_round", s.max_clients_per_round);
  count("buffer_size", s.buffer_size);
  count("staleness_bound", s.staleness_bound);
  count("batch_size", s.train.batch_size);
  count("local_epochs", s.train.local_epochs);
  number("learning_rate", s.train.learning_rate);
  s.train.prox_mu = s.kind == strategies::StrategyKind::FedProx ? kDefaultFedProxMu : 0.0;
  number("prox_mu", s.train.prox_mu);
  count("min_epochs", s.train.min_epochs);

  number("data_rate_Bps", c.comm.data_rate_Bps);
  if (has("bits_per_param")) c.comm.bits_per_param = static_cast<unsigned>(get_count(j, "bits_per_param"));
  count("param_count", c.comm.param_count);
  number("throughput_samples_per_s", c.compute.throughput_samples_per_s);
  count("max_simulated_epochs", c.compute.max_simulated_epochs);

  number("power_idle_mW", c.power.low_power_idle_mW);
  number("power_radio_tx_mW", c.power.radio_tx_mW);
  number("power_training_mW", c.power.training_mW);
  number("power_training_plus_tx_mW", c.power.training_plus_tx_mW);
  number("duty_idle", c.power.duty_idle);
  number("duty_radio_tx", c.power.duty_radio_tx);
  number("duty_training", c.power.duty_training);
  number("duty_training_plus_tx", c.power.duty_training_plus_tx);
  if (has("power_count_idle")) c.power.count_idle_remainder = get_bool(j, "power_count_idle");

  if (has("dataset_file")) c.dataset_file = resolve(get_string(j, "dataset_file"), base_dir);
  count("samples_per_class", c.blobs.samples_per_class);
  count("test_per_class", c.blobs.test_per_class);
  number("blob_center_scale", c.blobs.center_scale);
  count("shards_per_client", c.shards_per_client);

  number("horizon_s", c.horizon_s);
  count("max_rounds", c.max_rounds);
  if (has("seed")) c.seed = get_count(j, "seed");
  if (has("target_accuracy")) c.target_accuracy = get_number(j, "target_accuracy");

  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!c.ground_station_file.empty() && !std::filesystem::exists(c.ground_station_file))
    throw ConfigError("ground_station_file: no such file '" + c.ground_station_file + "'");
  if (!c.dataset_file.empty() && !std::filesystem::exists(c.dataset_file))
    throw ConfigError("dataset_file: no such file '" + c.dataset_file + "'");
  if (c.ground_station_file.empty() ? c.ground_stations > default_ground_stations().size()
                                    : c.ground_stations > load_ground_stations(c.ground_station_file).size())
    throw ConfigError("ground_stations: more stations requested than the network provides");
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("parse error in '" + path + "': " + e.what());
  }
}

inline sim::ScenarioConfig load_scenario(const std::string& path) {
  return scenario_from_json(read_json_file(path), std::filesystem::path(path).parent_path());
}

}  // namespace flsat::scenario
