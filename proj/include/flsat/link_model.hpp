// Communication-time, on-board compute and orbital-average-power models.
#pragma once

#include <cstdint>
#include <stdexcept>

namespace flsat::sim {

struct CommModel {
  double data_rate_Bps = 1.0e6;
  unsigned bits_per_param = 32;
  std::uint64_t param_count = 0;  // 0: use the learner's parameter count

  void validate() const {
    if (!(data_rate_Bps > 0.0)) throw std::invalid_argument("data_rate_Bps must be > 0");
    if (bits_per_param != 8 && bits_per_param != 10 && bits_per_param != 16 &&
        bits_per_param != 32)
      throw std::invalid_argument("bits_per_param must be one of 8, 10, 16, 32");
  }
};

/// FLyCube-class radio (about 1.6 KB/s), for transmission-bound studies.
inline CommModel flycube_radio() { return {1600.0, 32, 0}; }

inline double transmission_time(double payload_bytes, const CommModel& comm) {
  if (!(payload_bytes >= 0.0)) throw std::invalid_argument("payload must be >= 0");
  if (!(comm.data_rate_Bps > 0.0)) throw std::invalid_argument("data_rate_Bps must be > 0");
  return payload_bytes / comm.data_rate_Bps;
}

/// A transfer needs one contiguous window; it is never resumed.
inline bool fits_in_window(double payload_bytes, const CommModel& comm, double window_s) {
  return transmission_time(payload_bytes, comm) <= window_s;
}

struct ComputeModel {
  double throughput_samples_per_s = 2000.0;
  // Epochs beyond this are accounted in time but not executed numerically.
  std::size_t max_simulated_epochs = 20;

  double epoch_time(std::size_t samples) const {
    return static_cast<double>(samples) / throughput_samples_per_s;
  }

  void validate() const {
    if (!(throughput_samples_per_s > 0.0))
      throw std::invalid_argument("throughput_samples_per_s must be > 0");
    if (max_simulated_epochs < 1) throw std::invalid_argument("max_simulated_epochs must be >= 1");
  }
};

/// Mode powers (mW) and duty cycles. Defaults are the FLyCube table: the
/// FL workload spends 80% of the orbit training and 20% training while
/// transmitting.
struct PowerModel {
  double low_power_idle_mW = 760.0;
  double radio_tx_mW = 1613.0;
  double training_mW = 2178.0;
  double training_plus_tx_mW = 3138.0;

  double duty_idle = 0.0;
  double duty_radio_tx = 0.0;
  double duty_training = 0.8;
  double duty_training_plus_tx = 0.2;

  // Charge the unused remainder of the orbit at idle power.
  bool count_idle_remainder = false;

  double duty_sum() const { return duty_idle + duty_radio_tx + duty_training + duty_training_plus_tx; }

  void validate() const {
    for (double p : {low_power_idle_mW, radio_tx_mW, training_mW, training_plus_tx_mW})
      if (!(p >= 0.0)) throw std::invalid_argument("mode powers must be >= 0");
    for (double d : {duty_idle, duty_radio_tx, duty_training, duty_training_plus_tx})
      if (!(d >= 0.0 && d <= 1.0)) throw std::invalid_argument("duty cycles must lie in [0, 1]");
    if (duty_sum() > 1.0 + 1e-12) throw std::invalid_argument("duty cycles sum above 1");
  }
};

struct PowerBreakdown {
  double idle_mW = 0.0;
  double radio_tx_mW = 0.0;
  double training_mW = 0.0;
  double training_plus_tx_mW = 0.0;
  double remainder_mW = 0.0;

  double total() const {
    return idle_mW + radio_tx_mW + training_mW + training_plus_tx_mW + remainder_mW;
  }
};

inline PowerBreakdown oap_contributions(const PowerModel& pm) {
  pm.validate();
  PowerBreakdown b;
  b.idle_mW = pm.duty_idle * pm.low_power_idle_mW;
  b.radio_tx_mW = pm.duty_radio_tx * pm.radio_tx_mW;
  b.training_mW = pm.duty_training * pm.training_mW;
  b.training_plus_tx_mW = pm.duty_training_plus_tx * pm.training_plus_tx_mW;
  if (pm.count_idle_remainder) {
    const double rest = 1.0 - pm.duty_sum();
    b.remainder_mW = (rest > 0.0 ? rest : 0.0) * pm.low_power_idle_mW;
  }
  return b;
}

/// Duty-cycle weighted orbital average power in mW.
inline double orbital_average_power(const PowerModel& pm) { return oap_contributions(pm).total(); }

}  // namespace flsat::sim
