// Server-side protocols driven by contact windows: synchronous FedAvg and
// FedProx rounds (with the schedule / schedule_v2 / intra_sl layers),
// buffered asynchronous FedBuff and the two-tier AutoFLSat protocol.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <type_traits>
#include <vector>

#include "flsat/contact_planner.hpp"
#include "flsat/event_queue.hpp"
#include "flsat/fl_engine.hpp"
#include "flsat/link_model.hpp"

namespace flsat::strategies {

enum class StrategyKind { FedAvg, FedProx, FedBuff, AutoFlSat };
enum class Augmentation { Schedule, ScheduleV2, IntraSl };

inline const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::FedAvg: return "fedavg";
    case StrategyKind::FedProx: return "fedprox";
    case StrategyKind::FedBuff: return "fedbuff";
    case StrategyKind::AutoFlSat: return "autoflsat";
  }
  return "?";
}

inline const char* to_string(Augmentation a) {
  switch (a) {
    case Augmentation::Schedule: return "schedule";
    case Augmentation::ScheduleV2: return "schedule_v2";
    case Augmentation::IntraSl: return "intra_sl";
  }
  return "?";
}

inline StrategyKind parse_strategy(const std::string& s) {
  for (auto k : {StrategyKind::FedAvg, StrategyKind::FedProx, StrategyKind::FedBuff,
                 StrategyKind::AutoFlSat})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

inline Augmentation parse_augmentation(const std::string& s) {
  for (auto a : {Augmentation::Schedule, Augmentation::ScheduleV2, Augmentation::IntraSl})
    if (s == to_string(a)) return a;
  throw std::invalid_argument("unknown augmentation '" + s + "'");
}

struct StrategyConfig {
  StrategyKind kind = StrategyKind::FedAvg;
  std::size_t max_clients_per_round = 10;  // C
  std::size_t buffer_size = 0;             // D; 0 means min(C, K)
  std::size_t staleness_bound = 3;
  std::set<Augmentation> augmentations;
  fl::TrainConfig train;

  bool has(Augmentation a) const { return augmentations.count(a) != 0; }
  /// Any augmentation switches client selection to fastest return.
  bool scheduled() const { return !augmentations.empty(); }

  /// e.g. "fedavg+schedule+intra_sl"
  std::string label() const {
    std::string s = to_string(kind);
    for (auto a : augmentations) s += std::string("+") + to_string(a);
    return s;
  }

  void validate() const {
    if (max_clients_per_round < 1)
      throw std::invalid_argument("max_clients_per_round must be >= 1");
    if ((kind == StrategyKind::FedBuff || kind == StrategyKind::AutoFlSat) && !augmentations.empty())
      throw std::invalid_argument("augmentations apply to fedavg and fedprox only");
    train.validate();
  }
};

// ---------------------------------------------------------------------------
// Per-satellite activity accounting.

enum class Phase { GsToSat = 0, SatToGs = 1, Isl = 2, Compute = 3 };

struct Activity {
  Phase phase = Phase::Compute;
  double start_s = 0.0;
  double end_s = 0.0;
};

/// Time-ordered, non-overlapping activity intervals per satellite. A new
/// interval that overlaps the previous one is trimmed to start after it.
class ActivityLog {
 public:
  explicit ActivityLog(std::size_t num_satellites = 0) : per_sat_(num_satellites) {}

  void add(std::size_t sat, Phase phase, double start_s, double end_s) {
    auto& v = per_sat_.at(sat);
    if (!v.empty()) start_s = std::max(start_s, v.back().end_s);
    if (end_s > start_s) v.push_back({phase, start_s, end_s});
  }

  /// Seconds per phase spent by `sat` inside [from, to].
  std::array<double, 4> totals(std::size_t sat, double from, double to) const {
    std::array<double, 4> out{};
    const auto& v = per_sat_.at(sat);
    auto it = std::upper_bound(v.begin(), v.end(), from,
                               [](double t, const Activity& a) { return t < a.end_s; });
    for (; it != v.end() && it->start_s < to; ++it) {
      const double len = std::min(it->end_s, to) - std::max(it->start_s, from);
      if (len > 0.0) out[static_cast<int>(it->phase)] += len;
    }
    return out;
  }

  const std::vector<Activity>& of(std::size_t sat) const { return per_sat_.at(sat); }

 private:
  std::vector<std::vector<Activity>> per_sat_;
};

struct RoundRecord {
  std::size_t round_index = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  std::vector<std::size_t> participants;
  std::vector<std::size_t> evaluators;
  std::vector<std::size_t> client_epochs;  // nominal local epochs, aligned with participants
  double sat_to_gs_s = 0.0;
  double gs_to_sat_s = 0.0;
  double isl_s = 0.0;
  double comm_s = 0.0;
  double compute_s = 0.0;
  double idle_s = 0.0;
  double accuracy = 0.0;
  double loss = 0.0;

  double duration() const { return end_s - start_s; }
};

/// Fills the phase fields with means over the distinct participants; idle is
/// whatever remains of the round, so comm + compute + idle is the duration.
inline void account_round(RoundRecord& r, const ActivityLog& log) {
  std::vector<std::size_t> sats = r.participants;
  std::sort(sats.begin(), sats.end());
  sats.erase(std::unique(sats.begin(), sats.end()), sats.end());
  std::array<double, 4> sum{};
  for (auto s : sats) {
    const auto t = log.totals(s, r.start_s, r.end_s);
    for (int i = 0; i < 4; ++i) sum[i] += t[i];
  }
  const double n = sats.empty() ? 1.0 : static_cast<double>(sats.size());
  r.gs_to_sat_s = sum[0] / n;
  r.sat_to_gs_s = sum[1] / n;
  r.isl_s = sum[2] / n;
  r.compute_s = sum[3] / n;
  r.comm_s = r.sat_to_gs_s + r.gs_to_sat_s + r.isl_s;
  r.idle_s = r.duration() - r.comm_s - r.compute_s;
}

// ---------------------------------------------------------------------------
// Simulation context shared by all protocols.

struct LearningSetup {
  fl::LinearModel model;
  std::vector<fl::ClientDataset> clients;  // indexed by satellite id
  fl::ClientDataset test;
};

struct SimContext {
  const orbital::ConstellationSpec* constellation = nullptr;
  const planner::ContactIndex* contacts = nullptr;
  const planner::RelayIndex* relays = nullptr;
  const planner::InterSlPattern* inter = nullptr;
  const LearningSetup* learning = nullptr;
  StrategyConfig strategy;
  sim::ComputeModel compute;
  double payload_bytes = 0.0;
  double data_rate_Bps = 1.0e6;
  unsigned bits_per_param = 32;
  double isl_margin_km = 100.0;
  double horizon_s = 0.0;
  std::uint64_t seed = 1;

  std::size_t num_satellites() const { return constellation->size(); }
  double model_tx_s() const { return payload_bytes / data_rate_Bps; }
  double epoch_time(std::size_t sat) const {
    return compute.epoch_time(learning->clients.at(sat).size());
  }
  std::uint64_t train_seed(std::size_t round, std::size_t sat, std::size_t salt = 0) const {
    return fl::Rng::mix(fl::Rng::mix(fl::Rng::mix(seed, round), sat), salt);
  }
  /// What the receiving end sees after quantized transmission.
  fl::ModelParams transmit(const fl::ModelParams& p) const {
    fl::ModelParams out = p;
    out.values = fl::quantize_roundtrip(p.values, bits_per_param);
    return out;
  }
  fl::TrainConfig train_config() const {
    fl::TrainConfig tc = strategy.train;
    if (strategy.kind == StrategyKind::FedAvg || strategy.kind == StrategyKind::AutoFlSat)
      tc.prox_mu = 0.0;
    return tc;
  }
};

struct ServerState {
  fl::ModelParams global;
  std::size_t round = 0;
  double now_s = 0.0;
};

inline void evaluate_into(RoundRecord& r, const ServerState& st, const SimContext& ctx) {
  const auto ev = fl::evaluate(ctx.learning->model, st.global, ctx.learning->test);
  r.accuracy = ev.accuracy;
  r.loss = ev.mean_loss;
}

/// Clients taking part in a synchronous round: m = min(C, K).
inline std::size_t clients_per_round(const SimContext& ctx) {
  return std::min(ctx.strategy.max_clients_per_round, ctx.num_satellites());
}

namespace detail {

inline std::size_t floor_epochs(double span_s, double epoch_s) {
  if (!(span_s > 0.0)) return 0;
  return static_cast<std::size_t>(std::floor(span_s / epoch_s + 1e-9));
}

inline planner::ScheduleTiming sync_timing(const SimContext& ctx, std::size_t min_epochs) {
  planner::ScheduleTiming tm;
  tm.dispatch_s = tm.upload_s = tm.isl_s = ctx.model_tx_s();
  tm.compute_by_sat.resize(ctx.num_satellites());
  for (std::size_t k = 0; k < ctx.num_satellites(); ++k)
    tm.compute_by_sat[k] = static_cast<double>(min_epochs) * ctx.epoch_time(k);
  return tm;
}

/// One synchronous round. With `continuous`, clients keep training until
/// their update leaves (FedProx); otherwise they run exactly E epochs.
inline RoundRecord sync_round(ServerState& st, ActivityLog& log, const SimContext& ctx,
                              bool continuous) {
  using sim::EventKind;
  const auto& cfg = ctx.strategy;
  const std::size_t m = clients_per_round(ctx);
  const std::size_t min_epochs =
      continuous ? (cfg.has(Augmentation::ScheduleV2) ? std::max<std::size_t>(1, cfg.train.min_epochs) : 1)
                 : cfg.train.local_epochs;
  const auto timing = sync_timing(ctx, min_epochs);
  const planner::RelayIndex* relays = cfg.has(Augmentation::IntraSl) ? ctx.relays : nullptr;
  const auto plan =
      cfg.scheduled()
          ? planner::fastest_return_selection(*ctx.contacts, relays, m, st.now_s, timing)
          : planner::first_contact_selection(*ctx.contacts, relays, m, st.now_s, timing);

  const fl::ModelParams sent = ctx.transmit(st.global);
  const fl::TrainConfig tc = ctx.train_config();
  std::map<std::size_t, planner::ScheduleEntry> entry;
  std::map<std::size_t, std::size_t> epochs;
  std::map<std::size_t, fl::ModelParams> trained, received;
  sim::EventQueue q;
  for (const auto& e : plan) {
    entry[e.satellite] = e;
    q.push(e.first_contact_s, EventKind::DispatchStart, e.satellite);
  }

  RoundRecord rec;
  rec.round_index = st.round;
  rec.start_s = st.now_s;
  double end = st.now_s;
  while (!q.empty()) {
    const auto ev = q.pop();
    const auto& e = entry.at(ev.sat);
    const double leave = e.via.relay ? e.via.isl_start_s : e.return_start_s;
    switch (ev.kind) {
      case EventKind::DispatchStart: {
        log.add(ev.sat, Phase::GsToSat, e.first_contact_s, e.dispatch_end_s);
        const double ep = ctx.epoch_time(ev.sat);
        const std::size_t n =
            continuous ? std::max(min_epochs, floor_epochs(leave - e.dispatch_end_s, ep)) : min_epochs;
        epochs[ev.sat] = n;
        q.push(e.dispatch_end_s + static_cast<double>(n) * ep, EventKind::TrainDone, ev.sat);
        break;
      }
      case EventKind::TrainDone: {
        log.add(ev.sat, Phase::Compute, e.dispatch_end_s, ev.time_s);
        const std::size_t run = std::min(epochs[ev.sat], ctx.compute.max_simulated_epochs);
        auto out = fl::local_train(ctx.learning->model, sent, ctx.learning->clients[ev.sat], tc, sent,
                                   ctx.train_seed(st.round, ev.sat), run);
        out.round_tag = st.round;
        trained[ev.sat] = std::move(out);
        q.push(std::max(leave, ev.time_s), EventKind::UploadStart, ev.sat);
        break;
      }
      case EventKind::UploadStart: {
        if (e.via.relay)
          log.add(ev.sat, Phase::Isl, e.via.isl_start_s, e.via.isl_start_s + timing.isl_s);
        else
          log.add(ev.sat, Phase::SatToGs, e.return_start_s, e.return_contact_s);
        q.push(e.return_contact_s, EventKind::UploadDone, ev.sat);
        break;
      }
      case EventKind::UploadDone: {
        received[ev.sat] = ctx.transmit(trained.at(ev.sat));
        end = std::max(end, ev.time_s);
        break;
      }
      default: break;
    }
  }

  fl::InPlaceAggregator agg;
  for (const auto& [sat, params] : received) {
    agg.add(params);
    rec.participants.push_back(sat);
    rec.client_epochs.push_back(epochs.at(sat));
  }
  st.global = agg.result();
  st.global.round_tag = st.round + 1;
  rec.end_s = end;
  account_round(rec, log);
  evaluate_into(rec, st, ctx);
  try {
    for (const auto& e : planner::first_contact_selection(*ctx.contacts, nullptr, m, end, timing))
      rec.evaluators.push_back(e.satellite);
  } catch (const planner::SchedulingHorizonExhausted&) {
  }
  st.now_s = end;
  ++st.round;
  return rec;
}

}  // namespace detail

/// FedAvgSat: dispatch at each selected client's first contact, E local
/// epochs, collect at its next contact, aggregate once all have returned.
inline RoundRecord fedavg_sat_round(ServerState& st, ActivityLog& log, const SimContext& ctx) {
  return detail::sync_round(st, log, ctx, false);
}

/// FedProxSat: as FedAvgSat, but clients train (with the proximal term)
/// until their update leaves; schedule_v2 enforces min_epochs first.
inline RoundRecord fedprox_sat_round(ServerState& st, ActivityLog& log, const SimContext& ctx) {
  return detail::sync_round(st, log, ctx, true);
}

// ---------------------------------------------------------------------------
// FedBuffSat.

/// Asynchronous buffered aggregation. At every contact a satellite first
/// uploads the update it has been training, then downloads the current
/// global model. The server aggregates whenever D fresh updates are buffered.
class FedBuffServer {
 public:
  explicit FedBuffServer(const SimContext& ctx, double t0 = 0.0) : ctx_(ctx), round_start_(t0) {
    const std::size_t K = ctx.num_satellites();
    const std::size_t C = ctx.strategy.max_clients_per_round;
    buffer_size_ = ctx.strategy.buffer_size > 0 ? ctx.strategy.buffer_size : std::min(C, K);
    clients_.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      const auto& periods = ctx.contacts->periods_of(k);
      auto it = std::lower_bound(periods.begin(), periods.end(), t0,
                                 [](const planner::ContactPeriod& p, double t) { return p.start_s < t; });
      clients_[k].next_period = static_cast<std::size_t>(it - periods.begin());
      if (it != periods.end()) queue_.push(it->start_s, sim::EventKind::ContactStart, k);
    }
  }

  std::size_t buffer_size() const { return buffer_size_; }
  std::size_t dropped_updates() const { return dropped_; }

  RoundRecord next_round(ServerState& st, ActivityLog& log) {
    const double tx = ctx_.model_tx_s();
    const fl::TrainConfig tc = ctx_.train_config();
    while (!queue_.empty()) {
      const auto ev = queue_.pop();
      const std::size_t k = ev.sat;
      auto& c = clients_[k];
      const std::size_t p = c.next_period;
      const auto& periods = ctx_.contacts->periods_of(k);
      double cursor = periods[p].start_s;
      bool completed = false;
      RoundRecord rec;

      if (c.has_model) {
        const auto up = ctx_.contacts->earliest_transfer(k, std::max(cursor, c.train_start), tx, p);
        const double ep = ctx_.epoch_time(k);
        const std::size_t n = up && up->period == p ? detail::floor_epochs(up->start_s - c.train_start, ep) : 0;
        if (n >= 1) {
          log.add(k, Phase::Compute, c.train_start, c.train_start + static_cast<double>(n) * ep);
          log.add(k, Phase::SatToGs, up->start_s, up->end_s);
          const std::size_t run = std::min(n, ctx_.compute.max_simulated_epochs);
          auto out = fl::local_train(ctx_.learning->model, c.base, ctx_.learning->clients[k], tc, c.base,
                                     ctx_.train_seed(c.base_round, k, ++c.uploads), run);
          out.round_tag = c.base_round;
          c.has_model = false;
          cursor = up->end_s;
          if (st.round - c.base_round <= ctx_.strategy.staleness_bound) {
            buffer_.push_back(ctx_.transmit(out));
            members_.push_back(k);
            member_epochs_.push_back(n);
          } else {
            ++dropped_;
          }
          if (buffer_.size() >= buffer_size_) {
            st.global = fl::aggregate_in_place(buffer_);
            st.global.round_tag = st.round + 1;
            rec.round_index = st.round;
            rec.start_s = round_start_;
            rec.end_s = up->end_s;
            rec.participants = members_;
            rec.client_epochs = member_epochs_;
            ++st.round;
            st.now_s = up->end_s;
            round_start_ = up->end_s;
            buffer_.clear();
            members_.clear();
            member_epochs_.clear();
            completed = true;
          }
        }
      }

      if (!c.has_model) {
        const auto down = ctx_.contacts->earliest_transfer(k, cursor, tx, p);
        if (down && down->period == p) {
          log.add(k, Phase::GsToSat, down->start_s, down->end_s);
          c.base = ctx_.transmit(st.global);
          c.base_round = st.round;
          c.train_start = down->end_s;
          c.has_model = true;
        }
      }

      if (p + 1 < periods.size()) {
        c.next_period = p + 1;
        queue_.push(periods[p + 1].start_s, sim::EventKind::ContactStart, k);
      }

      if (completed) {
        account_round(rec, log);
        evaluate_into(rec, st, ctx_);
        return rec;
      }
    }
    throw planner::SchedulingHorizonExhausted("the buffer cannot fill again before the horizon");
  }

 private:
  struct Client {
    bool has_model = false;
    fl::ModelParams base;
    std::size_t base_round = 0;
    double train_start = 0.0;
    std::size_t next_period = 0;
    std::size_t uploads = 0;
  };

  const SimContext& ctx_;
  std::size_t buffer_size_ = 1;
  std::vector<Client> clients_;
  sim::EventQueue queue_;
  std::vector<fl::ModelParams> buffer_;
  std::vector<std::size_t> members_;
  std::vector<std::size_t> member_epochs_;
  double round_start_ = 0.0;
  std::size_t dropped_ = 0;
};

/// One FedBuffSat aggregation: advances the server until the buffer fills.
inline RoundRecord fedbuff_sat_round(ServerState& st, ActivityLog& log, FedBuffServer& server) {
  return server.next_round(st, log);
}

// ---------------------------------------------------------------------------
// AutoFLSat.

class ConfigurationRejected : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Two-tier autonomous protocol: every satellite trains, clusters aggregate
/// over their persistent rings, cluster models are exchanged over inter-sl
/// links following the connection plan, and the constellation model is
/// spread back around each ring. Ground stations only seed the first model.
class AutoFlSatRunner {
 public:
  explicit AutoFlSatRunner(const SimContext& ctx) : ctx_(ctx) {
    const auto& c = *ctx.constellation;
    if (c.num_clusters < 2)
      throw ConfigurationRejected("autoflsat needs at least 2 clusters");
    const std::size_t ring = planner::min_ring_size(c.altitude_km, ctx.isl_margin_km);
    if (c.sats_per_cluster < ring)
      throw ConfigurationRejected("autoflsat needs persistent rings: sats_per_cluster must be >= " +
                                  std::to_string(ring) + " at this altitude");
    if (!ctx.inter) throw std::invalid_argument("autoflsat needs inter-sl windows");
  }

  /// Seeds w0 from the first ground-station contact and spreads it to every
  /// satellite. Returns the time the last satellite holds the model.
  double initialize(ServerState& st, ActivityLog& log) {
    const auto& c = *ctx_.constellation;
    const double tx = ctx_.model_tx_s();
    std::optional<planner::Transfer> first;
    std::size_t seed_sat = 0;
    for (std::size_t k = 0; k < c.size(); ++k) {
      const auto t = ctx_.contacts->earliest_transfer(k, st.now_s, tx);
      if (t && (!first || t->end_s < first->end_s)) {
        first = t;
        seed_sat = k;
      }
    }
    if (!first) throw planner::SchedulingHorizonExhausted("no satellite can receive the initial model");
    log.add(seed_sat, Phase::GsToSat, first->start_s, first->end_s);
    const std::size_t c0 = c.cluster_of[seed_sat];
    double ready = broadcast(log, c0, seed_sat % c.sats_per_cluster, first->end_s);
    double all_ready = ready;
    for (std::size_t cl = 0; cl < c.num_clusters; ++cl) {
      if (cl == c0) continue;
      const auto link = with_windows(ready, [&](const std::vector<planner::ContactWindow>& w) {
        auto l = planner::earliest_cluster_link(w, c.cluster_of, c0, cl, ready, tx);
        if (!l) throw planner::SchedulingHorizonExhausted("cluster unreachable for seeding");
        return *l;
      });
      log.add(link.sat_a, Phase::Isl, link.transfer_start_s, link.transfer_end_s);
      log.add(link.sat_b, Phase::Isl, link.transfer_start_s, link.transfer_end_s);
      all_ready = std::max(all_ready, broadcast(log, cl, link.sat_b % c.sats_per_cluster, link.transfer_end_s));
    }
    init_s_ = all_ready;
    st.now_s = all_ready;
    return all_ready;
  }

  double initialized_at() const { return init_s_; }
  const planner::ClusterConnectionPlan& last_plan() const { return plan_; }
  /// Passes as carried out in the last round, after serialisation.
  const std::vector<planner::ClusterConnection>& last_passes() const { return executed_; }

  RoundRecord next_round(ServerState& st, ActivityLog& log) {
    const auto& c = *ctx_.constellation;
    const std::size_t C = c.num_clusters, N = c.sats_per_cluster;
    const double sync = ring_sync_s();
    const double t = st.now_s;
    double ep_max = 0.0;
    std::vector<double> ep_cluster(C, 0.0);
    for (std::size_t k = 0; k < c.size(); ++k) {
      ep_cluster[c.cluster_of[k]] = std::max(ep_cluster[c.cluster_of[k]], ctx_.epoch_time(k));
      ep_max = std::max(ep_max, ctx_.epoch_time(k));
    }
    const std::size_t E = ctx_.strategy.train.local_epochs;
    const double t_search = t + static_cast<double>(E) * ep_max + sync;
    plan_ = with_windows(t_search, [&](const std::vector<planner::ContactWindow>& w) {
      return planner::inter_sl_scheduler(c, w, C, t_search, ctx_.payload_bytes, ctx_.data_rate_Bps,
                                         {ep_max, static_cast<int>(E)});
    });
    const auto e = static_cast<std::size_t>(plan_.epoch_budget_e);
    const std::size_t run = std::min(e, ctx_.compute.max_simulated_epochs);

    // Tier 1: train and aggregate inside each ring.
    const fl::ModelParams local = st.global;
    const fl::TrainConfig tc = ctx_.train_config();
    std::vector<fl::ModelParams> cluster_model(C);
    RoundRecord rec;
    rec.round_index = st.round;
    rec.start_s = t;
    for (std::size_t cl = 0; cl < C; ++cl) {
      fl::InPlaceAggregator agg;
      for (std::size_t j = 0; j < N; ++j) {
        const std::size_t k = c.sat_id(cl, j);
        const double ep = ctx_.epoch_time(k);
        log.add(k, Phase::Compute, t, t + static_cast<double>(e) * ep);
        auto out = fl::local_train(ctx_.learning->model, local, ctx_.learning->clients[k], tc, local,
                                   ctx_.train_seed(st.round, k), run);
        agg.add(j == 0 ? out : ctx_.transmit(out));
        rec.participants.push_back(k);
        rec.client_epochs.push_back(e);
      }
      cluster_model[cl] = agg.result();
      ring_activity(log, cl, t + static_cast<double>(e) * ep_cluster[cl]);
    }

    // Tier 2: cluster models cross over the planned inter-sl passes. A
    // cluster takes part in one exchange at a time, so a pass waits for both
    // clusters to be free and moves to a later window if it no longer fits.
    auto passes = plan_.entries;
    std::sort(passes.begin(), passes.end(), [](const auto& a, const auto& b) {
      return std::tuple(a.transfer_start_s, a.cluster_a, a.cluster_b) <
             std::tuple(b.transfer_start_s, b.cluster_a, b.cluster_b);
    });
    const double tx = ctx_.model_tx_s();
    std::vector<double> have(C, t_search);
    executed_.clear();
    for (auto p : passes) {
      const double ready = std::max({p.transfer_start_s, have[p.cluster_a], have[p.cluster_b]});
      if (ready > p.transfer_start_s) {
        if (ready + tx <= p.window.end_s) {
          p.transfer_start_s = ready;
          p.transfer_end_s = ready + tx;
        } else {
          p = with_windows(ready, [&](const std::vector<planner::ContactWindow>& w) {
            auto l = planner::earliest_cluster_link(w, c.cluster_of, p.cluster_a, p.cluster_b, ready, tx);
            if (!l) throw planner::SchedulingHorizonExhausted("no later window for a delayed pass");
            return *l;
          });
        }
      }
      log.add(p.sat_a, Phase::Isl, p.transfer_start_s, p.transfer_end_s);
      log.add(p.sat_b, Phase::Isl, p.transfer_start_s, p.transfer_end_s);
      have[p.cluster_a] = std::max(have[p.cluster_a], p.transfer_end_s);
      have[p.cluster_b] = std::max(have[p.cluster_b], p.transfer_end_s);
      executed_.push_back(p);
    }
    fl::InPlaceAggregator global;
    for (std::size_t cl = 0; cl < C; ++cl) global.add(ctx_.transmit(cluster_model[cl]));
    double end = t;
    for (std::size_t cl = 0; cl < C; ++cl) {
      ring_activity(log, cl, have[cl]);
      end = std::max(end, have[cl] + sync);
    }
    if (end > ctx_.horizon_s)
      throw planner::SchedulingHorizonExhausted("autoflsat round would end past the horizon");

    st.global = global.result();
    st.global.round_tag = st.round + 1;
    rec.end_s = end;
    account_round(rec, log);
    evaluate_into(rec, st, ctx_);
    st.now_s = end;
    ++st.round;
    return rec;
  }

  /// Ring gather to slot 0 followed by the broadcast back: floor(N/2) hops each way.
  double ring_sync_s() const {
    return 2.0 * static_cast<double>(ctx_.constellation->sats_per_cluster / 2) * ctx_.model_tx_s();
  }

 private:
  static std::size_t ring_distance(std::size_t a, std::size_t b, std::size_t n) {
    const std::size_t d = a > b ? a - b : b - a;
    return std::min(d, n - d);
  }

  // Logs a gather (towards slot 0) then a broadcast starting at `r`.
  void ring_activity(ActivityLog& log, std::size_t cl, double r) const {
    const auto& c = *ctx_.constellation;
    const std::size_t N = c.sats_per_cluster, H = N / 2;
    const double tx = ctx_.model_tx_s();
    for (std::size_t j = 1; j < N; ++j) {
      const auto d = static_cast<double>(ring_distance(j, 0, N));
      const double h = static_cast<double>(H);
      log.add(c.sat_id(cl, j), Phase::Isl, r + (h - d) * tx, r + (h - d + 1.0) * tx);
      log.add(c.sat_id(cl, j), Phase::Isl, r + h * tx + (d - 1.0) * tx, r + h * tx + d * tx);
    }
  }

  // Spreads a model from `slot` around ring `cl` starting at `t`.
  double broadcast(ActivityLog& log, std::size_t cl, std::size_t slot, double t) const {
    const auto& c = *ctx_.constellation;
    const std::size_t N = c.sats_per_cluster;
    const double tx = ctx_.model_tx_s();
    for (std::size_t j = 0; j < N; ++j) {
      if (j == slot) continue;
      const auto d = static_cast<double>(ring_distance(j, slot, N));
      log.add(c.sat_id(cl, j), Phase::Isl, t + (d - 1.0) * tx, t + d * tx);
    }
    return t + static_cast<double>(N / 2) * tx;
  }

  // Runs `fn` on inter-sl windows from `t`, widening the look-ahead until it
  // succeeds or the horizon is reached.
  template <class Fn>
  std::invoke_result_t<Fn, const std::vector<planner::ContactWindow>&> with_windows(double t, Fn fn) const {
    double span = 2.0 * ctx_.inter->period();
    for (;;) {
      const double to = std::min(t + span, ctx_.horizon_s);
      if (!(to > t)) throw planner::SchedulingHorizonExhausted("inter-sl planning past the horizon");
      try {
        return fn(ctx_.inter->windows(t, to));
      } catch (const planner::SchedulingHorizonExhausted&) {
        if (to >= ctx_.horizon_s) throw;
      }
      span *= 2.0;
    }
  }

  const SimContext& ctx_;
  planner::ClusterConnectionPlan plan_;
  std::vector<planner::ClusterConnection> executed_;
  double init_s_ = 0.0;
};

/// Runs AutoFLSat rounds until `max_rounds`, the horizon, or `stop(record)`.
template <class Stop>
std::vector<RoundRecord> autoflsat_run(ServerState& st, ActivityLog& log, const SimContext& ctx,
                                       std::size_t max_rounds, Stop stop) {
  AutoFlSatRunner runner(ctx);
  runner.initialize(st, log);
  std::vector<RoundRecord> out;
  while (out.size() < max_rounds) {
    try {
      out.push_back(runner.next_round(st, log));
    } catch (const planner::SchedulingHorizonExhausted&) {
      break;
    }
    if (stop(out.back())) break;
  }
  return out;
}

}  // namespace flsat::strategies
