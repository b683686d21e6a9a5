#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <set>

#include "flsat/ground_stations.hpp"
#include "flsat/strategies.hpp"

using namespace flsat;
using namespace flsat::strategies;
using planner::ContactWindow;
using planner::LinkKind;

namespace {

ContactWindow gsw(std::size_t sat, std::size_t st, double a, double b) {
  return {LinkKind::SatGs, sat, st, a, b};
}

// Owns everything a SimContext points at. Model transfers take 1 s.
struct World {
  orbital::ConstellationSpec constellation;
  planner::ContactIndex contacts;
  planner::RelayIndex relays;
  std::optional<planner::InterSlPattern> inter;
  LearningSetup learning;
  SimContext ctx;
  ServerState st;
  ActivityLog log;

  World(std::size_t clusters, std::size_t per_cluster, const std::vector<ContactWindow>& windows,
        double horizon_s, StrategyConfig strategy = {}) {
    constellation = orbital::build_walker_star(clusters, per_cluster, 500.0);
    const std::size_t K = constellation.size();
    contacts = planner::ContactIndex(windows, K);
    relays = planner::RelayIndex(windows);
    fl::BlobSpec spec;
    spec.samples_per_class = 20;
    spec.test_per_class = 10;
    auto task = fl::make_blob_task(spec, 3);
    learning.model = fl::LinearModel{spec.dims, spec.classes};
    learning.clients = fl::partition(task.train, K, 2, 3);
    learning.test = task.test;
    ctx.constellation = &constellation;
    ctx.contacts = &contacts;
    ctx.relays = &relays;
    ctx.learning = &learning;
    ctx.strategy = strategy;
    ctx.payload_bytes = static_cast<double>(fl::payload_bytes(learning.model.param_count(), 32));
    ctx.data_rate_Bps = ctx.payload_bytes;  // one second per model
    ctx.horizon_s = horizon_s;
    ctx.seed = 11;
    st.global = learning.model.zeros();
    log = ActivityLog(K);
  }

  // Makes every epoch take `seconds` for every satellite.
  void set_epoch_time(double seconds) {
    const auto n = learning.clients.front().size();
    for (const auto& c : learning.clients) ASSERT_EQ(c.size(), n);
    ctx.compute.throughput_samples_per_s = static_cast<double>(n) / seconds;
  }
};

void expect_identity(const RoundRecord& r) {
  EXPECT_NEAR(r.comm_s + r.compute_s + r.idle_s, r.duration(), 1e-9 * std::max(1.0, r.duration()));
  EXPECT_GE(r.idle_s, -1e-9);
}

}  // namespace

TEST(StrategyConfigTest, ParsesNamesAndValidates) {
  EXPECT_EQ(parse_strategy("fedbuff"), StrategyKind::FedBuff);
  EXPECT_EQ(parse_augmentation("schedule_v2"), Augmentation::ScheduleV2);
  EXPECT_THROW(parse_strategy("fedsgd"), std::invalid_argument);
  EXPECT_THROW(parse_augmentation("turbo"), std::invalid_argument);
  StrategyConfig c;
  c.augmentations = {Augmentation::IntraSl, Augmentation::Schedule};
  EXPECT_EQ(c.label(), "fedavg+schedule+intra_sl");
  EXPECT_NO_THROW(c.validate());
  c.max_clients_per_round = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.max_clients_per_round = 3;
  c.kind = StrategyKind::FedBuff;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ActivityLogTest, TrimsOverlapsAndClipsTotals) {
  ActivityLog log(1);
  log.add(0, Phase::GsToSat, 0, 10);
  log.add(0, Phase::Compute, 5, 30);  // trimmed to [10, 30]
  log.add(0, Phase::Isl, 20, 25);     // fully covered, dropped
  log.add(0, Phase::SatToGs, 40, 50);
  ASSERT_EQ(log.of(0).size(), 3u);
  const auto t = log.totals(0, 5, 45);
  EXPECT_DOUBLE_EQ(t[static_cast<int>(Phase::GsToSat)], 5);
  EXPECT_DOUBLE_EQ(t[static_cast<int>(Phase::Compute)], 20);
  EXPECT_DOUBLE_EQ(t[static_cast<int>(Phase::SatToGs)], 5);
  EXPECT_DOUBLE_EQ(t[static_cast<int>(Phase::Isl)], 0);
}

TEST(FedAvgSat, TwoSatelliteHandTrace) {
  World w(1, 2,
          {gsw(0, 0, 100, 200), gsw(0, 0, 1000, 1100), gsw(1, 1, 50, 150), gsw(1, 1, 3000, 3100)},
          1e4);
  w.ctx.strategy.max_clients_per_round = 2;
  const double ep = w.ctx.epoch_time(0);
  const auto r = fedavg_sat_round(w.st, w.log, w.ctx);
  EXPECT_EQ(r.participants, (std::vector<std::size_t>{0, 1}));
  EXPECT_DOUBLE_EQ(r.start_s, 0.0);
  // Round ends when the slower client (sat 1) finishes its return upload.
  EXPECT_DOUBLE_EQ(r.end_s, 3001.0);
  EXPECT_NEAR(r.gs_to_sat_s, 1.0, 1e-9);
  EXPECT_NEAR(r.sat_to_gs_s, 1.0, 1e-9);
  EXPECT_NEAR(r.compute_s, ep, 1e-9);
  expect_identity(r);
  EXPECT_EQ(w.st.round, 1u);
  EXPECT_DOUBLE_EQ(w.st.now_s, 3001.0);
  EXPECT_TRUE(r.evaluators.empty());  // nobody contacts a station after the round
  EXPECT_THROW(fedavg_sat_round(w.st, w.log, w.ctx), planner::SchedulingHorizonExhausted);
}

TEST(FedAvgSat, EvaluatorsAreNextFirstContacts) {
  World w(1, 3,
          {gsw(0, 0, 0, 10), gsw(0, 0, 100, 110), gsw(1, 0, 20, 30), gsw(1, 0, 500, 510),
           gsw(2, 0, 200, 210), gsw(2, 0, 300, 310), gsw(0, 0, 400, 410), gsw(0, 0, 900, 910)},
          1e4);
  w.ctx.strategy.max_clients_per_round = 1;
  const auto r = fedavg_sat_round(w.st, w.log, w.ctx);
  EXPECT_EQ(r.participants, (std::vector<std::size_t>{0}));
  EXPECT_DOUBLE_EQ(r.end_s, 101.0);
  // Sat 0 is still in view when the round closes, so it evaluates.
  EXPECT_EQ(r.evaluators, (std::vector<std::size_t>{0}));
}

TEST(FedAvgSat, SimultaneousContactsMatchClassicalFedAvg) {
  std::vector<ContactWindow> ws;
  for (std::size_t k = 0; k < 4; ++k) {
    ws.push_back(gsw(k, 0, 0, 20));
    ws.push_back(gsw(k, 0, 500, 520));
  }
  World w(1, 4, ws, 1e4);
  w.ctx.strategy.max_clients_per_round = 4;
  w.ctx.strategy.train.local_epochs = 2;
  const auto w0 = w.st.global;
  fedavg_sat_round(w.st, w.log, w.ctx);

  // Oracle: every client trains from w0, then the sample-weighted mean.
  std::vector<double> num(w0.values.size(), 0.0);
  double den = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto u = fl::local_train(w.learning.model, w0, w.learning.clients[k], w.ctx.strategy.train, w0,
                                   w.ctx.train_seed(0, k), 2);
    const double n = static_cast<double>(w.learning.clients[k].size());
    for (std::size_t j = 0; j < num.size(); ++j) num[j] += n * u.values[j];
    den += n;
  }
  for (std::size_t j = 0; j < num.size(); ++j) EXPECT_NEAR(w.st.global.values[j], num[j] / den, 1e-9);
}

TEST(FedAvgSat, IdenticalUpdatesLeaveTheModelAtTheirValue) {
  std::vector<ContactWindow> ws;
  for (std::size_t k = 0; k < 3; ++k) {
    ws.push_back(gsw(k, 0, 0, 20));
    ws.push_back(gsw(k, 0, 500, 520));
  }
  World w(1, 3, ws, 1e4);
  // Same data everywhere and full-batch steps: every update is identical.
  for (auto& c : w.learning.clients) c = w.learning.clients.front();
  w.ctx.strategy.train.batch_size = 1000;
  w.ctx.strategy.max_clients_per_round = 3;
  const auto w0 = w.st.global;
  const auto single = fl::local_train(w.learning.model, w0, w.learning.clients[0], w.ctx.strategy.train,
                                      w0, 123, 1);
  fedavg_sat_round(w.st, w.log, w.ctx);
  for (std::size_t j = 0; j < single.values.size(); ++j)
    EXPECT_NEAR(w.st.global.values[j], single.values[j], 1e-12);
}

TEST(FedAvgSat, ScheduleChoosesFastestReturn) {
  // Sat 0 contacts first but returns late; sat 1 contacts later and returns early.
  const std::vector<ContactWindow> ws{gsw(0, 0, 0, 10), gsw(0, 0, 5000, 5010), gsw(1, 0, 100, 110),
                                      gsw(1, 0, 400, 410)};
  World plain(1, 2, ws, 1e4);
  plain.ctx.strategy.max_clients_per_round = 1;
  EXPECT_EQ(fedavg_sat_round(plain.st, plain.log, plain.ctx).participants, (std::vector<std::size_t>{0}));
  StrategyConfig sc;
  sc.max_clients_per_round = 1;
  sc.augmentations = {Augmentation::Schedule};
  World sched(1, 2, ws, 1e4, sc);
  const auto r = fedavg_sat_round(sched.st, sched.log, sched.ctx);
  EXPECT_EQ(r.participants, (std::vector<std::size_t>{1}));
  EXPECT_DOUBLE_EQ(r.end_s, 401.0);
}

TEST(FedAvgSat, IntraSlRelaysThroughANeighbour) {
  // Sat 0 never sees a station again; its ring neighbour does at t = 300.
  std::vector<ContactWindow> ws{gsw(0, 0, 0, 10), gsw(1, 1, 300, 310)};
  ws.push_back({LinkKind::IntraSl, 0, 1, 0, 1e4});
  StrategyConfig sc;
  sc.max_clients_per_round = 1;
  sc.augmentations = {Augmentation::IntraSl};
  World w(1, 2, ws, 1e4, sc);
  const auto r = fedavg_sat_round(w.st, w.log, w.ctx);
  EXPECT_EQ(r.participants, (std::vector<std::size_t>{0}));
  EXPECT_DOUBLE_EQ(r.end_s, 301.0);
  EXPECT_NEAR(r.isl_s, 1.0, 1e-9);
  EXPECT_NEAR(r.sat_to_gs_s, 0.0, 1e-9);
  expect_identity(r);
}

TEST(FedProxSat, LongerGapsTrainMoreEpochs) {
  World w(1, 2,
          {gsw(0, 0, 0, 10), gsw(0, 0, 1000, 1010), gsw(1, 0, 0, 10), gsw(1, 0, 300, 310)}, 1e4);
  w.set_epoch_time(100.0);
  w.ctx.strategy.kind = StrategyKind::FedProx;
  w.ctx.strategy.max_clients_per_round = 2;
  w.ctx.strategy.train.prox_mu = 0.01;
  const auto r = fedprox_sat_round(w.st, w.log, w.ctx);
  ASSERT_EQ(r.participants, (std::vector<std::size_t>{0, 1}));
  // epochs = floor((leave - dispatch_end) / epoch_time)
  EXPECT_EQ(r.client_epochs, (std::vector<std::size_t>{9, 2}));
  expect_identity(r);
  // Training fills most of the wait, unlike FedAvg's single epoch.
  EXPECT_NEAR(r.compute_s, (900.0 + 200.0) / 2.0, 1e-6);
}

TEST(FedProxSat, ScheduleV2SkipsReturnsBeforeMinEpochs) {
  const std::vector<ContactWindow> ws{gsw(0, 0, 0, 10), gsw(0, 0, 150, 160), gsw(0, 0, 500, 510)};
  StrategyConfig sc;
  sc.kind = StrategyKind::FedProx;
  sc.max_clients_per_round = 1;
  sc.train.min_epochs = 3;
  sc.augmentations = {Augmentation::Schedule};
  World a(1, 1, ws, 1e4, sc);
  a.set_epoch_time(100.0);
  const auto ra = fedprox_sat_round(a.st, a.log, a.ctx);
  EXPECT_DOUBLE_EQ(ra.end_s, 151.0);
  EXPECT_EQ(ra.client_epochs, (std::vector<std::size_t>{1}));

  sc.augmentations = {Augmentation::ScheduleV2};
  World b(1, 1, ws, 1e4, sc);
  b.set_epoch_time(100.0);
  const auto rb = fedprox_sat_round(b.st, b.log, b.ctx);
  EXPECT_DOUBLE_EQ(rb.end_s, 501.0);
  EXPECT_EQ(rb.client_epochs, (std::vector<std::size_t>{4}));
}

TEST(FedProxSat, ZeroMuWithMatchingEpochsEqualsFedAvg) {
  const std::vector<ContactWindow> ws{gsw(0, 0, 0, 10), gsw(0, 0, 250, 260), gsw(1, 0, 0, 10),
                                      gsw(1, 0, 250, 260)};
  StrategyConfig sc;
  sc.max_clients_per_round = 2;
  sc.train.local_epochs = 2;
  World avg(1, 2, ws, 1e4, sc);
  avg.set_epoch_time(100.0);
  fedavg_sat_round(avg.st, avg.log, avg.ctx);

  sc.kind = StrategyKind::FedProx;
  sc.train.prox_mu = 0.0;
  World prox(1, 2, ws, 1e4, sc);
  prox.set_epoch_time(100.0);
  const auto r = fedprox_sat_round(prox.st, prox.log, prox.ctx);
  EXPECT_EQ(r.client_epochs, (std::vector<std::size_t>{2, 2}));
  EXPECT_EQ(prox.st.global.values, avg.st.global.values);

  sc.train.prox_mu = 0.5;
  World pulled(1, 2, ws, 1e4, sc);
  pulled.set_epoch_time(100.0);
  fedprox_sat_round(pulled.st, pulled.log, pulled.ctx);
  EXPECT_NE(pulled.st.global.values, avg.st.global.values);
}

TEST(FedProxSat, EpochsBeyondTheCapAreTimedButNotExecuted) {
  World w(1, 1, {gsw(0, 0, 0, 10), gsw(0, 0, 5000, 5010)}, 1e4);
  w.set_epoch_time(100.0);
  w.ctx.strategy.kind = StrategyKind::FedProx;
  w.ctx.strategy.max_clients_per_round = 1;
  w.ctx.compute.max_simulated_epochs = 3;
  const auto r = fedprox_sat_round(w.st, w.log, w.ctx);
  EXPECT_EQ(r.client_epochs, (std::vector<std::size_t>{49}));
  EXPECT_NEAR(r.compute_s, 4900.0, 1e-6);
}

namespace {
std::vector<ContactWindow> periodic(std::size_t sat, double offset, double every, int n) {
  std::vector<ContactWindow> out;
  for (int i = 0; i < n; ++i) out.push_back(gsw(sat, 0, offset + i * every, offset + i * every + 10));
  return out;
}
}  // namespace

TEST(FedBuffSat, BufferOfOneAggregatesOnEveryUpload) {
  auto ws = periodic(0, 0, 1000, 10);
  auto w1 = periodic(1, 500, 1000, 10);
  ws.insert(ws.end(), w1.begin(), w1.end());
  StrategyConfig sc;
  sc.kind = StrategyKind::FedBuff;
  sc.buffer_size = 1;
  World w(1, 2, ws, 1e4, sc);
  FedBuffServer server(w.ctx);
  std::vector<std::size_t> who;
  for (int i = 0; i < 6; ++i) {
    const auto r = fedbuff_sat_round(w.st, w.log, server);
    ASSERT_EQ(r.participants.size(), 1u);
    who.push_back(r.participants[0]);
    expect_identity(r);
  }
  EXPECT_EQ(who, (std::vector<std::size_t>{0, 1, 0, 1, 0, 1}));
  EXPECT_EQ(w.st.round, 6u);
  EXPECT_EQ(server.dropped_updates(), 0u);
}

TEST(FedBuffSat, StaleUpdatesAreDropped) {
  auto ws = periodic(0, 0, 1000, 10);
  auto w1 = periodic(1, 500, 1000, 10);
  ws.insert(ws.end(), w1.begin(), w1.end());
  StrategyConfig sc;
  sc.kind = StrategyKind::FedBuff;
  sc.buffer_size = 1;
  sc.staleness_bound = 0;
  World w(1, 2, ws, 1e4, sc);
  FedBuffServer server(w.ctx);
  for (int i = 0; i < 4; ++i) {
    const auto r = fedbuff_sat_round(w.st, w.log, server);
    // Sat 1 always uploads one round late, so only sat 0 ever counts.
    EXPECT_EQ(r.participants, (std::vector<std::size_t>{0}));
  }
  EXPECT_GE(server.dropped_updates(), 3u);
}

TEST(FedBuffSat, FullBufferWithSynchronisedClientsIsOneSyncRound) {
  std::vector<ContactWindow> ws;
  for (std::size_t k = 0; k < 3; ++k) {
    ws.push_back(gsw(k, 0, 0, 20));
    ws.push_back(gsw(k, 0, 1000, 1020));
  }
  StrategyConfig sc;
  sc.kind = StrategyKind::FedBuff;
  sc.max_clients_per_round = 3;
  World w(1, 3, ws, 1e4, sc);
  FedBuffServer server(w.ctx);
  EXPECT_EQ(server.buffer_size(), 3u);
  const auto r = fedbuff_sat_round(w.st, w.log, server);
  EXPECT_EQ(r.participants, (std::vector<std::size_t>{0, 1, 2}));
  StrategyConfig avg_cfg;
  avg_cfg.max_clients_per_round = 3;
  World avg(1, 3, ws, 1e4, avg_cfg);
  const auto ra = fedavg_sat_round(avg.st, avg.log, avg.ctx);
  EXPECT_DOUBLE_EQ(r.start_s, ra.start_s);
  EXPECT_DOUBLE_EQ(r.end_s, ra.end_s);
  EXPECT_THROW(fedbuff_sat_round(w.st, w.log, server), planner::SchedulingHorizonExhausted);
}

TEST(FedBuffSat, IdlesLessThanFedAvgOnTheSameContacts) {
  std::vector<ContactWindow> ws;
  for (std::size_t k = 0; k < 4; ++k) {
    auto p = periodic(k, 250.0 * static_cast<double>(k), 1000, 20);
    ws.insert(ws.end(), p.begin(), p.end());
  }
  StrategyConfig sc;
  sc.max_clients_per_round = 2;
  World avg(1, 4, ws, 3e4, sc);
  avg.set_epoch_time(50.0);
  double idle_avg = 0.0;
  for (int i = 0; i < 5; ++i) idle_avg += fedavg_sat_round(avg.st, avg.log, avg.ctx).idle_s;
  sc.kind = StrategyKind::FedBuff;
  World buf(1, 4, ws, 3e4, sc);
  buf.set_epoch_time(50.0);
  FedBuffServer server(buf.ctx);
  double idle_buf = 0.0;
  for (int i = 0; i < 5; ++i) idle_buf += fedbuff_sat_round(buf.st, buf.log, server).idle_s;
  EXPECT_LT(idle_buf, idle_avg);
}

// ---------------------------------------------------------------------------
// AutoFLSat on real geometry.

namespace {
std::unique_ptr<World> autofl_world(std::size_t clusters, std::size_t per_cluster, double horizon = 86400.0) {
  auto cons = orbital::build_walker_star(clusters, per_cluster, 500.0);
  const auto windows = planner::compute_access_windows(cons, default_ground_stations(), 0.0, horizon);
  StrategyConfig sc;
  sc.kind = StrategyKind::AutoFlSat;
  auto w = std::make_unique<World>(clusters, per_cluster, windows, horizon, sc);
  w->inter.emplace(w->constellation, 0.0);
  w->ctx.inter = &*w->inter;
  return w;
}
}  // namespace

TEST(AutoFlSat, RejectsTooFewClustersOrBrokenRings) {
  auto one = autofl_world(1, 10, 3600.0);
  EXPECT_THROW(AutoFlSatRunner{one->ctx}, ConfigurationRejected);
  auto sparse = autofl_world(2, 9, 3600.0);
  EXPECT_THROW(AutoFlSatRunner{sparse->ctx}, ConfigurationRejected);
}

TEST(AutoFlSat, TwoClustersUseOneExchangeAndEveryone) {
  auto w = autofl_world(2, 10);
  AutoFlSatRunner runner(w->ctx);
  const double ready = runner.initialize(w->st, w->log);
  EXPECT_GT(ready, 0.0);
  for (int i = 0; i < 3; ++i) {
    const auto r = runner.next_round(w->st, w->log);
    EXPECT_EQ(runner.last_plan().entries.size(), 1u);
    std::vector<std::size_t> all(20);
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto p = r.participants;
    std::sort(p.begin(), p.end());
    EXPECT_EQ(p, all);
    expect_identity(r);
    EXPECT_GE(r.start_s, ready);
    EXPECT_GT(r.duration(), 0.0);
  }
}

TEST(AutoFlSat, FourClustersExchangeSixTimesOneAtATimePerCluster) {
  auto w = autofl_world(4, 10);
  AutoFlSatRunner runner(w->ctx);
  runner.initialize(w->st, w->log);
  runner.next_round(w->st, w->log);
  EXPECT_EQ(runner.last_plan().entries.size(), 6u);
  const auto& passes = runner.last_passes();
  ASSERT_EQ(passes.size(), 6u);
  for (std::size_t i = 0; i < passes.size(); ++i)
    for (std::size_t j = i + 1; j < passes.size(); ++j) {
      const auto& a = passes[i];
      const auto& b = passes[j];
      const bool share = a.cluster_a == b.cluster_a || a.cluster_a == b.cluster_b ||
                         a.cluster_b == b.cluster_a || a.cluster_b == b.cluster_b;
      if (share) {
        EXPECT_TRUE(a.transfer_end_s <= b.transfer_start_s || b.transfer_end_s <= a.transfer_start_s);
      }
    }
}

TEST(AutoFlSat, IdenticalClustersMakeCrossAggregationANoOp) {
  auto w = autofl_world(2, 10);
  for (auto& c : w->learning.clients) c = w->learning.clients.front();
  w->ctx.strategy.train.batch_size = 1000;  // full batch: seeds do not matter
  AutoFlSatRunner runner(w->ctx);
  runner.initialize(w->st, w->log);
  const auto w0 = w->st.global;
  runner.next_round(w->st, w->log);
  const auto e = static_cast<std::size_t>(runner.last_plan().epoch_budget_e);
  const auto one = fl::local_train(w->learning.model, w0, w->learning.clients[0], w->ctx.strategy.train, w0, 1, e);
  for (std::size_t j = 0; j < one.values.size(); ++j) EXPECT_NEAR(w->st.global.values[j], one.values[j], 1e-12);
}

TEST(AutoFlSat, RunnerStopsAtHorizonAndPredicate) {
  auto w = autofl_world(2, 10, 20000.0);
  const auto recs = autoflsat_run(w->st, w->log, w->ctx, 1000, [](const RoundRecord&) { return false; });
  ASSERT_FALSE(recs.empty());
  EXPECT_LE(recs.back().end_s, 20000.0);
  for (std::size_t i = 1; i < recs.size(); ++i) EXPECT_DOUBLE_EQ(recs[i].start_s, recs[i - 1].end_s);
  auto w2 = autofl_world(2, 10, 20000.0);
  const auto two = autoflsat_run(w2->st, w2->log, w2->ctx, 1000,
                                 [](const RoundRecord& r) { return r.round_index == 1; });
  EXPECT_EQ(two.size(), 2u);
}

TEST(FedBuffSat, NoSatelliteIdlesMoreThanUnderFedAvg) {
  const auto cons = orbital::build_walker_star(2, 5, 500.0);
  auto stations = default_ground_stations();
  stations.resize(5);
  const double horizon = 3.0 * 86400.0;
  const auto windows = planner::compute_access_windows(cons, stations, 0.0, horizon);
  StrategyConfig avg_cfg;
  avg_cfg.max_clients_per_round = 3;
  World avg(2, 5, windows, horizon, avg_cfg);
  avg.set_epoch_time(120.0);
  StrategyConfig buf_cfg = avg_cfg;
  buf_cfg.kind = StrategyKind::FedBuff;
  World buf(2, 5, windows, horizon, buf_cfg);
  buf.set_epoch_time(120.0);
  FedBuffServer server(buf.ctx);
  // Run both over the same stretch of simulated time.
  const double until = 86400.0;
  while (avg.st.now_s < until) fedavg_sat_round(avg.st, avg.log, avg.ctx);
  while (buf.st.now_s < until) fedbuff_sat_round(buf.st, buf.log, server);
  auto idle = [&](const ActivityLog& log, std::size_t k) {
    const auto t = log.totals(k, 0.0, until);
    return until - (t[0] + t[1] + t[2] + t[3]);
  };
  for (std::size_t k = 0; k < 10; ++k) EXPECT_LE(idle(buf.log, k), idle(avg.log, k)) << "sat " << k;
}
