#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "flsat/fl_engine.hpp"

using namespace flsat::fl;

namespace {

ModelParams mp(std::vector<double> v, double n) { return {std::move(v), n, 0, 0}; }

double rel_err(double a, double b) { return std::fabs(a - b) / std::max(1.0, std::fabs(b)); }

// Independent full-batch gradient descent on softmax regression.
std::vector<double> oracle_train(const ClientDataset& d, std::size_t classes, int iters, double lr) {
  const std::size_t dim = d.dims;
  std::vector<double> W(classes * dim, 0.0), b(classes, 0.0);
  for (int it = 0; it < iters; ++it) {
    std::vector<double> gW(W.size(), 0.0), gb(classes, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      std::vector<double> z(classes);
      double mx = -1e300;
      for (std::size_t c = 0; c < classes; ++c) {
        z[c] = b[c];
        for (std::size_t k = 0; k < dim; ++k) z[c] += W[c * dim + k] * d.features[i * dim + k];
        mx = std::max(mx, z[c]);
      }
      double s = 0;
      for (auto& v : z) s += (v = std::exp(v - mx));
      for (std::size_t c = 0; c < classes; ++c) {
        const double g = z[c] / s - (static_cast<int>(c) == d.labels[i] ? 1.0 : 0.0);
        for (std::size_t k = 0; k < dim; ++k) gW[c * dim + k] += g * d.features[i * dim + k];
        gb[c] += g;
      }
    }
    for (std::size_t j = 0; j < W.size(); ++j) W[j] -= lr * gW[j] / d.size();
    for (std::size_t c = 0; c < classes; ++c) b[c] -= lr * gb[c] / d.size();
  }
  W.insert(W.end(), b.begin(), b.end());
  return W;
}

double oracle_accuracy(const std::vector<double>& w, const ClientDataset& d, std::size_t classes) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::size_t best = 0;
    double bz = -1e300;
    for (std::size_t c = 0; c < classes; ++c) {
      double z = w[classes * d.dims + c];
      for (std::size_t k = 0; k < d.dims; ++k) z += w[c * d.dims + k] * d.features[i * d.dims + k];
      if (z > bz) {
        bz = z;
        best = c;
      }
    }
    ok += static_cast<int>(best) == d.labels[i];
  }
  return static_cast<double>(ok) / d.size();
}

}  // namespace

TEST(Rng, DeterministicAndInRange) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs |= x != c.next();
    const double u = a.uniform();
    b.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(a.below(7), 7u);
    b.below(7);
  }
  EXPECT_TRUE(differs);
  Rng n(5);
  double s = 0, s2 = 0;
  for (int i = 0; i < 20000; ++i) {
    const double v = n.normal();
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / 20000, 0.0, 0.03);
  EXPECT_NEAR(s2 / 20000, 1.0, 0.05);
}

TEST(Aggregate, Examples) {
  std::vector<ModelParams> u{mp({2}, 1), mp({4}, 1)};
  EXPECT_DOUBLE_EQ(aggregate(u).values[0], 3.0);
  std::vector<ModelParams> w{mp({0}, 3), mp({4}, 1)};
  const auto r = aggregate(w);
  EXPECT_DOUBLE_EQ(r.values[0], 1.0);
  EXPECT_DOUBLE_EQ(r.sample_count, 4.0);
  std::vector<ModelParams> same{mp({1.5, -2}, 2), mp({1.5, -2}, 7), mp({1.5, -2}, 1)};
  EXPECT_NEAR(aggregate(same).values[0], 1.5, 1e-15);
  EXPECT_NEAR(aggregate(same).values[1], -2.0, 1e-15);
}

TEST(Aggregate, Errors) {
  EXPECT_THROW(aggregate(std::vector<ModelParams>{}), std::invalid_argument);
  std::vector<ModelParams> zero{mp({1}, 0), mp({2}, 0)};
  EXPECT_THROW(aggregate(zero), std::invalid_argument);
  std::vector<ModelParams> dims{mp({1}, 1), mp({1, 2}, 1)};
  EXPECT_THROW(aggregate(dims), std::invalid_argument);
  EXPECT_THROW(aggregate_in_place(std::vector<ModelParams>{}), std::invalid_argument);
  EXPECT_THROW(aggregate_in_place(zero), std::invalid_argument);
  EXPECT_THROW(aggregate_in_place(dims), std::invalid_argument);
}

TEST(Aggregate, PermutationAndScaleInvariance) {
  std::mt19937 gen(1);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> un(0.5, 10);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ModelParams> u;
    for (int k = 0; k < 6; ++k) {
      std::vector<double> v(20);
      for (auto& x : v) x = nd(gen);
      u.push_back(mp(v, un(gen)));
    }
    const auto base = aggregate(u);
    auto perm = u;
    std::shuffle(perm.begin(), perm.end(), gen);
    auto scaled = u;
    for (auto& s : scaled) s.sample_count *= 3.7;
    const auto p = aggregate(perm), s = aggregate(scaled);
    for (std::size_t j = 0; j < 20; ++j) {
      EXPECT_NEAR(p.values[j], base.values[j], 1e-12);
      EXPECT_NEAR(s.values[j], base.values[j], 1e-12);
    }
  }
}

TEST(InPlaceAggregation, MatchesBatchOnRandomSets) {
  std::mt19937 gen(2);
  std::normal_distribution<double> nd(0.0, 3.0);
  std::uniform_int_distribution<int> cnt(1, 12), n(1, 500);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ModelParams> u;
    const int k = cnt(gen);
    for (int i = 0; i < k; ++i) {
      std::vector<double> v(1000);
      for (auto& x : v) x = nd(gen);
      u.push_back(mp(v, n(gen)));
    }
    const auto batch = aggregate(u);
    InPlaceAggregator agg;
    for (const auto& x : u) {
      agg.add(x);
      EXPECT_EQ(agg.accumulator_size(), 1000u);
    }
    const auto streamed = agg.result();
    for (std::size_t j = 0; j < 1000; ++j) ASSERT_LE(rel_err(streamed.values[j], batch.values[j]), 1e-6);
    EXPECT_DOUBLE_EQ(streamed.sample_count, batch.sample_count);
  }
}

TEST(InPlaceAggregation, EightModelsAndSingleton) {
  std::vector<ModelParams> u;
  for (int i = 0; i < 8; ++i) u.push_back(mp(std::vector<double>(64, i * 0.5), 10));
  const auto r = aggregate_in_place(u);
  for (double v : r.values) EXPECT_NEAR(v, 1.75, 1e-12);
  std::vector<ModelParams> one{mp({3, -1}, 5)};
  EXPECT_EQ(aggregate_in_place(one).values, one[0].values);
}

TEST(Payload, Sizes) {
  EXPECT_EQ(payload_bytes(11'689'512, 32), 46'758'048u);
  EXPECT_EQ(payload_bytes(11'689'512, 10), 14'611'890u);
  EXPECT_EQ(payload_bytes(0, 8), 0u);
  EXPECT_EQ(payload_bytes(3, 10), 4u);
  EXPECT_EQ(payload_bytes(170, 16), 340u);
  EXPECT_THROW(payload_bytes(10, 12), std::invalid_argument);
  EXPECT_THROW(payload_bytes(10, 0), std::invalid_argument);
}

TEST(Quantize, RoundTripErrorBound) {
  std::mt19937 gen(3);
  std::normal_distribution<double> nd;
  std::vector<double> v(500);
  for (auto& x : v) x = nd(gen);
  const double range = *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
  for (unsigned bits : {8u, 10u, 16u}) {
    const auto q = quantize_roundtrip(v, bits);
    const double step = range / (std::ldexp(1.0, bits) - 1);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_LE(std::fabs(q[i] - v[i]), step / 2 + 1e-12);
  }
  EXPECT_EQ(quantize_roundtrip(v, 32), v);
  const std::vector<double> flat(4, 2.5);
  EXPECT_EQ(quantize_roundtrip(flat, 8), flat);
  EXPECT_THROW(quantize_roundtrip(v, 7), std::invalid_argument);
}

TEST(Gradient, MatchesCentralFiniteDifferences) {
  std::mt19937 gen(4);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 10; ++trial) {
    LinearModel m{4, 3};
    ClientDataset d{0, 4, 3, {}, {}};
    for (int i = 0; i < 12; ++i) {
      for (int k = 0; k < 4; ++k) d.features.push_back(nd(gen));
      d.labels.push_back(i % 3);
    }
    std::vector<std::size_t> idx(12);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> w(m.param_count()), anchor(m.param_count());
    for (auto& x : w) x = nd(gen);
    for (auto& x : anchor) x = nd(gen);
    const double mu = trial % 2 ? 0.3 : 0.0;
    std::vector<double> g(w.size());
    loss_and_gradient(m, w, d, idx, mu, anchor, g);
    const double h = 1e-5;
    for (std::size_t j = 0; j < w.size(); ++j) {
      auto wp = w, wm = w;
      wp[j] += h;
      wm[j] -= h;
      const double fd = (loss_and_gradient(m, wp, d, idx, mu, anchor, {}) -
                         loss_and_gradient(m, wm, d, idx, mu, anchor, {})) /
                        (2 * h);
      EXPECT_LE(std::fabs(fd - g[j]) / std::max(std::fabs(g[j]), 1e-3), 1e-4) << j;
    }
  }
}

TEST(LocalTrain, FullBatchLossNonIncreasing) {
  BlobSpec spec;
  spec.samples_per_class = 50;
  const auto task = make_blob_task(spec, 9);
  LinearModel m{spec.dims, spec.classes};
  TrainConfig cfg;
  cfg.batch_size = task.train.size();
  cfg.learning_rate = 0.01;
  std::vector<std::size_t> all(task.train.size());
  std::iota(all.begin(), all.end(), 0);
  auto p = m.zeros();
  double prev = loss_and_gradient(m, p.values, task.train, all, 0.0, {}, {});
  for (int e = 0; e < 30; ++e) {
    p = local_train(m, p, task.train, cfg, p, 100 + e, 1);
    const double now = loss_and_gradient(m, p.values, task.train, all, 0.0, {}, {});
    EXPECT_LE(now, prev + 1e-12) << e;
    prev = now;
  }
}

TEST(LocalTrain, ZeroEpochsAndSampleCount) {
  const auto task = make_blob_task({}, 1);
  LinearModel m;
  auto p = m.zeros();
  p.values[3] = 0.7;
  const auto out = local_train(m, p, task.train, {}, p, 5, 0);
  EXPECT_EQ(out.values, p.values);
  EXPECT_EQ(out.sample_count, static_cast<double>(task.train.size()));
  EXPECT_EQ(out.epochs_run, 0u);
}

TEST(LocalTrain, ProximalTermPullsTowardsAnchor) {
  const auto task = make_blob_task({}, 2);
  LinearModel m;
  const auto anchor = m.zeros();
  double prev = 1e300;
  for (double mu : {0.0, 0.1, 1.0, 10.0, 100.0}) {
    TrainConfig cfg;
    cfg.learning_rate = 0.005;
    cfg.prox_mu = mu;
    const auto out = local_train(m, anchor, task.train, cfg, anchor, 3, 3);
    double dist = 0;
    for (std::size_t j = 0; j < out.values.size(); ++j)
      dist += std::pow(out.values[j] - anchor.values[j], 2);
    dist = std::sqrt(dist);
    EXPECT_LT(dist, prev) << mu;
    prev = dist;
  }
  EXPECT_LT(prev, 0.05);
}

TEST(LocalTrain, DimensionMismatch) {
  const auto task = make_blob_task({}, 1);
  LinearModel m;
  ModelParams bad{std::vector<double>(5, 0.0), 0, 0, 0};
  EXPECT_THROW(local_train(m, bad, task.train, {}, bad, 1), std::invalid_argument);
  LinearModel other{8, 10};
  EXPECT_THROW(local_train(other, other.zeros(), task.train, {}, other.zeros(), 1),
               std::invalid_argument);
}

TEST(LocalTrain, SeparableTwoClassReachesOracleAccuracy) {
  BlobSpec spec;
  spec.classes = 2;
  spec.center_scale = 2.0;
  const auto task = make_blob_task(spec, 11);
  LinearModel m{spec.dims, 2};
  TrainConfig cfg;
  cfg.local_epochs = 20;
  const auto out = local_train(m, m.zeros(), task.train, cfg, m.zeros(), 7);
  const double acc = evaluate(m, out, task.train).accuracy;
  const double oracle = oracle_accuracy(oracle_train(task.train, 2, 300, 0.5), task.train, 2);
  EXPECT_GE(acc, 0.95);
  EXPECT_GE(oracle, 0.95);
  EXPECT_NEAR(acc, oracle, 0.05);
}

TEST(LocalTrain, BlobTaskMatchesCentralizedOracle) {
  const auto task = make_blob_task({}, 1);
  LinearModel m;
  TrainConfig cfg;
  cfg.local_epochs = 10;
  const auto out = local_train(m, m.zeros(), task.train, cfg, m.zeros(), 1);
  const double acc = evaluate(m, out, task.test).accuracy;
  const double oracle = oracle_accuracy(oracle_train(task.train, 10, 300, 0.5), task.test, 10);
  EXPECT_GE(oracle, 0.95);
  EXPECT_NEAR(acc, oracle, 0.05);
}

TEST(Evaluate, ZeroParamsAndPerfectParams) {
  const auto task = make_blob_task({}, 4);
  LinearModel m;
  // All logits tie at zero, so every prediction is class 0.
  EXPECT_NEAR(evaluate(m, m.zeros(), task.test).accuracy, 0.1, 1e-12);

  // Tiny noise: nearest-centre weights classify everything.
  BlobSpec spec;
  spec.noise = 1e-3;
  const auto clean = make_blob_task(spec, 4);
  auto p = m.zeros();
  for (std::size_t c = 0; c < 10; ++c) {
    double sq = 0;
    for (std::size_t k = 0; k < 16; ++k) {
      const double v = clean.centers[c * 16 + k];
      p.values[c * 16 + k] = v;
      sq += v * v;
    }
    p.values[160 + c] = -0.5 * sq;
  }
  EXPECT_EQ(evaluate(m, p, clean.test).accuracy, 1.0);
  ClientDataset empty{0, 16, 10, {}, {}};
  EXPECT_THROW(evaluate(m, p, empty), std::invalid_argument);
}

TEST(Partition, LabelShards) {
  const auto task = make_blob_task({}, 5);
  const auto parts = partition(task.train, 20, 2, 77);
  ASSERT_EQ(parts.size(), 20u);
  std::size_t total = 0;
  for (const auto& p : parts) {
    std::set<int> labels(p.labels.begin(), p.labels.end());
    EXPECT_LE(labels.size(), 2u);
    EXPECT_EQ(p.size(), task.train.size() / 40 * 2);
    total += p.size();
  }
  EXPECT_EQ(total, task.train.size());

  const auto again = partition(task.train, 20, 2, 77);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(parts[i].labels, again[i].labels);
    EXPECT_EQ(parts[i].features, again[i].features);
  }

  const auto one = partition(task.train, 1, 4, 3);
  ASSERT_EQ(one.size(), 1u);
  auto a = one[0].labels, b = task.train.labels;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);

  ClientDataset tiny{0, 1, 2, {1, 2, 3}, {0, 1, 1}};
  EXPECT_THROW(partition(tiny, 2, 2, 1), std::invalid_argument);
  EXPECT_THROW(partition(tiny, 0, 2, 1), std::invalid_argument);
}

TEST(Dataset, CsvLoader) {
  const std::string path = ::testing::TempDir() + "flsat_ds.csv";
  {
    std::ofstream out(path);
    out << "f0,f1,label\n0.5,1.5,0\n-1,2,2\n3,4,1\n";
  }
  const auto d = load_dataset_csv(path);
  EXPECT_EQ(d.dims, 2u);
  EXPECT_EQ(d.num_classes, 3u);
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.features[2], -1.0);
  {
    std::ofstream out(path);
    out << "f0,f1,label\n0.5,1.5\n";
  }
  EXPECT_THROW(load_dataset_csv(path), std::invalid_argument);
  std::remove(path.c_str());
  EXPECT_THROW(load_dataset_csv(path), std::runtime_error);
}
