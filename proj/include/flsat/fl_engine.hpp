// On-device learner: multinomial logistic regression trained with minibatch
// SGD (optionally with a proximal pull towards the dispatched global model),
// sample-weighted aggregation, payload sizing and evaluation.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace flsat::fl {

/// splitmix64-seeded xoshiro256** generator with hand-rolled distributions,
/// so every derived sample is identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    for (auto& s : state_) s = splitmix(seed);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do v = next();
    while (v >= limit);
    return v % n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do u1 = uniform();
    while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * 3.14159265358979323846 * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix(x);
  }

 private:
  static std::uint64_t splitmix(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct ModelParams {
  std::vector<double> values;
  double sample_count = 0.0;
  std::size_t round_tag = 0;
  std::size_t epochs_run = 0;

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }
};

/// Row-major feature matrix with integer class labels.
struct ClientDataset {
  std::size_t client_id = 0;
  std::size_t dims = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dims, dims}; }

  void validate() const {
    if (labels.empty()) throw std::invalid_argument("dataset is empty");
    if (features.size() != labels.size() * dims)
      throw std::invalid_argument("feature matrix does not match label count");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
        throw std::invalid_argument("label out of range");
  }
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t local_epochs = 1;
  double learning_rate = 0.05;
  double prox_mu = 0.0;
  std::size_t min_epochs = 1;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (local_epochs < 1) throw std::invalid_argument("local_epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (!(prox_mu >= 0.0)) throw std::invalid_argument("prox_mu must be >= 0");
  }
};

/// Weight matrix (classes x dims, row-major) followed by one bias per class.
struct LinearModel {
  std::size_t dims = 16;
  std::size_t classes = 10;

  std::size_t param_count() const { return classes * dims + classes; }
  ModelParams zeros() const { return {std::vector<double>(param_count(), 0.0), 0.0, 0, 0}; }

  void logits(std::span<const double> w, std::span<const double> x, std::span<double> out) const {
    for (std::size_t c = 0; c < classes; ++c) {
      double z = w[classes * dims + c];
      const double* wr = w.data() + c * dims;
      for (std::size_t d = 0; d < dims; ++d) z += wr[d] * x[d];
      out[c] = z;
    }
  }
};

namespace detail {
inline void softmax_inplace(std::span<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (auto& v : z) v /= s;
}

inline void check_dims(const LinearModel& model, const ModelParams& p, const ClientDataset& d) {
  if (p.values.size() != model.param_count())
    throw std::invalid_argument("parameter vector does not match the model");
  if (d.dims != model.dims) throw std::invalid_argument("dataset dims do not match the model");
  if (d.num_classes > model.classes)
    throw std::invalid_argument("dataset has more classes than the model");
}
}  // namespace detail

/// Mean cross-entropy over `indices` (plus the proximal penalty when
/// `prox_mu > 0`); writes the gradient into `grad` when non-empty.
inline double loss_and_gradient(const LinearModel& model, std::span<const double> w,
                                const ClientDataset& data, std::span<const std::size_t> indices,
                                double prox_mu, std::span<const double> anchor,
                                std::span<double> grad) {
  const std::size_t k = model.classes, dim = model.dims;
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> p(k);
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (std::size_t i : indices) {
    const auto x = data.row(i);
    const auto y = static_cast<std::size_t>(data.labels[i]);
    model.logits(w, x, p);
    detail::softmax_inplace(p);
    loss -= std::log(std::max(p[y], 1e-300)) * inv;
    if (grad.empty()) continue;
    for (std::size_t c = 0; c < k; ++c) {
      const double g = (p[c] - (c == y ? 1.0 : 0.0)) * inv;
      double* gr = grad.data() + c * dim;
      for (std::size_t d = 0; d < dim; ++d) gr[d] += g * x[d];
      grad[k * dim + c] += g;
    }
  }
  if (prox_mu > 0.0) {
    double sq = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double diff = w[j] - anchor[j];
      sq += diff * diff;
      if (!grad.empty()) grad[j] += prox_mu * diff;
    }
    loss += 0.5 * prox_mu * sq;
  }
  return loss;
}

/// Minibatch SGD for `epochs` passes (defaults to cfg.local_epochs). With
/// prox_mu > 0 every step also pulls towards `anchor`.
inline ModelParams local_train(const LinearModel& model, const ModelParams& params,
                               const ClientDataset& data, const TrainConfig& cfg,
                               const ModelParams& anchor, std::uint64_t seed,
                               std::optional<std::size_t> epochs = std::nullopt) {
  detail::check_dims(model, params, data);
  if (data.size() == 0) throw std::invalid_argument("training data is empty");
  if (cfg.prox_mu > 0.0 && anchor.values.size() != params.values.size())
    throw std::invalid_argument("anchor does not match the parameter vector");
  const std::size_t n_epochs = epochs.value_or(cfg.local_epochs);

  ModelParams out = params;
  out.sample_count = static_cast<double>(data.size());
  out.epochs_run = n_epochs;
  std::vector<double> grad(out.values.size());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  const std::size_t b = std::max<std::size_t>(1, cfg.batch_size);
  for (std::size_t e = 0; e < n_epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += b) {
      const std::size_t stop = std::min(order.size(), start + b);
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      loss_and_gradient(model, out.values, data, batch, cfg.prox_mu, anchor.values, grad);
      for (std::size_t j = 0; j < grad.size(); ++j) out.values[j] -= cfg.learning_rate * grad[j];
    }
  }
  return out;
}

/// Sample-count weighted mean.
inline ModelParams aggregate(std::span<const ModelParams> updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate needs at least one update");
  const std::size_t dim = updates.front().values.size();
  double total = 0.0;
  for (const auto& u : updates) {
    if (u.values.size() != dim) throw std::invalid_argument("update dimensions differ");
    if (u.sample_count < 0.0) throw std::invalid_argument("negative sample count");
    total += u.sample_count;
  }
  if (!(total > 0.0)) throw std::invalid_argument("total aggregation weight is zero");
  ModelParams out;
  out.values.assign(dim, 0.0);
  out.sample_count = total;
  for (const auto& u : updates) {
    const double w = u.sample_count / total;
    for (std::size_t j = 0; j < dim; ++j) out.values[j] += w * u.values[j];
    out.round_tag = std::max(out.round_tag, u.round_tag);
  }
  return out;
}

/// Streaming weighted mean holding a single accumulator vector.
class InPlaceAggregator {
 public:
  void add(const ModelParams& update) {
    if (update.sample_count < 0.0) throw std::invalid_argument("negative sample count");
    if (acc_.empty() && total_ == 0.0 && count_ == 0) {
      acc_.assign(update.values.size(), 0.0);
    } else if (update.values.size() != acc_.size()) {
      throw std::invalid_argument("update dimensions differ");
    }
    for (std::size_t j = 0; j < acc_.size(); ++j) acc_[j] += update.sample_count * update.values[j];
    total_ += update.sample_count;
    round_tag_ = std::max(round_tag_, update.round_tag);
    ++count_;
  }

  std::size_t count() const { return count_; }
  std::size_t accumulator_size() const { return acc_.size(); }

  ModelParams result() const {
    if (count_ == 0) throw std::invalid_argument("aggregate needs at least one update");
    if (!(total_ > 0.0)) throw std::invalid_argument("total aggregation weight is zero");
    ModelParams out;
    out.values.resize(acc_.size());
    for (std::size_t j = 0; j < acc_.size(); ++j) out.values[j] = acc_[j] / total_;
    out.sample_count = total_;
    out.round_tag = round_tag_;
    return out;
  }

  void reset() {
    acc_.clear();
    total_ = 0.0;
    round_tag_ = 0;
    count_ = 0;
  }

 private:
  std::vector<double> acc_;
  double total_ = 0.0;
  std::size_t round_tag_ = 0;
  std::size_t count_ = 0;
};

template <class Range>
ModelParams aggregate_in_place(const Range& stream) {
  InPlaceAggregator agg;
  for (const auto& u : stream) agg.add(u);
  return agg.result();
}

inline bool supported_bit_width(unsigned bits) {
  return bits == 8 || bits == 10 || bits == 16 || bits == 32;
}

/// Bytes needed to ship `param_count` parameters at `bits` each.
inline std::uint64_t payload_bytes(std::uint64_t param_count, unsigned bits) {
  if (!supported_bit_width(bits))
    throw std::invalid_argument("unsupported bit width " + std::to_string(bits));
  return (param_count * bits + 7) / 8;
}

/// Uniform min-max quantization round trip; 32 bits is passed through.
inline std::vector<double> quantize_roundtrip(std::span<const double> values, unsigned bits) {
  if (!supported_bit_width(bits))
    throw std::invalid_argument("unsupported bit width " + std::to_string(bits));
  std::vector<double> out(values.begin(), values.end());
  if (bits == 32 || values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi == lo) return out;
  const double levels = std::ldexp(1.0, static_cast<int>(bits)) - 1.0;
  const double scale = (hi - lo) / levels;
  for (auto& v : out) v = lo + std::round((v - lo) / scale) * scale;
  return out;
}

struct Evaluation {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

/// Argmax accuracy (ties to the lowest class) and mean cross-entropy.
inline Evaluation evaluate(const LinearModel& model, const ModelParams& params,
                           const ClientDataset& test) {
  if (test.size() == 0) throw std::invalid_argument("test set is empty");
  detail::check_dims(model, params, test);
  std::vector<double> z(model.classes);
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    model.logits(params.values, test.row(i), z);
    const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    const auto y = static_cast<std::size_t>(test.labels[i]);
    if (best == y) ++correct;
    detail::softmax_inplace(z);
    loss -= std::log(std::max(z[y], 1e-300));
  }
  const auto n = static_cast<double>(test.size());
  return {static_cast<double>(correct) / n, loss / n};
}

// ---------------------------------------------------------------------------
// Data.

struct BlobSpec {
  std::size_t classes = 10;
  std::size_t dims = 16;
  std::size_t samples_per_class = 200;
  std::size_t test_per_class = 100;
  double center_scale = 1.0;
  double noise = 1.0;
};

struct BlobTask {
  ClientDataset train;
  ClientDataset test;
  std::vector<double> centers;
};

/// Gaussian blobs: class centres drawn from N(0, center_scale^2 I), samples
/// from N(centre, noise^2 I). Train and test share the centres.
inline BlobTask make_blob_task(const BlobSpec& spec, std::uint64_t seed) {
  if (spec.classes < 2 || spec.dims < 1 || spec.samples_per_class < 1)
    throw std::invalid_argument("blob task needs >= 2 classes, >= 1 dim, >= 1 sample");
  Rng rng(Rng::mix(seed, 0xB10B));
  BlobTask task;
  task.centers.resize(spec.classes * spec.dims);
  for (auto& c : task.centers) c = spec.center_scale * rng.normal();
  auto fill = [&](ClientDataset& ds, std::size_t per_class) {
    ds.dims = spec.dims;
    ds.num_classes = spec.classes;
    for (std::size_t i = 0; i < per_class; ++i)
      for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t d = 0; d < spec.dims; ++d)
          ds.features.push_back(task.centers[c * spec.dims + d] + spec.noise * rng.normal());
        ds.labels.push_back(static_cast<int>(c));
      }
  };
  fill(task.train, spec.samples_per_class);
  fill(task.test, spec.test_per_class);
  return task;
}

/// Label-shard partition: samples sorted by label (stable), cut into
/// num_clients * shards_per_client contiguous shards, shards dealt to
/// clients by a seeded permutation.
inline std::vector<ClientDataset> partition(const ClientDataset& data, std::size_t num_clients,
                                            std::size_t shards_per_client, std::uint64_t seed) {
  if (num_clients == 0 || shards_per_client == 0)
    throw std::invalid_argument("partition needs >= 1 client and >= 1 shard per client");
  const std::size_t shards = num_clients * shards_per_client;
  if (shards > data.size())
    throw std::invalid_argument("insufficient data: " + std::to_string(data.size()) +
                                " samples for " + std::to_string(shards) + " shards");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return data.labels[a] < data.labels[b]; });
  std::vector<std::size_t> shard_ids(shards);
  std::iota(shard_ids.begin(), shard_ids.end(), std::size_t{0});
  Rng rng(Rng::mix(seed, 0x5A4D));
  rng.shuffle(shard_ids);

  std::vector<ClientDataset> out(num_clients);
  for (std::size_t c = 0; c < num_clients; ++c) {
    auto& ds = out[c];
    ds.client_id = c;
    ds.dims = data.dims;
    ds.num_classes = data.num_classes;
    for (std::size_t s = 0; s < shards_per_client; ++s) {
      const std::size_t shard = shard_ids[c * shards_per_client + s];
      const std::size_t lo = shard * data.size() / shards;
      const std::size_t hi = (shard + 1) * data.size() / shards;
      for (std::size_t i = lo; i < hi; ++i) {
        const auto r = data.row(order[i]);
        ds.features.insert(ds.features.end(), r.begin(), r.end());
        ds.labels.push_back(data.labels[order[i]]);
      }
    }
  }
  return out;
}

/// Dense CSV: header names the columns (feature columns then `label`),
/// one sample per row.
inline ClientDataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("dataset file is empty: " + path);
  const auto cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (cols < 2) throw std::invalid_argument("dataset needs at least one feature and a label");
  ClientDataset ds;
  ds.dims = cols - 1;
  int max_label = -1;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(ss, cell, ',')) {
      if (k >= cols) break;
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str())
        throw std::invalid_argument("dataset row " + std::to_string(row) + ": bad number");
      if (k + 1 < cols) {
        ds.features.push_back(v);
      } else {
        const int y = static_cast<int>(v);
        if (y < 0 || static_cast<double>(y) != v)
          throw std::invalid_argument("dataset row " + std::to_string(row) + ": bad label");
        ds.labels.push_back(y);
        max_label = std::max(max_label, y);
      }
      ++k;
    }
    if (k != cols)
      throw std::invalid_argument("dataset row " + std::to_string(row) + ": expected " +
                                  std::to_string(cols) + " columns");
  }
  ds.num_classes = static_cast<std::size_t>(max_label + 1);
  ds.validate();
  return ds;
}

}  // namespace flsat::fl
