#include "authaudit/head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <numeric>

#include "authaudit/binary_io.hpp"
#include "authaudit/feature_cache.hpp"
#include "authaudit/kernels.hpp"
#include "authaudit/rng.hpp"

namespace authaudit {

std::size_t HeadParams::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

HeadParams HeadParams::zeros(std::vector<std::size_t> dims) {
  if (dims.size() < 2 || dims.back() != 1) throw std::invalid_argument("head dims must end in 1");
  HeadParams h;
  h.dims = std::move(dims);
  for (std::size_t l = 0; l + 1 < h.dims.size(); ++l) {
    h.weights.emplace_back(h.dims[l + 1] * h.dims[l], 0.0);
    h.biases.emplace_back(h.dims[l + 1], 0.0);
  }
  return h;
}

std::vector<std::size_t> head_dims_for(const std::string& backbone, std::size_t embed_dim) {
  if (backbone == "vgg16" || backbone == "vgg19") return {embed_dim, 128, 1};
  return {embed_dim, 512, 128, 1};
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
          {"patience", c.patience},           {"seed", c.seed},             {"dropout_p", c.dropout_p},
          {"beta1", c.beta1},                 {"beta2", c.beta2},           {"epsilon", c.epsilon},
          {"loss", "mse"}};
}

HeadParams init_head(const std::vector<std::size_t>& dims, Pcg32& rng) {
  HeadParams h = HeadParams::zeros(dims);
  for (std::size_t l = 0; l < h.layer_count(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(h.dims[l]));
    for (auto& w : h.weights[l]) w = limit * (2.0 * rng.uniform() - 1.0);
  }
  return h;
}

std::vector<double> to_double(const Embedding& e) { return {e.values.begin(), e.values.end()}; }

namespace {

void check_input(const HeadParams& head, std::size_t n) {
  if (head.dims.empty() || n != head.input_dim()) {
    throw std::invalid_argument("head expects an embedding of size " +
                                std::to_string(head.dims.empty() ? 0 : head.input_dim()) + ", got " +
                                std::to_string(n));
  }
}

// Activations after each layer (ReLU on hidden layers, identity on the output).
// acts[0] is the input.
void forward(const HeadParams& head, std::span<const double> x, std::vector<std::vector<double>>& acts) {
  const auto dot = kernels::active().dot_f64;
  acts.resize(head.layer_count() + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < head.layer_count(); ++l) {
    const std::size_t in = head.dims[l];
    const std::size_t out = head.dims[l + 1];
    auto& a = acts[l + 1];
    a.resize(out);
    for (std::size_t j = 0; j < out; ++j) {
      a[j] = head.biases[l][j] + dot(head.weights[l].data() + j * in, acts[l].data(), in);
    }
    if (l + 1 < head.layer_count()) {
      for (auto& v : a) v = v > 0.0 ? v : 0.0;
    }
  }
}

}  // namespace

double predict(const HeadParams& head, std::span<const double> x) {
  check_input(head, x.size());
  std::vector<std::vector<double>> acts;
  forward(head, x, acts);
  return acts.back()[0];
}

double predict(const HeadParams& head, const Embedding& e) { return predict(head, to_double(e)); }

std::vector<double> penultimate(const HeadParams& head, const Embedding& e) {
  const auto x = to_double(e);
  check_input(head, x.size());
  std::vector<std::vector<double>> acts;
  forward(head, x, acts);
  return acts[acts.size() - 2];
}

std::vector<double> head_gradient(const HeadParams& head, std::span<const double> x) {
  check_input(head, x.size());
  std::vector<std::vector<double>> acts;
  forward(head, x, acts);
  const auto axpy = kernels::active().axpy_f64;
  std::vector<double> delta{1.0};
  for (std::size_t l = head.layer_count(); l-- > 0;) {
    const std::size_t in = head.dims[l];
    std::vector<double> prev(in, 0.0);
    for (std::size_t j = 0; j < delta.size(); ++j) {
      if (delta[j] != 0.0) axpy(delta[j], head.weights[l].data() + j * in, prev.data(), in);
    }
    if (l > 0) {
      for (std::size_t i = 0; i < in; ++i) {
        if (!(acts[l][i] > 0.0)) prev[i] = 0.0;
      }
    }
    delta = std::move(prev);
  }
  return delta;
}

std::vector<double> head_gradient(const HeadParams& head, const Embedding& e) {
  return head_gradient(head, to_double(e));
}

// --- training -------------------------------------------------------------------

namespace {

struct AdamState {
  std::vector<std::vector<double>> mw, vw, mb, vb;
  std::size_t step = 0;

  explicit AdamState(const HeadParams& h) {
    for (std::size_t l = 0; l < h.layer_count(); ++l) {
      mw.emplace_back(h.weights[l].size(), 0.0);
      vw.emplace_back(h.weights[l].size(), 0.0);
      mb.emplace_back(h.biases[l].size(), 0.0);
      vb.emplace_back(h.biases[l].size(), 0.0);
    }
  }
};

void adam_update(std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& m,
                 std::vector<double>& v, const TrainConfig& cfg, double bc1, double bc2) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

double mse(const HeadParams& head, const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = predict(head, x[i]) - y[i];
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

}  // namespace

TrainedVariant train_head(const EmbeddingTable& embeddings, const TargetTable& targets,
                          const corpus::SplitPlan& split, const TrainConfig& cfg,
                          const std::vector<std::size_t>& dims, const BatchObserver& observer) {
  if (cfg.batch_size == 0 || cfg.max_epochs == 0 || !(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("train_head: batch size, epochs and learning rate must be positive");
  }
  if (split.train.empty()) throw std::invalid_argument("train_head: empty training set");
  if (split.val.empty()) throw std::invalid_argument("train_head: empty validation set");

  auto gather = [&](const std::vector<std::string>& ids, std::vector<std::vector<double>>& x,
                    std::vector<double>& y) {
    for (const auto& id : ids) {
      const auto e = embeddings.find(id);
      const auto t = targets.find(id);
      if (e == embeddings.end()) throw std::invalid_argument("train_head: no embedding for " + id);
      if (t == targets.end()) throw std::invalid_argument("train_head: no target for " + id);
      if (e->second.size() != dims.front()) throw std::invalid_argument("train_head: embedding size mismatch for " + id);
      x.push_back(to_double(e->second));
      y.push_back(t->second);
    }
  };
  std::vector<std::vector<double>> xt, xv;
  std::vector<double> yt, yv;
  gather(split.train, xt, yt);
  gather(split.val, xv, yv);
  // Test ids are checked for presence only; they never enter the loop below.
  for (const auto& id : split.test) {
    if (!embeddings.count(id) || !targets.count(id)) throw std::invalid_argument("train_head: missing test item " + id);
  }

  Pcg32 rng(cfg.seed);
  HeadParams head = init_head(dims, rng);
  head.dropout_p = cfg.dropout_p;
  // Targets stay on the raw rating scale; starting the output bias at their
  // training mean keeps the offset out of the (dropped-out) hidden units.
  head.biases.back()[0] = std::accumulate(yt.begin(), yt.end(), 0.0) / static_cast<double>(yt.size());
  AdamState adam(head);
  const auto axpy = kernels::active().axpy_f64;
  const auto dot = kernels::active().dot_f64;
  const double keep = 1.0 - cfg.dropout_p;
  const std::size_t layers = head.layer_count();

  TrainedVariant result;
  result.split = split;
  HeadParams best = head;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  std::vector<std::size_t> order(xt.size());
  std::vector<std::vector<double>> gw(layers), gb(layers);
  std::vector<std::vector<double>> acts(layers + 1);
  std::vector<std::vector<double>> drop(layers);
  std::vector<std::string> batch_ids;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span(order));
    double epoch_se = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 2.0 / static_cast<double>(end - start);
      for (std::size_t l = 0; l < layers; ++l) {
        gw[l].assign(head.weights[l].size(), 0.0);
        gb[l].assign(head.biases[l].size(), 0.0);
      }
      if (observer) {
        batch_ids.clear();
        for (std::size_t b = start; b < end; ++b) batch_ids.push_back(split.train[order[b]]);
        observer(batch_ids);
      }
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        // Forward with inverted dropout on hidden activations.
        acts[0] = xt[idx];
        for (std::size_t l = 0; l < layers; ++l) {
          const std::size_t in = head.dims[l];
          const std::size_t out = head.dims[l + 1];
          acts[l + 1].resize(out);
          for (std::size_t j = 0; j < out; ++j) {
            acts[l + 1][j] = head.biases[l][j] + dot(head.weights[l].data() + j * in, acts[l].data(), in);
          }
          if (l + 1 < layers) {
            drop[l].resize(out);
            for (std::size_t j = 0; j < out; ++j) {
              const double m = cfg.dropout_p > 0.0 ? (rng.uniform() < keep ? 1.0 / keep : 0.0) : 1.0;
              drop[l][j] = acts[l + 1][j] > 0.0 ? m : 0.0;
              acts[l + 1][j] = acts[l + 1][j] > 0.0 ? acts[l + 1][j] * m : 0.0;
            }
          }
        }
        const double err = acts[layers][0] - yt[idx];
        if (!std::isfinite(err)) {
          throw TrainingError("train_head: non-finite loss at epoch " + std::to_string(epoch) + " (seed " +
                              std::to_string(cfg.seed) + ")");
        }
        epoch_se += err * err;
        // Backward.
        std::vector<double> delta{scale * err};
        for (std::size_t l = layers; l-- > 0;) {
          const std::size_t in = head.dims[l];
          for (std::size_t j = 0; j < delta.size(); ++j) {
            if (delta[j] == 0.0) continue;
            axpy(delta[j], acts[l].data(), gw[l].data() + j * in, in);
            gb[l][j] += delta[j];
          }
          if (l == 0) break;
          std::vector<double> prev(in, 0.0);
          for (std::size_t j = 0; j < delta.size(); ++j) {
            if (delta[j] != 0.0) axpy(delta[j], head.weights[l].data() + j * in, prev.data(), in);
          }
          for (std::size_t i = 0; i < in; ++i) prev[i] *= drop[l - 1][i];
          delta = std::move(prev);
        }
      }
      ++adam.step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.step));
      for (std::size_t l = 0; l < layers; ++l) {
        adam_update(head.weights[l], gw[l], adam.mw[l], adam.vw[l], cfg, bc1, bc2);
        adam_update(head.biases[l], gb[l], adam.mb[l], adam.vb[l], cfg, bc1, bc2);
      }
    }
    EpochLoss loss{epoch_se / static_cast<double>(xt.size()), mse(head, xv, yv)};
    if (!std::isfinite(loss.val)) {
      throw TrainingError("train_head: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(loss);
    if (loss.val < best_val) {
      best_val = loss.val;
      best = head;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  result.head = std::move(best);
  return result;
}

// --- serialization ------------------------------------------------------------------

namespace {

std::vector<CacheRecord> head_records(const HeadParams& head) {
  std::vector<CacheRecord> records;
  for (std::size_t l = 0; l < head.layer_count(); ++l) {
    const auto out = static_cast<std::uint32_t>(head.dims[l + 1]);
    const auto in = static_cast<std::uint32_t>(head.dims[l]);
    records.push_back({"layer" + std::to_string(l) + ".weight", RecordKind::HeadTensor, {out, in}, {}, head.weights[l]});
    records.push_back({"layer" + std::to_string(l) + ".bias", RecordKind::HeadTensor, {out}, {}, head.biases[l]});
  }
  return records;
}

std::filesystem::path sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".head.json";
  return p;
}

}  // namespace

std::vector<std::uint8_t> head_bytes(const HeadParams& head) { return encode_cache(head_records(head)); }

void save_head(const std::filesystem::path& path, const HeadParams& head, const nlohmann::json& extra) {
  FeatureCacheWriter writer;
  for (auto& r : head_records(head)) writer.add(std::move(r));
  writer.write(path);
  nlohmann::json meta{{"dims", head.dims}, {"dropout_p", head.dropout_p}, {"parameters", head.parameter_count()}};
  if (!extra.is_null()) meta["extra"] = extra;
  write_text(sidecar(path), meta.dump(1));
}

HeadParams load_head(const std::filesystem::path& path) {
  const auto meta = nlohmann::json::parse(read_text(sidecar(path)));
  HeadParams head = HeadParams::zeros(meta.at("dims").get<std::vector<std::size_t>>());
  head.dropout_p = meta.value("dropout_p", 0.5);
  const FeatureCache cache = FeatureCache::open(path);
  for (std::size_t l = 0; l < head.layer_count(); ++l) {
    const auto& w = cache.record("layer" + std::to_string(l) + ".weight");
    const auto& b = cache.record("layer" + std::to_string(l) + ".bias");
    if (w.f64.size() != head.weights[l].size() || b.f64.size() != head.biases[l].size()) {
      throw FormatError("head file " + path.string() + " does not match its declared dims");
    }
    head.weights[l] = w.f64;
    head.biases[l] = b.f64;
  }
  return head;
}

}  // namespace authaudit
