#pragma once

// Regression readout on frozen embeddings: ReLU MLP with a linear scalar
// output, trained by Adam on batch MSE with inverted dropout and early
// stopping on validation loss.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "authaudit/corpus.hpp"
#include "authaudit/oracle.hpp"
#include "authaudit/rng.hpp"
#include "json.hpp"

namespace authaudit {

struct HeadParams {
  // dims.front() is the embedding size, dims.back() is 1.
  std::vector<std::size_t> dims;
  // weights[l] is dims[l+1] x dims[l], row-major; biases[l] has dims[l+1].
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  double dropout_p = 0.5;

  std::size_t layer_count() const { return weights.size(); }
  std::size_t input_dim() const { return dims.front(); }
  std::size_t parameter_count() const;

  static HeadParams zeros(std::vector<std::size_t> dims);
  bool operator==(const HeadParams&) const = default;
};

// Layer sizes for a backbone: 4096->128->1 for the VGG pair, otherwise
// embed_dim->512->128->1.
std::vector<std::size_t> head_dims_for(const std::string& backbone, std::size_t embed_dim);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 250;
  std::size_t patience = 15;
  std::uint64_t seed = 0;
  double dropout_p = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

nlohmann::json to_json(const TrainConfig& cfg);

struct EpochLoss {
  double train = 0.0;
  double val = 0.0;
};

struct TrainedVariant {
  HeadParams head;
  corpus::SplitPlan split;
  std::vector<EpochLoss> history;
  std::size_t best_epoch = 0;
};

using EmbeddingTable = std::unordered_map<std::string, Embedding>;
using TargetTable = std::unordered_map<std::string, double>;
// Called with the ids of every mini-batch that contributes a gradient step.
using BatchObserver = std::function<void(std::span<const std::string>)>;

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// He-uniform weights (limit sqrt(6 / fan_in)) and zero biases, drawn in layer
// order from rng.
HeadParams init_head(const std::vector<std::size_t>& dims, Pcg32& rng);

TrainedVariant train_head(const EmbeddingTable& embeddings, const TargetTable& targets,
                          const corpus::SplitPlan& split, const TrainConfig& cfg,
                          const std::vector<std::size_t>& dims, const BatchObserver& observer = {});

// Inference forward pass (no dropout).
double predict(const HeadParams& head, std::span<const double> x);
double predict(const HeadParams& head, const Embedding& e);
// Last hidden-layer activations (the input itself for a head without hidden layers).
std::vector<double> penultimate(const HeadParams& head, const Embedding& e);
// d prediction / d embedding by reverse mode; ReLU'(0) = 0.
std::vector<double> head_gradient(const HeadParams& head, std::span<const double> x);
std::vector<double> head_gradient(const HeadParams& head, const Embedding& e);

std::vector<double> to_double(const Embedding& e);

// AFC1 container (kind 2 records "layer<l>.weight"/"layer<l>.bias") plus a
// JSON sidecar (<path>.head.json) holding dims, dropout and `extra`.
void save_head(const std::filesystem::path& path, const HeadParams& head, const nlohmann::json& extra = {});
HeadParams load_head(const std::filesystem::path& path);
std::vector<std::uint8_t> head_bytes(const HeadParams& head);

}  // namespace authaudit
