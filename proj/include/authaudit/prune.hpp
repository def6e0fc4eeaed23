#pragma once

// Sequential Backward Selection over target-layer channels. The head is never
// retrained; each step ablates the channel whose removal lowers evaluation
// RMSE the most, until no single ablation helps.

#include <functional>
#include <string>
#include <vector>

#include "authaudit/head.hpp"
#include "authaudit/oracle.hpp"
#include "json.hpp"

namespace authaudit {

struct PruneStep {
  int removed_channel = -1;
  double rmse_before = 0.0;
  double rmse_after = 0.0;
  bool operator==(const PruneStep&) const = default;
};

struct PruneTrace {
  std::vector<PruneStep> steps;
  ChannelMask final_mask;
  std::string eval_set_id;
  double initial_rmse = 0.0;
  bool operator==(const PruneTrace&) const = default;
};

nlohmann::json to_json(const PruneTrace& trace);
PruneTrace trace_from_json(const nlohmann::json& j);

// Masked embedding of evaluation item `item`.
using MaskedEmbedFn = std::function<Embedding(std::size_t item, const ChannelMask& mask)>;

struct PruneProblem {
  HeadParams head;
  std::size_t channels = 0;
  std::vector<double> targets;
  MaskedEmbedFn embed;
};

// Builds the problem from cached feature maps through the backend's tail, so
// no forward passes are needed during the scan.
PruneProblem prune_problem_from_featmaps(const HeadParams& head, const Oracle& oracle,
                                         std::vector<FeatureMapTensor> featmaps, std::vector<double> targets);
// Builds the problem from live masked embed calls on preprocessed inputs.
PruneProblem prune_problem_from_oracle(const HeadParams& head, const Oracle& oracle, std::vector<Tensor3> inputs,
                                       std::vector<double> targets);

double masked_rmse(const PruneProblem& problem, const ChannelMask& mask);

// Raised when an embedding call fails mid-scan; `partial` holds every step
// committed so far and can be passed back as `resume`.
class PruneInterrupted : public std::runtime_error {
 public:
  PruneInterrupted(const std::string& what, PruneTrace partial)
      : std::runtime_error(what), partial(std::move(partial)) {}
  PruneTrace partial;
};

PruneTrace sbs_prune(const PruneProblem& problem, const std::string& eval_set_id, int jobs = 1,
                     const PruneTrace* resume = nullptr);

}  // namespace authaudit
