#pragma once

// Bagging (mean of member predictions) and stacking (linear meta-learner fit
// out-of-fold) over pruned variants.

#include <cstdint>
#include <string>
#include <vector>

#include "authaudit/explain.hpp"
#include "json.hpp"

namespace authaudit {

enum class EnsembleMode { Bagging, Stacking };

struct EnsembleMember {
  std::string architecture;
  std::string head_path;
  std::uint64_t seed = 0;
  ChannelMask mask;
};

struct EnsembleSpec {
  std::vector<EnsembleMember> members;
  EnsembleMode mode = EnsembleMode::Bagging;
  std::vector<double> weights;  // stacking only
  double bias = 0.0;
};

nlohmann::json to_json(const EnsembleSpec& spec);
EnsembleSpec ensemble_from_json(const nlohmann::json& j);

// pred[m][i]: prediction of member m on item i.
std::vector<double> bag_predict(const std::vector<std::vector<double>>& pred);

struct LinearStack {
  std::vector<double> weights;
  double bias = 0.0;
  bool min_norm = false;  // design was rank-deficient, minimum-norm solution used
};

// Least squares y ~ w^T p + b over the given items (ridge on w only).
LinearStack fit_stack(const std::vector<std::vector<double>>& pred, const std::vector<double>& targets,
                      const std::vector<std::size_t>& items, double ridge_lambda = 0.0);
double stack_apply(const LinearStack& stack, const std::vector<std::vector<double>>& pred, std::size_t item);

struct StackFold {
  std::vector<std::size_t> held_out;
  std::vector<std::size_t> fitted_on;
  LinearStack model;
};

struct StackResult {
  std::vector<double> oof;
  std::vector<StackFold> folds;
  bool any_min_norm = false;
};

StackResult stack_cv(const std::vector<std::vector<double>>& pred, const std::vector<double>& targets,
                     std::size_t folds = 5, std::uint64_t seed = 0, double ridge_lambda = 0.0);

// Combines member predictors; any member failure propagates.
Predictor ensemble_predictor(const EnsembleSpec& spec, std::vector<Predictor> members);
MpmResult ensemble_mpm(const EnsembleSpec& spec, std::vector<Predictor> members, const Tensor3& input,
                       const MpmOptions& options = {});

}  // namespace authaudit
