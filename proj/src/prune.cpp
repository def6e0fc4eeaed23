#include "authaudit/prune.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "authaudit/parallel.hpp"

namespace authaudit {

nlohmann::json to_json(const PruneTrace& t) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : t.steps) {
    steps.push_back({{"removed_channel", s.removed_channel}, {"rmse_before", s.rmse_before}, {"rmse_after", s.rmse_after}});
  }
  std::vector<int> mask(t.final_mask.retained.begin(), t.final_mask.retained.end());
  return {{"eval_set_id", t.eval_set_id},
          {"initial_rmse", t.initial_rmse},
          {"steps", steps},
          {"final_mask", mask},
          {"retained", t.final_mask.count()}};
}

PruneTrace trace_from_json(const nlohmann::json& j) {
  PruneTrace t;
  t.eval_set_id = j.at("eval_set_id").get<std::string>();
  t.initial_rmse = j.at("initial_rmse").get<double>();
  for (const auto& s : j.at("steps")) {
    t.steps.push_back({s.at("removed_channel").get<int>(), s.at("rmse_before").get<double>(), s.at("rmse_after").get<double>()});
  }
  for (int v : j.at("final_mask").get<std::vector<int>>()) t.final_mask.retained.push_back(v != 0);
  return t;
}

PruneProblem prune_problem_from_featmaps(const HeadParams& head, const Oracle& oracle,
                                         std::vector<FeatureMapTensor> featmaps, std::vector<double> targets) {
  if (!oracle.has_tail()) throw std::invalid_argument("prune: backend exposes no tail; use live masked embeds");
  if (featmaps.size() != targets.size()) throw std::invalid_argument("prune: featmaps/targets length mismatch");
  auto maps = std::make_shared<const std::vector<FeatureMapTensor>>(std::move(featmaps));
  PruneProblem p{head, static_cast<std::size_t>(oracle.meta().channels()), std::move(targets), {}};
  p.embed = [maps, &oracle](std::size_t item, const ChannelMask& mask) { return oracle.tail((*maps)[item], &mask); };
  return p;
}

PruneProblem prune_problem_from_oracle(const HeadParams& head, const Oracle& oracle, std::vector<Tensor3> inputs,
                                       std::vector<double> targets) {
  if (inputs.size() != targets.size()) throw std::invalid_argument("prune: inputs/targets length mismatch");
  auto in = std::make_shared<const std::vector<Tensor3>>(std::move(inputs));
  PruneProblem p{head, static_cast<std::size_t>(oracle.meta().channels()), std::move(targets), {}};
  p.embed = [in, &oracle](std::size_t item, const ChannelMask& mask) { return oracle.embed((*in)[item], &mask); };
  return p;
}

double masked_rmse(const PruneProblem& problem, const ChannelMask& mask) {
  double se = 0.0;
  for (std::size_t i = 0; i < problem.targets.size(); ++i) {
    const double d = predict(problem.head, problem.embed(i, mask)) - problem.targets[i];
    se += d * d;
  }
  return std::sqrt(se / static_cast<double>(problem.targets.size()));
}

PruneTrace sbs_prune(const PruneProblem& problem, const std::string& eval_set_id, int jobs, const PruneTrace* resume) {
  if (problem.targets.empty()) throw std::invalid_argument("sbs_prune: empty evaluation set");
  if (problem.channels == 0 || !problem.embed) throw std::invalid_argument("sbs_prune: problem not initialised");

  PruneTrace trace;
  trace.eval_set_id = eval_set_id;
  trace.final_mask = ChannelMask::all(problem.channels);
  if (resume) {
    if (resume->final_mask.size() != problem.channels) throw std::invalid_argument("sbs_prune: resume mask length mismatch");
    trace = *resume;
    trace.eval_set_id = eval_set_id;
  }

  auto fail = [&](const std::exception& e) -> PruneInterrupted {
    return PruneInterrupted(std::string("sbs_prune interrupted after ") + std::to_string(trace.steps.size()) +
                                " steps: " + e.what(),
                            trace);
  };

  double current = 0.0;
  try {
    current = masked_rmse(problem, trace.final_mask);
  } catch (const std::exception& e) {
    throw fail(e);
  }
  if (!resume) trace.initial_rmse = current;

  for (;;) {
    std::vector<int> candidates;
    for (std::size_t k = 0; k < problem.channels; ++k) {
      if (trace.final_mask.retained[k]) candidates.push_back(static_cast<int>(k));
    }
    if (candidates.size() <= 1) break;

    std::vector<double> scores(candidates.size());
    try {
      parallel_for(candidates.size(), jobs, [&](std::size_t c) {
        ChannelMask m = trace.final_mask;
        m.retained[candidates[c]] = false;
        scores[c] = masked_rmse(problem, m);
      });
    } catch (const std::exception& e) {
      throw fail(e);
    }

    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.size(); ++c) {
      if (scores[c] < scores[best]) best = c;
    }
    if (!(scores[best] - current < 0.0)) break;
    trace.steps.push_back({candidates[best], current, scores[best]});
    trace.final_mask.retained[candidates[best]] = false;
    current = scores[best];
  }
  return trace;
}

}  // namespace authaudit
