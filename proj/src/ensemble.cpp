#include "authaudit/ensemble.hpp"

#include <Eigen/Dense>
#include <numeric>

#include "authaudit/rng.hpp"

namespace authaudit {

nlohmann::json to_json(const EnsembleSpec& spec) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : spec.members) {
    std::vector<int> mask(m.mask.retained.begin(), m.mask.retained.end());
    members.push_back({{"architecture", m.architecture}, {"head", m.head_path}, {"seed", m.seed}, {"mask", mask}});
  }
  nlohmann::json j{{"mode", spec.mode == EnsembleMode::Bagging ? "bagging" : "stacking"}, {"members", members}};
  if (spec.mode == EnsembleMode::Stacking) {
    j["weights"] = spec.weights;
    j["bias"] = spec.bias;
  }
  return j;
}

EnsembleSpec ensemble_from_json(const nlohmann::json& j) {
  EnsembleSpec spec;
  const auto mode = j.at("mode").get<std::string>();
  if (mode == "bagging") {
    spec.mode = EnsembleMode::Bagging;
  } else if (mode == "stacking") {
    spec.mode = EnsembleMode::Stacking;
  } else {
    throw std::invalid_argument("ensemble: unknown mode '" + mode + "'");
  }
  for (const auto& m : j.at("members")) {
    EnsembleMember member{m.at("architecture").get<std::string>(), m.at("head").get<std::string>(),
                          m.at("seed").get<std::uint64_t>(), {}};
    for (int v : m.at("mask").get<std::vector<int>>()) member.mask.retained.push_back(v != 0);
    spec.members.push_back(std::move(member));
  }
  if (spec.members.empty()) throw std::invalid_argument("ensemble: no members");
  if (spec.mode == EnsembleMode::Stacking) {
    spec.weights = j.at("weights").get<std::vector<double>>();
    spec.bias = j.at("bias").get<double>();
    if (spec.weights.size() != spec.members.size()) throw std::invalid_argument("ensemble: weight count mismatch");
  }
  return spec;
}

std::vector<double> bag_predict(const std::vector<std::vector<double>>& pred) {
  if (pred.empty()) throw std::invalid_argument("bag_predict: empty member set");
  std::vector<double> out(pred[0].size(), 0.0);
  for (const auto& row : pred) {
    if (row.size() != out.size()) throw std::invalid_argument("bag_predict: ragged prediction matrix");
    for (std::size_t i = 0; i < row.size(); ++i) out[i] += row[i];
  }
  for (auto& v : out) v /= static_cast<double>(pred.size());
  return out;
}

LinearStack fit_stack(const std::vector<std::vector<double>>& pred, const std::vector<double>& targets,
                      const std::vector<std::size_t>& items, double ridge_lambda) {
  const std::size_t m = pred.size();
  const std::size_t n = items.size();
  if (m == 0 || n == 0) throw std::invalid_argument("fit_stack: empty design");
  Eigen::MatrixXd x(n, m);
  Eigen::VectorXd y(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) x(r, c) = pred[c].at(items[r]);
    y[r] = targets.at(items[r]);
  }
  const Eigen::RowVectorXd xbar = x.colwise().mean();
  const double ybar = y.mean();
  x.rowwise() -= xbar;
  y.array() -= ybar;

  LinearStack out;
  Eigen::VectorXd w;
  if (ridge_lambda > 0.0) {
    Eigen::MatrixXd a = x.transpose() * x;
    a.diagonal().array() += ridge_lambda;
    w = a.ldlt().solve(x.transpose() * y);
  } else {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
    out.min_norm = cod.rank() < static_cast<Eigen::Index>(m);
    w = cod.solve(y);
  }
  out.weights.assign(w.data(), w.data() + m);
  out.bias = ybar - xbar.dot(w);
  return out;
}

double stack_apply(const LinearStack& stack, const std::vector<std::vector<double>>& pred, std::size_t item) {
  double v = stack.bias;
  for (std::size_t c = 0; c < pred.size(); ++c) v += stack.weights[c] * pred[c][item];
  return v;
}

StackResult stack_cv(const std::vector<std::vector<double>>& pred, const std::vector<double>& targets,
                     std::size_t folds, std::uint64_t seed, double ridge_lambda) {
  if (pred.empty()) throw std::invalid_argument("stack_cv: empty member set");
  const std::size_t n = targets.size();
  for (const auto& row : pred) {
    if (row.size() != n) throw std::invalid_argument("stack_cv: prediction/target length mismatch");
  }
  if (folds < 2 || n < folds) throw std::invalid_argument("stack_cv: need at least K items and K >= 2");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Pcg32 rng(seed, 13);
  rng.shuffle(std::span(order));

  StackResult out;
  out.oof.assign(n, 0.0);
  for (std::size_t f = 0; f < folds; ++f) {
    StackFold fold;
    for (std::size_t i = 0; i < n; ++i) (i % folds == f ? fold.held_out : fold.fitted_on).push_back(order[i]);
    std::sort(fold.held_out.begin(), fold.held_out.end());
    std::sort(fold.fitted_on.begin(), fold.fitted_on.end());
    fold.model = fit_stack(pred, targets, fold.fitted_on, ridge_lambda);
    out.any_min_norm = out.any_min_norm || fold.model.min_norm;
    for (std::size_t i : fold.held_out) out.oof[i] = stack_apply(fold.model, pred, i);
    out.folds.push_back(std::move(fold));
  }
  return out;
}

Predictor ensemble_predictor(const EnsembleSpec& spec, std::vector<Predictor> members) {
  if (members.empty()) throw std::invalid_argument("ensemble_predictor: no members");
  if (spec.mode == EnsembleMode::Stacking && spec.weights.size() != members.size()) {
    throw std::invalid_argument("ensemble_predictor: weight count mismatch");
  }
  return [spec, members = std::move(members)](const Tensor3& input) {
    double acc = spec.mode == EnsembleMode::Stacking ? spec.bias : 0.0;
    for (std::size_t m = 0; m < members.size(); ++m) {
      const double p = members[m](input);
      acc += spec.mode == EnsembleMode::Stacking ? spec.weights[m] * p : p;
    }
    return spec.mode == EnsembleMode::Stacking ? acc : acc / static_cast<double>(members.size());
  };
}

MpmResult ensemble_mpm(const EnsembleSpec& spec, std::vector<Predictor> members, const Tensor3& input,
                       const MpmOptions& options) {
  return mpm(ensemble_predictor(spec, std::move(members)), input, options);
}

}  // namespace authaudit
