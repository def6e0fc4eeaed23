#include <cmath>
#include <numeric>

#include "authaudit/ensemble.hpp"
#include "authaudit/stats.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace authaudit;

namespace {

struct Panel {
  std::vector<double> targets;
  std::vector<std::vector<double>> pred;  // [member][item]
};

// Members are the truth plus independent noise.
Panel iid_panel(std::size_t members, std::size_t n, double sd, std::uint64_t seed) {
  Pcg32 rng(seed);
  Panel p;
  for (std::size_t i = 0; i < n; ++i) p.targets.push_back(rng.uniform(0, 100));
  for (std::size_t m = 0; m < members; ++m) {
    std::vector<double> row;
    for (double t : p.targets) row.push_back(t + rng.normal(0, sd));
    p.pred.push_back(row);
  }
  return p;
}

double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

}  // namespace

TEST_SUITE("ensemble") {
  TEST_CASE("single-member bagging is the identity") {
    const auto p = iid_panel(1, 30, 2.0, 1);
    CHECK(bag_predict(p.pred) == p.pred[0]);
  }

  TEST_CASE("Jensen: bagged squared error never exceeds the mean member error, per item") {
    const auto p = iid_panel(7, 200, 5.0, 2);
    const auto bag = bag_predict(p.pred);
    for (std::size_t i = 0; i < p.targets.size(); ++i) {
      double member = 0;
      for (const auto& row : p.pred) member += (row[i] - p.targets[i]) * (row[i] - p.targets[i]);
      member /= static_cast<double>(p.pred.size());
      const double e = (bag[i] - p.targets[i]) * (bag[i] - p.targets[i]);
      CHECK(e <= member + 1e-12);
    }
  }

  TEST_CASE("bagging 60 iid members shrinks error like sigma/sqrt(60)") {
    const double sd = 6.0;
    const auto p = iid_panel(60, 500, sd, 3);
    const double got = rmse(bag_predict(p.pred), p.targets);
    const double want = sd / std::sqrt(60.0);
    CHECK(std::abs(got - want) <= 0.25 * want);
  }

  TEST_CASE("bagging identical members reproduces the member") {
    auto p = iid_panel(1, 40, 1.0, 4);
    p.pred.push_back(p.pred[0]);
    p.pred.push_back(p.pred[0]);
    CHECK(testing::max_abs_diff(bag_predict(p.pred), p.pred[0]) <= 1e-12);
  }

  TEST_CASE("stacking with a perfect member reproduces the targets out of fold") {
    auto p = iid_panel(3, 100, 4.0, 5);
    p.pred.push_back(p.targets);
    const auto r = stack_cv(p.pred, p.targets, 5, 1);
    CHECK(testing::max_abs_diff(r.oof, p.targets) <= 1e-8);
  }

  TEST_CASE("stacking against permuted targets finds nothing out of fold") {
    const auto p = iid_panel(4, 500, 3.0, 6);
    auto shuffled = p.targets;
    Pcg32 rng(9);
    rng.shuffle(std::span(shuffled));
    const auto r = stack_cv(p.pred, shuffled, 5, 2);
    CHECK(std::abs(*stats::pearson(r.oof, shuffled)) <= 0.2);
  }

  TEST_CASE("fold bookkeeping: every item held out exactly once, never fitted on") {
    const auto p = iid_panel(3, 103, 2.0, 7);
    const auto r = stack_cv(p.pred, p.targets, 5, 3);
    REQUIRE(r.folds.size() == 5);
    std::vector<int> held(103, 0);
    for (const auto& f : r.folds) {
      CHECK(f.held_out.size() + f.fitted_on.size() == 103);
      for (std::size_t i : f.held_out) {
        ++held[i];
        CHECK(!std::binary_search(f.fitted_on.begin(), f.fitted_on.end(), i));
      }
      CHECK(f.held_out.size() >= 20);
      CHECK(f.held_out.size() <= 21);
      // OOF predictions come from the fold's own model.
      for (std::size_t i : f.held_out) CHECK(r.oof[i] == stack_apply(f.model, p.pred, i));
    }
    for (int h : held) CHECK(h == 1);
    // A different seed reshuffles the folds.
    CHECK(stack_cv(p.pred, p.targets, 5, 4).folds[0].held_out != r.folds[0].held_out);
    CHECK_THROWS(stack_cv(p.pred, p.targets, 1, 0));
    CHECK_THROWS(stack_cv(p.pred, {1.0, 2.0}, 5, 0));
  }

  TEST_CASE("least-squares stack matches the normal equations on a 2-member design") {
    const std::vector<std::vector<double>> pred{{1, 2, 3, 4, 5, 7}, {2, 1, 4, 3, 6, 5}};
    const std::vector<double> y{1.5, 2.5, 2.0, 4.5, 5.0, 6.5};
    std::vector<std::size_t> items(6);
    std::iota(items.begin(), items.end(), 0);
    const auto s = fit_stack(pred, y, items);
    // Centred 2x2 normal equations solved by Cramer's rule.
    auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
    const double m0 = mean(pred[0]), m1 = mean(pred[1]), my = mean(y);
    double s00 = 0, s11 = 0, s01 = 0, s0y = 0, s1y = 0;
    for (int i = 0; i < 6; ++i) {
      const double a = pred[0][i] - m0, b = pred[1][i] - m1, c = y[i] - my;
      s00 += a * a;
      s11 += b * b;
      s01 += a * b;
      s0y += a * c;
      s1y += b * c;
    }
    const double det = s00 * s11 - s01 * s01;
    const double w0 = (s0y * s11 - s1y * s01) / det, w1 = (s1y * s00 - s0y * s01) / det;
    CHECK(s.weights[0] == doctest::Approx(w0).epsilon(1e-10));
    CHECK(s.weights[1] == doctest::Approx(w1).epsilon(1e-10));
    CHECK(s.bias == doctest::Approx(my - w0 * m0 - w1 * m1).epsilon(1e-10));
    CHECK(!s.min_norm);
  }

  TEST_CASE("duplicated members: minimum-norm solution splits the weight evenly") {
    const auto p = iid_panel(1, 50, 2.0, 8);
    const std::vector<std::vector<double>> pred{p.pred[0], p.pred[0]};
    std::vector<std::size_t> items(50);
    std::iota(items.begin(), items.end(), 0);
    const auto s = fit_stack(pred, p.targets, items);
    CHECK(s.min_norm);
    CHECK(s.weights[0] == doctest::Approx(s.weights[1]).epsilon(1e-8));
    const auto single = fit_stack({p.pred[0]}, p.targets, items);
    CHECK(s.weights[0] + s.weights[1] == doctest::Approx(single.weights[0]).epsilon(1e-8));
    CHECK(stack_cv(pred, p.targets, 5, 0).any_min_norm);
  }

  TEST_CASE("ensemble predictors combine members") {
    const Tensor3 x(1, 2, 2);
    const std::vector<Predictor> members{[](const Tensor3&) { return 2.0; }, [](const Tensor3&) { return 6.0; }};
    EnsembleSpec bag;
    bag.members.resize(2);
    CHECK(ensemble_predictor(bag, members)(x) == 4.0);
    EnsembleSpec stack = bag;
    stack.mode = EnsembleMode::Stacking;
    stack.weights = {0.5, -1.0};
    stack.bias = 3.0;
    CHECK(ensemble_predictor(stack, members)(x) == doctest::Approx(3.0 + 1.0 - 6.0));
    stack.weights = {1.0};
    CHECK_THROWS(ensemble_predictor(stack, members));
    const std::vector<Predictor> failing{members[0], [](const Tensor3&) -> double { throw OracleError("down"); }};
    CHECK_THROWS_AS(ensemble_predictor(bag, failing)(x), OracleError);
  }

  TEST_CASE("ensemble specs round trip through JSON") {
    EnsembleSpec spec;
    spec.mode = EnsembleMode::Stacking;
    spec.members.push_back({"arch-0", "heads/a.json", 3, ChannelMask{{true, false, true}}});
    spec.members.push_back({"arch-1", "heads/b.json", 4, ChannelMask{{false, true}}});
    spec.weights = {0.25, 0.75};
    spec.bias = -1.5;
    const auto back = ensemble_from_json(to_json(spec));
    CHECK(back.mode == spec.mode);
    CHECK(back.weights == spec.weights);
    CHECK(back.bias == spec.bias);
    REQUIRE(back.members.size() == 2);
    CHECK(back.members[0].mask == spec.members[0].mask);
    CHECK(back.members[1].architecture == "arch-1");
    CHECK(back.members[1].seed == 4);
    auto j = to_json(spec);
    j["mode"] = "voting";
    CHECK_THROWS(ensemble_from_json(j));
    j = to_json(spec);
    j["weights"] = std::vector<double>{1.0};
    CHECK_THROWS(ensemble_from_json(j));
  }
}
