#pragma once

// Token-budget evaluation and long2short metrics.
//
// A response longer than the budget counts as incorrect (truncation), so
// accuracy at budget b is the weight of results that are correct and no
// longer than b, over the total weight. Weights default to 1; the exact
// evaluators feed outcome probabilities instead of sampled counts.

#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlvr/errors.hpp"

namespace rlvr {

inline constexpr std::int64_t kInfiniteBudget =
    std::numeric_limits<std::int64_t>::max();

struct EvalResult {
  bool is_correct = false;
  std::int64_t token_length = 0;
  double weight = 1.0;
};

struct BudgetCurve {
  std::vector<std::int64_t> budgets;
  std::vector<double> accuracy;
};

struct RunMetrics {
  double mean_length_correct = 0.0;
  double overall_accuracy = 0.0;
  double mean_length = 0.0;
  std::optional<double> token_efficiency;  // accuracy per kilotoken
  std::int64_t step = 0;
};

namespace detail {

inline double total_weight(std::span<const EvalResult> results) {
  double w = 0.0;
  for (const EvalResult& r : results) {
    if (!(r.weight >= 0.0))
      throw InvalidArgument("evaluation weights must be non-negative");
    w += r.weight;
  }
  if (!(w > 0.0)) throw InvalidArgument("evaluation results carry no weight");
  return w;
}

}  // namespace detail

inline BudgetCurve budget_curve(std::span<const EvalResult> results,
                                std::span<const std::int64_t> budgets) {
  if (results.empty()) throw InvalidArgument("budget_curve: empty results");
  if (budgets.empty()) throw InvalidArgument("budget_curve: empty budget list");
  for (std::size_t i = 1; i < budgets.size(); ++i)
    if (budgets[i] <= budgets[i - 1])
      throw InvalidArgument("budget_curve: budgets must be strictly increasing");
  const double total = detail::total_weight(results);
  BudgetCurve out;
  out.budgets.assign(budgets.begin(), budgets.end());
  out.accuracy.reserve(budgets.size());
  for (std::int64_t b : budgets) {
    double hit = 0.0;
    for (const EvalResult& r : results)
      if (r.is_correct && r.token_length <= b) hit += r.weight;
    out.accuracy.push_back(hit / total);
  }
  return out;
}

inline RunMetrics run_metrics(std::span<const EvalResult> results,
                              std::int64_t step) {
  if (results.empty()) throw InvalidArgument("run_metrics: empty results");
  const double total = detail::total_weight(results);
  double correct = 0.0;
  double len_correct = 0.0;
  double len_all = 0.0;
  for (const EvalResult& r : results) {
    const double l = static_cast<double>(r.token_length);
    len_all += r.weight * l;
    if (r.is_correct) {
      correct += r.weight;
      len_correct += r.weight * l;
    }
  }
  RunMetrics m;
  m.step = step;
  m.overall_accuracy = correct / total;
  m.mean_length = len_all / total;
  m.mean_length_correct = correct > 0.0 ? len_correct / correct : 0.0;
  if (m.mean_length > 0.0)
    m.token_efficiency = m.overall_accuracy / (m.mean_length / 1000.0);
  return m;
}

inline nlohmann::json metrics_to_json(const RunMetrics& m) {
  return {{"step", m.step},
          {"overall_accuracy", m.overall_accuracy},
          {"mean_length", m.mean_length},
          {"mean_length_correct", m.mean_length_correct},
          {"token_efficiency", m.token_efficiency
                                   ? nlohmann::json(*m.token_efficiency)
                                   : nlohmann::json(nullptr)}};
}

inline void write_curve_csv(std::ostream& out, const BudgetCurve& curve) {
  out << "budget,accuracy\n";
  for (std::size_t i = 0; i < curve.budgets.size(); ++i) {
    if (curve.budgets[i] == kInfiniteBudget) out << "inf";
    else out << curve.budgets[i];
    out << ',' << nlohmann::json(curve.accuracy[i]).dump() << '\n';
  }
}

}  // namespace rlvr
