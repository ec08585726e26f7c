#pragma once

// Reward composition: the rule reward is the product of the answer reward and
// the two penalty coefficients; the "Group Overlong" length reward ranks each
// correct response's length against the shortest and longest responses
// sampled for the same query:
//
//   Delta_L  = max(500, L_max - L_min)
//   lambda_i = 0.5 - (L_i - L_min) / Delta_L
//   R_len(i) = alpha * lambda_i   if the answer is correct, else 0
//
// and the total reward of a sample is rule_reward + R_len.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlvr/errors.hpp"
#include "rlvr/taskgen.hpp"
#include "rlvr/verifier.hpp"

namespace rlvr {

struct RuleComponents {
  double answer_reward = 0.0;
  double format_coef = 1.0;
  double repetition_coef = 1.0;

  bool operator==(const RuleComponents&) const = default;
};

inline bool is_answer_value(double v) { return v == 0.0 || v == 1.0; }
inline bool is_coefficient_value(double v) {
  return v == kPenaltyCoefficient || v == kNoPenalty;
}

// Evaluated on the lattice {1, 0.1, 0.01} so that 0.1 * 0.1 is exactly the
// double nearest 0.01.
inline double compose_rule_reward(double answer_reward, double format_coef,
                                  double repetition_coef) {
  if (!is_answer_value(answer_reward))
    throw InvalidArgument("compose_rule_reward: answer reward must be 0 or 1");
  if (!is_coefficient_value(format_coef) ||
      !is_coefficient_value(repetition_coef))
    throw InvalidArgument(
        "compose_rule_reward: coefficients must be 0.1 or 1.0");
  static constexpr std::array<double, 3> kLattice = {1.0, 0.1, 0.01};
  const int penalties = (format_coef == kPenaltyCoefficient ? 1 : 0) +
                        (repetition_coef == kPenaltyCoefficient ? 1 : 0);
  return answer_reward * kLattice[static_cast<std::size_t>(penalties)];
}

inline double compose_rule_reward(const RuleComponents& c) {
  return compose_rule_reward(c.answer_reward, c.format_coef,
                             c.repetition_coef);
}

// ---------------------------------------------------------------------------
// Group length statistics and Eq.-style length reward

inline constexpr std::int64_t kDefaultDeltaFloor = 500;

struct GroupLengthStats {
  std::int64_t l_min = 0;
  std::int64_t l_max = 0;
  std::int64_t delta_l = kDefaultDeltaFloor;

  bool operator==(const GroupLengthStats&) const = default;
};

inline GroupLengthStats group_length_stats(
    std::span<const std::int64_t> lengths,
    std::int64_t delta_floor = kDefaultDeltaFloor) {
  if (lengths.size() < 2)
    throw InvalidGroup("group_length_stats: need at least 2 lengths");
  for (auto l : lengths)
    if (l <= 0) throw InvalidGroup("group_length_stats: lengths must be > 0");
  const auto [lo, hi] = std::minmax_element(lengths.begin(), lengths.end());
  return {*lo, *hi, std::max(delta_floor, *hi - *lo)};
}

struct LengthReward {
  double lambda = 0.0;
  double r_len = 0.0;
};

inline LengthReward length_reward(std::int64_t length, bool correct,
                                  const GroupLengthStats& stats,
                                  double alpha_eff) {
  if (length < stats.l_min || length > stats.l_max)
    throw InvalidArgument("length_reward: length outside [l_min, l_max]");
  if (!(alpha_eff > 0.0))
    throw InvalidArgument("length_reward: alpha must be positive");
  const double lambda = 0.5 - static_cast<double>(length - stats.l_min) /
                                  static_cast<double>(stats.delta_l);
  return {lambda, correct ? alpha_eff * lambda : 0.0};
}

// ---------------------------------------------------------------------------
// Penalty-strength schedule

struct PenaltySchedule {
  double alpha0 = 0.2;
  double alpha_min = 0.05;
  std::int64_t decay_steps = 2000;
  std::int64_t length_ref = 1024;
  // Lower clamp of the length factor L / length_ref.
  double length_floor = 0.5;

  void validate() const {
    if (!(alpha_min > 0.0 && alpha_min <= alpha0))
      throw InvalidConfig("penalty: need 0 < alpha_min <= alpha0");
    if (decay_steps <= 0)
      throw InvalidConfig("penalty: decay_steps must be positive");
    if (length_ref <= 0)
      throw InvalidConfig("penalty: length_ref must be positive");
    if (!(length_floor > 0.0 && length_floor <= 1.0))
      throw InvalidConfig("penalty: length_floor must lie in (0, 1]");
  }

  bool operator==(const PenaltySchedule&) const = default;
};

// Step component: linear decay from alpha0, floored at alpha_min.
inline double alpha_at_step(const PenaltySchedule& s, std::int64_t step) {
  const double frac =
      static_cast<double>(step) / static_cast<double>(s.decay_steps);
  return std::max(s.alpha_min, s.alpha0 * (1.0 - frac));
}

inline double effective_alpha(const PenaltySchedule& s, std::int64_t step,
                              std::int64_t length) {
  if (step < 0) throw InvalidArgument("effective_alpha: step must be >= 0");
  if (length <= 0) throw InvalidArgument("effective_alpha: length must be > 0");
  const double ratio =
      static_cast<double>(length) / static_cast<double>(s.length_ref);
  return alpha_at_step(s, step) * std::clamp(ratio, s.length_floor, 1.0);
}

struct LengthPenaltyOptions {
  bool enabled = true;
  PenaltySchedule schedule;
  std::int64_t delta_floor = kDefaultDeltaFloor;
  // When false, L_min/L_max come from correct samples only.
  bool stats_over_incorrect = true;
};

// ---------------------------------------------------------------------------
// Per-sample breakdown

struct RewardBreakdown {
  double answer_reward = 0.0;
  double format_coef = 1.0;
  double repetition_coef = 1.0;
  double rule_reward = 0.0;
  std::optional<double> lambda;  // absent when the sample is outside the stats
  double alpha_eff = 0.0;
  double length_reward = 0.0;
  double total = 0.0;

  bool operator==(const RewardBreakdown&) const = default;
};

struct ScoredGroup {
  std::vector<RewardBreakdown> breakdowns;
  GroupLengthStats stats;
};

inline ScoredGroup score_components(std::span<const RuleComponents> components,
                                    std::span<const std::int64_t> lengths,
                                    const LengthPenaltyOptions& penalty,
                                    std::int64_t step) {
  if (components.size() != lengths.size())
    throw InvalidGroup("score_group: components and lengths differ in size");
  if (components.size() < 2)
    throw InvalidGroup("score_group: need at least 2 samples");

  ScoredGroup out;
  out.stats = group_length_stats(lengths, penalty.delta_floor);
  if (!penalty.stats_over_incorrect) {
    std::vector<std::int64_t> correct;
    for (std::size_t i = 0; i < lengths.size(); ++i)
      if (components[i].answer_reward == 1.0) correct.push_back(lengths[i]);
    if (!correct.empty()) {
      const auto [lo, hi] = std::minmax_element(correct.begin(), correct.end());
      out.stats = {*lo, *hi, std::max(penalty.delta_floor, *hi - *lo)};
    }
  }

  out.breakdowns.reserve(components.size());
  for (std::size_t i = 0; i < components.size(); ++i) {
    const RuleComponents& c = components[i];
    RewardBreakdown b;
    b.answer_reward = c.answer_reward;
    b.format_coef = c.format_coef;
    b.repetition_coef = c.repetition_coef;
    b.rule_reward = compose_rule_reward(c);
    const bool correct = c.answer_reward == 1.0;
    const std::int64_t len = lengths[i];
    if (len >= out.stats.l_min && len <= out.stats.l_max) {
      b.alpha_eff = effective_alpha(penalty.schedule, step, len);
      const LengthReward lr = length_reward(len, correct, out.stats, b.alpha_eff);
      b.lambda = lr.lambda;
      if (penalty.enabled) b.length_reward = lr.r_len;
    }
    b.total = b.rule_reward + b.length_reward;
    out.breakdowns.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reward providers

struct ProviderRequest {
  std::string id;
  TaskFamily family = TaskFamily::kMath;
  std::string response_text;
  GroundTruth ground_truth;
};

struct ProviderResponse {
  std::string id;
  RuleComponents components;
};

inline nlohmann::json request_to_json(const ProviderRequest& r) {
  return {{"id", r.id},
          {"family", family_name(r.family)},
          {"response_text", r.response_text},
          {"ground_truth", ground_truth_to_json(r.ground_truth)}};
}

inline ProviderRequest request_from_json(const nlohmann::json& j) {
  try {
    ProviderRequest r;
    r.id = j.at("id").get<std::string>();
    const auto family = parse_family(j.at("family").get<std::string>());
    if (!family) throw InvalidArgument("request: unknown family");
    r.family = *family;
    r.response_text = j.at("response_text").get<std::string>();
    r.ground_truth = ground_truth_from_json(j.at("ground_truth"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("request: ") + e.what());
  }
}

inline nlohmann::json response_to_json(const ProviderResponse& r) {
  return {{"id", r.id},
          {"answer_reward", r.components.answer_reward},
          {"format_coef", r.components.format_coef},
          {"repetition_coef", r.components.repetition_coef}};
}

inline ProviderResponse response_from_json(const nlohmann::json& j) {
  try {
    if (j.contains("error"))
      throw ProviderError("provider reported: " + j.at("error").dump());
    ProviderResponse r;
    r.id = j.at("id").get<std::string>();
    r.components.answer_reward = j.at("answer_reward").get<double>();
    r.components.format_coef = j.at("format_coef").get<double>();
    r.components.repetition_coef = j.at("repetition_coef").get<double>();
    if (!is_answer_value(r.components.answer_reward) ||
        !is_coefficient_value(r.components.format_coef) ||
        !is_coefficient_value(r.components.repetition_coef))
      throw ProviderError("provider response out of range for id " + r.id);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("malformed provider response: ") +
                        e.what());
  }
}

class RewardProvider {
 public:
  virtual ~RewardProvider() = default;
  // One response per request, in request order. Throws ProviderError.
  virtual std::vector<ProviderResponse> score(
      std::span<const ProviderRequest> requests) = 0;
};

inline RuleComponents verify_components(std::string_view response_text,
                                        const GroundTruth& truth,
                                        const VerifierConfig& cfg) {
  const ParsedResponse parsed = parse_response(response_text);
  return {answer_reward(parsed, truth, cfg), format_coefficient(parsed, cfg),
          repetition_coefficient(parsed, cfg.ngram_n, cfg.max_dup_ratio)};
}

// In-process rule-based provider.
class LocalProvider final : public RewardProvider {
 public:
  explicit LocalProvider(VerifierConfig cfg = {}) : cfg_(std::move(cfg)) {}

  std::vector<ProviderResponse> score(
      std::span<const ProviderRequest> requests) override {
    std::vector<ProviderResponse> out;
    out.reserve(requests.size());
    for (const auto& r : requests)
      out.push_back({r.id, verify_components(r.response_text, r.ground_truth,
                                             cfg_)});
    return out;
  }

  const VerifierConfig& config() const { return cfg_; }

 private:
  VerifierConfig cfg_;
};

// Scores one rollout group. Any provider failure aborts the whole group.
inline ScoredGroup score_group(const TaskInstance& task,
                               std::span<const std::string> responses,
                               RewardProvider& provider,
                               const LengthPenaltyOptions& penalty,
                               std::int64_t step) {
  if (responses.size() < 2)
    throw InvalidGroup("score_group: need at least 2 samples");
  std::vector<ProviderRequest> requests;
  requests.reserve(responses.size());
  for (std::size_t i = 0; i < responses.size(); ++i)
    requests.push_back({task.id + "#" + std::to_string(i), task.family,
                        responses[i], task.ground_truth});
  std::vector<ProviderResponse> replies = provider.score(requests);
  if (replies.size() != requests.size())
    throw ProviderError("provider returned " + std::to_string(replies.size()) +
                        " responses for " + std::to_string(requests.size()) +
                        " requests");
  std::vector<RuleComponents> components;
  std::vector<std::int64_t> lengths;
  components.reserve(replies.size());
  lengths.reserve(replies.size());
  for (std::size_t i = 0; i < replies.size(); ++i) {
    if (replies[i].id != requests[i].id)
      throw ProviderError("provider response id mismatch: expected " +
                          requests[i].id + ", got " + replies[i].id);
    components.push_back(replies[i].components);
    lengths.push_back(count_tokens(responses[i]));
  }
  return score_components(components, lengths, penalty, step);
}

}  // namespace rlvr
