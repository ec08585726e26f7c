#pragma once

// Group Relative Policy Optimization over the finite bucket space.
//
// The policy for each (family, mode) pair is softmax(bucket_logits / T). A
// group's advantages are its rewards standardized within the group, which
// replaces a learned value baseline and also puts groups from differently
// scaled task families on the same footing. The loss for one group is
//
//   L = -(1/k) sum_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i)
//       + beta * KL(pi || pi_ref)
//
// with rho_i = pi(b_i) / pi_sampling(b_i) and the KL computed exactly.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlvr/errors.hpp"
#include "rlvr/reward.hpp"
#include "rlvr/taskgen.hpp"

namespace rlvr {

struct PolicyKey {
  TaskFamily family = TaskFamily::kMath;
  bool think_mode = false;

  auto operator<=>(const PolicyKey&) const = default;
};

inline PolicyKey policy_key(const TaskInstance& task) {
  return {task.family, task.think_mode};
}

struct PolicyEntry {
  std::vector<double> logits;
  double temperature = 0.6;

  bool operator==(const PolicyEntry&) const = default;
};

struct PolicyParams {
  std::map<PolicyKey, PolicyEntry> entries;

  const PolicyEntry& at(const PolicyKey& key) const {
    const auto it = entries.find(key);
    if (it == entries.end())
      throw InvalidState(std::string("no policy entry for ") +
                         std::string(family_name(key.family)) +
                         (key.think_mode ? "/thinking" : "/non_thinking"));
    return it->second;
  }

  bool operator==(const PolicyParams&) const = default;
};

inline std::vector<double> log_softmax(std::span<const double> logits,
                                       double temperature) {
  if (!(temperature > 0.0))
    throw InvalidArgument("softmax: temperature must be positive");
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  double hi = -INFINITY;
  for (double l : logits) hi = std::max(hi, l / temperature);
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l / temperature - hi);
  const double lse = hi + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i)
    out[i] = logits[i] / temperature - lse;
  return out;
}

inline std::vector<double> softmax(std::span<const double> logits,
                                   double temperature) {
  std::vector<double> out = log_softmax(logits, temperature);
  for (double& v : out) v = std::exp(v);
  return out;
}

inline std::vector<double> probabilities(const PolicyEntry& e) {
  return softmax(e.logits, e.temperature);
}

inline double exact_kl(std::span<const double> p_logits,
                       std::span<const double> q_logits, double temperature) {
  if (p_logits.size() != q_logits.size())
    throw InvalidArgument("exact_kl: logit vectors differ in length");
  const auto lp = log_softmax(p_logits, temperature);
  const auto lq = log_softmax(q_logits, temperature);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    const double p = std::exp(lp[i]);
    if (p > 0.0) kl += p * (lp[i] - lq[i]);
  }
  return std::max(kl, 0.0);
}

// ---------------------------------------------------------------------------
// Advantages

inline std::vector<double> advantages(std::span<const double> rewards,
                                      double epsilon = 1e-8) {
  if (rewards.size() < 2)
    throw InvalidGroup("advantages: need at least 2 rewards");
  std::vector<double> out(rewards.size(), 0.0);
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  if (*lo == *hi) return out;
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  for (std::size_t i = 0; i < rewards.size(); ++i)
    out[i] = (rewards[i] - mean) / (sd + epsilon);
  return out;
}

// ---------------------------------------------------------------------------
// Rollouts and optimizer state

struct ResponseSample {
  std::size_t bucket_index = 0;
  bool is_correct = false;
  std::string text;
  std::int64_t token_length = 0;
  double log_prob = 0.0;  // log pi_sampling(bucket)
};

struct RolloutGroup {
  TaskInstance task;
  std::vector<ResponseSample> samples;
  std::vector<RewardBreakdown> breakdowns;
  GroupLengthStats stats;
};

struct Hyperparams {
  double learning_rate = 0.5;
  double kl_coefficient = 0.01;
  double clip_epsilon = 0.2;
  double advantage_epsilon = 1e-8;

  bool operator==(const Hyperparams&) const = default;
};

struct OptimizerState {
  std::int64_t step = 0;
  Hyperparams hyper;
  PolicyParams params;
  PolicyParams reference;  // frozen; changed only by reset_and_resume

  bool operator==(const OptimizerState&) const = default;
};

// ---------------------------------------------------------------------------
// Surrogate objective

struct SurrogateTerm {
  std::size_t bucket = 0;
  double weight = 0.0;
  double sampling_log_prob = 0.0;
  double advantage = 0.0;
};

struct SurrogateResult {
  double loss = 0.0;
  std::vector<double> gradient;  // d loss / d bucket_logits
};

// Weighted clipped surrogate plus exact KL, with its analytic gradient. A
// term whose clipped branch is active contributes a constant, hence no
// gradient.
inline SurrogateResult surrogate_terms(const PolicyEntry& current,
                                       const PolicyEntry& reference,
                                       std::span<const SurrogateTerm> terms,
                                       double kl_coefficient,
                                       double clip_epsilon) {
  const std::size_t b = current.logits.size();
  if (reference.logits.size() != b)
    throw InvalidState("surrogate: current and reference dimensions differ");
  if (current.temperature != reference.temperature)
    throw InvalidState("surrogate: current and reference temperatures differ");
  const double t = current.temperature;
  const std::vector<double> logp = log_softmax(current.logits, t);
  std::vector<double> prob(b);
  for (std::size_t j = 0; j < b; ++j) prob[j] = std::exp(logp[j]);

  SurrogateResult out;
  out.gradient.assign(b, 0.0);
  for (const SurrogateTerm& term : terms) {
    if (term.bucket >= b)
      throw InvalidState("surrogate: sample bucket outside policy dimension");
    const double rho = std::exp(logp[term.bucket] - term.sampling_log_prob);
    const double a = term.advantage;
    const double clipped = std::clamp(rho, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    const bool unclipped_active =
        a >= 0.0 ? rho <= 1.0 + clip_epsilon : rho >= 1.0 - clip_epsilon;
    if (unclipped_active) {
      out.loss -= term.weight * rho * a;
      // d(rho)/d(theta_j) = rho * (1[j == bucket] - pi_j) / T
      const double scale = -term.weight * rho * a / t;
      for (std::size_t j = 0; j < b; ++j)
        out.gradient[j] += scale * ((j == term.bucket ? 1.0 : 0.0) - prob[j]);
    } else {
      out.loss -= term.weight * clipped * a;
    }
  }

  if (kl_coefficient != 0.0) {
    const std::vector<double> logq = log_softmax(reference.logits, t);
    double kl = 0.0;
    for (std::size_t j = 0; j < b; ++j)
      if (prob[j] > 0.0) kl += prob[j] * (logp[j] - logq[j]);
    out.loss += kl_coefficient * kl;
    for (std::size_t j = 0; j < b; ++j)
      if (prob[j] > 0.0)
        out.gradient[j] +=
            kl_coefficient * prob[j] * (logp[j] - logq[j] - kl) / t;
  }
  return out;
}

inline SurrogateResult surrogate_loss(const RolloutGroup& group,
                                      const OptimizerState& state) {
  const std::size_t k = group.samples.size();
  if (k < 2) throw InvalidState("surrogate_loss: group needs >= 2 samples");
  if (group.breakdowns.size() != k)
    throw InvalidState("surrogate_loss: samples and breakdowns differ in size");
  const PolicyKey key = policy_key(group.task);
  const PolicyEntry& current = state.params.at(key);
  const PolicyEntry& reference = state.reference.at(key);

  std::vector<double> rewards(k);
  for (std::size_t i = 0; i < k; ++i) rewards[i] = group.breakdowns[i].total;
  const std::vector<double> adv =
      advantages(rewards, state.hyper.advantage_epsilon);
  std::vector<SurrogateTerm> terms(k);
  for (std::size_t i = 0; i < k; ++i)
    terms[i] = {group.samples[i].bucket_index, 1.0 / static_cast<double>(k),
                group.samples[i].log_prob, adv[i]};
  return surrogate_terms(current, reference, terms,
                         state.hyper.kl_coefficient, state.hyper.clip_epsilon);
}

// The same objective in expectation over the outcome space: outcome (b, c)
// has weight pi_sampling(b) * P(c | b) and a fixed advantage.
struct OutcomeAdvantage {
  double if_wrong = 0.0;
  double if_correct = 0.0;
};

inline SurrogateResult expected_surrogate(
    const PolicyEntry& current, const PolicyEntry& reference,
    const PolicyEntry& sampling, std::span<const double> p_correct,
    std::span<const OutcomeAdvantage> adv, double kl_coefficient,
    double clip_epsilon) {
  const std::size_t b = current.logits.size();
  if (sampling.logits.size() != b || p_correct.size() != b || adv.size() != b)
    throw InvalidState("expected_surrogate: dimension mismatch");
  const std::vector<double> logs = log_softmax(sampling.logits, sampling.temperature);
  std::vector<SurrogateTerm> terms;
  terms.reserve(2 * b);
  for (std::size_t j = 0; j < b; ++j) {
    const double ps = std::exp(logs[j]);
    terms.push_back({j, ps * p_correct[j], logs[j], adv[j].if_correct});
    terms.push_back({j, ps * (1.0 - p_correct[j]), logs[j], adv[j].if_wrong});
  }
  return surrogate_terms(current, reference, terms, kl_coefficient,
                         clip_epsilon);
}

// One plain gradient-descent update. Each policy entry moves by the mean
// gradient of the groups that sampled it, in group order.
inline OptimizerState step(const OptimizerState& state,
                           std::span<const RolloutGroup> groups) {
  if (groups.empty()) throw InvalidArgument("step: empty group list");
  std::map<PolicyKey, std::pair<std::vector<double>, std::size_t>> acc;
  for (const RolloutGroup& g : groups) {
    const SurrogateResult r = surrogate_loss(g, state);
    auto& [sum, count] = acc[policy_key(g.task)];
    if (sum.empty()) sum.assign(r.gradient.size(), 0.0);
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += r.gradient[j];
    ++count;
  }
  OptimizerState next = state;
  for (const auto& [key, entry] : acc) {
    auto& logits = next.params.entries.at(key).logits;
    const double scale =
        state.hyper.learning_rate / static_cast<double>(entry.second);
    for (std::size_t j = 0; j < logits.size(); ++j)
      logits[j] -= scale * entry.first[j];
  }
  next.step += 1;
  return next;
}

// ---------------------------------------------------------------------------
// Hyperparameter reset and resume

struct ResumeOverrides {
  std::optional<double> learning_rate;
  std::optional<double> kl_coefficient;
  std::optional<double> clip_epsilon;
  std::optional<bool> penalty_enabled;
  std::optional<double> penalty_alpha0;
  std::optional<double> penalty_alpha_min;
  std::optional<std::int64_t> penalty_decay_steps;
  std::optional<std::int64_t> penalty_length_ref;
  std::optional<double> penalty_length_floor;

  bool empty() const {
    return !learning_rate && !kl_coefficient && !clip_epsilon &&
           !penalty_enabled && !penalty_alpha0 && !penalty_alpha_min &&
           !penalty_decay_steps && !penalty_length_ref && !penalty_length_floor;
  }
};

// Accepts only hyperparameter and penalty-schedule keys; anything touching
// parameters, the reference or the step counter is rejected.
inline ResumeOverrides parse_resume_overrides(
    const std::map<std::string, std::string>& kv) {
  ResumeOverrides o;
  auto real = [](const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw InvalidArgument("override " + key + ": not a number: " + v);
    }
  };
  auto integer = [](const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const long long d = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return static_cast<std::int64_t>(d);
    } catch (const std::exception&) {
      throw InvalidArgument("override " + key + ": not an integer: " + v);
    }
  };
  for (const auto& [key, v] : kv) {
    if (key == "learning_rate") o.learning_rate = real(key, v);
    else if (key == "kl_coefficient") o.kl_coefficient = real(key, v);
    else if (key == "clip_epsilon") o.clip_epsilon = real(key, v);
    else if (key == "penalty.alpha0") o.penalty_alpha0 = real(key, v);
    else if (key == "penalty.alpha_min") o.penalty_alpha_min = real(key, v);
    else if (key == "penalty.decay_steps") o.penalty_decay_steps = integer(key, v);
    else if (key == "penalty.length_ref") o.penalty_length_ref = integer(key, v);
    else if (key == "penalty.length_floor") o.penalty_length_floor = real(key, v);
    else if (key == "penalty.enabled") {
      if (v != "true" && v != "false")
        throw InvalidArgument("override penalty.enabled: expected true|false");
      o.penalty_enabled = v == "true";
    } else {
      throw InvalidArgument("override of '" + key +
                            "' is not allowed on resume; only learning_rate, "
                            "kl_coefficient, clip_epsilon and penalty.* may "
                            "change");
    }
  }
  if (o.learning_rate && !(*o.learning_rate >= 0.0))
    throw InvalidArgument("override learning_rate must be >= 0");
  if (o.kl_coefficient && !(*o.kl_coefficient >= 0.0))
    throw InvalidArgument("override kl_coefficient must be >= 0");
  if (o.clip_epsilon && !(*o.clip_epsilon > 0.0))
    throw InvalidArgument("override clip_epsilon must be > 0");
  return o;
}

inline void apply_penalty_overrides(const ResumeOverrides& o,
                                    LengthPenaltyOptions& penalty) {
  if (o.penalty_enabled) penalty.enabled = *o.penalty_enabled;
  if (o.penalty_alpha0) penalty.schedule.alpha0 = *o.penalty_alpha0;
  if (o.penalty_alpha_min) penalty.schedule.alpha_min = *o.penalty_alpha_min;
  if (o.penalty_decay_steps) penalty.schedule.decay_steps = *o.penalty_decay_steps;
  if (o.penalty_length_ref) penalty.schedule.length_ref = *o.penalty_length_ref;
  if (o.penalty_length_floor)
    penalty.schedule.length_floor = *o.penalty_length_floor;
  penalty.schedule.validate();
}

// Keeps params and the step counter, re-anchors the reference on the
// current params and applies the optimizer overrides.
inline OptimizerState reset_and_resume(const OptimizerState& state,
                                       const ResumeOverrides& o) {
  OptimizerState next = state;
  next.reference = state.params;
  if (o.learning_rate) next.hyper.learning_rate = *o.learning_rate;
  if (o.kl_coefficient) next.hyper.kl_coefficient = *o.kl_coefficient;
  if (o.clip_epsilon) next.hyper.clip_epsilon = *o.clip_epsilon;
  return next;
}

}  // namespace rlvr
