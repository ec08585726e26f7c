#pragma once

// Independent oracles shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rlvr/grpo.hpp"
#include "rlvr/random.hpp"
#include "rlvr/thinkmode.hpp"

namespace rlvr::oracle {

// Clipped surrogate plus KL evaluated directly from its definition, without
// any of the algebra used by the analytic gradient.
inline double direct_loss(const PolicyEntry& current, const PolicyEntry& reference,
                          std::span<const SurrogateTerm> terms, double beta,
                          double clip) {
  const double t = current.temperature;
  std::vector<double> z(current.logits.size()), zq(z.size());
  double sp = 0.0, sq = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    sp += std::exp(current.logits[j] / t);
    sq += std::exp(reference.logits[j] / t);
  }
  for (std::size_t j = 0; j < z.size(); ++j) {
    z[j] = std::exp(current.logits[j] / t) / sp;
    zq[j] = std::exp(reference.logits[j] / t) / sq;
  }
  double loss = 0.0;
  for (const auto& term : terms) {
    const double rho = z[term.bucket] / std::exp(term.sampling_log_prob);
    const double c = std::min(std::max(rho, 1.0 - clip), 1.0 + clip);
    loss -= term.weight * std::min(rho * term.advantage, c * term.advantage);
  }
  double kl = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) kl += z[j] * std::log(z[j] / zq[j]);
  return loss + beta * kl;
}

inline std::vector<double> central_difference(const PolicyEntry& current,
                                              const PolicyEntry& reference,
                                              std::span<const SurrogateTerm> terms,
                                              double beta, double clip,
                                              double h = 1e-5) {
  std::vector<double> g(current.logits.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    PolicyEntry up = current, down = current;
    up.logits[j] += h;
    down.logits[j] -= h;
    g[j] = (direct_loss(up, reference, terms, beta, clip) -
            direct_loss(down, reference, terms, beta, clip)) /
           (2.0 * h);
  }
  return g;
}

inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    diff = std::max(diff, std::abs(a[j] - b[j]));
    scale = std::max({scale, std::abs(a[j]), std::abs(b[j])});
  }
  return scale == 0.0 ? diff : diff / scale;
}

struct GradientCase {
  PolicyEntry current, reference;
  std::vector<SurrogateTerm> terms;
  double beta = 0.0, clip = 0.2;
};

// Random state with importance ratios kept away from the clip kinks, where
// the loss is not differentiable.
inline GradientCase random_gradient_case(Stream& rng) {
  for (;;) {
    GradientCase c;
    const std::size_t b = 2 + uniform_index(rng, 6);
    c.current.temperature = c.reference.temperature = 0.3 + uniform01(rng);
    for (std::size_t j = 0; j < b; ++j) {
      c.current.logits.push_back(4.0 * uniform01(rng) - 2.0);
      c.reference.logits.push_back(4.0 * uniform01(rng) - 2.0);
    }
    c.beta = uniform_index(rng, 3) == 0 ? 0.0 : 2.0 * uniform01(rng);
    c.clip = 0.1 + 0.3 * uniform01(rng);
    const auto logp = log_softmax(c.current.logits, c.current.temperature);
    const std::size_t k = 2 + uniform_index(rng, 15);
    bool near_kink = false;
    for (std::size_t i = 0; i < k; ++i) {
      SurrogateTerm t;
      t.bucket = uniform_index(rng, b);
      t.weight = 1.0 / static_cast<double>(k);
      t.sampling_log_prob = logp[t.bucket] + 0.6 * uniform01(rng) - 0.3;
      t.advantage = 4.0 * uniform01(rng) - 2.0;
      const double rho = std::exp(logp[t.bucket] - t.sampling_log_prob);
      if (std::abs(rho - (1.0 - c.clip)) < 1e-3 || std::abs(rho - (1.0 + c.clip)) < 1e-3)
        near_kink = true;
      c.terms.push_back(t);
    }
    if (!near_kink) return c;
  }
}

// Random conversations mixing ordinary words with every reserved literal,
// fragments of them and whitespace, so content regularly imitates the template.
inline std::string random_content(Stream& rng) {
  static const std::vector<std::string> pieces = {
      "hello", "x", "[|BlueThink|]", "<|user|>", "<|assistant|>", "<think>",
      "</think>", "\\", "[|", "|]", "[|BlueThink", "BlueThink|]", " ", "\n",
      "\t", "\\box[1]", "\xc3\xa9", "<|", "[\\|BlueThink|]"};
  std::string out;
  const auto n = uniform_index(rng, 9);
  for (std::uint64_t i = 0; i < n; ++i) out += pieces[uniform_index(rng, pieces.size())];
  return out;
}

inline std::vector<ChatTurn> random_conversation(Stream& rng) {
  std::vector<ChatTurn> turns(1 + uniform_index(rng, 6));
  for (std::size_t i = 0; i + 1 < turns.size(); ++i)
    turns[i].role = uniform_index(rng, 2) == 0 ? ChatRole::kUser : ChatRole::kAssistant;
  for (auto& t : turns) {
    t.content = random_content(rng);
    t.think_requested = t.role == ChatRole::kUser && uniform_index(rng, 2) == 0;
  }
  return turns;
}

inline std::size_t count_occurrences(std::string_view text, std::string_view lit) {
  std::size_t n = 0;
  for (std::size_t at = text.find(lit); at != std::string_view::npos;
       at = text.find(lit, at + 1))
    ++n;
  return n;
}

// Returns a description of the first violated invariant, if any.
inline std::optional<std::string> check_conversation(const std::vector<ChatTurn>& turns,
                                                     std::string_view target) {
  const ThinkTemplate tpl;
  const PromptAssembly a = build_prompt(turns, tpl);
  const bool want = turns.back().think_requested;
  if ((a.mode == ThinkMode::kThinking) != want) return "assembly mode";
  if ((detect_mode(a.rendered, tpl) == ThinkMode::kThinking) != want) return "detected mode";

  std::size_t requested = 0;
  for (const auto& t : turns) requested += t.think_requested ? 1 : 0;
  if (a.control_token_spans.size() != requested) return "control span count";
  for (const auto& sp : a.control_token_spans)
    if (a.rendered.substr(sp.begin, sp.end - sp.begin) != tpl.control_token)
      return "control span text";
  if (count_occurrences(a.rendered, tpl.control_token) != requested)
    return "stray control token";
  if (count_occurrences(a.rendered, tpl.user_label) !=
      static_cast<std::size_t>(std::count_if(turns.begin(), turns.end(), [](const ChatTurn& t) {
        return t.role == ChatRole::kUser;
      })))
    return "stray user label";
  if (split_think_answer(a.rendered).first.find(tpl.control_token) != std::string::npos)
    return "control token inside think";

  std::size_t cover = 0;
  for (const auto& seg : a.segments) {
    if (seg.begin != cover || seg.end <= seg.begin) return "segment cover";
    cover = seg.end;
  }
  if (cover != a.rendered.size()) return "segment cover end";

  // Control-only mask: excluded positions are exactly the control spans.
  const LossMask m = loss_mask(a, target, MaskPolicy::kControlOnly, tpl);
  std::set<std::size_t> starts;
  for (const auto& sp : a.control_token_spans) starts.insert(sp.begin);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < m.tokens.size(); ++i) {
    const bool control = starts.count(m.tokens[i].begin) != 0 &&
                         m.tokens[i].end - m.tokens[i].begin == tpl.control_token.size();
    hit += control ? 1 : 0;
    if (m.include[i] == control) return "control-only mask position";
  }
  if (hit != starts.size()) return "control token not a single position";

  // Default mask: the target is fully trained on, prompts and control are not.
  const LossMask d = loss_mask(a, target, MaskPolicy::kPromptAndControl, tpl);
  if (static_cast<std::int64_t>(d.tokens.size() - d.target_begin) != count_tokens(target))
    return "target positions";
  for (std::size_t i = 0; i < d.tokens.size(); ++i) {
    const bool in_target = i >= d.target_begin;
    if (in_target && !d.include[i]) return "target position excluded";
    if ((d.kinds[i] == SegmentKind::kUserPrompt || d.kinds[i] == SegmentKind::kControl) &&
        d.include[i])
      return "prompt position included";
  }
  return std::nullopt;
}

}  // namespace rlvr::oracle
