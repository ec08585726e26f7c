#pragma once

// Thinking-mode protocol.
//
// Template (one line per turn, joined with '\n'):
//
//   <|user|> {content}[ [|BlueThink|]]
//   <|assistant|> {content}
//
// The control token is appended after the query of a user turn that asks for
// thinking. Only the final user turn decides the mode, so omitting the token
// in the current turn switches reasoning off even if earlier turns used it.
// Content is escaped so that a reserved literal (role label, control token or
// think tag) typed by a user can never be mistaken for the real one: a
// backslash is inserted after the literal's first byte, e.g. "[|BlueThink|]"
// becomes "[\|BlueThink|]". A rendered prompt therefore never holds a think
// block of its own.

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "rlvr/errors.hpp"
#include "rlvr/tokens.hpp"
#include "rlvr/verifier.hpp"

namespace rlvr {

inline constexpr std::string_view kControlToken = "[|BlueThink|]";
inline constexpr std::string_view kUserLabel = "<|user|>";
inline constexpr std::string_view kAssistantLabel = "<|assistant|>";

struct ThinkTemplate {
  std::string control_token{kControlToken};
  std::string user_label{kUserLabel};
  std::string assistant_label{kAssistantLabel};

  std::array<std::string_view, 5> reserved() const {
    return {control_token, user_label, assistant_label, kThinkOpen,
            kThinkClose};
  }

  // Literals need two or more bytes (escaping splits after the first), no
  // whitespace or backslashes, and must not contain one another or a think
  // tag.
  void validate() const {
    for (std::string_view s : {std::string_view(control_token),
                               std::string_view(user_label),
                               std::string_view(assistant_label)}) {
      if (s.size() < 2)
        throw InvalidConfig("template literal '" + std::string(s) +
                            "' must be at least 2 bytes");
      for (char c : s)
        if (is_token_space(c) || c == '\\')
          throw InvalidConfig("template literal '" + std::string(s) +
                              "' contains whitespace or a backslash");
    }
    const auto lits = reserved();
    for (std::size_t i = 0; i < lits.size(); ++i)
      for (std::size_t j = 0; j < lits.size(); ++j)
        if (i != j && lits[i].find(lits[j]) != std::string_view::npos)
          throw InvalidConfig("template literals '" + std::string(lits[i]) +
                              "' and '" + std::string(lits[j]) + "' overlap");
  }
};

enum class ChatRole { kUser, kAssistant };
enum class ThinkMode { kNonThinking, kThinking };

inline std::string_view mode_name(ThinkMode m) {
  return m == ThinkMode::kThinking ? "thinking" : "non_thinking";
}

struct ChatTurn {
  ChatRole role = ChatRole::kUser;
  std::string content;
  bool think_requested = false;
};

enum class SegmentKind {
  kTemplate,   // role labels and separators
  kUserPrompt,
  kControl,
  kAssistant,
};

struct Segment {
  SegmentKind kind = SegmentKind::kTemplate;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct PromptAssembly {
  std::string rendered;
  std::vector<TokenSpan> control_token_spans;
  ThinkMode mode = ThinkMode::kNonThinking;
  std::vector<Segment> segments;  // contiguous cover of rendered
};

inline std::string escape_content(std::string_view content,
                                  const ThinkTemplate& tpl = {}) {
  std::string out;
  out.reserve(content.size());
  const auto lits = tpl.reserved();
  for (std::size_t i = 0; i < content.size(); ++i) {
    out.push_back(content[i]);
    for (std::string_view lit : lits) {
      if (content.substr(i, lit.size()) == lit) {
        out.push_back('\\');
        break;
      }
    }
  }
  return out;
}

inline PromptAssembly build_prompt(const std::vector<ChatTurn>& turns,
                                   const ThinkTemplate& tpl = {}) {
  if (turns.empty()) throw InvalidConversation("empty turn list");
  if (turns.back().role != ChatRole::kUser)
    throw InvalidConversation("conversation must end with a user turn");
  PromptAssembly out;
  auto emit = [&](SegmentKind kind, std::string_view text) {
    if (text.empty()) return;
    const std::size_t begin = out.rendered.size();
    out.rendered.append(text);
    if (!out.segments.empty() && out.segments.back().kind == kind &&
        out.segments.back().end == begin) {
      out.segments.back().end = out.rendered.size();
    } else {
      out.segments.push_back({kind, begin, out.rendered.size()});
    }
  };
  for (std::size_t t = 0; t < turns.size(); ++t) {
    const ChatTurn& turn = turns[t];
    if (t > 0) emit(SegmentKind::kTemplate, "\n");
    if (turn.role == ChatRole::kAssistant) {
      if (turn.think_requested)
        throw InvalidConversation("assistant turn cannot request thinking");
      emit(SegmentKind::kTemplate, tpl.assistant_label);
      emit(SegmentKind::kTemplate, " ");
      emit(SegmentKind::kAssistant, escape_content(turn.content, tpl));
      continue;
    }
    emit(SegmentKind::kTemplate, tpl.user_label);
    emit(SegmentKind::kTemplate, " ");
    emit(SegmentKind::kUserPrompt, escape_content(turn.content, tpl));
    if (turn.think_requested) {
      emit(SegmentKind::kTemplate, " ");
      const std::size_t begin = out.rendered.size();
      emit(SegmentKind::kControl, tpl.control_token);
      out.control_token_spans.push_back({begin, out.rendered.size()});
    }
  }
  out.mode = turns.back().think_requested ? ThinkMode::kThinking
                                          : ThinkMode::kNonThinking;
  return out;
}

// The final user segment runs from the last user label to the next assistant
// label (or the end of the text).
inline ThinkMode detect_mode(std::string_view rendered,
                             const ThinkTemplate& tpl = {}) {
  const std::size_t user = rendered.rfind(tpl.user_label);
  if (user == std::string_view::npos) return ThinkMode::kNonThinking;
  std::string_view segment = rendered.substr(user + tpl.user_label.size());
  const std::size_t asst = segment.find(tpl.assistant_label);
  if (asst != std::string_view::npos) segment = segment.substr(0, asst);
  return segment.find(tpl.control_token) != std::string_view::npos
             ? ThinkMode::kThinking
             : ThinkMode::kNonThinking;
}

inline std::pair<std::string, std::string> split_think_answer(
    std::string_view response) {
  const ThinkSplit s = split_think(response);
  return {std::string(s.think), std::string(s.answer)};
}

// Non-thinking view of a thinking response: the reasoning block is dropped
// and only the answer region remains.
inline std::string strip_think(std::string_view response) {
  const ThinkSplit s = split_think(response);
  std::string_view a = s.answer;
  while (!a.empty() && is_token_space(a.front())) a.remove_prefix(1);
  return std::string(a);
}

// ---------------------------------------------------------------------------
// Loss masking

enum class MaskPolicy {
  kPromptAndControl,  // default: only assistant content is trained on
  kControlOnly,
};

struct LossMask {
  std::string sample;              // rendered + assistant header + target
  std::vector<TokenSpan> tokens;   // positions over sample
  std::vector<SegmentKind> kinds;  // per position
  std::vector<bool> include;       // per position
  std::size_t target_begin = 0;    // first position of the target

  std::size_t excluded_count() const {
    return static_cast<std::size_t>(
        std::count(include.begin(), include.end(), false));
  }
};

inline LossMask loss_mask(const PromptAssembly& assembly,
                          std::string_view target,
                          MaskPolicy policy = MaskPolicy::kPromptAndControl,
                          const ThinkTemplate& tpl = {}) {
  LossMask m;
  std::vector<Segment> segs = assembly.segments;
  m.sample = assembly.rendered;
  auto emit = [&](SegmentKind kind, std::string_view text) {
    const std::size_t begin = m.sample.size();
    m.sample.append(text);
    segs.push_back({kind, begin, m.sample.size()});
  };
  emit(SegmentKind::kTemplate, "\n");
  emit(SegmentKind::kTemplate, tpl.assistant_label);
  emit(SegmentKind::kTemplate, " ");
  const std::size_t target_offset = m.sample.size();
  emit(SegmentKind::kAssistant, target);

  m.tokens = token_spans(m.sample);
  m.kinds.reserve(m.tokens.size());
  m.include.reserve(m.tokens.size());
  m.target_begin = m.tokens.size();
  std::size_t s = 0;
  for (std::size_t i = 0; i < m.tokens.size(); ++i) {
    const TokenSpan& tok = m.tokens[i];
    while (s + 1 < segs.size() && segs[s].end <= tok.begin) ++s;
    const SegmentKind kind = segs[s].kind;
    if (tok.begin >= target_offset && m.target_begin == m.tokens.size())
      m.target_begin = i;
    m.kinds.push_back(kind);
    bool inc = true;
    if (kind == SegmentKind::kControl) inc = false;
    if (policy == MaskPolicy::kPromptAndControl &&
        (kind == SegmentKind::kTemplate || kind == SegmentKind::kUserPrompt))
      inc = false;
    m.include.push_back(inc);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Line-delimited JSON conversations: each line is an array of
// {"role": "user"|"assistant", "content": str, "think": bool?}.

inline std::vector<ChatTurn> turns_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidConversation("conversation must be an array");
  std::vector<ChatTurn> out;
  for (const auto& t : j) {
    if (!t.is_object()) throw InvalidConversation("turn must be an object");
    for (const auto& [k, v] : t.items())
      if (k != "role" && k != "content" && k != "think")
        throw InvalidConversation("unknown turn field: " + k);
    if (!t.contains("role") || !t["role"].is_string() ||
        !t.contains("content") || !t["content"].is_string())
      throw InvalidConversation("turn needs string role and content");
    ChatTurn turn;
    const std::string role = t["role"].get<std::string>();
    if (role == "user") turn.role = ChatRole::kUser;
    else if (role == "assistant") turn.role = ChatRole::kAssistant;
    else throw InvalidConversation("unknown role: " + role);
    turn.content = t["content"].get<std::string>();
    if (t.contains("think")) {
      if (!t["think"].is_boolean())
        throw InvalidConversation("think must be a boolean");
      turn.think_requested = t["think"].get<bool>();
    }
    out.push_back(std::move(turn));
  }
  return out;
}

}  // namespace rlvr
