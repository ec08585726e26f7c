#pragma once

// The code "sandbox": a closed arithmetic expression language over a single
// variable x, evaluated in exact rational arithmetic.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('+' | '-') unary | primary
//   primary := number | 'x' | '(' expr ')'
//   number  := digits ['.' digits]
//
// Whitespace between tokens is ignored. Parsing is bounded by a nesting
// limit and evaluation by a step limit; division by zero and exhausted limits
// are evaluation failures, never crashes.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rlvr/rational.hpp"

namespace rlvr::expr {

struct Node {
  enum class Kind { kNumber, kVariable, kNegate, kAdd, kSub, kMul, kDiv };
  Kind kind = Kind::kNumber;
  Rational value = 0;
  std::unique_ptr<Node> lhs;
  std::unique_ptr<Node> rhs;
};

struct Program {
  std::unique_ptr<Node> root;
  std::size_t node_count = 0;
};

struct Limits {
  std::int64_t step_limit = 10000;
  int max_depth = 64;
  std::size_t max_nodes = 4096;
};

namespace detail {

class Parser {
 public:
  Parser(std::string_view src, const Limits& limits)
      : src_(src), limits_(limits) {}

  std::optional<Program> run() {
    auto root = parse_expr(0);
    skip_space();
    if (!root || overflow_ || pos_ != src_.size()) return std::nullopt;
    return Program{std::move(root), nodes_};
  }

 private:
  using NodePtr = std::unique_ptr<Node>;

  void skip_space() {
    while (pos_ < src_.size() &&
           (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' ||
            src_[pos_] == '\r'))
      ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr make(Node::Kind kind, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
    auto n = std::make_unique<Node>();
    n->kind = kind;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    if (++nodes_ > limits_.max_nodes) overflow_ = true;
    return n;
  }

  NodePtr parse_expr(int depth) {
    if (depth > limits_.max_depth) return nullptr;
    NodePtr lhs = parse_term(depth);
    while (lhs && !overflow_) {
      if (accept('+')) {
        NodePtr rhs = parse_term(depth);
        if (!rhs) return nullptr;
        lhs = make(Node::Kind::kAdd, std::move(lhs), std::move(rhs));
      } else if (accept('-')) {
        NodePtr rhs = parse_term(depth);
        if (!rhs) return nullptr;
        lhs = make(Node::Kind::kSub, std::move(lhs), std::move(rhs));
      } else {
        break;
      }
    }
    return lhs;
  }

  NodePtr parse_term(int depth) {
    NodePtr lhs = parse_unary(depth);
    while (lhs && !overflow_) {
      if (accept('*')) {
        NodePtr rhs = parse_unary(depth);
        if (!rhs) return nullptr;
        lhs = make(Node::Kind::kMul, std::move(lhs), std::move(rhs));
      } else if (accept('/')) {
        NodePtr rhs = parse_unary(depth);
        if (!rhs) return nullptr;
        lhs = make(Node::Kind::kDiv, std::move(lhs), std::move(rhs));
      } else {
        break;
      }
    }
    return lhs;
  }

  NodePtr parse_unary(int depth) {
    if (depth > limits_.max_depth) return nullptr;
    if (accept('-')) {
      NodePtr operand = parse_unary(depth + 1);
      if (!operand) return nullptr;
      return make(Node::Kind::kNegate, std::move(operand));
    }
    if (accept('+')) return parse_unary(depth + 1);
    return parse_primary(depth);
  }

  NodePtr parse_primary(int depth) {
    skip_space();
    if (pos_ >= src_.size()) return nullptr;
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr inner = parse_expr(depth + 1);
      if (!inner || !accept(')')) return nullptr;
      return inner;
    }
    if (c == 'x') {
      ++pos_;
      return make(Node::Kind::kVariable);
    }
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (rlvr::detail::is_digit(src_[pos_]) || src_[pos_] == '.'))
      ++pos_;
    if (pos_ == start) return nullptr;
    auto value = rlvr::detail::parse_unsigned_decimal(
        src_.substr(start, pos_ - start));
    if (!value) return nullptr;
    NodePtr n = make(Node::Kind::kNumber);
    n->value = *value;
    return n;
  }

  std::string_view src_;
  Limits limits_;
  std::size_t pos_ = 0;
  std::size_t nodes_ = 0;
  bool overflow_ = false;
};

inline std::optional<Rational> eval_node(const Node& n, const Rational& x,
                                         std::int64_t& budget) {
  if (--budget < 0) return std::nullopt;
  switch (n.kind) {
    case Node::Kind::kNumber:
      return n.value;
    case Node::Kind::kVariable:
      return x;
    case Node::Kind::kNegate: {
      auto v = eval_node(*n.lhs, x, budget);
      if (!v) return std::nullopt;
      return Rational(-*v);
    }
    default:
      break;
  }
  auto a = eval_node(*n.lhs, x, budget);
  if (!a) return std::nullopt;
  auto b = eval_node(*n.rhs, x, budget);
  if (!b) return std::nullopt;
  switch (n.kind) {
    case Node::Kind::kAdd:
      return Rational(*a + *b);
    case Node::Kind::kSub:
      return Rational(*a - *b);
    case Node::Kind::kMul:
      return Rational(*a * *b);
    case Node::Kind::kDiv:
      if (*b == 0) return std::nullopt;
      return Rational(*a / *b);
    default:
      return std::nullopt;
  }
}

}  // namespace detail

inline std::optional<Program> parse(std::string_view source,
                                    const Limits& limits = {}) {
  return detail::Parser(source, limits).run();
}

inline std::optional<Rational> evaluate(const Program& program,
                                        const Rational& x,
                                        const Limits& limits = {}) {
  if (!program.root) return std::nullopt;
  std::int64_t budget = limits.step_limit;
  return detail::eval_node(*program.root, x, budget);
}

}  // namespace rlvr::expr
