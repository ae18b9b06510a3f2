#include "alphamine/formula.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <utility>

namespace alphamine::dsl {

const std::vector<Operator>& operator_registry() {
  static const std::vector<Operator> kRegistry = {
      {"add", 2, OpKind::kElementwiseBinary},
      {"sub", 2, OpKind::kElementwiseBinary},
      {"mul", 2, OpKind::kElementwiseBinary},
      {"div", 2, OpKind::kElementwiseBinary},
      {"neg", 1, OpKind::kElementwiseUnary},
      {"abs_", 1, OpKind::kElementwiseUnary},
      {"sign", 1, OpKind::kElementwiseUnary},
      {"log_", 1, OpKind::kElementwiseUnary},
      {"ts_mean", 1, OpKind::kTimeSeriesUnary},
      {"ts_std", 1, OpKind::kTimeSeriesUnary},
      {"ts_min", 1, OpKind::kTimeSeriesUnary},
      {"ts_max", 1, OpKind::kTimeSeriesUnary},
      {"ts_rank", 1, OpKind::kTimeSeriesUnary},
      {"delay", 1, OpKind::kTimeSeriesUnary},
      {"delta", 1, OpKind::kTimeSeriesUnary},
      {"ts_corr", 2, OpKind::kTimeSeriesBinary},
      {"cs_rank", 1, OpKind::kCrossSectional},
  };
  return kRegistry;
}

const Operator* find_operator(std::string_view name) {
  for (const Operator& op : operator_registry()) {
    if (op.name == name) return &op;
  }
  return nullptr;
}

const std::vector<std::string>& base_factors() {
  static const std::vector<std::string> kFactors = {
      "open", "high", "low", "close", "volume", "vwap"};
  return kFactors;
}

bool is_base_factor(std::string_view name) {
  for (const std::string& f : base_factors()) {
    if (f == name) return true;
  }
  return false;
}

const std::vector<int>& default_windows() {
  static const std::vector<int> kWindows = {3, 5, 10, 20, 30, 60};
  return kWindows;
}

AlphaFormula make_leaf(std::string_view factor) {
  AlphaFormula f;
  f.root.factor = std::string(factor);
  return f;
}

ParseError::ParseError(const std::string& message, std::size_t begin,
                       std::size_t end)
    : std::runtime_error(message + " (at " + std::to_string(begin) + ".." +
                         std::to_string(end) + ")"),
      begin_(begin),
      end_(end) {}

namespace {

using Node = AlphaFormula::Node;

struct Token {
  enum Type { kIdent, kInt, kLParen, kRParen, kComma, kEnd } type;
  std::string_view text;
  std::size_t begin = 0;
  std::size_t end = 0;
  long value = 0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    while (pos_ < src_.size() &&
           std::isspace(static_cast<unsigned char>(src_[pos_]))) {
      ++pos_;
    }
    if (pos_ >= src_.size()) return {Token::kEnd, {}, pos_, pos_, 0};
    const std::size_t start = pos_;
    const char c = src_[pos_];
    if (c == '(') return ++pos_, Token{Token::kLParen, "(", start, pos_, 0};
    if (c == ')') return ++pos_, Token{Token::kRParen, ")", start, pos_, 0};
    if (c == ',') return ++pos_, Token{Token::kComma, ",", start, pos_, 0};
    if (std::isdigit(static_cast<unsigned char>(c))) {
      long value = 0;
      while (pos_ < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        value = value * 10 + (src_[pos_] - '0');
        if (value > 1000000) value = 1000001;  // clamp, rejected later
        ++pos_;
      }
      return {Token::kInt, src_.substr(start, pos_ - start), start, pos_,
              value};
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
              src_[pos_] == '_')) {
        ++pos_;
      }
      return {Token::kIdent, src_.substr(start, pos_ - start), start, pos_, 0};
    }
    throw ParseError("unexpected character '" + std::string(1, c) + "'", start,
                     start + 1);
  }

 private:
  std::string_view src_;
  std::size_t pos_ = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : lexer_(src), cur_(lexer_.next()) {}

  Node parse_expression() {
    if (cur_.type != Token::kIdent) {
      throw ParseError("expected factor or operator", cur_.begin, cur_.end);
    }
    const Token ident = cur_;
    advance();
    if (const Operator* op = find_operator(ident.text)) {
      return parse_call(*op, ident);
    }
    if (is_base_factor(ident.text)) {
      Node leaf;
      leaf.factor = std::string(ident.text);
      return leaf;
    }
    throw ParseError("unknown symbol '" + std::string(ident.text) + "'",
                     ident.begin, ident.end);
  }

  void expect_end() {
    if (cur_.type != Token::kEnd) {
      throw ParseError("unexpected trailing input", cur_.begin, cur_.end);
    }
  }

 private:
  void advance() { cur_ = lexer_.next(); }

  void expect(Token::Type type, const std::string& what) {
    if (cur_.type != type) {
      throw ParseError("expected " + what, cur_.begin, cur_.end);
    }
    advance();
  }

  Node parse_call(const Operator& op, const Token& ident) {
    Node node;
    node.op = &op;
    expect(Token::kLParen, "'(' after operator '" + op.name + "'");
    for (int i = 0; i < op.arity; ++i) {
      if (i > 0) {
        if (cur_.type != Token::kComma) {
          throw ParseError("operator '" + op.name + "' expects " +
                               std::to_string(op.arity) + " arguments",
                           ident.begin, cur_.end);
        }
        advance();
      }
      node.children.push_back(parse_expression());
    }
    if (op.needs_window()) {
      if (cur_.type != Token::kComma) {
        throw ParseError("operator '" + op.name + "' expects a window argument",
                         ident.begin, cur_.end);
      }
      advance();
      if (cur_.type != Token::kInt || cur_.value < kMinWindow ||
          cur_.value > 1000000) {
        throw ParseError("malformed window (integer >= " +
                             std::to_string(kMinWindow) + " required)",
                         cur_.begin, cur_.end);
      }
      node.window = static_cast<int>(cur_.value);
      advance();
    }
    expect(Token::kRParen, "')' closing '" + op.name + "'");
    return node;
  }

  Lexer lexer_;
  Token cur_;
};

int depth_of(const Node& node) {
  if (node.is_leaf()) return 0;
  int best = 0;
  for (const Node& child : node.children) {
    best = std::max(best, depth_of(child));
  }
  return best + 1;
}

void append_text(const Node& node, std::string& out) {
  if (node.is_leaf()) {
    out += node.factor;
    return;
  }
  out += node.op->name;
  out += '(';
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    if (i > 0) out += ',';
    append_text(node.children[i], out);
  }
  if (node.op->needs_window()) {
    out += ',';
    out += std::to_string(node.window);
  }
  out += ')';
}

void collect_at_level(Node& node, int remaining, std::vector<Node*>& out) {
  if (remaining == 0) {
    out.push_back(&node);
    return;
  }
  for (Node& child : node.children) {
    collect_at_level(child, remaining - 1, out);
  }
}

void collect_internal(Node& node, std::vector<Node*>& out) {
  if (node.is_leaf()) return;
  out.push_back(&node);
  for (Node& child : node.children) collect_internal(child, out);
}

void collect_leaves(Node& node, std::vector<Node*>& out) {
  if (node.is_leaf()) {
    out.push_back(&node);
    return;
  }
  for (Node& child : node.children) collect_leaves(child, out);
}

std::vector<const Operator*> same_kind_alternatives(const Operator& op) {
  std::vector<const Operator*> alts;
  for (const Operator& other : operator_registry()) {
    if (&other != &op && other.kind == op.kind && other.arity == op.arity) {
      alts.push_back(&other);
    }
  }
  return alts;
}

Node pool_child(int child_depth,
                const std::vector<std::vector<AlphaFormula>>& pool_by_depth,
                Rng& rng) {
  if (child_depth == 0) {
    Node leaf;
    const auto& factors = base_factors();
    leaf.factor = factors[rng.below(factors.size())];
    return leaf;
  }
  const auto& members = pool_by_depth[static_cast<std::size_t>(child_depth)];
  return members[rng.below(members.size())].root;
}

Node random_op_node(Rng& rng) {
  const auto& registry = operator_registry();
  Node node;
  node.op = &registry[rng.below(registry.size())];
  if (node.op->needs_window()) {
    const auto& windows = default_windows();
    node.window = windows[rng.below(windows.size())];
  }
  return node;
}

}  // namespace

AlphaFormula parse(std::string_view text, int max_depth) {
  Parser parser(text);
  AlphaFormula f;
  f.root = parser.parse_expression();
  parser.expect_end();
  const int d = depth_of(f.root);
  if (d > max_depth) {
    throw ParseError("formula depth " + std::to_string(d) +
                         " exceeds limit " + std::to_string(max_depth),
                     0, text.size());
  }
  return f;
}

std::string to_text(const AlphaFormula& f) {
  std::string out;
  append_text(f.root, out);
  return out;
}

int depth(const AlphaFormula& f) { return depth_of(f.root); }

int node_depth(const AlphaFormula::Node& node) { return depth_of(node); }

CrossoverResult crossover(const AlphaFormula& p1, const AlphaFormula& p2,
                          Rng& rng) {
  CrossoverResult result{p1, p2, false};
  const int common = std::min(depth(p1), depth(p2));
  if (common < 1) return result;
  const int level = static_cast<int>(rng.uniform_int(1, common));
  std::vector<Node*> sites1;
  std::vector<Node*> sites2;
  collect_at_level(result.first.root, level, sites1);
  collect_at_level(result.second.root, level, sites2);
  if (sites1.empty() || sites2.empty()) return result;  // cannot happen
  Node* a = sites1[rng.below(sites1.size())];
  Node* b = sites2[rng.below(sites2.size())];
  std::swap(*a, *b);
  result.performed = true;
  return result;
}

AlphaFormula mutate(const AlphaFormula& f,
                    const std::vector<AlphaFormula>& gene_pool, Rng& rng) {
  AlphaFormula out = f;
  const int d = depth(f);

  std::vector<Node*> op_sites;
  {
    std::vector<Node*> internal;
    collect_internal(out.root, internal);
    for (Node* node : internal) {
      if (!same_kind_alternatives(*node->op).empty()) op_sites.push_back(node);
    }
  }
  std::vector<Node*> leaf_sites;
  collect_leaves(out.root, leaf_sites);

  std::vector<const AlphaFormula*> shallower;
  for (const AlphaFormula& g : gene_pool) {
    if (depth(g) < d) shallower.push_back(&g);
  }

  enum Option { kOpSwap, kLeafSwap, kRootGene };
  std::vector<Option> options;
  if (!op_sites.empty()) options.push_back(kOpSwap);
  if (!leaf_sites.empty()) options.push_back(kLeafSwap);
  if (d >= 1 && !shallower.empty()) options.push_back(kRootGene);
  if (options.empty()) return out;

  switch (options[rng.below(options.size())]) {
    case kOpSwap: {
      Node* site = op_sites[rng.below(op_sites.size())];
      const auto alts = same_kind_alternatives(*site->op);
      site->op = alts[rng.below(alts.size())];
      break;
    }
    case kLeafSwap: {
      Node* site = leaf_sites[rng.below(leaf_sites.size())];
      std::vector<const std::string*> alts;
      for (const std::string& factor : base_factors()) {
        if (factor != site->factor) alts.push_back(&factor);
      }
      site->factor = *alts[rng.below(alts.size())];
      break;
    }
    case kRootGene: {
      const std::size_t slot = rng.below(out.root.children.size());
      out.root.children[slot] = shallower[rng.below(shallower.size())]->root;
      break;
    }
  }
  return out;
}

AlphaFormula random_formula(
    int target_depth,
    const std::vector<std::vector<AlphaFormula>>& pool_by_depth, Rng& rng) {
  if (target_depth < 1) {
    throw std::invalid_argument("random_formula: target depth must be >= 1");
  }
  for (int d = 1; d < target_depth; ++d) {
    if (static_cast<std::size_t>(d) >= pool_by_depth.size() ||
        pool_by_depth[static_cast<std::size_t>(d)].empty()) {
      throw std::runtime_error(
          "gene pool has no depth-" + std::to_string(d) +
          " entries; mine shallower depths first");
    }
  }
  AlphaFormula f;
  f.root = random_op_node(rng);
  const int arity = f.root.op->arity;
  const int deep_slot = static_cast<int>(rng.below(arity));
  for (int i = 0; i < arity; ++i) {
    const int child_depth =
        i == deep_slot
            ? target_depth - 1
            : static_cast<int>(rng.uniform_int(0, target_depth - 1));
    f.root.children.push_back(pool_child(child_depth, pool_by_depth, rng));
  }
  return f;
}

AlphaFormula random_tree(int target_depth, Rng& rng) {
  if (target_depth == 0) {
    const auto& factors = base_factors();
    return make_leaf(factors[rng.below(factors.size())]);
  }
  AlphaFormula f;
  f.root = random_op_node(rng);
  const int arity = f.root.op->arity;
  const int deep_slot = static_cast<int>(rng.below(arity));
  for (int i = 0; i < arity; ++i) {
    const int child_depth =
        i == deep_slot
            ? target_depth - 1
            : static_cast<int>(rng.uniform_int(0, target_depth - 1));
    f.root.children.push_back(random_tree(child_depth, rng).root);
  }
  return f;
}

std::vector<AlphaFormula> enumerate_depth1(
    const std::vector<std::string>& factors,
    const std::vector<Operator>& registry, const std::vector<int>& windows) {
  std::vector<AlphaFormula> out;
  std::set<std::string> seen;
  const auto push = [&](AlphaFormula f) {
    if (seen.insert(to_text(f)).second) out.push_back(std::move(f));
  };
  const auto leaf = [](const std::string& factor) {
    Node node;
    node.factor = factor;
    return node;
  };

  for (const Operator& op : registry) {
    switch (op.kind) {
      case OpKind::kElementwiseUnary:
      case OpKind::kCrossSectional:
        for (const std::string& f : factors) {
          AlphaFormula a;
          a.root.op = &op;
          a.root.children.push_back(leaf(f));
          push(std::move(a));
        }
        break;
      case OpKind::kTimeSeriesUnary:
        for (const std::string& f : factors) {
          for (const int w : windows) {
            AlphaFormula a;
            a.root.op = &op;
            a.root.window = w;
            a.root.children.push_back(leaf(f));
            push(std::move(a));
          }
        }
        break;
      case OpKind::kElementwiseBinary: {
        const bool constant_on_self = op.name == "sub" || op.name == "div";
        for (const std::string& f1 : factors) {
          for (const std::string& f2 : factors) {
            if (constant_on_self && f1 == f2) continue;
            AlphaFormula a;
            a.root.op = &op;
            a.root.children.push_back(leaf(f1));
            a.root.children.push_back(leaf(f2));
            push(std::move(a));
          }
        }
        break;
      }
      case OpKind::kTimeSeriesBinary:
        for (const std::string& f1 : factors) {
          for (const std::string& f2 : factors) {
            if (f1 == f2) continue;  // corr(x,x,.) is constant
            for (const int w : windows) {
              AlphaFormula a;
              a.root.op = &op;
              a.root.window = w;
              a.root.children.push_back(leaf(f1));
              a.root.children.push_back(leaf(f2));
              push(std::move(a));
            }
          }
        }
        break;
    }
  }
  return out;
}

}  // namespace alphamine::dsl
