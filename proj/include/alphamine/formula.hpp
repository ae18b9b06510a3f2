#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "alphamine/rng.hpp"

namespace alphamine::dsl {

enum class OpKind {
  kElementwiseUnary,
  kElementwiseBinary,
  kTimeSeriesUnary,
  kTimeSeriesBinary,
  kCrossSectional,
};

struct Operator {
  std::string name;
  int arity;      // number of child expressions (1 or 2)
  OpKind kind;

  bool needs_window() const {
    return kind == OpKind::kTimeSeriesUnary || kind == OpKind::kTimeSeriesBinary;
  }
};

// Fixed registry: add sub mul div | neg abs_ sign log_ |
// ts_mean ts_std ts_min ts_max ts_rank delay delta | ts_corr | cs_rank.
const std::vector<Operator>& operator_registry();
const Operator* find_operator(std::string_view name);  // nullptr when unknown

// Base factors: open, high, low, close, volume, vwap.
const std::vector<std::string>& base_factors();
bool is_base_factor(std::string_view name);

// Lookback grid used by enumeration and random generation.
const std::vector<int>& default_windows();

inline constexpr int kDefaultMaxDepth = 3;
inline constexpr int kMinWindow = 2;

// Expression tree over base factors and registry operators. Windows are
// operator parameters, not child nodes, so depth counts tree edges only.
struct AlphaFormula {
  struct Node {
    const Operator* op = nullptr;  // nullptr marks a leaf
    std::string factor;            // leaf symbol
    int window = 0;                // set iff op->needs_window()
    std::vector<Node> children;

    bool is_leaf() const { return op == nullptr; }
    bool operator==(const Node&) const = default;
  };

  Node root;

  bool operator==(const AlphaFormula&) const = default;
};

AlphaFormula make_leaf(std::string_view factor);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t begin, std::size_t end);
  std::size_t begin() const { return begin_; }
  std::size_t end() const { return end_; }

 private:
  std::size_t begin_;
  std::size_t end_;
};

// Prefix grammar, e.g. div(sub(close,open),sub(high,low)) or ts_std(close,10).
// Throws ParseError with the offending source span.
AlphaFormula parse(std::string_view text, int max_depth = kDefaultMaxDepth);

// Canonical form: lowercase names, no whitespace, windows as decimal
// integers. Byte-identical for structurally equal trees.
std::string to_text(const AlphaFormula& f);

int depth(const AlphaFormula& f);
int node_depth(const AlphaFormula::Node& node);

struct CrossoverResult {
  AlphaFormula first;
  AlphaFormula second;
  bool performed = false;  // false: parents returned unchanged
};

// Swaps one subtree at a common level drawn uniformly from
// 1..min(depth(p1), depth(p2)). Never increases depth past the deeper parent.
CrossoverResult crossover(const AlphaFormula& p1, const AlphaFormula& p2,
                          Rng& rng);

// One of, with equal probability among the applicable choices:
//  (a) swap an operator for another of equal arity and kind,
//  (b) swap a leaf factor,
//  (c) replace a root gene with a gene-pool member of strictly smaller depth.
// Never increases depth.
AlphaFormula mutate(const AlphaFormula& f,
                    const std::vector<AlphaFormula>& gene_pool, Rng& rng);

// Draws a root operator and fills child slots from the per-depth pool so the
// result has exactly target_depth. pool_by_depth[d] holds depth-d formulas
// for 1 <= d < target_depth; depth-0 leaves are always available.
AlphaFormula random_formula(
    int target_depth,
    const std::vector<std::vector<AlphaFormula>>& pool_by_depth, Rng& rng);

// Pool-free uniform random tree of exactly target_depth.
AlphaFormula random_tree(int target_depth, Rng& rng);

// All depth-1 trees over the given registry/factors/windows, excluding
// constant-by-construction forms (x-x, x/x, corr(x,x,.)), deduplicated by
// canonical text.
std::vector<AlphaFormula> enumerate_depth1(
    const std::vector<std::string>& factors,
    const std::vector<Operator>& registry, const std::vector<int>& windows);

}  // namespace alphamine::dsl
