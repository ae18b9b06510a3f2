#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "alphamine/formula.hpp"
#include "alphamine/market_data.hpp"
#include "alphamine/panel.hpp"

namespace alphamine::eval {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-formula value panel. A cell is invalid when any input in its
// dependency cone is invalid or the operation is undefined there (division
// by zero, log of zero, correlation over a constant window). Time-series
// operators invalidate their warm-up rows.
struct AlphaMatrix {
  FactorPanel panel;
  std::string source;  // canonical formula text
};

struct IcReport {
  double ic = 0.0;        // oriented mean, >= 0
  int orientation = +1;   // -1 when the raw mean was negative
  int valid_days = 0;     // days contributing a correlation
  bool valid = false;     // false when too few days were usable
  double raw_mean = 0.0;
  std::vector<double> ic_array;       // raw per-day correlations
  std::vector<std::uint8_t> day_valid;
};

// Unit-norm per-day score vector used as the cheap archive representation.
// Sign convention: the largest-magnitude entry is positive.
struct PcScores {
  std::vector<double> scores;
  std::vector<std::uint8_t> valid;
};

AlphaMatrix evaluate(const dsl::AlphaFormula& f, const data::MarketDataset& ds);

// Mean over trading days of the cross-sectional Pearson correlation between
// alpha values and forward returns. A day is skipped when fewer than 3
// stocks are valid in both panels or either vector is constant; the report
// is invalid when fewer than half of the return-bearing days survive.
IcReport ic(const AlphaMatrix& a, const data::ReturnPanel& r);

// Mean per-day correlation between two alpha panels, same skip rules as ic.
// Throws when every day is skipped.
double similarity(const AlphaMatrix& a, const AlphaMatrix& b);

// First principal component scores via power iteration on the implicit
// covariance (two T x n multiplies per step; no n x n matrix is formed).
// Columns with under 60% valid days are dropped; remaining gaps are imputed
// at the column mean, which centers to zero.
PcScores first_pc_scores(const AlphaMatrix& a);

// Absolute Pearson correlation of two score vectors over jointly valid days.
// Requires at least 10 overlapping days.
double pca_similarity(const PcScores& p, const PcScores& q);

// Scalar-work counter for the archive screening path: pca_similarity adds
// its overlap length per call. Lets tests assert the per-comparison cost is
// proportional to T with no stock-count factor.
std::uint64_t pca_comparison_ops();
void reset_pca_comparison_ops();

}  // namespace alphamine::eval
