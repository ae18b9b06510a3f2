#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "alphamine/evaluation.hpp"
#include "alphamine/market_data.hpp"
#include "alphamine/panel.hpp"

namespace alphamine::bt {

class BacktestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-(day, stock) desirability; higher means larger expected return.
struct ScorePanel {
  FactorPanel panel;
};

struct Trade {
  int day = 0;
  int stock = 0;
  bool is_buy = false;
  double shares = 0.0;
  double price = 0.0;
  double notional = 0.0;
  double cost = 0.0;
};

// End-of-day wealth with S_0 = 1 implicit before the first trading day.
struct WealthSeries {
  std::vector<double> end_of_day;
  std::vector<double> daily_cost;
  std::vector<Trade> trades;

  double final_wealth() const {
    return end_of_day.empty() ? 1.0 : end_of_day.back();
  }
};

struct BacktestReport {
  WealthSeries wealth;
  std::vector<double> market;  // equal-weight market, same day grid
  double ar = 0.0;
  double vol = 0.0;
  std::optional<double> sr;
  double ar_rel = 0.0;
  double vol_rel = 0.0;
  std::optional<double> sr_rel;
  std::vector<std::string> warnings;
};

struct OrientedAlpha {
  const eval::AlphaMatrix* matrix = nullptr;
  int orientation = +1;
};

// Equal-weight rank ensemble: per day each oriented alpha becomes
// cross-sectional ranks in [0,1]; a cell's score is the mean rank over the
// alphas valid there.
ScorePanel rank_ensemble(const std::vector<OrientedAlpha>& alphas);

// Daily top-k strategy with h capital tranches. Tranche (t mod h) trades at
// the day-t close: it sells what it bought h days earlier and buys the
// day's top-k valid-score stocks equal-weighted. Each traded leg pays
// cost_rate/2 of notional. Days with fewer than k valid scores leave the
// tranche in cash.
BacktestReport top_k_backtest(const ScorePanel& scores,
                              const data::MarketDataset& ds, int h, int k,
                              double cost_rate);

// Score-ordered decile-style backtest: per day the valid universe is split
// into `folds` contiguous groups (sizes differ by at most one; the last
// fold holds the highest scores) and each fold is traded as its own
// cost-free h-tranche strategy.
std::vector<BacktestReport> stratified_backtest(const ScorePanel& scores,
                                                const data::MarketDataset& ds,
                                                int h, int folds = 10);

// Contiguous fold boundaries: fold i covers [bounds[i], bounds[i+1]).
std::vector<int> stratified_fold_bounds(int n_valid, int folds);

// AR = exp(365/T' * log(S_T / S_0)) - 1 over T' elapsed calendar days.
double annualized_return(double final_wealth, std::int64_t calendar_days);

// Sample standard deviation of daily log wealth returns, annualized with
// 244 trading days.
double annualized_volatility(const WealthSeries& wealth);
double annualized_volatility(const std::vector<double>& end_of_day);

// ar / vol with zero risk-free rate; vol must be positive.
double sharpe(double ar, double vol);

}  // namespace alphamine::bt
