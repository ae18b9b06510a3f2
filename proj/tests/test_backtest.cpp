#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "alphamine/backtest.hpp"
#include "alphamine/evaluation.hpp"
#include "alphamine/formula.hpp"
#include "alphamine/market_data.hpp"
#include "alphamine/rng.hpp"
#include "oracles.hpp"

using namespace alphamine;

namespace {

eval::AlphaMatrix wrap(FactorPanel p) {
  eval::AlphaMatrix m;
  m.panel = std::move(p);
  m.source = "test";
  return m;
}

FactorPanel random_panel(int rows, int cols, Rng& rng, double invalid = 0.0) {
  FactorPanel p(rows, cols);
  for (int t = 0; t < rows; ++t) {
    for (int s = 0; s < cols; ++s) {
      if (invalid > 0.0 && rng.uniform() < invalid) continue;
      p.set(t, s, rng.normal());
    }
  }
  return p;
}

// Per-cell loop oracle for the rank ensemble.
double rank_of(const FactorPanel& p, int t, int s, int orientation) {
  const double mine = orientation * p.value(t, s);
  int m = 0, less = 0, equal = 0;
  for (int c = 0; c < p.cols; ++c) {
    if (!p.is_valid(t, c)) continue;
    ++m;
    const double v = orientation * p.value(t, c);
    if (v < mine) ++less;
    if (v == mine) ++equal;
  }
  if (m == 1) return 0.5;
  const double avg_rank = less + 0.5 * (equal + 1);
  return (avg_rank - 1.0) / (m - 1);
}

bt::ScorePanel single_valid_stock_scores(const data::MarketDataset& ds,
                                         int stock) {
  bt::ScorePanel scores;
  scores.panel = FactorPanel(ds.days(), ds.stocks());
  for (int t = 0; t < ds.days(); ++t) scores.panel.set(t, stock, 1.0);
  return scores;
}

bt::ScorePanel flat_scores(const data::MarketDataset& ds) {
  bt::ScorePanel scores;
  scores.panel = FactorPanel(ds.days(), ds.stocks());
  for (int t = 0; t < ds.days(); ++t) {
    for (int s = 0; s < ds.stocks(); ++s) scores.panel.set(t, s, 1.0);
  }
  return scores;
}

// Replays the trade log to audit cash conservation: day-over-day wealth
// change must equal the mark-to-market move of overnight holdings minus the
// costs paid that day.
void audit_wealth(const bt::WealthSeries& w, const data::MarketDataset& ds) {
  const FactorPanel& close = ds.panel("close");
  std::map<int, double> holdings;  // stock -> shares
  std::size_t trade_index = 0;
  double prev_wealth = 1.0;
  std::vector<double> last_close(ds.stocks(), 0.0);
  std::vector<double> prev_last_close(ds.stocks(), 0.0);

  for (int t = 0; t < ds.days(); ++t) {
    for (int s = 0; s < ds.stocks(); ++s) {
      if (close.is_valid(t, s)) last_close[s] = close.value(t, s);
    }
    double overnight_move = 0.0;
    for (const auto& [s, shares] : holdings) {
      overnight_move += shares * (last_close[s] - prev_last_close[s]);
    }
    double costs = 0.0;
    while (trade_index < w.trades.size() && w.trades[trade_index].day == t) {
      const bt::Trade& trade = w.trades[trade_index];
      if (trade.is_buy) {
        holdings[trade.stock] += trade.shares;
      } else {
        holdings[trade.stock] -= trade.shares;
        if (std::fabs(holdings[trade.stock]) < 1e-12) {
          holdings.erase(trade.stock);
        }
      }
      costs += trade.cost;
      ++trade_index;
    }
    CHECK(costs == doctest::Approx(w.daily_cost[t]).epsilon(1e-9));
    CHECK(w.end_of_day[t] ==
          doctest::Approx(prev_wealth + overnight_move - costs).epsilon(1e-9));
    prev_wealth = w.end_of_day[t];
    prev_last_close = last_close;
  }
}

}  // namespace

TEST_CASE("rank ensemble of a single alpha is its per-day ranks") {
  Rng rng(1);
  const FactorPanel p = random_panel(20, 10, rng, 0.1);
  const eval::AlphaMatrix m = wrap(p);
  const bt::ScorePanel scores = bt::rank_ensemble({{&m, +1}});
  for (int t = 0; t < p.rows; ++t) {
    for (int s = 0; s < p.cols; ++s) {
      CHECK(scores.panel.is_valid(t, s) == p.is_valid(t, s));
      if (p.is_valid(t, s)) {
        CHECK(scores.panel.value(t, s) ==
              doctest::Approx(rank_of(p, t, s, +1)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("an alpha and its negation with opposite orientations agree") {
  Rng rng(2);
  const FactorPanel p = random_panel(15, 8, rng);
  FactorPanel negated = p;
  for (double& v : negated.values) v = -v;
  const eval::AlphaMatrix a = wrap(p);
  const eval::AlphaMatrix b = wrap(negated);

  const bt::ScorePanel lone = bt::rank_ensemble({{&a, +1}});
  const bt::ScorePanel both = bt::rank_ensemble({{&a, +1}, {&b, -1}});
  for (int t = 0; t < p.rows; ++t) {
    for (int s = 0; s < p.cols; ++s) {
      CHECK(both.panel.value(t, s) ==
            doctest::Approx(lone.panel.value(t, s)).epsilon(1e-12));
    }
  }
}

TEST_CASE("rank ensemble matches the per-cell oracle on three alphas") {
  Rng rng(3);
  FactorPanel p1 = random_panel(20, 10, rng, 0.15);
  FactorPanel p2 = random_panel(20, 10, rng, 0.15);
  FactorPanel p3 = random_panel(20, 10, rng, 0.15);
  const eval::AlphaMatrix a1 = wrap(p1), a2 = wrap(p2), a3 = wrap(p3);
  const bt::ScorePanel scores =
      bt::rank_ensemble({{&a1, +1}, {&a2, -1}, {&a3, +1}});

  const FactorPanel* panels[3] = {&p1, &p2, &p3};
  const int orientations[3] = {+1, -1, +1};
  for (int t = 0; t < 20; ++t) {
    for (int s = 0; s < 10; ++s) {
      double sum = 0.0;
      int m = 0;
      for (int k = 0; k < 3; ++k) {
        if (panels[k]->is_valid(t, s)) {
          sum += rank_of(*panels[k], t, s, orientations[k]);
          ++m;
        }
      }
      CHECK(scores.panel.is_valid(t, s) == (m > 0));
      if (m > 0) {
        CHECK(scores.panel.value(t, s) ==
              doctest::Approx(sum / m).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("rank ensemble rejects an empty list and mixed shapes") {
  CHECK_THROWS_AS(bt::rank_ensemble({}), bt::BacktestError);
  Rng rng(4);
  const eval::AlphaMatrix a = wrap(random_panel(10, 5, rng));
  const eval::AlphaMatrix b = wrap(random_panel(10, 6, rng));
  CHECK_THROWS_AS(bt::rank_ensemble({{&a, +1}, {&b, +1}}), bt::BacktestError);
}

TEST_CASE("single-stock scores compound that stock's return") {
  const data::MarketDataset ds = data::synth_market(90, 10, std::nullopt, 11);
  const bt::ScorePanel scores = single_valid_stock_scores(ds, 3);
  const bt::BacktestReport report = bt::top_k_backtest(scores, ds, 1, 1, 0.0);

  const FactorPanel& close = ds.panel("close");
  const double expected =
      close.value(ds.days() - 1, 3) / close.value(0, 3);
  CHECK(report.wealth.final_wealth() ==
        doctest::Approx(expected).epsilon(1e-9));
  audit_wealth(report.wealth, ds);
}

TEST_CASE("full-universe flat scores with zero cost track the market") {
  const data::MarketDataset ds = data::synth_market(120, 12, std::nullopt, 12);
  const bt::ScorePanel scores = flat_scores(ds);
  const bt::BacktestReport report =
      bt::top_k_backtest(scores, ds, 1, ds.stocks(), 0.0);
  for (int t = 0; t < ds.days(); ++t) {
    CHECK(report.wealth.end_of_day[t] ==
          doctest::Approx(report.market[t]).epsilon(1e-9));
  }
  CHECK(std::fabs(report.ar_rel) < 1e-9);
}

TEST_CASE("costs only ever lower the annualized return") {
  const data::MarketDataset ds = data::synth_market(150, 15, std::nullopt, 13);
  Rng rng(5);
  bt::ScorePanel scores;
  scores.panel = random_panel(ds.days(), ds.stocks(), rng);
  double prev_ar = 0.0;
  bool first = true;
  for (const double cost : {0.0, 0.001, 0.003, 0.01}) {
    const bt::BacktestReport report =
        bt::top_k_backtest(scores, ds, 1, 5, cost);
    audit_wealth(report.wealth, ds);
    if (!first) CHECK(report.ar < prev_ar);
    prev_ar = report.ar;
    first = false;
  }
}

TEST_CASE("h-day tranches trade on their own cycle") {
  const data::MarketDataset ds = data::synth_market(100, 10, std::nullopt, 14);
  Rng rng(6);
  bt::ScorePanel scores;
  scores.panel = random_panel(ds.days(), ds.stocks(), rng);
  const bt::BacktestReport report = bt::top_k_backtest(scores, ds, 5, 3, 0.003);
  audit_wealth(report.wealth, ds);
  // each stock bought on day t is sold exactly 5 days later
  std::map<int, std::map<int, double>> bought_by_day;
  for (const bt::Trade& trade : report.wealth.trades) {
    if (trade.is_buy) {
      bought_by_day[trade.day][trade.stock] += trade.shares;
    } else if (trade.day >= 5) {
      auto it = bought_by_day.find(trade.day - 5);
      REQUIRE(it != bought_by_day.end());
      CHECK(it->second.count(trade.stock) == 1);
    }
  }
}

TEST_CASE("too few valid scores parks the tranche in cash") {
  const data::MarketDataset ds = data::synth_market(90, 10, std::nullopt, 15);
  const bt::ScorePanel scores = single_valid_stock_scores(ds, 0);
  const bt::BacktestReport report = bt::top_k_backtest(scores, ds, 1, 5, 0.0);
  CHECK(report.wealth.trades.empty());
  CHECK(report.wealth.final_wealth() == doctest::Approx(1.0));
  REQUIRE_FALSE(report.warnings.empty());
}

TEST_CASE("stratified folds partition the day with near-equal sizes") {
  for (const int n : {7, 10, 23, 30, 101}) {
    for (const int folds : {2, 7, 10}) {
      const std::vector<int> bounds = bt::stratified_fold_bounds(n, folds);
      REQUIRE(static_cast<int>(bounds.size()) == folds + 1);
      CHECK(bounds.front() == 0);
      CHECK(bounds.back() == n);
      int smallest = n, largest = 0;
      for (int i = 0; i < folds; ++i) {
        const int size = bounds[i + 1] - bounds[i];
        smallest = std::min(smallest, size);
        largest = std::max(largest, size);
      }
      CHECK(largest - smallest <= 1);
    }
  }
}

TEST_CASE("ten stocks in ten folds means one stock per fold") {
  const data::MarketDataset ds = data::synth_market(90, 10, std::nullopt, 16);
  Rng rng(7);
  bt::ScorePanel scores;
  scores.panel = random_panel(ds.days(), ds.stocks(), rng);
  const std::vector<bt::BacktestReport> reports =
      bt::stratified_backtest(scores, ds, 1, 10);
  REQUIRE(reports.size() == 10);
  for (const bt::BacktestReport& report : reports) {
    for (const bt::Trade& trade : report.wealth.trades) {
      if (!trade.is_buy) continue;
      // equal weighting over a single stock: full tranche in one name
      CHECK(trade.notional > 0.0);
    }
    audit_wealth(report.wealth, ds);
  }
  // across folds, each day's buys cover each stock exactly once
  std::map<int, std::set<int>> day_coverage;
  for (const bt::BacktestReport& report : reports) {
    for (const bt::Trade& trade : report.wealth.trades) {
      if (trade.is_buy) {
        CHECK(day_coverage[trade.day].insert(trade.stock).second);
      }
    }
  }
  for (const auto& [day, stocks] : day_coverage) {
    CHECK(stocks.size() == 10);
  }
}

TEST_CASE("perfect foresight gives monotone fold returns") {
  const data::MarketDataset ds = data::synth_market(500, 30, std::nullopt, 17);
  const data::ReturnPanel returns = data::forward_returns(ds, 1);
  bt::ScorePanel scores;
  scores.panel = returns.panel;
  const std::vector<bt::BacktestReport> reports =
      bt::stratified_backtest(scores, ds, 1, 10);
  for (std::size_t i = 1; i < reports.size(); ++i) {
    CHECK(reports[i].ar > reports[i - 1].ar);
  }
}

TEST_CASE("a planted alpha ranks folds with high rank correlation") {
  const data::MarketDataset ds = data::synth_market(
      500, 30, data::PlantedSignal{dsl::parse("div(vwap,close)"), 0.1}, 21);
  const eval::AlphaMatrix alpha =
      eval::evaluate(dsl::parse("div(vwap,close)"), ds);
  const bt::ScorePanel scores = bt::rank_ensemble({{&alpha, +1}});
  const std::vector<bt::BacktestReport> reports =
      bt::stratified_backtest(scores, ds, 1, 10);
  std::vector<double> fold_index, fold_ar;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    fold_index.push_back(static_cast<double>(i));
    fold_ar.push_back(reports[i].ar);
  }
  CHECK(oracle::spearman(fold_index, fold_ar) >= 0.6);
}

TEST_CASE("annualized return closed forms") {
  CHECK(bt::annualized_return(2.0, 365) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bt::annualized_return(1.0, 365) == 0.0);
  CHECK(bt::annualized_return(1.1, 730) ==
        doctest::Approx(0.0488088481701516).epsilon(1e-9));
  CHECK_THROWS_AS(bt::annualized_return(0.0, 365), bt::BacktestError);
  CHECK_THROWS_AS(bt::annualized_return(1.0, 0), bt::BacktestError);
}

TEST_CASE("sharpe is return over volatility with guards") {
  CHECK(bt::sharpe(0.2, 0.1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(bt::sharpe(0.0, 0.1) == 0.0);
  CHECK_THROWS_AS(bt::sharpe(0.2, 0.0), bt::BacktestError);

  // constant wealth series has zero volatility
  bt::WealthSeries flat;
  flat.end_of_day.assign(10, 1.0);
  CHECK(bt::annualized_volatility(flat) == 0.0);

  bt::WealthSeries moving;
  moving.end_of_day = {1.01, 1.0, 1.02, 1.01};
  CHECK(bt::annualized_volatility(moving) > 0.0);
}
