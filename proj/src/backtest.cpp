#include "alphamine/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <utility>

namespace alphamine::bt {

namespace {

// Average-tie ranks of the valid cells of one day, scaled to [0,1].
void day_ranks(const FactorPanel& panel, int t, int orientation,
               std::vector<double>& out_rank,
               std::vector<std::uint8_t>& out_valid) {
  std::vector<std::pair<double, int>> row;
  for (int s = 0; s < panel.cols; ++s) {
    out_valid[s] = 0;
    if (panel.is_valid(t, s)) {
      row.emplace_back(orientation * panel.value(t, s), s);
    }
  }
  const std::size_t m = row.size();
  if (m == 0) return;
  if (m == 1) {
    out_rank[row[0].second] = 0.5;
    out_valid[row[0].second] = 1;
    return;
  }
  std::sort(row.begin(), row.end());
  std::size_t i = 0;
  while (i < m) {
    std::size_t j = i + 1;
    while (j < m && row[j].first == row[i].first) ++j;
    const double scaled =
        (0.5 * static_cast<double>(i + 1 + j) - 1.0) / static_cast<double>(m - 1);
    for (std::size_t k = i; k < j; ++k) {
      out_rank[row[k].second] = scaled;
      out_valid[row[k].second] = 1;
    }
    i = j;
  }
}

// Stocks eligible to trade on day t: valid score and valid close.
std::vector<int> eligible_stocks(const ScorePanel& scores,
                                 const FactorPanel& close, int t) {
  std::vector<int> out;
  for (int s = 0; s < close.cols; ++s) {
    if (scores.panel.is_valid(t, s) && close.is_valid(t, s)) out.push_back(s);
  }
  return out;
}

struct Tranche {
  double cash = 0.0;
  std::map<int, double> holdings;  // stock -> shares
};

// Shared h-tranche engine. select(t) names the stocks the acting tranche
// buys equal-weighted at the day-t close; an empty selection parks it in
// cash for the cycle.
WealthSeries simulate(const data::MarketDataset& ds, int h, double cost_rate,
                      const std::function<std::vector<int>(int)>& select,
                      std::vector<std::string>* warnings) {
  const FactorPanel& close = ds.panel("close");
  const int t_count = ds.days();
  const int n_count = ds.stocks();

  std::vector<Tranche> tranches(static_cast<std::size_t>(h));
  for (Tranche& tr : tranches) tr.cash = 1.0 / h;

  WealthSeries out;
  out.end_of_day.assign(t_count, 0.0);
  out.daily_cost.assign(t_count, 0.0);

  std::vector<double> last_close(n_count,
                                 std::numeric_limits<double>::quiet_NaN());
  int skipped_days = 0;

  for (int t = 0; t < t_count; ++t) {
    for (int s = 0; s < n_count; ++s) {
      if (close.is_valid(t, s)) last_close[s] = close.value(t, s);
    }
    Tranche& tr = tranches[static_cast<std::size_t>(t % h)];

    // Sell everything sellable at today's close.
    for (auto it = tr.holdings.begin(); it != tr.holdings.end();) {
      const int s = it->first;
      if (!close.is_valid(t, s)) {
        ++it;  // suspended; retry next cycle
        continue;
      }
      const double price = close.value(t, s);
      const double notional = it->second * price;
      const double cost = notional * cost_rate / 2.0;
      tr.cash += notional - cost;
      out.daily_cost[t] += cost;
      out.trades.push_back({t, s, false, it->second, price, notional, cost});
      it = tr.holdings.erase(it);
    }

    // Buy the day's selection.
    const std::vector<int> selection = select(t);
    if (!selection.empty() && tr.cash > 0.0) {
      const double budget = tr.cash / (1.0 + cost_rate / 2.0);
      const double per_stock = budget / static_cast<double>(selection.size());
      for (const int s : selection) {
        const double price = close.value(t, s);
        const double shares = per_stock / price;
        const double cost = per_stock * cost_rate / 2.0;
        tr.holdings[s] += shares;
        tr.cash -= per_stock + cost;
        out.daily_cost[t] += cost;
        out.trades.push_back({t, s, true, shares, price, per_stock, cost});
      }
    } else if (selection.empty()) {
      ++skipped_days;
    }

    double wealth = 0.0;
    for (const Tranche& any : tranches) {
      wealth += any.cash;
      for (const auto& [s, shares] : any.holdings) {
        wealth += shares * last_close[s];
      }
    }
    out.end_of_day[t] = wealth;
  }
  if (skipped_days > 0 && warnings) {
    warnings->push_back("selection empty on " + std::to_string(skipped_days) +
                        " rebalance days; tranche held cash");
  }
  return out;
}

std::vector<double> market_series(const data::MarketDataset& ds) {
  const FactorPanel& close = ds.panel("close");
  std::vector<double> out(static_cast<std::size_t>(ds.days()), 1.0);
  for (int t = 1; t < ds.days(); ++t) {
    double sum = 0.0;
    int m = 0;
    for (int s = 0; s < ds.stocks(); ++s) {
      if (close.is_valid(t - 1, s) && close.is_valid(t, s)) {
        sum += close.value(t, s) / close.value(t - 1, s) - 1.0;
        ++m;
      }
    }
    const double ret = m > 0 ? sum / m : 0.0;
    out[static_cast<std::size_t>(t)] =
        out[static_cast<std::size_t>(t - 1)] * (1.0 + ret);
  }
  return out;
}

BacktestReport finish_report(WealthSeries wealth,
                             const data::MarketDataset& ds,
                             std::vector<std::string> warnings) {
  BacktestReport report;
  report.wealth = std::move(wealth);
  report.market = market_series(ds);
  report.warnings = std::move(warnings);

  const std::int64_t span = ds.calendar_days(0, ds.days() - 1);
  report.ar = annualized_return(report.wealth.final_wealth(),
                                std::max<std::int64_t>(span, 1));
  report.vol = annualized_volatility(report.wealth);
  if (report.vol > 0.0) report.sr = sharpe(report.ar, report.vol);

  std::vector<double> relative(report.wealth.end_of_day.size());
  for (std::size_t i = 0; i < relative.size(); ++i) {
    relative[i] = report.wealth.end_of_day[i] / report.market[i];
  }
  const double rel_final = relative.empty() ? 1.0 : relative.back();
  report.ar_rel =
      annualized_return(rel_final, std::max<std::int64_t>(span, 1));
  report.vol_rel = annualized_volatility(relative);
  if (report.vol_rel > 0.0) report.sr_rel = sharpe(report.ar_rel, report.vol_rel);
  return report;
}

}  // namespace

ScorePanel rank_ensemble(const std::vector<OrientedAlpha>& alphas) {
  if (alphas.empty()) {
    throw BacktestError("rank_ensemble needs at least one alpha");
  }
  const FactorPanel& first = alphas.front().matrix->panel;
  for (const OrientedAlpha& a : alphas) {
    if (!a.matrix->panel.same_shape(first)) {
      throw BacktestError("rank_ensemble: panel shapes differ");
    }
  }
  const int t_count = first.rows;
  const int n_count = first.cols;
  FactorPanel sums(t_count, n_count);
  std::vector<int> counts(static_cast<std::size_t>(t_count) * n_count, 0);

  std::vector<double> rank(n_count);
  std::vector<std::uint8_t> rank_valid(n_count);
  for (const OrientedAlpha& a : alphas) {
    for (int t = 0; t < t_count; ++t) {
      day_ranks(a.matrix->panel, t, a.orientation, rank, rank_valid);
      for (int s = 0; s < n_count; ++s) {
        if (!rank_valid[s]) continue;
        const std::size_t i = sums.index(t, s);
        sums.values[i] += rank[s];
        ++counts[i];
      }
    }
  }
  ScorePanel out;
  out.panel = FactorPanel(t_count, n_count);
  for (int t = 0; t < t_count; ++t) {
    for (int s = 0; s < n_count; ++s) {
      const std::size_t i = sums.index(t, s);
      if (counts[i] > 0) out.panel.set(t, s, sums.values[i] / counts[i]);
    }
  }
  return out;
}

BacktestReport top_k_backtest(const ScorePanel& scores,
                              const data::MarketDataset& ds, int h, int k,
                              double cost_rate) {
  if (k < 1) throw BacktestError("k must be >= 1");
  if (h < 1 || h >= ds.days()) throw BacktestError("horizon out of range");
  if (cost_rate < 0.0) throw BacktestError("cost_rate must be >= 0");
  if (!scores.panel.same_shape(ds.panel("close"))) {
    throw BacktestError("score panel shape does not match dataset");
  }

  std::vector<std::string> warnings;
  const auto select = [&](int t) -> std::vector<int> {
    std::vector<int> eligible = eligible_stocks(scores, ds.panel("close"), t);
    if (static_cast<int>(eligible.size()) < k) return {};
    std::sort(eligible.begin(), eligible.end(), [&](int a, int b) {
      const double sa = scores.panel.value(t, a);
      const double sb = scores.panel.value(t, b);
      if (sa != sb) return sa > sb;
      return a < b;
    });
    eligible.resize(static_cast<std::size_t>(k));
    return eligible;
  };
  WealthSeries wealth = simulate(ds, h, cost_rate, select, &warnings);
  return finish_report(std::move(wealth), ds, std::move(warnings));
}

std::vector<int> stratified_fold_bounds(int n_valid, int folds) {
  std::vector<int> bounds(static_cast<std::size_t>(folds) + 1, 0);
  for (int i = 0; i <= folds; ++i) {
    bounds[static_cast<std::size_t>(i)] =
        static_cast<int>(static_cast<long long>(i) * n_valid / folds);
  }
  return bounds;
}

std::vector<BacktestReport> stratified_backtest(const ScorePanel& scores,
                                                const data::MarketDataset& ds,
                                                int h, int folds) {
  if (folds < 2) throw BacktestError("folds must be >= 2");
  if (h < 1 || h >= ds.days()) throw BacktestError("horizon out of range");
  if (!scores.panel.same_shape(ds.panel("close"))) {
    throw BacktestError("score panel shape does not match dataset");
  }

  std::vector<BacktestReport> reports;
  reports.reserve(static_cast<std::size_t>(folds));
  for (int fold = 0; fold < folds; ++fold) {
    std::vector<std::string> warnings;
    const auto select = [&, fold](int t) -> std::vector<int> {
      std::vector<int> eligible =
          eligible_stocks(scores, ds.panel("close"), t);
      // Ascending scores: the top fold holds the highest ratings.
      std::sort(eligible.begin(), eligible.end(), [&](int a, int b) {
        const double sa = scores.panel.value(t, a);
        const double sb = scores.panel.value(t, b);
        if (sa != sb) return sa < sb;
        return a < b;
      });
      const std::vector<int> bounds =
          stratified_fold_bounds(static_cast<int>(eligible.size()), folds);
      const int begin = bounds[static_cast<std::size_t>(fold)];
      const int end = bounds[static_cast<std::size_t>(fold) + 1];
      return std::vector<int>(eligible.begin() + begin,
                              eligible.begin() + end);
    };
    WealthSeries wealth = simulate(ds, h, 0.0, select, &warnings);
    reports.push_back(finish_report(std::move(wealth), ds, std::move(warnings)));
  }
  return reports;
}

double annualized_return(double final_wealth, std::int64_t calendar_days) {
  if (final_wealth <= 0.0) throw BacktestError("wealth must stay positive");
  if (calendar_days < 1) throw BacktestError("calendar span must be >= 1 day");
  const double exponent = 365.0 / static_cast<double>(calendar_days);
  return std::pow(final_wealth, exponent) - 1.0;
}

double annualized_volatility(const std::vector<double>& end_of_day) {
  std::vector<double> log_returns;
  log_returns.reserve(end_of_day.size());
  double prev = 1.0;  // S_0
  for (const double wealth : end_of_day) {
    log_returns.push_back(std::log(wealth / prev));
    prev = wealth;
  }
  if (log_returns.size() < 2) return 0.0;
  double mean = 0.0;
  for (const double r : log_returns) mean += r;
  mean /= static_cast<double>(log_returns.size());
  double ss = 0.0;
  for (const double r : log_returns) ss += (r - mean) * (r - mean);
  const double daily_sd =
      std::sqrt(ss / static_cast<double>(log_returns.size() - 1));
  return daily_sd * std::sqrt(244.0);
}

double annualized_volatility(const WealthSeries& wealth) {
  return annualized_volatility(wealth.end_of_day);
}

double sharpe(double ar, double vol) {
  if (vol <= 0.0) {
    throw BacktestError("Sharpe ratio undefined for zero volatility");
  }
  return ar / vol;
}

}  // namespace alphamine::bt
