#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "alphamine/formula.hpp"
#include "alphamine/panel.hpp"

namespace alphamine::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Immutable after construction; safe for concurrent readers.
struct MarketDataset {
  std::vector<std::string> calendar;  // ISO dates, ascending
  std::vector<std::string> tickers;   // ascending
  std::map<std::string, FactorPanel> panels;
  std::vector<std::int64_t> day_serial;  // days since civil epoch, per date
  bool vwap_is_proxy = false;            // vwap derived as (high+low+close)/3

  int days() const { return static_cast<int>(calendar.size()); }
  int stocks() const { return static_cast<int>(tickers.size()); }
  bool has_panel(std::string_view name) const {
    return panels.find(std::string(name)) != panels.end();
  }
  const FactorPanel& panel(std::string_view name) const;
  // Elapsed calendar days between two trading dates.
  std::int64_t calendar_days(int t0, int t1) const {
    return day_serial[t1] - day_serial[t0];
  }
};

struct ReturnPanel {
  FactorPanel panel;
  int horizon = 1;
};

// CSV schema: date,ticker,open,high,low,close,volume[,vwap] (header
// case-insensitive). Builds dense panels over the union calendar x ticker
// set; absent rows are invalid cells. Missing vwap column falls back to the
// typical price (high+low+close)/3 and sets vwap_is_proxy.
MarketDataset load_csv(const std::string& path);

// Emits the same schema; a row is written where all base panels are valid.
// Values are printed with enough digits that load_csv(write_csv(ds))
// reproduces ds exactly.
void write_csv(const MarketDataset& ds, const std::string& path);
std::string to_csv(const MarketDataset& ds);
MarketDataset load_csv_text(const std::string& text);

// r(h)[t,s] = (close[t+h,s] - close[t,s]) / close[t,s]; valid where both
// closes are valid, so the last h rows are invalid.
ReturnPanel forward_returns(const MarketDataset& ds, int horizon);

struct PlantedSignal {
  dsl::AlphaFormula formula;
  double strength = 0.0;  // target mean per-day correlation with r(1)
};

// Deterministic synthetic market: geometric random-walk closes with intraday
// open/high/low structure, vwap inside the day range and lognormal volume.
// When a signal is planted, each next-day cross-sectional return is tilted
// toward the z-scored signal so its measured correlation with r(1) averages
// approximately `strength`.
MarketDataset synth_market(int n_days, int n_stocks,
                           const std::optional<PlantedSignal>& planted,
                           std::uint64_t seed);

// Days since 1970-01-01 for a civil date (proleptic Gregorian).
std::int64_t days_from_civil(int year, int month, int day);
void civil_from_days(std::int64_t serial, int& year, int& month, int& day);

}  // namespace alphamine::data
