#include "alphamine/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "alphamine/evaluation.hpp"
#include "alphamine/rng.hpp"

namespace alphamine::data {

namespace {

constexpr const char* kBasePanels[] = {"open", "high",   "low",
                                       "close", "volume", "vwap"};

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool parse_double(std::string_view field, double& out) {
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

bool parse_iso_date(std::string_view s, int& y, int& m, int& d) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  const auto digits = [](std::string_view part, int& out) {
    out = 0;
    for (const char c : part) {
      if (c < '0' || c > '9') return false;
      out = out * 10 + (c - '0');
    }
    return true;
  };
  if (!digits(s.substr(0, 4), y) || !digits(s.substr(5, 2), m) ||
      !digits(s.substr(8, 2), d)) {
    return false;
  }
  return m >= 1 && m <= 12 && d >= 1 && d <= 31;
}

std::string format_date(std::int64_t serial) {
  int y, m, d;
  civil_from_days(serial, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return buf;
}

struct CsvRow {
  std::string date;
  std::string ticker;
  double open, high, low, close, volume, vwap;
  bool has_vwap = false;
};

void collect_leaf_factors(const dsl::AlphaFormula::Node& node,
                          std::set<std::string>& out) {
  if (node.is_leaf()) {
    out.insert(node.factor);
    return;
  }
  for (const auto& child : node.children) collect_leaf_factors(child, out);
}

}  // namespace

const FactorPanel& MarketDataset::panel(std::string_view name) const {
  const auto it = panels.find(std::string(name));
  if (it == panels.end()) {
    throw DataError("unknown factor panel '" + std::string(name) + "'");
  }
  return it->second;
}

std::int64_t days_from_civil(int year, int month, int day) {
  year -= month <= 2;
  const std::int64_t era = (year >= 0 ? year : year - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(year - era * 400);
  const unsigned doy =
      (153u * static_cast<unsigned>(month + (month > 2 ? -3 : 9)) + 2) / 5 +
      static_cast<unsigned>(day) - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t serial, int& year, int& month, int& day) {
  serial += 719468;
  const std::int64_t era = (serial >= 0 ? serial : serial - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(serial - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  month = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  year = static_cast<int>(y + (month <= 2));
}

MarketDataset load_csv_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw DataError("empty input");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string header = lower(line);
  bool has_vwap_col;
  if (header == "date,ticker,open,high,low,close,volume,vwap") {
    has_vwap_col = true;
  } else if (header == "date,ticker,open,high,low,close,volume") {
    has_vwap_col = false;
  } else {
    throw DataError(
        "line 1: header must be date,ticker,open,high,low,close,volume[,vwap]");
  }
  const std::size_t n_fields = has_vwap_col ? 8 : 7;

  std::vector<CsvRow> rows;
  std::set<std::pair<std::string, std::string>> seen;
  std::set<std::string> dates;
  std::set<std::string> tickers;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto fields = split_fields(line);
    if (fields.size() != n_fields) {
      throw DataError(where + "expected " + std::to_string(n_fields) +
                      " fields, got " + std::to_string(fields.size()));
    }
    CsvRow row;
    int y, m, d;
    if (!parse_iso_date(fields[0], y, m, d)) {
      throw DataError(where + "unparseable date '" + std::string(fields[0]) +
                      "'");
    }
    row.date = std::string(fields[0]);
    row.ticker = std::string(fields[1]);
    if (row.ticker.empty()) throw DataError(where + "empty ticker");

    const char* names[] = {"open", "high", "low", "close", "volume", "vwap"};
    double* slots[] = {&row.open, &row.high,   &row.low,
                       &row.close, &row.volume, &row.vwap};
    for (std::size_t i = 0; i + (has_vwap_col ? 0 : 1) < 6; ++i) {
      if (!parse_double(fields[2 + i], *slots[i])) {
        throw DataError(where + "unparseable " + names[i] + " '" +
                        std::string(fields[2 + i]) + "'");
      }
    }
    row.has_vwap = has_vwap_col;
    const double prices[] = {row.open, row.high, row.low, row.close};
    for (std::size_t i = 0; i < 4; ++i) {
      if (prices[i] <= 0.0) {
        throw DataError(where + "non-positive " + names[i]);
      }
    }
    if (has_vwap_col && row.vwap <= 0.0) {
      throw DataError(where + "non-positive vwap");
    }
    if (row.volume < 0.0) throw DataError(where + "negative volume");
    if (row.low > std::min(row.open, row.close) ||
        row.high < std::max(row.open, row.close)) {
      throw DataError(where + "high/low do not bracket open/close");
    }
    if (!seen.emplace(row.date, row.ticker).second) {
      throw DataError(where + "duplicate (date,ticker) pair " + row.date +
                      "," + row.ticker);
    }
    dates.insert(row.date);
    tickers.insert(row.ticker);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("no data rows");

  MarketDataset ds;
  ds.calendar.assign(dates.begin(), dates.end());
  ds.tickers.assign(tickers.begin(), tickers.end());
  ds.vwap_is_proxy = !has_vwap_col;
  const int t_count = ds.days();
  const int n_count = ds.stocks();
  for (const char* name : kBasePanels) {
    ds.panels.emplace(name, FactorPanel(t_count, n_count));
  }
  ds.day_serial.reserve(ds.calendar.size());
  for (const std::string& date : ds.calendar) {
    int y, m, d;
    parse_iso_date(date, y, m, d);
    ds.day_serial.push_back(days_from_civil(y, m, d));
  }

  std::map<std::string, int> date_index;
  for (int t = 0; t < t_count; ++t) date_index[ds.calendar[t]] = t;
  std::map<std::string, int> ticker_index;
  for (int s = 0; s < n_count; ++s) ticker_index[ds.tickers[s]] = s;

  FactorPanel& open = ds.panels.at("open");
  FactorPanel& high = ds.panels.at("high");
  FactorPanel& low = ds.panels.at("low");
  FactorPanel& close = ds.panels.at("close");
  FactorPanel& volume = ds.panels.at("volume");
  FactorPanel& vwap = ds.panels.at("vwap");
  for (const CsvRow& row : rows) {
    const int t = date_index[row.date];
    const int s = ticker_index[row.ticker];
    open.set(t, s, row.open);
    high.set(t, s, row.high);
    low.set(t, s, row.low);
    close.set(t, s, row.close);
    volume.set(t, s, row.volume);
    vwap.set(t, s,
             row.has_vwap ? row.vwap : (row.high + row.low + row.close) / 3.0);
  }
  return ds;
}

MarketDataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_csv_text(buf.str());
}

std::string to_csv(const MarketDataset& ds) {
  std::string out = "date,ticker,open,high,low,close,volume,vwap\n";
  const FactorPanel& open = ds.panel("open");
  const FactorPanel& high = ds.panel("high");
  const FactorPanel& low = ds.panel("low");
  const FactorPanel& close = ds.panel("close");
  const FactorPanel& volume = ds.panel("volume");
  const FactorPanel& vwap = ds.panel("vwap");
  for (int t = 0; t < ds.days(); ++t) {
    for (int s = 0; s < ds.stocks(); ++s) {
      if (!open.is_valid(t, s) || !high.is_valid(t, s) ||
          !low.is_valid(t, s) || !close.is_valid(t, s) ||
          !volume.is_valid(t, s) || !vwap.is_valid(t, s)) {
        continue;
      }
      out += ds.calendar[t];
      out += ',';
      out += ds.tickers[s];
      out += ',';
      out += format_value(open.value(t, s));
      out += ',';
      out += format_value(high.value(t, s));
      out += ',';
      out += format_value(low.value(t, s));
      out += ',';
      out += format_value(close.value(t, s));
      out += ',';
      out += format_value(volume.value(t, s));
      out += ',';
      out += format_value(vwap.value(t, s));
      out += '\n';
    }
  }
  return out;
}

void write_csv(const MarketDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << to_csv(ds);
  if (!out) throw DataError("write failed for '" + path + "'");
}

ReturnPanel forward_returns(const MarketDataset& ds, int horizon) {
  const int t_count = ds.days();
  if (horizon < 1 || horizon >= t_count) {
    throw DataError("horizon " + std::to_string(horizon) +
                    " out of range for " + std::to_string(t_count) + " days");
  }
  const FactorPanel& close = ds.panel("close");
  ReturnPanel out;
  out.horizon = horizon;
  out.panel = FactorPanel(t_count, ds.stocks());
  for (int t = 0; t + horizon < t_count; ++t) {
    for (int s = 0; s < ds.stocks(); ++s) {
      if (close.is_valid(t, s) && close.is_valid(t + horizon, s)) {
        const double c0 = close.value(t, s);
        out.panel.set(t, s, (close.value(t + horizon, s) - c0) / c0);
      }
    }
  }
  return out;
}

namespace {

// Panels under construction for synth_market; rows beyond `built_rows` are
// garbage until filled.
struct SynthPanels {
  FactorPanel open, high, low, close, volume, vwap;

  explicit SynthPanels(int days, int stocks)
      : open(days, stocks),
        high(days, stocks),
        low(days, stocks),
        close(days, stocks),
        volume(days, stocks),
        vwap(days, stocks) {}

  MarketDataset prefix(const MarketDataset& proto, int rows) const {
    MarketDataset ds;
    ds.calendar.assign(proto.calendar.begin(), proto.calendar.begin() + rows);
    ds.day_serial.assign(proto.day_serial.begin(),
                         proto.day_serial.begin() + rows);
    ds.tickers = proto.tickers;
    const int n = static_cast<int>(proto.tickers.size());
    const auto slice = [&](const FactorPanel& src) {
      FactorPanel p(rows, n);
      const std::size_t count = static_cast<std::size_t>(rows) * n;
      std::copy_n(src.values.begin(), count, p.values.begin());
      std::copy_n(src.valid.begin(), count, p.valid.begin());
      return p;
    };
    ds.panels.emplace("open", slice(open));
    ds.panels.emplace("high", slice(high));
    ds.panels.emplace("low", slice(low));
    ds.panels.emplace("close", slice(close));
    ds.panels.emplace("volume", slice(volume));
    ds.panels.emplace("vwap", slice(vwap));
    return ds;
  }
};

}  // namespace

MarketDataset synth_market(int n_days, int n_stocks,
                           const std::optional<PlantedSignal>& planted,
                           std::uint64_t seed) {
  if (n_days < 80) throw DataError("synth_market needs at least 80 days");
  if (n_stocks < 10) throw DataError("synth_market needs at least 10 stocks");
  if (planted) {
    std::set<std::string> leaves;
    collect_leaf_factors(planted->formula.root, leaves);
    for (const std::string& leaf : leaves) {
      if (!dsl::is_base_factor(leaf)) {
        throw DataError("planted formula references unregistered factor '" +
                        leaf + "'");
      }
    }
    if (planted->strength < 0.0 || planted->strength > 1.0) {
      throw DataError("planted strength must be in [0,1]");
    }
  }

  MarketDataset ds;
  ds.tickers.reserve(n_stocks);
  for (int s = 0; s < n_stocks; ++s) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "S%04d", s + 1);
    ds.tickers.emplace_back(buf);
  }
  // Weekday calendar starting on a Monday.
  std::int64_t serial = days_from_civil(2015, 1, 5);
  while (static_cast<int>(ds.calendar.size()) < n_days) {
    const int weekday = static_cast<int>(((serial % 7) + 11) % 7);  // 0 = Mon
    if (weekday < 5) {
      ds.calendar.push_back(format_date(serial));
      ds.day_serial.push_back(serial);
    }
    ++serial;
  }

  Rng rng(Rng::mix(seed, 0x5a17b3c1));
  SynthPanels p(n_days, n_stocks);

  constexpr double kMu = 0.0002;
  constexpr double kSigma = 0.02;
  constexpr double kGapSigma = 0.004;
  constexpr double kRangeSigma = 0.006;
  constexpr double kVolumeSigma = 0.6;

  std::vector<double> close_now(n_stocks);
  std::vector<double> volume_base(n_stocks);
  for (int s = 0; s < n_stocks; ++s) close_now[s] = 20.0 * std::exp(2.3 * rng.uniform());
  for (int s = 0; s < n_stocks; ++s) volume_base[s] = std::exp(12.0 + 1.5 * rng.normal());

  const auto fill_intraday = [&](int t, int s, double prev_close,
                                 double close) {
    const double open = prev_close * std::exp(kGapSigma * rng.normal());
    const double hi0 = std::max(open, close);
    const double lo0 = std::min(open, close);
    const double high = hi0 * std::exp(kRangeSigma * std::fabs(rng.normal()));
    const double low = lo0 * std::exp(-kRangeSigma * std::fabs(rng.normal()));
    const double vwap = low + (0.2 + 0.6 * rng.uniform()) * (high - low);
    const double volume = volume_base[s] * std::exp(kVolumeSigma * rng.normal());
    p.open.set(t, s, open);
    p.high.set(t, s, high);
    p.low.set(t, s, low);
    p.close.set(t, s, close);
    p.vwap.set(t, s, vwap);
    p.volume.set(t, s, volume);
  };

  for (int s = 0; s < n_stocks; ++s) fill_intraday(0, s, close_now[s], close_now[s]);

  const double rho = planted ? planted->strength : 0.0;
  const double noise_scale = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  std::vector<double> zscores(n_stocks, 0.0);

  for (int t = 0; t + 1 < n_days; ++t) {
    bool tilt = false;
    if (planted && rho > 0.0) {
      const MarketDataset prefix = p.prefix(ds, t + 1);
      const eval::AlphaMatrix alpha = eval::evaluate(planted->formula, prefix);
      double sum = 0.0, sumsq = 0.0;
      int m = 0;
      double lo = 0.0, hi = 0.0;
      for (int s = 0; s < n_stocks; ++s) {
        if (!alpha.panel.is_valid(t, s)) continue;
        const double v = alpha.panel.value(t, s);
        if (m == 0) {
          lo = hi = v;
        } else {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        sum += v;
        sumsq += v * v;
        ++m;
      }
      if (m >= 3 && hi > lo) {
        const double mean = sum / m;
        const double var = std::max(0.0, sumsq / m - mean * mean);
        const double sd = std::sqrt(var);
        if (sd > 0.0) {
          for (int s = 0; s < n_stocks; ++s) {
            zscores[s] = alpha.panel.is_valid(t, s)
                             ? (alpha.panel.value(t, s) - mean) / sd
                             : 0.0;
          }
          tilt = true;
        }
      }
    }
    for (int s = 0; s < n_stocks; ++s) {
      const double eta = rng.normal();
      const double shock =
          tilt ? rho * zscores[s] + noise_scale * eta : eta;
      const double prev = close_now[s];
      close_now[s] = prev * std::exp(kMu + kSigma * shock);
      fill_intraday(t + 1, s, prev, close_now[s]);
    }
  }

  ds.panels.emplace("open", std::move(p.open));
  ds.panels.emplace("high", std::move(p.high));
  ds.panels.emplace("low", std::move(p.low));
  ds.panels.emplace("close", std::move(p.close));
  ds.panels.emplace("volume", std::move(p.volume));
  ds.panels.emplace("vwap", std::move(p.vwap));
  return ds;
}

}  // namespace alphamine::data
