#include <doctest.h>

#include <cmath>
#include <string>

#include "alphamine/evaluation.hpp"
#include "alphamine/formula.hpp"
#include "alphamine/market_data.hpp"
#include "oracles.hpp"

using namespace alphamine;

namespace {

const char* kSmallCsv =
    "date,ticker,open,high,low,close,volume,vwap\n"
    "2020-01-02,AAA,10,12,9,11,1000,10.5\n"
    "2020-01-02,BBB,20,22,19,21,2000,20.5\n"
    "2020-01-02,CCC,30,33,29,31,3000,30.5\n"
    "2020-01-03,AAA,11,13,10,12,1100,11.5\n"
    "2020-01-03,BBB,21,23,20,22,2100,21.5\n"
    "2020-01-03,CCC,31,34,30,32,3100,31.5\n";

double planted_ic(const data::MarketDataset& ds, const std::string& formula) {
  const eval::AlphaMatrix a = eval::evaluate(dsl::parse(formula), ds);
  const eval::IcReport report = eval::ic(a, data::forward_returns(ds, 1));
  REQUIRE(report.valid);
  return report.raw_mean;
}

}  // namespace

TEST_CASE("load_csv produces dense aligned panels") {
  const data::MarketDataset ds = data::load_csv_text(kSmallCsv);
  CHECK(ds.days() == 2);
  CHECK(ds.stocks() == 3);
  CHECK(ds.calendar[0] == "2020-01-02");
  CHECK(ds.tickers == std::vector<std::string>{"AAA", "BBB", "CCC"});
  CHECK_FALSE(ds.vwap_is_proxy);
  CHECK(ds.panel("close").value(0, 0) == 11.0);
  CHECK(ds.panel("vwap").value(1, 2) == 31.5);
  CHECK(ds.panel("open").valid_count() == 6);
  CHECK(ds.calendar_days(0, 1) == 1);
}

TEST_CASE("a missing row leaves that cell invalid in every panel") {
  std::string csv(kSmallCsv);
  csv.erase(csv.find("2020-01-03,BBB"), std::string("2020-01-03,BBB,21,23,20,22,2100,21.5\n").size());
  const data::MarketDataset ds = data::load_csv_text(csv);
  CHECK(ds.days() == 2);
  CHECK(ds.stocks() == 3);
  for (const char* name : {"open", "high", "low", "close", "volume", "vwap"}) {
    CHECK_FALSE(ds.panel(name).is_valid(1, 1));
    CHECK(ds.panel(name).is_valid(1, 0));
  }
}

TEST_CASE("load_csv rejects bad input with the offending line") {
  std::string dup(kSmallCsv);
  dup += "2020-01-03,CCC,31,34,30,32,3100,31.5\n";
  CHECK_THROWS_WITH_AS(data::load_csv_text(dup), doctest::Contains("line 8"),
                       data::DataError);
  CHECK_THROWS_WITH_AS(data::load_csv_text(dup), doctest::Contains("duplicate"),
                       data::DataError);

  std::string negative(kSmallCsv);
  negative.replace(negative.find(",11,1000"), 3, ",-1");
  CHECK_THROWS_WITH_AS(data::load_csv_text(negative),
                       doctest::Contains("line 2"), data::DataError);

  std::string garbled(kSmallCsv);
  garbled.replace(garbled.find("1000"), 4, "10x0");
  CHECK_THROWS_AS(data::load_csv_text(garbled), data::DataError);

  std::string bad_ohlc(kSmallCsv);
  bad_ohlc.replace(bad_ohlc.find("10,12,9,11"), 10, "10,10.5,9,11");
  CHECK_THROWS_WITH_AS(data::load_csv_text(bad_ohlc),
                       doctest::Contains("bracket"), data::DataError);

  CHECK_THROWS_WITH_AS(data::load_csv_text("foo,bar\n1,2\n"),
                       doctest::Contains("header"), data::DataError);
}

TEST_CASE("missing vwap column falls back to the typical price") {
  std::string csv =
      "date,ticker,open,high,low,close,volume\n"
      "2020-01-02,AAA,10,12,9,11,1000\n"
      "2020-01-02,BBB,20,22,19,21,2000\n"
      "2020-01-02,CCC,30,33,29,31,3000\n";
  const data::MarketDataset ds = data::load_csv_text(csv);
  CHECK(ds.vwap_is_proxy);
  CHECK(ds.panel("vwap").value(0, 0) == doctest::Approx((12 + 9 + 11) / 3.0));
}

TEST_CASE("csv round trip reproduces the dataset exactly") {
  const data::MarketDataset ds =
      data::synth_market(90, 10, std::nullopt, 123);
  const data::MarketDataset back = data::load_csv_text(data::to_csv(ds));
  CHECK(back.calendar == ds.calendar);
  CHECK(back.tickers == ds.tickers);
  CHECK(back.day_serial == ds.day_serial);
  for (const char* name : {"open", "high", "low", "close", "volume", "vwap"}) {
    CHECK(back.panel(name) == ds.panel(name));
  }
}

TEST_CASE("forward_returns matches the definition") {
  const data::MarketDataset ds = data::load_csv_text(kSmallCsv);
  const data::ReturnPanel r = data::forward_returns(ds, 1);
  CHECK(r.panel.value(0, 0) == doctest::Approx((12.0 - 11.0) / 11.0).epsilon(1e-12));
  CHECK_FALSE(r.panel.is_valid(1, 0));  // last h rows invalid

  // close 100 -> 110 gives 0.10
  std::string csv =
      "date,ticker,open,high,low,close,volume,vwap\n"
      "2020-01-02,AAA,100,101,99,100,1,100\n"
      "2020-01-02,BBB,100,101,99,100,1,100\n"
      "2020-01-02,CCC,100,101,99,100,1,100\n"
      "2020-01-03,AAA,110,111,109,110,1,110\n"
      "2020-01-03,BBB,110,111,109,110,1,110\n"
      "2020-01-03,CCC,110,111,109,110,1,110\n";
  const data::MarketDataset jump = data::load_csv_text(csv);
  CHECK(data::forward_returns(jump, 1).panel.value(0, 0) ==
        doctest::Approx(0.10).epsilon(1e-12));

  CHECK_THROWS_AS(data::forward_returns(ds, 2), data::DataError);
  CHECK_THROWS_AS(data::forward_returns(ds, 0), data::DataError);
}

TEST_CASE("forward_returns of a constant close is all zeros") {
  const data::MarketDataset ds = data::synth_market(90, 10, std::nullopt, 5);
  data::MarketDataset flat = ds;
  FactorPanel& close = flat.panels.at("close");
  for (double& v : close.values) v = 50.0;
  // keep high/low brackets to stay consistent
  for (double& v : flat.panels.at("high").values) v = 55.0;
  for (double& v : flat.panels.at("low").values) v = 45.0;
  for (double& v : flat.panels.at("open").values) v = 50.0;
  const data::ReturnPanel r = data::forward_returns(flat, 1);
  for (int t = 0; t + 1 < flat.days(); ++t) {
    for (int s = 0; s < flat.stocks(); ++s) {
      CHECK(r.panel.value(t, s) == 0.0);
    }
  }
}

TEST_CASE("forward_returns matches a scalar loop on random panels") {
  const data::MarketDataset ds = data::synth_market(90, 10, std::nullopt, 99);
  const FactorPanel& close = ds.panel("close");
  for (const int h : {1, 5}) {
    const data::ReturnPanel r = data::forward_returns(ds, h);
    int checked = 0;
    for (int t = 0; t < ds.days(); ++t) {
      for (int s = 0; s < ds.stocks(); ++s) {
        if (t + h < ds.days()) {
          const double expected =
              (close.value(t + h, s) - close.value(t, s)) / close.value(t, s);
          CHECK(r.panel.is_valid(t, s));
          CHECK(r.panel.value(t, s) == doctest::Approx(expected).epsilon(1e-12));
          ++checked;
        } else {
          CHECK_FALSE(r.panel.is_valid(t, s));
        }
      }
    }
    CHECK(checked == (ds.days() - h) * ds.stocks());
  }
}

TEST_CASE("synthetic markets are deterministic in the seed") {
  const data::MarketDataset a = data::synth_market(120, 12, std::nullopt, 42);
  const data::MarketDataset b = data::synth_market(120, 12, std::nullopt, 42);
  CHECK(data::to_csv(a) == data::to_csv(b));

  const data::MarketDataset c = data::synth_market(120, 12, std::nullopt, 43);
  CHECK(data::to_csv(a) != data::to_csv(c));

  const std::optional<data::PlantedSignal> planted =
      data::PlantedSignal{dsl::parse("div(vwap,close)"), 0.1};
  const data::MarketDataset p1 = data::synth_market(120, 12, planted, 42);
  const data::MarketDataset p2 = data::synth_market(120, 12, planted, 42);
  CHECK(data::to_csv(p1) == data::to_csv(p2));
}

TEST_CASE("synthetic prices respect the intraday ordering invariant") {
  const data::MarketDataset ds = data::synth_market(150, 15, std::nullopt, 8);
  const FactorPanel& open = ds.panel("open");
  const FactorPanel& high = ds.panel("high");
  const FactorPanel& low = ds.panel("low");
  const FactorPanel& close = ds.panel("close");
  const FactorPanel& volume = ds.panel("volume");
  const FactorPanel& vwap = ds.panel("vwap");
  for (int t = 0; t < ds.days(); ++t) {
    for (int s = 0; s < ds.stocks(); ++s) {
      CHECK(low.value(t, s) > 0.0);
      CHECK(low.value(t, s) <= std::min(open.value(t, s), close.value(t, s)));
      CHECK(std::max(open.value(t, s), close.value(t, s)) <=
            high.value(t, s));
      CHECK(volume.value(t, s) >= 0.0);
      CHECK(vwap.value(t, s) >= low.value(t, s));
      CHECK(vwap.value(t, s) <= high.value(t, s));
    }
  }
}

TEST_CASE("an unplanted market carries no signal") {
  const data::MarketDataset ds =
      data::synth_market(500, 30, std::nullopt, 2024);
  for (const char* formula : {"div(vwap,close)", "ts_mean(volume,5)"}) {
    CHECK(std::fabs(planted_ic(ds, formula)) < 0.05);
  }
}

TEST_CASE("a planted signal hits its target correlation band") {
  const std::optional<data::PlantedSignal> planted =
      data::PlantedSignal{dsl::parse("div(vwap,close)"), 0.1};
  const data::MarketDataset ds = data::synth_market(500, 30, planted, 7);
  const double ic = planted_ic(ds, "div(vwap,close)");
  CHECK(ic >= 0.05);
  CHECK(ic <= 0.15);
}

TEST_CASE("synth_market validates its inputs") {
  CHECK_THROWS_AS(data::synth_market(50, 30, std::nullopt, 1),
                  data::DataError);
  CHECK_THROWS_AS(data::synth_market(100, 5, std::nullopt, 1),
                  data::DataError);
  dsl::AlphaFormula bad;
  bad.root.factor = "nonsense";
  CHECK_THROWS_AS(
      data::synth_market(100, 10, data::PlantedSignal{bad, 0.1}, 1),
      data::DataError);
}

TEST_CASE("civil date conversions agree in both directions") {
  CHECK(data::days_from_civil(1970, 1, 1) == 0);
  CHECK(data::days_from_civil(2015, 1, 5) ==
        data::days_from_civil(2015, 1, 4) + 1);
  for (std::int64_t serial : {0LL, 10000LL, 16440LL, 20000LL}) {
    int y, m, d;
    data::civil_from_days(serial, y, m, d);
    CHECK(data::days_from_civil(y, m, d) == serial);
  }
}
