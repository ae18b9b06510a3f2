// Command-line front end: dataset synthesis, mining, alpha evaluation,
// backtesting and report emission, driven by a key=value config plus flags.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "alphamine/backtest.hpp"
#include "alphamine/engine.hpp"
#include "alphamine/evaluation.hpp"
#include "alphamine/formula.hpp"
#include "alphamine/job_config.hpp"
#include "alphamine/market_data.hpp"

namespace {

namespace fs = std::filesystem;
using namespace alphamine;

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitEmpty = 4;

struct EmptyResult : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

data::MarketDataset dataset_from_config(const cli::JobConfig& cfg) {
  if (!cfg.data_csv.empty()) return data::load_csv(cfg.data_csv);
  std::optional<data::PlantedSignal> planted;
  if (!cfg.synth_plant.empty()) {
    planted = data::PlantedSignal{dsl::parse(cfg.synth_plant),
                                  cfg.synth_strength};
  }
  return data::synth_market(cfg.synth_days, cfg.synth_stocks, planted,
                            cfg.search.seed);
}

double measured_ic(const dsl::AlphaFormula& f, const data::MarketDataset& ds,
                   int horizon) {
  const eval::AlphaMatrix a = eval::evaluate(f, ds);
  const eval::IcReport report = eval::ic(a, data::forward_returns(ds, horizon));
  return report.valid ? report.ic : 0.0;
}

std::string wealth_csv(const data::MarketDataset& ds,
                       const bt::BacktestReport& report) {
  std::string out = "date,wealth,market_wealth\n";
  for (int t = 0; t < ds.days(); ++t) {
    out += ds.calendar[t];
    out += ',';
    out += fmt(report.wealth.end_of_day[t], "%.12g");
    out += ',';
    out += fmt(report.market[t], "%.12g");
    out += '\n';
  }
  return out;
}

void append_metrics(std::string& out, const std::string& prefix,
                    const bt::BacktestReport& report) {
  out += prefix + "final_wealth: " + fmt(report.wealth.final_wealth(), "%.12g") + "\n";
  out += prefix + "ar: " + fmt(report.ar, "%.12g") + "\n";
  out += prefix + "vol: " + fmt(report.vol, "%.12g") + "\n";
  out += prefix + "sr: " + (report.sr ? fmt(*report.sr, "%.12g") : "undefined") + "\n";
  out += prefix + "ar_rel: " + fmt(report.ar_rel, "%.12g") + "\n";
  out += prefix + "vol_rel: " + fmt(report.vol_rel, "%.12g") + "\n";
  out += prefix + "sr_rel: " +
         (report.sr_rel ? fmt(*report.sr_rel, "%.12g") : "undefined") + "\n";
}

std::vector<engine::ArchiveEntry> read_library(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data::DataError("cannot open library '" + path + "'");
  return engine::parse_library(in);
}

int cmd_synth(int days, int stocks, const std::string& plant, double strength,
              std::uint64_t seed, const std::string& out_path) {
  std::optional<data::PlantedSignal> planted;
  if (!plant.empty()) {
    planted = data::PlantedSignal{dsl::parse(plant), strength};
  }
  const data::MarketDataset ds = data::synth_market(days, stocks, planted, seed);
  cli::write_file_atomic(out_path, data::to_csv(ds));
  std::cout << "wrote " << out_path << " (" << ds.days() << " days x "
            << ds.stocks() << " stocks)\n";
  if (planted) {
    std::cout << "planted " << dsl::to_text(planted->formula)
              << " measured_ic: " << fmt(measured_ic(planted->formula, ds, 1))
              << "\n";
  }
  return kExitOk;
}

int cmd_mine(const cli::JobConfig& cfg) {
  const data::MarketDataset ds = dataset_from_config(cfg);
  const engine::RunResult result = engine::run(cfg.search, ds);

  const fs::path out_dir(cfg.out_dir);
  cli::write_file_atomic((out_dir / "config_used.cfg").string(), cfg.to_text());
  cli::write_file_atomic((out_dir / "library.tsv").string(),
                         engine::serialize_library(result.library));

  std::string pool_text;
  for (std::size_t d = 0; d < result.pool.by_depth.size(); ++d) {
    for (const engine::GenePoolEntry& entry : result.pool.by_depth[d]) {
      pool_text += std::to_string(d) + "\t" + entry.text + "\t" +
                   fmt(entry.fitness, "%.17g") + "\n";
    }
  }
  cli::write_file_atomic((out_dir / "gene_pool.tsv").string(), pool_text);

  std::string log_text = "depth\trun\tgeneration\tbest\tmean\tarchive\n";
  for (const engine::GenerationStat& stat : result.log) {
    log_text += std::to_string(stat.depth) + "\t" + std::to_string(stat.run) +
                "\t" + std::to_string(stat.generation) + "\t" +
                fmt(stat.best_fitness, "%.17g") + "\t" +
                fmt(stat.mean_fitness, "%.17g") + "\t" +
                std::to_string(stat.archive_size) + "\n";
  }
  cli::write_file_atomic((out_dir / "run_log.tsv").string(), log_text);

  for (const std::string& warning : result.warnings) {
    std::cerr << "warning: " << warning << "\n";
  }
  if (result.library.empty()) {
    std::cout << "library is empty (thresholds too strict for this data)\n";
    return kExitEmpty;
  }
  std::cout << "library: " << result.library.size() << " alphas, archive "
            << result.archive.size() << ", top " << result.library[0].text
            << " ic " << fmt(result.library[0].fitness) << "\n";
  std::cout << "reports in " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& formula_text, const std::string& data_path,
             int horizon, const std::string& versus) {
  const dsl::AlphaFormula f = dsl::parse(formula_text);
  const data::MarketDataset ds = data::load_csv(data_path);
  const data::ReturnPanel returns = data::forward_returns(ds, horizon);
  const eval::AlphaMatrix a = eval::evaluate(f, ds);
  const eval::IcReport report = eval::ic(a, returns);

  std::cout << "formula: " << dsl::to_text(f) << "\n";
  if (!report.valid) {
    std::cout << "ic: invalid (too few usable days; the alpha is constant or "
                 "mostly undefined; fitness 0)\n";
    return kExitEmpty;
  }
  std::cout << "ic: " << fmt(report.ic) << "\n";
  std::cout << "orientation: " << (report.orientation >= 0 ? "+1" : "-1")
            << "\n";
  std::cout << "valid_days: " << report.valid_days << "\n";
  if (!versus.empty()) {
    const dsl::AlphaFormula g = dsl::parse(versus);
    const eval::AlphaMatrix b = eval::evaluate(g, ds);
    std::cout << "versus: " << dsl::to_text(g) << "\n";
    std::cout << "similarity: " << fmt(eval::similarity(a, b)) << "\n";
  }
  return kExitOk;
}

int cmd_backtest(const std::string& library_path, const std::string& data_path,
                 std::vector<int> horizons, int top_k, double cost_rate,
                 int folds, int top_alphas, const std::string& out_dir_text) {
  const std::vector<engine::ArchiveEntry> library = read_library(library_path);
  if (library.empty()) throw EmptyResult("library has no alphas");
  const data::MarketDataset ds = data::load_csv(data_path);

  std::vector<eval::AlphaMatrix> matrices;
  std::vector<bt::OrientedAlpha> oriented;
  const std::size_t use =
      std::min<std::size_t>(library.size(), static_cast<std::size_t>(top_alphas));
  matrices.reserve(use);
  for (std::size_t i = 0; i < use; ++i) {
    matrices.push_back(eval::evaluate(library[i].formula, ds));
  }
  for (std::size_t i = 0; i < use; ++i) {
    oriented.push_back({&matrices[i], library[i].orientation});
  }
  const bt::ScorePanel scores = bt::rank_ensemble(oriented);

  const fs::path out_dir(out_dir_text);
  for (const int h : horizons) {
    const bt::BacktestReport top = bt::top_k_backtest(scores, ds, h, top_k,
                                                      cost_rate);
    const std::vector<bt::BacktestReport> strat =
        bt::stratified_backtest(scores, ds, h, folds);

    cli::write_file_atomic(
        (out_dir / ("wealth_topk_h" + std::to_string(h) + ".csv")).string(),
        wealth_csv(ds, top));
    for (int fold = 0; fold < folds; ++fold) {
      cli::write_file_atomic(
          (out_dir / ("wealth_h" + std::to_string(h) + "_fold" +
                      std::to_string(fold) + ".csv"))
              .string(),
          wealth_csv(ds, strat[static_cast<std::size_t>(fold)]));
    }

    std::string metrics;
    metrics += "horizon: " + std::to_string(h) + "\n";
    metrics += "alphas_used: " + std::to_string(use) + "\n";
    append_metrics(metrics, "topk_", top);
    for (int fold = 0; fold < folds; ++fold) {
      metrics += "fold" + std::to_string(fold) + "_ar: " +
                 fmt(strat[static_cast<std::size_t>(fold)].ar, "%.12g") + "\n";
    }
    cli::write_file_atomic(
        (out_dir / ("metrics_h" + std::to_string(h) + ".txt")).string(),
        metrics);

    std::cout << "h=" << h << " top" << top_k << " ar " << fmt(top.ar)
              << " vol " << fmt(top.vol) << " sr "
              << (top.sr ? fmt(*top.sr) : "undefined") << " | relative ar "
              << fmt(top.ar_rel) << "\n";
    for (const std::string& warning : top.warnings) {
      std::cerr << "warning: h=" << h << " " << warning << "\n";
    }
  }
  std::cout << "reports in " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_report(const std::string& run_dir, const std::string& data_path,
               bool motivation, int horizon, std::uint64_t seed, int top,
               std::string out_dir_text) {
  const fs::path run_path(run_dir);
  const std::vector<engine::ArchiveEntry> library =
      read_library((run_path / "library.tsv").string());
  if (library.empty()) throw EmptyResult("library has no alphas");
  if (out_dir_text.empty()) out_dir_text = run_dir;

  std::cout << "rank\tic\torient\tdepth\tformula\n";
  const int show = std::min<int>(top, static_cast<int>(library.size()));
  for (int i = 0; i < show; ++i) {
    const engine::ArchiveEntry& entry = library[static_cast<std::size_t>(i)];
    std::cout << (i + 1) << "\t" << fmt(entry.fitness) << "\t"
              << (entry.orientation >= 0 ? "+1" : "-1") << "\t" << entry.depth
              << "\t" << entry.text << "\n";
  }
  std::cout << "total: " << library.size() << " alphas\n";

  if (motivation) {
    if (data_path.empty()) {
      throw cli::ConfigError("--motivation needs --data");
    }
    const data::MarketDataset ds = data::load_csv(data_path);
    engine::SearchConfig cfg;
    cfg.horizon = horizon;
    cfg.seed = seed;
    const engine::MotivationStudy study =
        engine::motivation_study(library, cfg, ds);

    std::string genes = "alpha,alpha_ic,best_root_gene,best_root_gene_ic\n";
    for (const auto& row : study.rows) {
      genes += row.alpha_text + "," + fmt(row.alpha_ic, "%.12g") + "," +
               row.best_gene_text + "," + fmt(row.best_gene_ic, "%.12g") + "\n";
    }
    std::string sample = "random_ic\n";
    for (const double ic : study.random_ics) {
      sample += fmt(ic, "%.12g") + "\n";
    }
    const fs::path out_dir(out_dir_text);
    cli::write_file_atomic((out_dir / "root_gene_ic.csv").string(), genes);
    cli::write_file_atomic((out_dir / "random_ic_sample.csv").string(), sample);
    std::cout << "motivation study depth " << study.study_depth << ": "
              << study.rows.size() << " alphas, " << study.random_ics.size()
              << " random samples; data in " << out_dir.string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alphamine: mines diverse formulaic alphas from stock panels"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic market CSV");
  int synth_days = 500;
  int synth_stocks = 30;
  std::string synth_plant;
  double synth_strength = 0.1;
  std::uint64_t synth_seed = 0;
  std::string synth_out = "synth.csv";
  synth->add_option("--days", synth_days, "trading days (>= 80)");
  synth->add_option("--stocks", synth_stocks, "stocks (>= 10)");
  synth->add_option("--plant", synth_plant, "formula to plant as signal");
  synth->add_option("--strength", synth_strength, "target mean correlation");
  synth->add_option("--seed", synth_seed, "random seed");
  synth->add_option("--out", synth_out, "output CSV path");

  // mine
  auto* mine = app.add_subcommand("mine", "run the alpha search");
  std::string mine_config;
  std::string mine_data;
  std::string mine_out_dir;
  std::vector<std::string> mine_sets;
  std::int64_t mine_seed = -1;
  int mine_workers = 0;
  int mine_max_depth = 0;
  mine->add_option("--config", mine_config, "key=value config file");
  mine->add_option("--data", mine_data, "input CSV (overrides config)");
  mine->add_option("--out-dir", mine_out_dir, "output directory");
  mine->add_option("--seed", mine_seed, "random seed override");
  mine->add_option("--workers", mine_workers, "evaluation worker threads");
  mine->add_option("--max-depth", mine_max_depth, "maximum formula depth");
  mine->add_option("--set", mine_sets, "extra key=value overrides")
      ->take_all();

  // eval
  auto* evalc = app.add_subcommand("eval", "report a formula's IC");
  std::string eval_formula;
  std::string eval_data;
  int eval_horizon = 1;
  std::string eval_versus;
  evalc->add_option("formula", eval_formula, "formula text")->required();
  evalc->add_option("--data", eval_data, "input CSV")->required();
  evalc->add_option("--horizon", eval_horizon, "return horizon in days");
  evalc->add_option("--versus", eval_versus, "formula to compare against");

  // backtest
  auto* back = app.add_subcommand("backtest", "trade a mined library");
  std::string back_library;
  std::string back_data;
  std::vector<int> back_horizons{1};
  int back_k = 10;
  double back_cost = 0.003;
  int back_folds = 10;
  int back_top_alphas = 150;
  std::string back_out = "out";
  back->add_option("--library", back_library, "library.tsv path")->required();
  back->add_option("--data", back_data, "input CSV")->required();
  back->add_option("--horizon", back_horizons, "holding periods")->take_all();
  back->add_option("--k", back_k, "stocks held per day");
  back->add_option("--cost", back_cost, "round-trip transaction cost");
  back->add_option("--folds", back_folds, "stratified fold count");
  back->add_option("--top-alphas", back_top_alphas, "alphas in the ensemble");
  back->add_option("--out-dir", back_out, "output directory");

  // report
  auto* rep = app.add_subcommand("report", "summarize a mining run");
  std::string rep_run_dir;
  std::string rep_data;
  bool rep_motivation = false;
  int rep_horizon = 1;
  std::uint64_t rep_seed = 0;
  int rep_top = 20;
  std::string rep_out;
  rep->add_option("--run-dir", rep_run_dir, "mine output directory")
      ->required();
  rep->add_option("--data", rep_data, "input CSV (for --motivation)");
  rep->add_flag("--motivation", rep_motivation,
                "emit root-gene IC study data");
  rep->add_option("--horizon", rep_horizon, "return horizon in days");
  rep->add_option("--seed", rep_seed, "random-sample seed");
  rep->add_option("--top", rep_top, "rows to print");
  rep->add_option("--out-dir", rep_out, "study output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (synth->parsed()) {
      return cmd_synth(synth_days, synth_stocks, synth_plant, synth_strength,
                       synth_seed, synth_out);
    }
    if (mine->parsed()) {
      cli::JobConfig cfg;
      if (!mine_config.empty()) cfg = cli::JobConfig::load(mine_config);
      std::vector<std::string> problems;
      for (const std::string& kv : mine_sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos ||
            !cfg.apply(kv.substr(0, eq), kv.substr(eq + 1))) {
          problems.push_back("bad --set '" + kv + "'");
        }
      }
      if (!mine_data.empty()) cfg.data_csv = mine_data;
      if (!mine_out_dir.empty()) cfg.out_dir = mine_out_dir;
      if (mine_seed >= 0) cfg.search.seed = static_cast<std::uint64_t>(mine_seed);
      if (mine_workers > 0) cfg.search.worker_count = mine_workers;
      if (mine_max_depth > 0) cfg.search.max_depth = mine_max_depth;
      for (const std::string& p : cfg.validate()) problems.push_back(p);
      if (!problems.empty()) {
        for (const std::string& p : problems) std::cerr << "config: " << p << "\n";
        return kExitConfig;
      }
      return cmd_mine(cfg);
    }
    if (evalc->parsed()) {
      return cmd_eval(eval_formula, eval_data, eval_horizon, eval_versus);
    }
    if (back->parsed()) {
      return cmd_backtest(back_library, back_data, back_horizons, back_k,
                          back_cost, back_folds, back_top_alphas, back_out);
    }
    if (rep->parsed()) {
      return cmd_report(rep_run_dir, rep_data, rep_motivation, rep_horizon,
                        rep_seed, rep_top, rep_out);
    }
  } catch (const dsl::ParseError& e) {
    std::cerr << "formula error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const data::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const EmptyResult& e) {
    std::cerr << "empty result: " << e.what() << "\n";
    return kExitEmpty;
  } catch (const engine::EngineError& e) {
    std::cerr << "engine: " << e.what() << "\n";
    return kExitEmpty;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
