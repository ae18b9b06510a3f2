#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "alphamine/job_config.hpp"

using namespace alphamine;
namespace fs = std::filesystem;

namespace {

const fs::path kWorkRoot = fs::temp_directory_path() / "alphamine_cli_tests";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = kWorkRoot / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Runs the CLI binary; returns its exit code.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string command = std::string("\"") + ALPHAMINE_CLI_PATH + "\" " +
                              args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(command.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("job config round trips through its text form") {
  cli::JobConfig cfg;
  cfg.data_csv = "panel.csv";
  cfg.search.population_size = 123;
  cfg.search.ic_min_gene = 0.031;
  cfg.search.seed = 987654321;
  cfg.search.mutation_prob = 0.125;
  cfg.horizons = {1, 5};
  cfg.cost_rate = 0.0035;
  cfg.out_dir = "results/run_a";

  const cli::JobConfig back = cli::JobConfig::from_text(cfg.to_text());
  CHECK(back.to_text() == cfg.to_text());
  CHECK(back.data_csv == cfg.data_csv);
  CHECK(back.search.population_size == 123);
  CHECK(back.search.ic_min_gene == cfg.search.ic_min_gene);
  CHECK(back.horizons == cfg.horizons);
}

TEST_CASE("job config parsing tolerates comments and blanks") {
  const cli::JobConfig cfg = cli::JobConfig::from_text(
      "# experiment 12\n"
      "\n"
      "data_csv = my.csv\n"
      "  population =  64 \n");
  CHECK(cfg.data_csv == "my.csv");
  CHECK(cfg.search.population_size == 64);
}

TEST_CASE("job config rejects unknown keys with line numbers") {
  CHECK_THROWS_WITH_AS(
      cli::JobConfig::from_text("data_csv = a.csv\nbogus_key = 3\n"),
      doctest::Contains("line 2"), cli::ConfigError);
}

TEST_CASE("job config validation lists every problem at once") {
  cli::JobConfig cfg;
  cfg.search.population_size = 1;
  cfg.search.sim_max = 2.0;
  cfg.top_k = 0;
  const std::vector<std::string> problems = cfg.validate();
  CHECK(problems.size() >= 4);  // data source, population, sim_max, top_k
}

TEST_CASE("atomic writes leave no temporary file behind") {
  const fs::path dir = fresh_dir("atomic");
  const fs::path target = dir / "nested" / "file.txt";
  cli::write_file_atomic(target.string(), "payload");
  CHECK(read_file(target) == "payload");
  CHECK_FALSE(fs::exists(target.string() + ".tmp"));
  // overwrite in place
  cli::write_file_atomic(target.string(), "second");
  CHECK(read_file(target) == "second");
}

TEST_CASE("cli end to end: synth, mine, eval, backtest, report") {
  const fs::path dir = fresh_dir("end_to_end");
  const fs::path csv = dir / "market.csv";
  const fs::path log = dir / "log.txt";

  // synth is deterministic
  CHECK(run_cli("synth --days 160 --stocks 12 --plant div(vwap,close) "
                "--strength 0.15 --seed 5 --out \"" +
                    csv.string() + "\"",
                log) == 0);
  const std::string first = read_file(csv);
  CHECK(run_cli("synth --days 160 --stocks 12 --plant div(vwap,close) "
                "--strength 0.15 --seed 5 --out \"" +
                    csv.string() + "\"",
                log) == 0);
  CHECK(read_file(csv) == first);

  // eval prints an IC line
  CHECK(run_cli("eval \"div(vwap,close)\" --data \"" + csv.string() + "\"",
                log) == 0);
  CHECK(read_file(log).find("ic:") != std::string::npos);

  // degenerate formula: explicit message, empty-result exit code
  CHECK(run_cli("eval \"sub(close,close)\" --data \"" + csv.string() + "\"",
                log) == 4);
  CHECK(read_file(log).find("invalid") != std::string::npos);

  // parse errors exit with the config code and a span
  CHECK(run_cli("eval \"div(close\" --data \"" + csv.string() + "\"", log) ==
        2);
  CHECK(run_cli("eval \"frob(close,open)\" --data \"" + csv.string() + "\"",
                log) == 2);

  // missing data file is a data error
  CHECK(run_cli("eval close --data \"" + (dir / "absent.csv").string() + "\"",
                log) == 3);

  // mine a small library
  const fs::path run_dir = dir / "run";
  CHECK(run_cli("mine --data \"" + csv.string() + "\" --out-dir \"" +
                    run_dir.string() +
                    "\" --seed 9 --max-depth 2 --set population=40 "
                    "--set generations=4 --set runs_per_depth=1 "
                    "--set warm_start_k=2",
                log) == 0);
  CHECK(fs::exists(run_dir / "library.tsv"));
  CHECK(fs::exists(run_dir / "gene_pool.tsv"));
  CHECK(fs::exists(run_dir / "run_log.tsv"));
  CHECK(fs::exists(run_dir / "config_used.cfg"));

  // config validation failures are all reported at once
  CHECK(run_cli("mine --data \"" + csv.string() +
                    "\" --set population=1 --set top_k=0",
                log) == 2);
  const std::string problems = read_file(log);
  CHECK(problems.find("population") != std::string::npos);
  CHECK(problems.find("top_k") != std::string::npos);

  // backtest the library
  const fs::path bt_dir = dir / "bt";
  CHECK(run_cli("backtest --library \"" + (run_dir / "library.tsv").string() +
                    "\" --data \"" + csv.string() + "\" --out-dir \"" +
                    bt_dir.string() + "\" --horizon 1 --horizon 5 --k 3",
                log) == 0);
  CHECK(fs::exists(bt_dir / "wealth_topk_h1.csv"));
  CHECK(fs::exists(bt_dir / "wealth_topk_h5.csv"));
  CHECK(fs::exists(bt_dir / "metrics_h1.txt"));
  CHECK(fs::exists(bt_dir / "wealth_h1_fold0.csv"));
  CHECK(read_file(bt_dir / "wealth_topk_h1.csv").rfind("date,wealth,market_wealth\n", 0) == 0);

  // report prints the library table and emits study data
  CHECK(run_cli("report --run-dir \"" + run_dir.string() + "\" --data \"" +
                    csv.string() + "\" --motivation --seed 4 --out-dir \"" +
                    (dir / "study").string() + "\"",
                log) == 0);
  CHECK(read_file(log).find("rank\tic") != std::string::npos);
  CHECK(fs::exists(dir / "study" / "root_gene_ic.csv"));
  CHECK(fs::exists(dir / "study" / "random_ic_sample.csv"));
}

TEST_CASE("cli mine reruns are byte identical") {
  const fs::path dir = fresh_dir("determinism");
  const fs::path csv = dir / "m.csv";
  const fs::path log = dir / "log.txt";
  REQUIRE(run_cli("synth --days 150 --stocks 10 --seed 2 --out \"" +
                      csv.string() + "\"",
                  log) == 0);
  const std::string common =
      "mine --data \"" + csv.string() +
      "\" --seed 11 --max-depth 2 --set population=30 --set generations=3 "
      "--set runs_per_depth=1 --set warm_start_k=2 --set ic_min_report=0.02";
  REQUIRE(run_cli(common + " --out-dir \"" + (dir / "a").string() + "\"", log) <= 4);
  REQUIRE(run_cli(common + " --out-dir \"" + (dir / "b").string() +
                      "\" --workers 3",
                  log) <= 4);
  CHECK(read_file(dir / "a" / "library.tsv") ==
        read_file(dir / "b" / "library.tsv"));
  CHECK(read_file(dir / "a" / "gene_pool.tsv") ==
        read_file(dir / "b" / "gene_pool.tsv"));
  CHECK(read_file(dir / "a" / "run_log.tsv") ==
        read_file(dir / "b" / "run_log.tsv"));
}
