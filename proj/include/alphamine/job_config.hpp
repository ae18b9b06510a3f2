#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "alphamine/engine.hpp"

namespace alphamine::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One mining/backtest job. Plain key = value text format so experiment
// records diff cleanly; every field defaults except the data source.
struct JobConfig {
  // data source: a CSV path, or a synthetic spec when synth_days > 0
  std::string data_csv;
  int synth_days = 0;
  int synth_stocks = 0;
  std::string synth_plant;      // formula text, optional
  double synth_strength = 0.1;

  engine::SearchConfig search;

  std::vector<int> horizons{1};  // backtest holding periods
  int top_k = 10;
  double cost_rate = 0.003;
  int folds = 10;
  int top_alphas = 150;

  std::string out_dir = "out";

  // Applies `key = value`; returns false for an unknown key.
  bool apply(const std::string& key, const std::string& value);
  // Empty when the config is usable; otherwise one message per problem.
  std::vector<std::string> validate() const;

  std::string to_text() const;
  static JobConfig from_text(const std::string& text);
  static JobConfig load(const std::string& path);
  void save(const std::string& path) const;
};

// Write-then-rename so interrupted runs never leave partial files.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace alphamine::cli
