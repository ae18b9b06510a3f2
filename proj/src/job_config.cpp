#include "alphamine/job_config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "alphamine/formula.hpp"

namespace alphamine::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = s.find_first_not_of(" \t");
  std::size_t end = s.find_last_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  return s.substr(begin, end - begin + 1);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool to_int(const std::string& s, int& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

bool to_u64(const std::string& s, std::uint64_t& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

bool to_double(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool to_int_list(const std::string& s, std::vector<int>& out) {
  out.clear();
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    int v;
    if (!to_int(trim(item), v)) return false;
    out.push_back(v);
  }
  return !out.empty();
}

std::string int_list_text(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

bool JobConfig::apply(const std::string& key, const std::string& value) {
  if (key == "data_csv") return data_csv = value, true;
  if (key == "synth_days") return to_int(value, synth_days);
  if (key == "synth_stocks") return to_int(value, synth_stocks);
  if (key == "synth_plant") return synth_plant = value, true;
  if (key == "synth_strength") return to_double(value, synth_strength);
  if (key == "population") return to_int(value, search.population_size);
  if (key == "warm_start_k") return to_int(value, search.warm_start_k);
  if (key == "generations") return to_int(value, search.generations_per_run);
  if (key == "runs_per_depth") return to_int(value, search.runs_per_depth);
  if (key == "max_depth") return to_int(value, search.max_depth);
  if (key == "horizon") return to_int(value, search.horizon);
  if (key == "ic_min_gene") return to_double(value, search.ic_min_gene);
  if (key == "ic_min_report") return to_double(value, search.ic_min_report);
  if (key == "sim_max") return to_double(value, search.sim_max);
  if (key == "pca_threshold") return to_double(value, search.pca_threshold);
  if (key == "mutation_prob") return to_double(value, search.mutation_prob);
  if (key == "seed") return to_u64(value, search.seed);
  if (key == "workers") return to_int(value, search.worker_count);
  if (key == "horizons") return to_int_list(value, horizons);
  if (key == "top_k") return to_int(value, top_k);
  if (key == "cost_rate") return to_double(value, cost_rate);
  if (key == "folds") return to_int(value, folds);
  if (key == "top_alphas") return to_int(value, top_alphas);
  if (key == "out_dir") return out_dir = value, true;
  return false;
}

std::vector<std::string> JobConfig::validate() const {
  std::vector<std::string> problems;
  const bool has_csv = !data_csv.empty();
  const bool has_synth = synth_days > 0 || synth_stocks > 0;
  if (!has_csv && !has_synth) {
    problems.push_back(
        "no data source: set data_csv or synth_days/synth_stocks");
  }
  if (has_csv && has_synth) {
    problems.push_back("both data_csv and a synthetic spec are set");
  }
  if (has_synth && (synth_days < 80 || synth_stocks < 10)) {
    problems.push_back("synthetic spec needs synth_days >= 80 and synth_stocks >= 10");
  }
  if (!synth_plant.empty()) {
    try {
      dsl::parse(synth_plant, search.max_depth);
    } catch (const dsl::ParseError& e) {
      problems.push_back(std::string("synth_plant: ") + e.what());
    }
  }
  if (search.population_size < 2) problems.push_back("population must be >= 2");
  if (search.warm_start_k < 1) problems.push_back("warm_start_k must be >= 1");
  if (search.generations_per_run < 0) problems.push_back("generations must be >= 0");
  if (search.runs_per_depth < 1) problems.push_back("runs_per_depth must be >= 1");
  if (search.max_depth < 1) problems.push_back("max_depth must be >= 1");
  if (search.horizon < 1) problems.push_back("horizon must be >= 1");
  if (search.sim_max <= 0.0 || search.sim_max > 1.0) {
    problems.push_back("sim_max must be in (0,1]");
  }
  if (search.pca_threshold <= 0.0 || search.pca_threshold > 1.0) {
    problems.push_back("pca_threshold must be in (0,1]");
  }
  if (search.mutation_prob < 0.0 || search.mutation_prob > 1.0) {
    problems.push_back("mutation_prob must be in [0,1]");
  }
  if (search.worker_count < 1) problems.push_back("workers must be >= 1");
  for (const int h : horizons) {
    if (h < 1) problems.push_back("horizons entries must be >= 1");
  }
  if (top_k < 1) problems.push_back("top_k must be >= 1");
  if (cost_rate < 0.0) problems.push_back("cost_rate must be >= 0");
  if (folds < 2) problems.push_back("folds must be >= 2");
  if (top_alphas < 1) problems.push_back("top_alphas must be >= 1");
  if (out_dir.empty()) problems.push_back("out_dir must not be empty");
  return problems;
}

std::string JobConfig::to_text() const {
  std::string out;
  const auto line = [&](const std::string& key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  line("data_csv", data_csv);
  line("synth_days", std::to_string(synth_days));
  line("synth_stocks", std::to_string(synth_stocks));
  line("synth_plant", synth_plant);
  line("synth_strength", format_double(synth_strength));
  line("population", std::to_string(search.population_size));
  line("warm_start_k", std::to_string(search.warm_start_k));
  line("generations", std::to_string(search.generations_per_run));
  line("runs_per_depth", std::to_string(search.runs_per_depth));
  line("max_depth", std::to_string(search.max_depth));
  line("horizon", std::to_string(search.horizon));
  line("ic_min_gene", format_double(search.ic_min_gene));
  line("ic_min_report", format_double(search.ic_min_report));
  line("sim_max", format_double(search.sim_max));
  line("pca_threshold", format_double(search.pca_threshold));
  line("mutation_prob", format_double(search.mutation_prob));
  line("seed", std::to_string(search.seed));
  line("workers", std::to_string(search.worker_count));
  line("horizons", int_list_text(horizons));
  line("top_k", std::to_string(top_k));
  line("cost_rate", format_double(cost_rate));
  line("folds", std::to_string(folds));
  line("top_alphas", std::to_string(top_alphas));
  line("out_dir", out_dir);
  return out;
}

JobConfig JobConfig::from_text(const std::string& text) {
  JobConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> problems;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) +
                         ": expected key = value");
      continue;
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (!cfg.apply(key, value)) {
      problems.push_back("line " + std::to_string(line_no) +
                         ": unknown or malformed setting '" + key + "'");
    }
  }
  if (!problems.empty()) {
    std::string message;
    for (const std::string& p : problems) {
      if (!message.empty()) message += '\n';
      message += p;
    }
    throw ConfigError(message);
  }
  return cfg;
}

JobConfig JobConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

void JobConfig::save(const std::string& path) const {
  write_file_atomic(path, to_text());
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    fs::create_directories(target.parent_path());
  }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw ConfigError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

}  // namespace alphamine::cli
