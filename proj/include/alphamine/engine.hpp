#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "alphamine/evaluation.hpp"
#include "alphamine/formula.hpp"
#include "alphamine/market_data.hpp"
#include "alphamine/rng.hpp"

namespace alphamine::engine {

class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SearchConfig {
  int population_size = 200;
  int warm_start_k = 5;
  int generations_per_run = 30;
  int runs_per_depth = 5;
  int max_depth = 3;
  int horizon = 1;             // forward-return horizon the fitness targets
  double ic_min_gene = 0.02;   // gene-pool admission cutoff
  double ic_min_report = 0.05; // final-library cutoff
  double sim_max = 0.7;        // pairwise similarity bound for pools/library
  double pca_threshold = 0.9;  // archive screening threshold
  double mutation_prob = 0.0;  // per-child mutation probability
  std::uint64_t seed = 0;
  int worker_count = 1;
};

struct Individual {
  dsl::AlphaFormula formula;
  std::string text;          // canonical form
  double fitness = 0.0;      // oriented IC; 0 when invalid or QD-penalized
  int orientation = +1;
  bool ic_valid = false;
  std::shared_ptr<const eval::PcScores> pc;  // set on archive candidacy
};

struct GenePoolEntry {
  dsl::AlphaFormula formula;
  std::string text;
  double fitness = 0.0;
};

// Per-depth lists of admitted genes, fitness-descending, pairwise
// similarity below sim_max within each depth.
struct GenePool {
  std::vector<std::vector<GenePoolEntry>> by_depth;  // index = depth

  explicit GenePool(int max_depth = dsl::kDefaultMaxDepth)
      : by_depth(static_cast<std::size_t>(max_depth) + 1) {}

  // Formula layers for dsl::random_formula (depths below `depth`).
  std::vector<std::vector<dsl::AlphaFormula>> formula_layers(int depth) const;
  std::vector<dsl::AlphaFormula> all_formulas() const;
};

struct ArchiveEntry {
  dsl::AlphaFormula formula;
  std::string text;
  double fitness = 0.0;
  int orientation = +1;
  int depth = 0;
  eval::PcScores pc;
};

// Record of accepted alphas; no two members reach the PCA-similarity
// threshold against each other.
class QdArchive {
 public:
  explicit QdArchive(double pca_threshold = 0.9)
      : threshold_(pca_threshold) {}

  // Largest PCA-similarity against current members (0 when empty).
  double max_similarity(const eval::PcScores& pc) const;
  // Inserts when max_similarity < threshold; returns whether it did.
  bool try_accept(ArchiveEntry entry);

  const std::vector<ArchiveEntry>& entries() const { return entries_; }
  double threshold() const { return threshold_; }
  std::size_t size() const { return entries_.size(); }

 private:
  double threshold_;
  std::vector<ArchiveEntry> entries_;
};

// Evaluates the formula's oriented IC against the return panel. Evaluation
// failures yield fitness 0.
Individual evaluate_candidate(dsl::AlphaFormula formula,
                              const data::MarketDataset& ds,
                              const data::ReturnPanel& returns);

// Computes the candidate's PC scores from its panel and screens it against
// the archive; accepted candidates are inserted. Returns the flag; a PC
// computation failure rejects with `reason` set.
bool qd_accept(Individual& cand, const eval::AlphaMatrix& panel,
               QdArchive& archive, std::string* reason = nullptr);

// Over-generates depth-`depth` candidates K-fold (canonical-string dedup,
// bounded retries), evaluates them, and keeps the top population_size by
// fitness, ties broken by canonical string.
std::vector<Individual> warm_start_init(int depth, const GenePool& pool,
                                        const SearchConfig& cfg,
                                        const data::MarketDataset& ds,
                                        const data::ReturnPanel& returns,
                                        Rng& rng,
                                        std::vector<std::string>* warnings = nullptr);

// One steady-state generation: shuffle into pairs, crossover (plus optional
// mutation), evaluate children, QD-screen the improving ones, and let each
// pair's children displace their own parents only when the surviving best
// child is strictly fitter. Population size and the no-duplicate invariant
// are preserved; the population's best fitness never decreases.
void reproduce(std::vector<Individual>& pop, QdArchive& archive,
               const SearchConfig& cfg, const data::MarketDataset& ds,
               const data::ReturnPanel& returns, Rng& rng,
               const std::vector<dsl::AlphaFormula>* mutation_pool = nullptr,
               std::vector<std::string>* warnings = nullptr);

struct GenerationStat {
  int depth = 0;
  int run = 0;
  int generation = 0;  // 0 = freshly warm-started population
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  std::size_t archive_size = 0;
};

struct RunResult {
  std::vector<ArchiveEntry> library;  // fitness-descending, diverse
  GenePool pool;
  QdArchive archive;
  std::vector<GenerationStat> log;
  std::vector<std::string> warnings;
};

// The full hierarchical search: enumerate depth 1 into the gene pool, seed
// the archive, then for each deeper level run warm-started populations with
// replacement reproduction, finally filtering the archive into a diverse
// library.
RunResult run(const SearchConfig& cfg, const data::MarketDataset& ds);

struct MotivationStudy {
  struct Row {
    std::string alpha_text;
    double alpha_ic = 0.0;
    std::string best_gene_text;
    double best_gene_ic = 0.0;
  };
  int study_depth = 0;     // depth of the alphas studied
  int requested = 0;
  std::vector<Row> rows;   // one per studied alpha
  std::vector<double> random_ics;  // fitness of random trees one depth lower
};

// Root-gene IC table for the top library alphas plus an IC sample of
// randomly generated formulas one depth lower.
MotivationStudy motivation_study(const std::vector<ArchiveEntry>& library,
                                 const SearchConfig& cfg,
                                 const data::MarketDataset& ds,
                                 int top_count = 100, int sample_count = 20000);

// Line format: formula<TAB>oriented_ic<TAB>orientation<TAB>depth, sorted by
// IC descending. This is the on-disk library interchange format.
std::string serialize_library(const std::vector<ArchiveEntry>& library);
std::vector<ArchiveEntry> parse_library(std::istream& in);

}  // namespace alphamine::engine
