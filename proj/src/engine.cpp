#include "alphamine/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <set>
#include <sstream>
#include <utility>

#include "alphamine/parallel.hpp"

namespace alphamine::engine {

namespace {

std::string format_ic(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool fitness_before(double fa, const std::string& ta, double fb,
                    const std::string& tb) {
  if (fa != fb) return fa > fb;
  return ta < tb;
}

// Greedy pass in fitness order keeping candidates whose full similarity to
// everything already kept stays below sim_max. Undefined similarity counts
// as similar.
std::vector<std::size_t> greedy_diversity_filter(
    const std::vector<const dsl::AlphaFormula*>& formulas,
    const data::MarketDataset& ds, double sim_max) {
  std::vector<std::size_t> kept;
  std::vector<eval::AlphaMatrix> kept_panels;
  for (std::size_t i = 0; i < formulas.size(); ++i) {
    eval::AlphaMatrix panel;
    try {
      panel = eval::evaluate(*formulas[i], ds);
    } catch (const eval::EvalError&) {
      continue;
    }
    bool diverse = true;
    for (const eval::AlphaMatrix& other : kept_panels) {
      double sim = 1.0;
      try {
        sim = eval::similarity(panel, other);
      } catch (const eval::EvalError&) {
        sim = 1.0;
      }
      if (sim >= sim_max) {
        diverse = false;
        break;
      }
    }
    if (diverse) {
      kept.push_back(i);
      kept_panels.push_back(std::move(panel));
    }
  }
  return kept;
}

double best_fitness(const std::vector<Individual>& pop) {
  double best = 0.0;
  for (const Individual& ind : pop) best = std::max(best, ind.fitness);
  return best;
}

double mean_fitness(const std::vector<Individual>& pop) {
  if (pop.empty()) return 0.0;
  double sum = 0.0;
  for (const Individual& ind : pop) sum += ind.fitness;
  return sum / static_cast<double>(pop.size());
}

}  // namespace

std::vector<std::vector<dsl::AlphaFormula>> GenePool::formula_layers(
    int depth) const {
  std::vector<std::vector<dsl::AlphaFormula>> layers(
      static_cast<std::size_t>(std::max(depth, 1)));
  for (int d = 1; d < depth && static_cast<std::size_t>(d) < by_depth.size();
       ++d) {
    for (const GenePoolEntry& entry : by_depth[static_cast<std::size_t>(d)]) {
      layers[static_cast<std::size_t>(d)].push_back(entry.formula);
    }
  }
  return layers;
}

std::vector<dsl::AlphaFormula> GenePool::all_formulas() const {
  std::vector<dsl::AlphaFormula> out;
  for (const auto& layer : by_depth) {
    for (const GenePoolEntry& entry : layer) out.push_back(entry.formula);
  }
  return out;
}

double QdArchive::max_similarity(const eval::PcScores& pc) const {
  double best = 0.0;
  for (const ArchiveEntry& entry : entries_) {
    double sim = 0.0;
    try {
      sim = eval::pca_similarity(pc, entry.pc);
    } catch (const eval::EvalError&) {
      sim = 0.0;  // no overlap carries no evidence of similarity
    }
    best = std::max(best, sim);
  }
  return best;
}

bool QdArchive::try_accept(ArchiveEntry entry) {
  if (max_similarity(entry.pc) >= threshold_) return false;
  entries_.push_back(std::move(entry));
  return true;
}

Individual evaluate_candidate(dsl::AlphaFormula formula,
                              const data::MarketDataset& ds,
                              const data::ReturnPanel& returns) {
  Individual ind;
  ind.text = dsl::to_text(formula);
  ind.formula = std::move(formula);
  try {
    const eval::AlphaMatrix panel = eval::evaluate(ind.formula, ds);
    const eval::IcReport report = eval::ic(panel, returns);
    if (report.valid) {
      ind.fitness = report.ic;
      ind.orientation = report.orientation;
      ind.ic_valid = true;
    }
  } catch (const eval::EvalError&) {
    // unusable candidate keeps fitness 0
  }
  return ind;
}

bool qd_accept(Individual& cand, const eval::AlphaMatrix& panel,
               QdArchive& archive, std::string* reason) {
  if (!cand.pc) {
    try {
      cand.pc = std::make_shared<eval::PcScores>(eval::first_pc_scores(panel));
    } catch (const eval::EvalError& e) {
      if (reason) *reason = e.what();
      return false;
    }
  }
  ArchiveEntry entry;
  entry.formula = cand.formula;
  entry.text = cand.text;
  entry.fitness = cand.fitness;
  entry.orientation = cand.orientation;
  entry.depth = dsl::depth(cand.formula);
  entry.pc = *cand.pc;
  if (!archive.try_accept(std::move(entry))) {
    if (reason) *reason = "pca_similarity at or above threshold";
    return false;
  }
  return true;
}

std::vector<Individual> warm_start_init(int depth, const GenePool& pool,
                                        const SearchConfig& cfg,
                                        const data::MarketDataset& ds,
                                        const data::ReturnPanel& returns,
                                        Rng& rng,
                                        std::vector<std::string>* warnings) {
  const auto layers = pool.formula_layers(depth);
  const std::size_t target = static_cast<std::size_t>(cfg.warm_start_k) *
                             static_cast<std::size_t>(cfg.population_size);
  const std::size_t max_attempts = 20 * target;

  std::vector<dsl::AlphaFormula> formulas;
  std::set<std::string> seen;
  for (std::size_t attempt = 0;
       formulas.size() < target && attempt < max_attempts; ++attempt) {
    dsl::AlphaFormula f = dsl::random_formula(depth, layers, rng);
    if (seen.insert(dsl::to_text(f)).second) formulas.push_back(std::move(f));
  }
  if (formulas.size() < target && warnings) {
    warnings->push_back("warm start at depth " + std::to_string(depth) +
                        " produced " + std::to_string(formulas.size()) +
                        " distinct candidates of " + std::to_string(target) +
                        " requested");
  }

  std::vector<Individual> candidates(formulas.size());
  parallel_for(formulas.size(), cfg.worker_count, [&](std::size_t i) {
    candidates[i] = evaluate_candidate(std::move(formulas[i]), ds, returns);
  });

  std::sort(candidates.begin(), candidates.end(),
            [](const Individual& a, const Individual& b) {
              return fitness_before(a.fitness, a.text, b.fitness, b.text);
            });
  if (candidates.size() > static_cast<std::size_t>(cfg.population_size)) {
    candidates.resize(static_cast<std::size_t>(cfg.population_size));
  }
  return candidates;
}

void reproduce(std::vector<Individual>& pop, QdArchive& archive,
               const SearchConfig& cfg, const data::MarketDataset& ds,
               const data::ReturnPanel& returns, Rng& rng,
               const std::vector<dsl::AlphaFormula>* mutation_pool,
               std::vector<std::string>* warnings) {
  if (pop.empty()) return;
  if (pop.size() % 2 != 0) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pop.size(); ++i) {
      if (fitness_before(pop[i].fitness, pop[i].text, pop[best].fitness,
                         pop[best].text)) {
        best = i;
      }
    }
    pop.push_back(pop[best]);
    if (warnings) {
      warnings->push_back("odd population padded by cloning " + pop[best].text);
    }
  }

  std::vector<std::size_t> order(pop.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  static const std::vector<dsl::AlphaFormula> kEmptyPool;
  const std::vector<dsl::AlphaFormula>& pool =
      mutation_pool ? *mutation_pool : kEmptyPool;

  // Phase 1 (sequential): breed the children so RNG use is independent of
  // the worker count.
  const std::size_t pair_count = pop.size() / 2;
  std::vector<dsl::AlphaFormula> children(2 * pair_count);
  for (std::size_t pi = 0; pi < pair_count; ++pi) {
    const Individual& p1 = pop[order[2 * pi]];
    const Individual& p2 = pop[order[2 * pi + 1]];
    dsl::CrossoverResult crossed = dsl::crossover(p1.formula, p2.formula, rng);
    dsl::AlphaFormula c1 = std::move(crossed.first);
    dsl::AlphaFormula c2 = std::move(crossed.second);
    if (cfg.mutation_prob > 0.0 && rng.uniform() < cfg.mutation_prob) {
      c1 = dsl::mutate(c1, pool, rng);
    }
    if (cfg.mutation_prob > 0.0 && rng.uniform() < cfg.mutation_prob) {
      c2 = dsl::mutate(c2, pool, rng);
    }
    children[2 * pi] = std::move(c1);
    children[2 * pi + 1] = std::move(c2);
  }

  // Phase 2 (parallel): evaluate children into their own slots.
  std::vector<Individual> evaluated(children.size());
  std::vector<eval::AlphaMatrix> panels(children.size());
  parallel_for(children.size(), cfg.worker_count, [&](std::size_t i) {
    Individual ind;
    ind.text = dsl::to_text(children[i]);
    ind.formula = std::move(children[i]);
    try {
      panels[i] = eval::evaluate(ind.formula, ds);
      const eval::IcReport report = eval::ic(panels[i], returns);
      if (report.valid) {
        ind.fitness = report.ic;
        ind.orientation = report.orientation;
        ind.ic_valid = true;
      }
    } catch (const eval::EvalError&) {
      // unusable child keeps fitness 0
    }
    evaluated[i] = std::move(ind);
  });

  // Phase 3 (sequential): screening and parent-offspring replacement.
  std::set<std::string> population_texts;
  for (const Individual& ind : pop) population_texts.insert(ind.text);

  for (std::size_t pi = 0; pi < pair_count; ++pi) {
    const std::size_t slot_a = order[2 * pi];
    const std::size_t slot_b = order[2 * pi + 1];
    Individual& c1 = evaluated[2 * pi];
    Individual& c2 = evaluated[2 * pi + 1];
    const double parent_best =
        std::max(pop[slot_a].fitness, pop[slot_b].fitness);
    if (std::max(c1.fitness, c2.fitness) <= parent_best) continue;

    // The improving offspring face the archive; a rejected child is
    // penalized to zero fitness before the replacement comparison.
    for (Individual* child : {&c1, &c2}) {
      if (child->fitness <= 0.0) continue;
      const std::size_t idx = child == &c1 ? 2 * pi : 2 * pi + 1;
      if (!qd_accept(*child, panels[idx], archive)) child->fitness = 0.0;
    }
    if (std::max(c1.fitness, c2.fitness) <= parent_best) continue;

    // Children displace their own parents, weakest slot first; a child whose
    // canonical string already occupies another slot is dropped so every
    // formula keeps a single copy.
    population_texts.erase(pop[slot_a].text);
    population_texts.erase(pop[slot_b].text);
    Individual* ordered[2] = {&c1, &c2};
    if (fitness_before(c2.fitness, c2.text, c1.fitness, c1.text)) {
      std::swap(ordered[0], ordered[1]);
    }
    std::size_t slots[2] = {slot_a, slot_b};
    if (pop[slot_a].fitness > pop[slot_b].fitness ||
        (pop[slot_a].fitness == pop[slot_b].fitness &&
         pop[slot_a].text < pop[slot_b].text)) {
      std::swap(slots[0], slots[1]);  // slots[0] = weaker parent
    }
    int next_slot = 0;
    for (Individual* child : ordered) {
      if (population_texts.count(child->text)) continue;  // duplicate
      population_texts.insert(child->text);
      pop[slots[static_cast<std::size_t>(next_slot)]] = std::move(*child);
      ++next_slot;
    }
    // Any slot not claimed by a child keeps its parent (strongest first).
    population_texts.insert(pop[slot_a].text);
    population_texts.insert(pop[slot_b].text);
  }
}

RunResult run(const SearchConfig& cfg, const data::MarketDataset& ds) {
  if (ds.days() < 120) {
    throw EngineError("dataset spans fewer than 120 trading days");
  }
  if (cfg.population_size < 2 || cfg.warm_start_k < 1 || cfg.max_depth < 1) {
    throw EngineError("invalid search configuration");
  }

  RunResult result{{}, GenePool(cfg.max_depth), QdArchive(cfg.pca_threshold),
                   {}, {}};
  const data::ReturnPanel returns = data::forward_returns(ds, cfg.horizon);

  // Step 1: exhaustive depth-1 layer.
  const std::vector<dsl::AlphaFormula> depth1 = dsl::enumerate_depth1(
      dsl::base_factors(), dsl::operator_registry(), dsl::default_windows());
  std::vector<Individual> genes(depth1.size());
  parallel_for(depth1.size(), cfg.worker_count, [&](std::size_t i) {
    genes[i] = evaluate_candidate(depth1[i], ds, returns);
  });
  std::sort(genes.begin(), genes.end(),
            [](const Individual& a, const Individual& b) {
              return fitness_before(a.fitness, a.text, b.fitness, b.text);
            });
  std::vector<const dsl::AlphaFormula*> admitted;
  std::vector<const Individual*> admitted_inds;
  for (const Individual& gene : genes) {
    if (gene.fitness >= cfg.ic_min_gene) {
      admitted.push_back(&gene.formula);
      admitted_inds.push_back(&gene);
    }
  }
  const std::vector<std::size_t> kept =
      greedy_diversity_filter(admitted, ds, cfg.sim_max);
  if (kept.empty()) {
    throw EngineError(
        "no depth-1 genes reached ic_min_gene; lower the cutoff or supply "
        "more data");
  }
  for (const std::size_t i : kept) {
    const Individual& gene = *admitted_inds[i];
    result.pool.by_depth[1].push_back(
        {gene.formula, gene.text, gene.fitness});
    Individual seed = gene;
    try {
      const eval::AlphaMatrix panel = eval::evaluate(seed.formula, ds);
      std::string reason;
      if (!qd_accept(seed, panel, result.archive, &reason) &&
          !reason.empty()) {
        result.warnings.push_back("gene " + seed.text +
                                  " not archived: " + reason);
      }
    } catch (const eval::EvalError& e) {
      result.warnings.push_back("gene " + seed.text +
                                " not archived: " + e.what());
    }
  }

  // Step 2: evolve each deeper level from the pool.
  const std::vector<dsl::AlphaFormula> mutation_pool =
      result.pool.all_formulas();
  for (int depth = 2; depth <= cfg.max_depth; ++depth) {
    for (int run_index = 0; run_index < cfg.runs_per_depth; ++run_index) {
      Rng rng(Rng::mix(cfg.seed,
                       Rng::mix(static_cast<std::uint64_t>(depth),
                                static_cast<std::uint64_t>(run_index))));
      std::vector<Individual> pop = warm_start_init(
          depth, result.pool, cfg, ds, returns, rng, &result.warnings);
      result.log.push_back({depth, run_index, 0, best_fitness(pop),
                            mean_fitness(pop), result.archive.size()});
      for (int gen = 1; gen <= cfg.generations_per_run; ++gen) {
        reproduce(pop, result.archive, cfg, ds, returns, rng, &mutation_pool,
                  &result.warnings);
        result.log.push_back({depth, run_index, gen, best_fitness(pop),
                              mean_fitness(pop), result.archive.size()});
      }
    }
    // Newly archived formulas of this exact depth feed the next level.
    std::vector<const ArchiveEntry*> depth_candidates;
    for (const ArchiveEntry& entry : result.archive.entries()) {
      if (entry.depth == depth && entry.fitness >= cfg.ic_min_gene) {
        depth_candidates.push_back(&entry);
      }
    }
    std::sort(depth_candidates.begin(), depth_candidates.end(),
              [](const ArchiveEntry* a, const ArchiveEntry* b) {
                return fitness_before(a->fitness, a->text, b->fitness,
                                      b->text);
              });
    std::vector<const dsl::AlphaFormula*> formulas;
    for (const ArchiveEntry* entry : depth_candidates) {
      formulas.push_back(&entry->formula);
    }
    for (const std::size_t i : greedy_diversity_filter(formulas, ds,
                                                       cfg.sim_max)) {
      const ArchiveEntry& entry = *depth_candidates[i];
      result.pool.by_depth[static_cast<std::size_t>(depth)].push_back(
          {entry.formula, entry.text, entry.fitness});
    }
  }

  // Step 3: diverse final library from the archive.
  std::vector<const ArchiveEntry*> library_candidates;
  for (const ArchiveEntry& entry : result.archive.entries()) {
    if (entry.fitness >= cfg.ic_min_report) {
      library_candidates.push_back(&entry);
    }
  }
  std::sort(library_candidates.begin(), library_candidates.end(),
            [](const ArchiveEntry* a, const ArchiveEntry* b) {
              return fitness_before(a->fitness, a->text, b->fitness, b->text);
            });
  std::vector<const dsl::AlphaFormula*> formulas;
  for (const ArchiveEntry* entry : library_candidates) {
    formulas.push_back(&entry->formula);
  }
  for (const std::size_t i :
       greedy_diversity_filter(formulas, ds, cfg.sim_max)) {
    result.library.push_back(*library_candidates[i]);
  }
  return result;
}

MotivationStudy motivation_study(const std::vector<ArchiveEntry>& library,
                                 const SearchConfig& cfg,
                                 const data::MarketDataset& ds, int top_count,
                                 int sample_count) {
  MotivationStudy study;
  study.requested = top_count;
  if (library.empty()) return study;
  const data::ReturnPanel returns = data::forward_returns(ds, cfg.horizon);

  // Study the depth with the most library members past depth 1 so root
  // genes are non-trivial; fall back to the deepest level present.
  std::vector<int> count_by_depth(
      static_cast<std::size_t>(cfg.max_depth) + 1, 0);
  int max_present = 0;
  for (const ArchiveEntry& entry : library) {
    if (entry.depth >= 0 &&
        entry.depth < static_cast<int>(count_by_depth.size())) {
      ++count_by_depth[static_cast<std::size_t>(entry.depth)];
    }
    max_present = std::max(max_present, entry.depth);
  }
  int study_depth = 0;
  int best_count = 0;
  for (int d = 2; d < static_cast<int>(count_by_depth.size()); ++d) {
    if (count_by_depth[static_cast<std::size_t>(d)] >= best_count) {
      best_count = count_by_depth[static_cast<std::size_t>(d)];
      study_depth = d;
    }
  }
  if (best_count == 0) study_depth = max_present;
  study.study_depth = study_depth;

  std::vector<const ArchiveEntry*> selected;
  for (const ArchiveEntry& entry : library) {
    if (entry.depth == study_depth) selected.push_back(&entry);
    if (static_cast<int>(selected.size()) >= top_count) break;
  }

  for (const ArchiveEntry* entry : selected) {
    MotivationStudy::Row row;
    row.alpha_text = entry->text;
    row.alpha_ic = entry->fitness;
    row.best_gene_ic = -1.0;
    for (const auto& child : entry->formula.root.children) {
      dsl::AlphaFormula gene;
      gene.root = child;
      const Individual ind = evaluate_candidate(gene, ds, returns);
      if (row.best_gene_text.empty() || ind.fitness > row.best_gene_ic) {
        row.best_gene_ic = ind.fitness;
        row.best_gene_text = ind.text;
      }
    }
    if (row.best_gene_text.empty()) continue;  // leaf alpha has no genes
    study.rows.push_back(std::move(row));
  }

  const int sample_depth = std::max(0, study_depth - 1);
  Rng rng(Rng::mix(cfg.seed, 0x4d2fb9e3));
  std::vector<dsl::AlphaFormula> sample;
  sample.reserve(static_cast<std::size_t>(sample_count));
  for (int i = 0; i < sample_count; ++i) {
    sample.push_back(dsl::random_tree(sample_depth, rng));
  }
  study.random_ics.assign(sample.size(), 0.0);
  parallel_for(sample.size(), cfg.worker_count, [&](std::size_t i) {
    study.random_ics[i] =
        evaluate_candidate(std::move(sample[i]), ds, returns).fitness;
  });
  return study;
}

std::string serialize_library(const std::vector<ArchiveEntry>& library) {
  std::string out;
  for (const ArchiveEntry& entry : library) {
    out += entry.text;
    out += '\t';
    out += format_ic(entry.fitness);
    out += '\t';
    out += entry.orientation >= 0 ? "+1" : "-1";
    out += '\t';
    out += std::to_string(entry.depth);
    out += '\n';
  }
  return out;
}

std::vector<ArchiveEntry> parse_library(std::istream& in) {
  std::vector<ArchiveEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string text, ic_text, orient_text, depth_text;
    if (!std::getline(fields, text, '\t') ||
        !std::getline(fields, ic_text, '\t') ||
        !std::getline(fields, orient_text, '\t') ||
        !std::getline(fields, depth_text)) {
      throw EngineError("library line " + std::to_string(line_no) +
                        ": expected 4 tab-separated fields");
    }
    ArchiveEntry entry;
    entry.formula = dsl::parse(text);
    entry.text = dsl::to_text(entry.formula);
    entry.fitness = std::stod(ic_text);
    entry.orientation = std::stoi(orient_text);
    entry.depth = std::stoi(depth_text);
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace alphamine::engine
