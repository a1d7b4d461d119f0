#pragma once

// Synthetic corpora and brute-force reference implementations shared by the
// unit tests and the acceptance gate. Nothing here calls into the library's
// selection or divergence code, so the oracles stay independent of it.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lsplit/ingestion.hpp"
#include "lsplit/scoring.hpp"
#include "lsplit/sql.hpp"

namespace lsplit::synth {

// Single-sentence task with labels {a, b, c} and the plain "{x1}" prompt.
TaskConfig sql_task();

// Question/SQL pairs over a three-table schema. Program shapes cover plain
// selects, aggregates, filters, ordering with limits, grouping, aliased joins
// and IN subqueries. Labels are drawn a:b:c = 3:2:1 and question lengths vary.
Dataset sql_dataset(std::size_t n, std::uint64_t seed);

// Rewrites `pairs` disjoint pairs of examples (outside the first two rounds
// of shapes) so each pair shares a column found nowhere else. Random splits
// then often strand one of these atoms in the evaluation set.
Dataset with_rare_atoms(const Dataset& ds, std::size_t pairs, std::uint64_t seed);

// One score per example; values sit on a coarse grid so ties are common.
std::vector<ScoreRecord> tied_scores(const Dataset& ds, std::uint64_t seed);

struct PlantedCorpus {
  Dataset dataset;
  std::set<std::string> planted;       // ids of sentences carrying a rare token
  std::set<std::string> common_words;  // every word of the unplanted sentences
  std::set<std::string> rare_words;
};

// `n` sentences from 20 fixed-length templates with slot fillers. A fraction
// `planted_fraction` of them has one slot replaced by a token that occurs
// nowhere else in the corpus, so sentence lengths do not give them away.
PlantedCorpus planted_tail_corpus(std::size_t n, double planted_fraction, std::uint64_t seed);

// 1 - sum over the union of keys of p^alpha q^(1-alpha), with absent keys
// treated as zero.
double naive_chernoff_divergence(const std::map<std::string, double>& p, const std::map<std::string, double>& q,
                                 double alpha);

// Relative frequencies over the concatenation of several multisets.
std::map<std::string, double> naive_frequencies(const std::vector<std::vector<std::string>>& bags);

struct NaiveDivergence {
  double atom = 0.0;
  double compound = 0.0;
};

NaiveDivergence naive_split_divergence(const std::map<std::string, ProgramStructure>& structures,
                                       const std::vector<std::string>& train, const std::vector<std::string>& eval);

// The k ids with the lowest logprob (highest when `reverse`), ties by id, by
// exhaustive pairwise comparison.
std::set<std::string> brute_bottom_k(const std::map<std::string, double>& logprob, std::size_t k, bool reverse);

// Every atom of an evaluation example also occurs in some training example.
bool atoms_closed(const std::map<std::string, ProgramStructure>& structures, const std::vector<std::string>& train,
                  const std::vector<std::string>& eval);

struct BruteForceOptimum {
  double best = -1.0;
  std::size_t feasible = 0;  // subsets satisfying the atom constraint
};

// Maximum compound divergence over every evaluation subset of size k that
// satisfies the atom constraint. Only for tiny datasets.
BruteForceOptimum brute_force_tmcd(const std::map<std::string, ProgramStructure>& structures, std::size_t k,
                                   double alpha);

// Fresh empty directory below the system temp directory.
std::filesystem::path fresh_dir(const std::string& name);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace lsplit::synth
