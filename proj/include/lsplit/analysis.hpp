#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lsplit/divergence.hpp"
#include "lsplit/ingestion.hpp"
#include "lsplit/sql.hpp"

namespace lsplit {

// ---------------------------------------------------------------------------
// Word rarity

// word (case-folded) -> occurrences per million words.
using FrequencyTable = std::map<std::string, double>;
using Wordlist = std::set<std::string>;

// Either two columns `word<TAB>rate` or a SUBTLEX-style table whose header
// names a "Word" column and a "SUBTLWF" (per-million) column. Rates of words
// that collide after case folding are added. Throws MalformedResource.
FrequencyTable parse_frequency_table(std::string_view text);
FrequencyTable load_frequency_table(const std::filesystem::path& path);
// One word per line, case-folded; blank lines are skipped.
Wordlist parse_wordlist(std::string_view text);
Wordlist load_wordlist(const std::filesystem::path& path);

struct RareWordStats {
  std::size_t considered = 0;  // tokens whose word is in the wordlist
  std::size_t rare = 0;        // of those, rate <= threshold or no rate at all
  std::set<std::string> rare_types;
  double fraction() const { return considered == 0 ? 0.0 : static_cast<double>(rare) / static_cast<double>(considered); }
};

// Counts over the case-folded tokens of the scored field of every id.
RareWordStats rare_word_stats(const std::vector<std::string>& ids, const Dataset& ds, const FrequencyTable& freq,
                              const Wordlist& wordlist, double threshold_per_million = 1.0);
double rare_word_fraction(const std::vector<std::string>& ids, const Dataset& ds, const FrequencyTable& freq,
                          const Wordlist& wordlist, double threshold_per_million = 1.0);

// ---------------------------------------------------------------------------
// Null distributions over random splits

using SetStatistic = std::function<double(const std::vector<std::string>& eval_ids)>;

struct NullSummary {
  std::vector<double> samples;  // in trial order
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  double min = 0.0;
  double max = 0.0;
  std::map<std::string, double> percentiles;  // "p1", "p5", "p25", "p50", "p75", "p95", "p99"
  std::optional<double> observed;
  std::optional<double> observed_percentile;
};

// Linear interpolation between closest ranks; q in [0, 1].
double quantile(std::vector<double> values, double q);
// 100 * (#below + 0.5 * #equal) / #samples.
double percentile_rank(const std::vector<double>& samples, double value);

// Trial t evaluates `statistic` on the evaluation ids of a random split with
// seed derive_seed(seed, t) and fraction p. Trials may run in parallel.
NullSummary null_distribution(const Dataset& ds, const SetStatistic& statistic, std::size_t trials,
                              std::uint64_t seed, double p, std::optional<double> observed = std::nullopt,
                              std::size_t jobs = 1);

// ---------------------------------------------------------------------------
// Parse trees

// Bracketed trees such as "(S (NP w1) (VP w2))". Bare tokens and nodes with
// a label but no children, as in "(w1)", are words. An outer wrapper with an
// empty label and one child is removed.
struct ParseTree {
  std::string label;
  std::vector<ParseTree> children;
  bool is_word() const { return children.empty(); }
};

// Throws MalformedTree("position N").
ParseTree parse_tree(std::string_view text);

// Mean over words of the right-sibling counts summed along the path from the
// root to the word.
double yngve_score(const ParseTree& tree);

struct TreeDepth {
  double mean = 0.0;
  std::size_t max = 0;
};

// Word depths in edges from the root.
TreeDepth tree_depth_stats(const ParseTree& tree);

// ---------------------------------------------------------------------------
// Readability

// Vowel groups (a e i o u y) in the letters of the word, minus a silent final
// "e" that forms its own group (kept for a consonant + "le" ending), at least
// one.
std::size_t count_syllables(std::string_view word);

struct ReadabilityCounts {
  std::size_t words = 0;
  std::size_t sentences = 0;
  std::size_t syllables = 0;
};

// Words are whitespace-separated chunks containing a letter. Sentences are
// runs of . ! ? plus a trailing unterminated fragment, at least one.
ReadabilityCounts readability_counts(std::string_view text);

// 0.39 * words/sentences + 11.8 * syllables/words - 15.59. Throws EmptyText
// when the text has no words.
double flesch_kincaid_grade(std::string_view text);

// ---------------------------------------------------------------------------
// Novel compounds, hardness and projected accuracy

using Correctness = std::map<std::string, bool>;

// Lines of `id<TAB>0|1`. Throws MalformedResource.
Correctness parse_correctness(std::string_view text);
Correctness load_correctness(const std::filesystem::path& path);

// sum_i accuracy_i * weight_i, with no renormalization. Throws BadWeights
// when the sizes differ, a weight is negative or the weights do not sum to
// 1 within 0.005 (published fractions are rounded).
double projected_accuracy(const std::vector<double>& accuracies, const std::vector<double>& weights);

struct GroupAccuracy {
  std::size_t examples = 0;
  std::size_t correct = 0;
  double accuracy() const { return examples == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(examples); }
};

struct NovelCompoundReport {
  std::size_t examples = 0;
  std::size_t novel = 0;  // examples with a compound absent from train
  double novel_fraction() const { return examples == 0 ? 0.0 : static_cast<double>(novel) / static_cast<double>(examples); }
  std::optional<GroupAccuracy> novel_accuracy;
  std::optional<GroupAccuracy> familiar_accuracy;
};

// Throws MissingStructure for ids without structures.
NovelCompoundReport novel_compound_report(const std::vector<std::string>& train_ids,
                                          const std::vector<std::string>& eval_ids, const StructureMap& structures,
                                          const Correctness* correctness = nullptr);

// Base split's (novel, familiar) accuracies reweighted by the target split's
// (novel, familiar) frequencies.
double project_novel_accuracy(const NovelCompoundReport& base, const NovelCompoundReport& target);

inline constexpr std::size_t kHardnessLevels = 4;

struct HardnessBreakdown {
  std::array<std::size_t, kHardnessLevels> counts{};
  std::array<GroupAccuracy, kHardnessLevels> accuracy{};  // filled when correctness is given
  bool has_accuracy = false;
  std::size_t total() const;
  std::array<double, kHardnessLevels> fractions() const;
};

HardnessBreakdown hardness_breakdown(const std::vector<std::string>& ids, const StructureMap& structures,
                                     const Correctness* correctness = nullptr);

// Per-level base accuracies weighted by target level fractions.
double hardness_projection(const std::array<double, kHardnessLevels>& base_accuracy,
                           const std::array<double, kHardnessLevels>& target_fractions);
double hardness_projection(const HardnessBreakdown& base, const HardnessBreakdown& target);

// ---------------------------------------------------------------------------
// Reports

// Sparse histogram: bin index -> count, bin i covering [i*width, (i+1)*width).
struct Histogram {
  double width = 1.0;
  std::map<long long, std::size_t> bins;
  void add(double value);
};

struct CsvTable {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  friend bool operator==(const CsvTable&, const CsvTable&) = default;
};

struct AnalysisReport {
  nlohmann::json document;
  std::vector<CsvTable> tables;
  friend bool operator==(const AnalysisReport&, const AnalysisReport&) = default;
};

// Writes report.json plus one <name>.csv per table into `dir`.
void emit_report(const AnalysisReport& report, const std::filesystem::path& dir);
AnalysisReport load_report(const std::filesystem::path& dir);

std::string format_number(double value);
std::string csv_escape(std::string_view field);
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

struct SplitSides {
  std::vector<std::string> train;
  std::vector<std::string> dev;
  std::vector<std::string> test;
};

struct AuditInputs {
  const Dataset* dataset = nullptr;
  SplitSides sides;
  std::string manifest_text;  // verbatim manifest.json of the split
  const StructureMap* structures = nullptr;
  const FrequencyTable* frequencies = nullptr;
  const Wordlist* wordlist = nullptr;
  double rare_threshold = 1.0;
  const Correctness* correctness = nullptr;
  std::size_t null_trials = 0;  // 0 disables the rare-word null distribution
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

// Every statistic the inputs allow, tagged with the manifest digest and the
// digests of the id sets it was computed over.
AnalysisReport audit_split(const AuditInputs& in);

// Digest of a sorted id list (stable across runs).
std::string id_set_digest(const std::vector<std::string>& ids);

}  // namespace lsplit
