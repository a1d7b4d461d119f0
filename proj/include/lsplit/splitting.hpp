#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lsplit/divergence.hpp"
#include "lsplit/ingestion.hpp"
#include "lsplit/scoring.hpp"
#include "lsplit/sql.hpp"

namespace lsplit {

enum class SplitType { Likelihood, LikelihoodLen, Reverse, Random, Length, Template, Tmcd };

std::string_view split_type_name(SplitType t);
// Accepts the names printed by split_type_name ("likelihood", "likelihood-len",
// "reverse", "random", "length", "template", "tmcd").
std::optional<SplitType> split_type_from_name(std::string_view name);

struct SplitConfig {
  double p = 0.2;             // evaluation fraction
  double dev_fraction = 0.5;  // share of the evaluation set that becomes dev
  std::uint64_t seed = 0;
  bool length_control = false;
  bool reverse = false;
  bool atom_constraint = false;
  bool label_balance = false;
  std::size_t max_iters = 200000;  // TMCD: candidate swaps evaluated

  // Throws BadSplitConfig unless 0 < p < 1 and 0 < dev_fraction < 1.
  void validate() const;
};

// floor(p * n), guarded against representation error (0.3 * 10 -> 3).
std::size_t eval_target(std::size_t n, double p);

struct SwapMove {
  std::string id;
  std::string from;    // "train" or "eval"
  std::string to;
  std::string reason;  // "atom-violation" or "restore-size"
};

// Per-group selection bookkeeping: `quota` is floor(p * size) and `selected`
// is the final count after the remainder top-up.
struct GroupQuota {
  std::string key;
  std::size_t size = 0;
  std::size_t quota = 0;
  std::size_t selected = 0;
};

struct TmcdStats {
  std::size_t evaluated = 0;  // candidate swaps examined
  std::size_t accepted = 0;
  std::size_t passes = 0;
  bool converged = false;     // a full pass ended with no accepted swap
  std::size_t pinned_unparsed = 0;
  double initial_compound = 0.0;
  double final_compound = 0.0;
};

struct SplitResult {
  SplitType type = SplitType::Random;
  SplitConfig config;
  // All id lists are sorted. eval = dev + test.
  std::vector<std::string> train;
  std::vector<std::string> eval;
  std::vector<std::string> dev;
  std::vector<std::string> test;

  std::size_t total = 0;
  std::size_t target_eval = 0;
  std::size_t overshoot = 0;  // template splits only
  std::vector<GroupQuota> length_quotas;
  std::vector<GroupQuota> label_quotas;
  std::vector<SwapMove> swap_log;
  std::optional<TmcdStats> tmcd;
  std::optional<SplitDivergence> divergence;  // train vs eval
  std::optional<SplitDivergence> divergence_dev;  // train vs dev
  std::vector<std::string> notes;

  std::string dataset_digest;
  std::string scores_digest;
  std::string structures_digest;
};

// Selection helpers shared by the public split operations. Each returns a
// complete result: selection, optional label balance and atom constraint,
// then the dev/test partition.
//
// Likelihood family: lowest (logprob, id) first; reverse takes the highest
// logprob first with ties still by ascending id. With length control each
// distinct token length of the scored field is a bucket holding its
// floor(p * size) best examples; the remaining slots go one each to the
// buckets with the largest fractional remainders (ties by the bucket's next
// candidate, then bucket key) so |eval| = floor(p * |D|) exactly. Label
// balance applies the same apportionment across labels first.
SplitResult likelihood_split(const Dataset& ds, const std::vector<ScoreRecord>& scores, const SplitConfig& cfg,
                             const StructureMap* structures = nullptr);
SplitResult likelihood_split_lencontrol(const Dataset& ds, const std::vector<ScoreRecord>& scores,
                                        const SplitConfig& cfg, const StructureMap* structures = nullptr);
SplitResult reverse_split(const Dataset& ds, const std::vector<ScoreRecord>& scores, const SplitConfig& cfg,
                          const StructureMap* structures = nullptr);
// Likelihood split run independently inside every label class.
SplitResult enforce_label_balance(const Dataset& ds, const std::vector<ScoreRecord>& scores, const SplitConfig& cfg,
                                  const StructureMap* structures = nullptr);

// Uniform random selection from a seeded shuffle of the ids.
SplitResult random_split(const Dataset& ds, const SplitConfig& cfg, const StructureMap* structures = nullptr);

// Longest scored-field token lengths first, ties by id.
SplitResult length_split(const Dataset& ds, const SplitConfig& cfg, const StructureMap* structures = nullptr);

// Whole template groups are drawn in a seeded order until |eval| reaches the
// target; the excess is recorded as overshoot. Throws MissingTemplate.
SplitResult template_split(const Dataset& ds, const SplitConfig& cfg,
                           const std::map<std::string, std::string>& templates);
// Same, with the group draw order given explicitly (every template must
// appear exactly once).
SplitResult template_split_ordered(const Dataset& ds, const SplitConfig& cfg,
                                   const std::map<std::string, std::string>& templates,
                                   const std::vector<std::string>& group_order);
std::map<std::string, std::string> templates_of(const StructureMap& structures);

// Greedy hill climbing on compound divergence from the random split's
// initialization. Candidate (train, eval) pairs are visited in a seeded
// order, pass after pass; a swap is kept iff the compound divergence strictly
// increases and the number of evaluation atoms missing from train does not
// grow. Programs that failed to parse stay in train. Remaining atom
// violations are repaired with enforce_atom_constraint. Throws
// MissingStructure.
SplitResult tmcd_split(const Dataset& ds, const SplitConfig& cfg, const StructureMap& structures,
                       const std::vector<ScoreRecord>* scores = nullptr);

// Moves evaluation examples with atoms unseen in train back to train (fewest
// missing atoms first, ties by id) and refills the evaluation set with the
// most preferred train example whose atoms all occur in at least two train
// examples. Preference is (logprob, id) ascending when `scores` is given
// (descending logprob when `reverse`), otherwise id ascending; with
// `label_balance` the refill has the same label. Every move is logged. Throws
// ConstraintUnsatisfiable when no refill candidate exists. Works on
// result.train / result.eval; run partition_dev_test afterwards.
void enforce_atom_constraint(SplitResult& result, const Dataset& ds, const StructureMap& structures,
                             const std::map<std::string, double>* scores, bool reverse, bool label_balance);

// dev = floor(dev_fraction * |eval|) ids drawn from a seeded shuffle of the
// evaluation set (per label when label balance is on); the rest is test.
void partition_dev_test(SplitResult& result, const Dataset& ds, const SplitConfig& cfg);

struct SplitInputs {
  const Dataset* dataset = nullptr;
  const ScoreFile* scores = nullptr;
  const StructureMap* structures = nullptr;
};

// Dispatches on `type`, checks that the needed inputs are present and records
// input digests in the result.
SplitResult build_split(SplitType type, const SplitInputs& inputs, const SplitConfig& cfg);

// Deterministic manifest document (no timestamps, sorted keys).
std::string manifest_json(const SplitResult& result);

// Writes train.jsonl, dev.jsonl, test.jsonl and manifest.json.
void write_split(const std::filesystem::path& dir, const Dataset& ds, const SplitResult& result);

}  // namespace lsplit
