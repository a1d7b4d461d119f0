#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lsplit/ingestion.hpp"
#include "lsplit/tokenize.hpp"

namespace lsplit {

inline constexpr const char* kScorerNgram = "ngram-kfold";
inline constexpr const char* kScorerFile = "file";
inline constexpr const char* kScorerRemote = "remote-prompted";

// s(x): total natural-log likelihood of the scored field.
struct ScoreRecord {
  std::string id;
  double logprob = 0.0;
  std::size_t token_count = 0;
  std::string scorer;
  std::optional<std::size_t> fold;

  friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> assignment;

  std::vector<std::size_t> fold_sizes() const;
};

// Uniform random balanced partition of the dataset ids into k folds.
// Throws BadK unless 2 <= k <= |ds|.
FoldPlan make_folds(const Dataset& ds, std::size_t k, std::uint64_t seed);

// A rendered prompt. The full prompt text is context + " " + continuation
// (single-space join; an empty context yields just the continuation).
struct Prompt {
  std::string context;
  std::string continuation;

  std::string full() const { return context.empty() ? continuation : context + " " + continuation; }
};

Prompt render_prompt(const Example& ex, const TaskConfig& task);

struct KFoldOptions {
  std::size_t k = 3;
  std::uint64_t seed = 0;
  std::size_t order = 3;
  double discount = 0.75;
  std::size_t jobs = 1;
  TokenizeOptions tokenize;
};

struct KFoldResult {
  std::vector<ScoreRecord> records;  // sorted by id
  FoldPlan plan;
  std::vector<std::size_t> training_sizes;  // per fold
};

// Scores every example with an n-gram model trained only on the other folds.
// For sentence-pair tasks the rendered prompt context conditions the model and
// only the x2 tokens are scored.
KFoldResult score_kfold(const Dataset& ds, const KFoldOptions& opts);

// Score files: one JSON object per line with id, logprob, token_count, scorer
// and an optional fold. An optional first line {"_meta": {...}} carries
// provenance and is returned separately.
struct ScoreFile {
  std::vector<ScoreRecord> records;  // sorted by id
  std::map<std::string, std::string> meta;
  std::string digest;  // digest of the canonical record serialization
};

ScoreFile parse_scores(std::string_view text);
ScoreFile load_scores(const std::filesystem::path& path);
std::string serialize_scores(const std::vector<ScoreRecord>& records, const std::map<std::string, std::string>& meta = {});
std::string scores_digest(const std::vector<ScoreRecord>& records);

// id -> logprob for every example of `ds`. Throws UnknownId for a score whose
// id is not in the dataset and MissingScore for an example without a score.
std::map<std::string, double> join_scores(const Dataset& ds, const std::vector<ScoreRecord>& records);

}  // namespace lsplit
