#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace lsplit {

// One training sequence: `context` tokens condition the model but only the
// `target` tokens are predicted (and counted).
struct TrainingSequence {
  std::vector<std::string> context;
  std::vector<std::string> target;
};

// Interpolated Kneser-Ney language model with absolute discounting.
//
// The highest order uses raw n-gram counts; lower orders use continuation
// counts (number of distinct left extensions). Each level interpolates with
// the next-lower one and the recursion bottoms out in the uniform
// distribution over the predictable vocabulary, so every vocabulary entry has
// positive probability and each observed history's distribution sums to one:
//
//   P(w|h) = max(c(h,w) - d, 0) / c(h) + d * N1+(h.) / c(h) * P(w|h')
//
// Sequences are padded on the left with order-1 "<s>" sentinels. The
// predictable vocabulary is every training target token plus "</s>" and
// "<unk>"; query tokens outside it are scored as "<unk>".
class NGramLM {
 public:
  using TokenId = std::uint32_t;

  static constexpr const char* kBos = "<s>";
  static constexpr const char* kEos = "</s>";
  static constexpr const char* kUnk = "<unk>";

  std::size_t order() const { return order_; }
  double discount() const { return discount_; }

  // Predictable vocabulary, sorted, including </s> and <unk>.
  const std::vector<std::string>& vocabulary() const { return vocab_; }

  // Probability of `word` following `history` (the last order-1 tokens are
  // used; shorter histories are left-padded with <s>).
  double prob(std::span<const std::string> history, const std::string& word) const;

  // Sum of natural-log probabilities of the target tokens, each conditioned on
  // <s> padding, the context tokens, and the preceding targets. The end
  // sentinel is not scored.
  double score(std::span<const std::string> context, std::span<const std::string> target) const;

  // Every history observed at the top order, as token strings.
  std::vector<std::vector<std::string>> observed_histories() const;

  friend NGramLM train_ngram(std::span<const TrainingSequence> corpus, std::size_t order, double discount);

 private:
  struct Level {
    std::unordered_map<TokenId, std::uint64_t> counts;
    std::uint64_t total = 0;
  };
  struct KeyHash {
    std::size_t operator()(const std::vector<TokenId>& key) const noexcept;
  };
  using Table = std::unordered_map<std::vector<TokenId>, Level, KeyHash>;

  TokenId lookup(const std::string& token) const;
  double prob_ids(std::span<const TokenId> history, TokenId word) const;

  std::size_t order_ = 3;
  double discount_ = 0.75;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> ids_;  // vocab plus <s>
  TokenId bos_ = 0;
  TokenId unk_ = 0;
  std::vector<Table> tables_;  // tables_[m-1] holds order-m statistics keyed by history
};

// Throws EmptyCorpus when no sequence has a target token, and BadArguments
// for order 0 or a discount outside (0, 1).
NGramLM train_ngram(std::span<const TrainingSequence> corpus, std::size_t order = 3, double discount = 0.75);

}  // namespace lsplit
