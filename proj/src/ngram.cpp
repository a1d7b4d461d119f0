#include "lsplit/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "lsplit/error.hpp"

namespace lsplit {

std::size_t NGramLM::KeyHash::operator()(const std::vector<TokenId>& key) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (TokenId id : key) {
    h ^= id;
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::size_t>(h);
}

NGramLM::TokenId NGramLM::lookup(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? unk_ : it->second;
}

double NGramLM::prob_ids(std::span<const TokenId> history, TokenId word) const {
  // history holds exactly order-1 ids, oldest first
  double p = 1.0 / static_cast<double>(vocab_.size());
  std::vector<TokenId> key;
  for (std::size_t m = 1; m <= order_; ++m) {
    key.assign(history.end() - static_cast<std::ptrdiff_t>(m - 1), history.end());
    const Table& table = tables_[m - 1];
    auto it = table.find(key);
    if (it == table.end() || it->second.total == 0) continue;
    const Level& level = it->second;
    auto c = level.counts.find(word);
    const double count = c == level.counts.end() ? 0.0 : static_cast<double>(c->second);
    const double total = static_cast<double>(level.total);
    const double types = static_cast<double>(level.counts.size());
    p = (std::max(count - discount_, 0.0) + discount_ * types * p) / total;
  }
  return p;
}

double NGramLM::prob(std::span<const std::string> history, const std::string& word) const {
  std::vector<TokenId> h(order_ - 1, bos_);
  const std::size_t take = std::min(history.size(), order_ - 1);
  for (std::size_t i = 0; i < take; ++i) {
    h[order_ - 1 - take + i] = lookup(history[history.size() - take + i]);
  }
  auto it = std::lower_bound(vocab_.begin(), vocab_.end(), word);
  const TokenId w = (it != vocab_.end() && *it == word) ? ids_.at(word) : unk_;
  return prob_ids(h, w);
}

double NGramLM::score(std::span<const std::string> context, std::span<const std::string> target) const {
  std::vector<TokenId> seq(order_ - 1, bos_);
  for (const auto& t : context) seq.push_back(lookup(t));
  const std::size_t first = seq.size();
  for (const auto& t : target) {
    auto it = std::lower_bound(vocab_.begin(), vocab_.end(), t);
    seq.push_back((it != vocab_.end() && *it == t) ? ids_.at(t) : unk_);
  }
  double total = 0.0;
  for (std::size_t i = first; i < seq.size(); ++i) {
    std::span<const TokenId> history(seq.data() + i - (order_ - 1), order_ - 1);
    total += std::log(prob_ids(history, seq[i]));
  }
  return total;
}

std::vector<std::vector<std::string>> NGramLM::observed_histories() const {
  std::vector<std::string> names(ids_.size());
  for (const auto& [name, id] : ids_) names[id] = name;
  std::vector<std::vector<std::string>> out;
  for (const auto& [key, level] : tables_[order_ - 1]) {
    std::vector<std::string> h;
    for (TokenId id : key) h.push_back(names[id]);
    out.push_back(std::move(h));
  }
  std::sort(out.begin(), out.end());
  return out;
}

NGramLM train_ngram(std::span<const TrainingSequence> corpus, std::size_t order, double discount) {
  if (order == 0) throw Error(ErrorCode::BadArguments, "n-gram order must be >= 1");
  if (!(discount > 0.0 && discount < 1.0)) throw Error(ErrorCode::BadArguments, "discount must lie in (0, 1)");

  std::set<std::string> predictable;
  std::set<std::string> history_only;
  for (const auto& seq : corpus) {
    predictable.insert(seq.target.begin(), seq.target.end());
    history_only.insert(seq.context.begin(), seq.context.end());
  }
  if (predictable.empty()) throw Error(ErrorCode::EmptyCorpus, "no target tokens in training corpus");
  predictable.insert(NGramLM::kEos);
  predictable.insert(NGramLM::kUnk);

  NGramLM lm;
  lm.order_ = order;
  lm.discount_ = discount;
  lm.vocab_.assign(predictable.begin(), predictable.end());
  for (const auto& w : lm.vocab_) lm.ids_.emplace(w, static_cast<NGramLM::TokenId>(lm.ids_.size()));
  history_only.insert(NGramLM::kBos);
  for (const auto& w : history_only) {
    lm.ids_.emplace(w, static_cast<NGramLM::TokenId>(lm.ids_.size()));
  }
  lm.bos_ = lm.ids_.at(NGramLM::kBos);
  lm.unk_ = lm.ids_.at(NGramLM::kUnk);
  const NGramLM::TokenId eos = lm.ids_.at(NGramLM::kEos);

  lm.tables_.assign(order, {});
  auto& top = lm.tables_[order - 1];
  std::vector<NGramLM::TokenId> seq;
  std::vector<NGramLM::TokenId> key;
  for (const auto& s : corpus) {
    seq.assign(order - 1, lm.bos_);
    for (const auto& t : s.context) seq.push_back(lm.ids_.at(t));
    const std::size_t first = seq.size();
    for (const auto& t : s.target) seq.push_back(lm.ids_.at(t));
    seq.push_back(eos);
    for (std::size_t i = first; i < seq.size(); ++i) {
      key.assign(seq.begin() + static_cast<std::ptrdiff_t>(i - (order - 1)), seq.begin() + static_cast<std::ptrdiff_t>(i));
      auto& level = top[key];
      ++level.counts[seq[i]];
      ++level.total;
    }
  }
  // continuation counts: each distinct (m+1)-gram adds one to its order-m suffix
  for (std::size_t m = order - 1; m >= 1; --m) {
    const auto& higher = lm.tables_[m];
    auto& lower = lm.tables_[m - 1];
    for (const auto& [hist, level] : higher) {
      key.assign(hist.begin() + 1, hist.end());
      auto& target = lower[key];
      for (const auto& [word, count] : level.counts) {
        ++target.counts[word];
        ++target.total;
      }
    }
  }
  return lm;
}

}  // namespace lsplit
