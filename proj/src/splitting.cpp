#include "lsplit/splitting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "lsplit/digest.hpp"
#include "lsplit/error.hpp"
#include "lsplit/rng.hpp"
#include "lsplit/tokenize.hpp"

namespace lsplit {

using nlohmann::json;

std::string_view split_type_name(SplitType t) {
  switch (t) {
    case SplitType::Likelihood: return "likelihood";
    case SplitType::LikelihoodLen: return "likelihood-len";
    case SplitType::Reverse: return "reverse";
    case SplitType::Random: return "random";
    case SplitType::Length: return "length";
    case SplitType::Template: return "template";
    case SplitType::Tmcd: return "tmcd";
  }
  return "random";
}

std::optional<SplitType> split_type_from_name(std::string_view name) {
  for (SplitType t : {SplitType::Likelihood, SplitType::LikelihoodLen, SplitType::Reverse, SplitType::Random,
                      SplitType::Length, SplitType::Template, SplitType::Tmcd}) {
    if (split_type_name(t) == name) return t;
  }
  return std::nullopt;
}

void SplitConfig::validate() const {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::BadSplitConfig, "p must be in (0,1), got " + std::to_string(p));
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) {
    throw Error(ErrorCode::BadSplitConfig, "dev fraction must be in (0,1), got " + std::to_string(dev_fraction));
  }
}

std::size_t eval_target(std::size_t n, double p) {
  return static_cast<std::size_t>(std::floor(p * static_cast<double>(n) + 1e-9));
}

namespace {

constexpr const char* kAtomNote =
    "atom constraint applied to the combined evaluation set before the dev/test partition";

std::string label_key(const Example& ex) { return ex.label.value_or(""); }

std::size_t field_length(const Example& ex, const TaskConfig& task) {
  const std::string* f = ex.field(task.score_target());
  return f ? tokenize(*f).size() : 0;
}

struct Group {
  std::string key;
  std::vector<std::size_t> members;  // dataset indices in preference order
};

// Gives each group floor(p * size) and hands the remaining slots of `target`
// out one at a time to the groups with the largest fractional remainder. Ties
// go to the group whose next candidate ranks first, then to the earlier group.
std::vector<std::size_t> apportion(const std::vector<Group>& groups, double p, std::size_t target,
                                   const std::vector<std::size_t>& rank_pos, std::vector<GroupQuota>* log) {
  const std::size_t g = groups.size();
  std::vector<std::size_t> selected(g);
  std::vector<double> remainder(g);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < g; ++i) {
    const std::size_t size = groups[i].members.size();
    selected[i] = std::min(size, eval_target(size, p));
    remainder[i] = p * static_cast<double>(size) - static_cast<double>(selected[i]);
    assigned += selected[i];
  }
  std::vector<std::size_t> quota = selected;
  while (assigned > target) {
    // only reachable for a caller-imposed target below the floors
    for (std::size_t i = g; i-- > 0 && assigned > target;) {
      if (selected[i] > 0) {
        --selected[i];
        --assigned;
      }
    }
  }
  std::vector<std::size_t> order(g);
  std::iota(order.begin(), order.end(), 0);
  auto next_rank = [&](std::size_t i) {
    const auto& m = groups[i].members;
    return selected[i] < m.size() ? rank_pos[m[selected[i]]] : std::numeric_limits<std::size_t>::max();
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (std::fabs(remainder[a] - remainder[b]) > 1e-12) return remainder[a] > remainder[b];
    return next_rank(a) < next_rank(b);
  });
  std::size_t left = target - assigned;
  while (left > 0) {
    bool progress = false;
    for (std::size_t i : order) {
      if (left == 0) break;
      if (selected[i] < groups[i].members.size()) {
        ++selected[i];
        --left;
        progress = true;
      }
    }
    if (!progress) break;
  }
  if (log) {
    for (std::size_t i = 0; i < g; ++i) {
      log->push_back({groups[i].key, groups[i].members.size(), quota[i], selected[i]});
    }
  }
  return selected;
}

// Picks floor(p * |D|) examples following `ranking`, honoring label balance
// and length control. Fills result.eval / result.train.
void select_ranked(SplitResult& result, const Dataset& ds, const std::vector<std::size_t>& ranking,
                   const SplitConfig& cfg) {
  const std::size_t n = ds.size();
  std::vector<std::size_t> rank_pos(n);
  for (std::size_t r = 0; r < ranking.size(); ++r) rank_pos[ranking[r]] = r;
  result.total = n;
  result.target_eval = eval_target(n, cfg.p);

  std::vector<Group> labels;
  if (cfg.label_balance) {
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t idx : ranking) by_label[label_key(ds.examples[idx])].push_back(idx);
    for (auto& [key, members] : by_label) labels.push_back({key, std::move(members)});
  } else {
    labels.push_back({"", ranking});
  }
  const std::vector<std::size_t> label_targets =
      cfg.label_balance ? apportion(labels, cfg.p, result.target_eval, rank_pos, &result.label_quotas)
                        : std::vector<std::size_t>{result.target_eval};

  std::vector<bool> in_eval(n, false);
  for (std::size_t li = 0; li < labels.size(); ++li) {
    const Group& lg = labels[li];
    if (cfg.length_control) {
      std::map<std::size_t, std::vector<std::size_t>> by_length;
      for (std::size_t idx : lg.members) by_length[field_length(ds.examples[idx], ds.task)].push_back(idx);
      std::vector<Group> buckets;
      for (auto& [len, members] : by_length) {
        std::string key = std::to_string(len);
        if (cfg.label_balance) key = lg.key + "/" + key;
        buckets.push_back({key, std::move(members)});
      }
      const auto take = apportion(buckets, cfg.p, label_targets[li], rank_pos, &result.length_quotas);
      for (std::size_t b = 0; b < buckets.size(); ++b) {
        for (std::size_t j = 0; j < take[b]; ++j) in_eval[buckets[b].members[j]] = true;
      }
    } else {
      for (std::size_t j = 0; j < label_targets[li] && j < lg.members.size(); ++j) in_eval[lg.members[j]] = true;
    }
  }
  result.eval.clear();
  result.train.clear();
  for (std::size_t i = 0; i < n; ++i) (in_eval[i] ? result.eval : result.train).push_back(ds.examples[i].id);
}

std::vector<std::size_t> identity_ranking(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

std::vector<std::size_t> random_ranking(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> r = identity_ranking(n);
  Rng rng(seed ^ kSelectionStream);
  rng.shuffle(r);
  return r;
}

std::vector<double> logprobs_by_index(const Dataset& ds, const std::map<std::string, double>& scores) {
  std::vector<double> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out[i] = scores.at(ds.examples[i].id);
  return out;
}

std::vector<std::size_t> likelihood_ranking(const std::vector<double>& lp, bool reverse) {
  std::vector<std::size_t> r = identity_ranking(lp.size());
  // indices follow id order, so a stable sort keeps ties by ascending id
  std::stable_sort(r.begin(), r.end(), [&](std::size_t a, std::size_t b) {
    return reverse ? lp[a] > lp[b] : lp[a] < lp[b];
  });
  return r;
}

SplitResult begin_result(SplitType type, const Dataset& ds, const SplitConfig& cfg) {
  cfg.validate();
  if (ds.size() == 0) throw Error(ErrorCode::EmptyCorpus, "dataset has no examples");
  SplitResult result;
  result.type = type;
  result.config = cfg;
  result.dataset_digest = ds.digest;
  return result;
}

void finish(SplitResult& result, const Dataset& ds, const SplitConfig& cfg, const StructureMap* structures,
            const std::map<std::string, double>* scores) {
  if (cfg.atom_constraint) {
    if (!structures) throw Error(ErrorCode::BadSplitConfig, "the atom constraint needs program structures");
    enforce_atom_constraint(result, ds, *structures, scores, cfg.reverse, cfg.label_balance);
    if (std::find(result.notes.begin(), result.notes.end(), kAtomNote) == result.notes.end()) {
      result.notes.push_back(kAtomNote);
    }
  }
  partition_dev_test(result, ds, cfg);
  if (structures && !result.train.empty() && !result.eval.empty()) {
    result.divergence = split_divergences(*structures, result.train, result.eval);
    if (!result.dev.empty()) result.divergence_dev = split_divergences(*structures, result.train, result.dev);
  }
}

SplitResult likelihood_family(SplitType type, const Dataset& ds, const std::vector<ScoreRecord>& records,
                              SplitConfig cfg, const StructureMap* structures) {
  SplitResult result = begin_result(type, ds, cfg);
  const std::map<std::string, double> scores = join_scores(ds, records);
  result.scores_digest = scores_digest(records);
  select_ranked(result, ds, likelihood_ranking(logprobs_by_index(ds, scores), cfg.reverse), cfg);
  finish(result, ds, cfg, structures, &scores);
  return result;
}

}  // namespace

SplitResult likelihood_split(const Dataset& ds, const std::vector<ScoreRecord>& scores, const SplitConfig& cfg,
                             const StructureMap* structures) {
  SplitConfig c = cfg;
  c.length_control = false;
  c.reverse = false;
  return likelihood_family(SplitType::Likelihood, ds, scores, c, structures);
}

SplitResult likelihood_split_lencontrol(const Dataset& ds, const std::vector<ScoreRecord>& scores,
                                        const SplitConfig& cfg, const StructureMap* structures) {
  SplitConfig c = cfg;
  c.length_control = true;
  c.reverse = false;
  return likelihood_family(SplitType::LikelihoodLen, ds, scores, c, structures);
}

SplitResult reverse_split(const Dataset& ds, const std::vector<ScoreRecord>& scores, const SplitConfig& cfg,
                          const StructureMap* structures) {
  SplitConfig c = cfg;
  c.reverse = true;
  return likelihood_family(SplitType::Reverse, ds, scores, c, structures);
}

SplitResult enforce_label_balance(const Dataset& ds, const std::vector<ScoreRecord>& scores, const SplitConfig& cfg,
                                  const StructureMap* structures) {
  SplitConfig c = cfg;
  c.label_balance = true;
  const SplitType type =
      c.reverse ? SplitType::Reverse : (c.length_control ? SplitType::LikelihoodLen : SplitType::Likelihood);
  return likelihood_family(type, ds, scores, c, structures);
}

SplitResult random_split(const Dataset& ds, const SplitConfig& cfg, const StructureMap* structures) {
  SplitConfig c = cfg;
  c.length_control = false;
  c.reverse = false;
  SplitResult result = begin_result(SplitType::Random, ds, c);
  select_ranked(result, ds, random_ranking(ds.size(), c.seed), c);
  finish(result, ds, c, structures, nullptr);
  return result;
}

SplitResult length_split(const Dataset& ds, const SplitConfig& cfg, const StructureMap* structures) {
  SplitConfig c = cfg;
  c.length_control = false;
  c.reverse = false;
  SplitResult result = begin_result(SplitType::Length, ds, c);
  std::vector<std::size_t> lengths(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) lengths[i] = field_length(ds.examples[i], ds.task);
  std::vector<std::size_t> ranking = identity_ranking(ds.size());
  std::stable_sort(ranking.begin(), ranking.end(), [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });
  select_ranked(result, ds, ranking, c);
  finish(result, ds, c, structures, nullptr);
  return result;
}

std::map<std::string, std::string> templates_of(const StructureMap& structures) {
  std::map<std::string, std::string> out;
  for (const auto& [id, s] : structures) out.emplace(id, s.tmpl.canonical);
  return out;
}

namespace {

std::map<std::string, std::vector<std::size_t>> template_groups(const Dataset& ds,
                                                                const std::map<std::string, std::string>& templates) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto it = templates.find(ds.examples[i].id);
    if (it == templates.end()) throw Error(ErrorCode::MissingTemplate, ds.examples[i].id);
    groups[it->second].push_back(i);
  }
  return groups;
}

}  // namespace

SplitResult template_split_ordered(const Dataset& ds, const SplitConfig& cfg,
                                   const std::map<std::string, std::string>& templates,
                                   const std::vector<std::string>& group_order) {
  if (cfg.atom_constraint) {
    throw Error(ErrorCode::BadSplitConfig, "the atom constraint would move examples across template groups");
  }
  SplitConfig c = cfg;
  c.length_control = false;
  c.reverse = false;
  SplitResult result = begin_result(SplitType::Template, ds, c);
  const auto groups = template_groups(ds, templates);
  if (group_order.size() != groups.size() ||
      std::set<std::string>(group_order.begin(), group_order.end()).size() != groups.size()) {
    throw Error(ErrorCode::BadSplitConfig, "group order must list every template exactly once");
  }
  result.total = ds.size();
  result.target_eval = eval_target(ds.size(), c.p);
  std::vector<bool> in_eval(ds.size(), false);
  std::size_t taken = 0;
  for (const auto& key : group_order) {
    if (taken >= result.target_eval) break;
    auto it = groups.find(key);
    if (it == groups.end()) throw Error(ErrorCode::BadSplitConfig, "unknown template in group order");
    for (std::size_t idx : it->second) in_eval[idx] = true;
    taken += it->second.size();
  }
  result.overshoot = taken > result.target_eval ? taken - result.target_eval : 0;
  for (std::size_t i = 0; i < ds.size(); ++i) (in_eval[i] ? result.eval : result.train).push_back(ds.examples[i].id);
  if (c.label_balance) result.notes.push_back("label balance is not applied to template splits");
  finish(result, ds, c, nullptr, nullptr);
  return result;
}

SplitResult template_split(const Dataset& ds, const SplitConfig& cfg,
                           const std::map<std::string, std::string>& templates) {
  const auto groups = template_groups(ds, templates);
  std::vector<std::string> order;
  for (const auto& [key, members] : groups) order.push_back(key);
  Rng rng(cfg.seed ^ kSelectionStream);
  rng.shuffle(order);
  return template_split_ordered(ds, cfg, templates, order);
}

// ---------------------------------------------------------------------------
// TMCD search

namespace {

struct InternedBags {
  // per example: (structure id, multiplicity), sorted by structure id
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> compounds;
  std::vector<std::vector<std::uint32_t>> atoms;  // distinct, sorted
  std::size_t compound_kinds = 0;
  std::size_t atom_kinds = 0;
};

InternedBags intern(const std::vector<const ProgramStructure*>& structs) {
  InternedBags out;
  std::map<std::string, std::uint32_t> cids, aids;
  for (const auto* s : structs) {
    for (const auto& c : s->compounds.items) cids.emplace(c, 0);
    for (const auto& a : s->atoms.items) aids.emplace(a, 0);
  }
  std::uint32_t next = 0;
  for (auto& [k, v] : cids) v = next++;
  out.compound_kinds = next;
  next = 0;
  for (auto& [k, v] : aids) v = next++;
  out.atom_kinds = next;
  for (const auto* s : structs) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> bag;
    for (const auto& c : s->compounds.items) {
      const std::uint32_t id = cids.at(c);
      if (!bag.empty() && bag.back().first == id) {
        ++bag.back().second;
      } else {
        bag.emplace_back(id, 1);
      }
    }
    out.compounds.push_back(std::move(bag));
    std::vector<std::uint32_t> atoms;
    for (const auto& a : s->atoms.distinct()) atoms.push_back(aids.at(a));
    out.atoms.push_back(std::move(atoms));
  }
  return out;
}

std::uint64_t gcd_u64(std::uint64_t a, std::uint64_t b) {
  while (b != 0) {
    const std::uint64_t t = a % b;
    a = b;
    b = t;
  }
  return a;
}

class TmcdSearch {
 public:
  TmcdSearch(const InternedBags& bags, std::vector<bool>& in_eval, double alpha)
      : bags_(bags), in_eval_(in_eval), alpha_(alpha) {
    train_c_.assign(bags.compound_kinds, 0);
    eval_c_.assign(bags.compound_kinds, 0);
    atom_train_.assign(bags.atom_kinds, 0);
    atom_eval_.assign(bags.atom_kinds, 0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < bags.compounds.size(); ++i) {
      auto& cc = in_eval[i] ? eval_c_ : train_c_;
      auto& n = in_eval[i] ? nq_ : np_;
      for (auto [cid, m] : bags.compounds[i]) {
        cc[cid] += m;
        n += m;
        total += m;
      }
      auto& ac = in_eval[i] ? atom_eval_ : atom_train_;
      for (auto aid : bags.atoms[i]) ++ac[aid];
    }
    pow_a_.resize(total + 1);
    pow_b_.resize(total + 1);
    for (std::size_t c = 0; c <= total; ++c) {
      pow_a_[c] = std::pow(static_cast<double>(c), alpha);
      pow_b_[c] = std::pow(static_cast<double>(c), 1.0 - alpha);
    }
    for (std::size_t a = 0; a < bags.atom_kinds; ++a) violations_ += atom_eval_[a] > 0 && atom_train_[a] == 0;
    recompute();
  }

  double divergence() const { return divergence_; }
  std::size_t violations() const { return violations_; }

  // Applies the swap (t: train -> eval, e: eval -> train) when it improves.
  bool try_swap(std::size_t t, std::size_t e) {
    const auto& bt = bags_.compounds[t];
    const auto& be = bags_.compounds[e];
    double delta = 0.0;
    std::size_t nt = 0, ne = 0;
    std::size_t i = 0, j = 0;
    while (i < bt.size() || j < be.size()) {
      std::uint32_t cid;
      std::int64_t ct = 0, ce = 0;
      if (j >= be.size() || (i < bt.size() && bt[i].first < be[j].first)) {
        cid = bt[i].first;
        ct = bt[i++].second;
      } else if (i >= bt.size() || be[j].first < bt[i].first) {
        cid = be[j].first;
        ce = be[j++].second;
      } else {
        cid = bt[i].first;
        ct = bt[i++].second;
        ce = be[j++].second;
      }
      nt += static_cast<std::size_t>(ct);
      ne += static_cast<std::size_t>(ce);
      const auto tc = static_cast<std::int64_t>(train_c_[cid]);
      const auto ec = static_cast<std::int64_t>(eval_c_[cid]);
      delta += pow_a_[tc - ct + ce] * pow_b_[ec + ct - ce] - pow_a_[tc] * pow_b_[ec];
    }
    const std::size_t np = np_ - nt + ne;
    const std::size_t nq = nq_ + nt - ne;
    if (np == 0 || nq == 0) return false;
    const double candidate = 1.0 - (raw_ + delta) / (pow_a_[np] * pow_b_[nq]);
    if (!(candidate > divergence_ + 1e-12)) return false;

    const std::int64_t dv = violation_delta(t, e);
    if (dv > 0) return false;

    apply(t, e);
    violations_ = static_cast<std::size_t>(static_cast<std::int64_t>(violations_) + dv);
    recompute();
    return true;
  }

 private:
  std::int64_t violation_delta(std::size_t t, std::size_t e) {
    const auto& at = bags_.atoms[t];
    const auto& ae = bags_.atoms[e];
    std::int64_t dv = 0;
    std::size_t i = 0, j = 0;
    while (i < at.size() || j < ae.size()) {
      std::uint32_t aid;
      int moved_out = 0, moved_in = 0;  // train side losses / gains
      if (j >= ae.size() || (i < at.size() && at[i] < ae[j])) {
        aid = at[i++];
        moved_out = 1;
      } else if (i >= at.size() || ae[j] < at[i]) {
        aid = ae[j++];
        moved_in = 1;
      } else {
        aid = at[i++];
        ++j;
        moved_out = moved_in = 1;
      }
      const auto tr = static_cast<std::int64_t>(atom_train_[aid]);
      const auto ev = static_cast<std::int64_t>(atom_eval_[aid]);
      const bool before = ev > 0 && tr == 0;
      const std::int64_t tr2 = tr - moved_out + moved_in;
      const std::int64_t ev2 = ev + moved_out - moved_in;
      const bool after = ev2 > 0 && tr2 == 0;
      dv += static_cast<int>(after) - static_cast<int>(before);
    }
    return dv;
  }

  void apply(std::size_t t, std::size_t e) {
    for (auto [cid, m] : bags_.compounds[t]) {
      train_c_[cid] -= m;
      eval_c_[cid] += m;
      np_ -= m;
      nq_ += m;
    }
    for (auto [cid, m] : bags_.compounds[e]) {
      eval_c_[cid] -= m;
      train_c_[cid] += m;
      nq_ -= m;
      np_ += m;
    }
    for (auto aid : bags_.atoms[t]) {
      --atom_train_[aid];
      ++atom_eval_[aid];
    }
    for (auto aid : bags_.atoms[e]) {
      --atom_eval_[aid];
      ++atom_train_[aid];
    }
    in_eval_[t] = true;
    in_eval_[e] = false;
  }

  void recompute() {
    raw_ = 0.0;
    for (std::size_t k = 0; k < train_c_.size(); ++k) raw_ += pow_a_[train_c_[k]] * pow_b_[eval_c_[k]];
    divergence_ = (np_ == 0 || nq_ == 0) ? 0.0 : 1.0 - raw_ / (pow_a_[np_] * pow_b_[nq_]);
  }

  const InternedBags& bags_;
  std::vector<bool>& in_eval_;
  double alpha_;
  std::vector<std::size_t> train_c_, eval_c_, atom_train_, atom_eval_;
  std::vector<double> pow_a_, pow_b_;
  std::size_t np_ = 0, nq_ = 0;
  std::size_t violations_ = 0;
  double raw_ = 0.0;
  double divergence_ = 0.0;
};

}  // namespace

SplitResult tmcd_split(const Dataset& ds, const SplitConfig& cfg, const StructureMap& structures,
                       const std::vector<ScoreRecord>* scores) {
  SplitConfig c = cfg;
  c.length_control = false;
  c.reverse = false;
  SplitResult result = begin_result(SplitType::Tmcd, ds, c);
  const std::size_t n = ds.size();
  std::vector<const ProgramStructure*> structs(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = structures.find(ds.examples[i].id);
    if (it == structures.end()) throw Error(ErrorCode::MissingStructure, ds.examples[i].id);
    structs[i] = &it->second;
  }
  std::optional<std::map<std::string, double>> score_map;
  if (scores) {
    score_map = join_scores(ds, *scores);
    result.scores_digest = scores_digest(*scores);
  }

  // random initialization; unparsed programs rank last so they stay in train
  std::vector<std::size_t> ranking = random_ranking(n, c.seed);
  std::stable_partition(ranking.begin(), ranking.end(), [&](std::size_t i) { return structs[i]->parsed; });
  select_ranked(result, ds, ranking, c);

  std::vector<bool> in_eval(n, false);
  {
    std::size_t j = 0;
    for (std::size_t i = 0; i < n && j < result.eval.size(); ++i) {
      if (ds.examples[i].id == result.eval[j]) {
        in_eval[i] = true;
        ++j;
      }
    }
  }
  std::vector<std::size_t> train_pool, eval_pool;
  TmcdStats stats;
  for (std::size_t i = 0; i < n; ++i) {
    if (in_eval[i]) {
      eval_pool.push_back(i);
    } else if (structs[i]->parsed) {
      train_pool.push_back(i);
    } else {
      ++stats.pinned_unparsed;
    }
  }

  const InternedBags bags = intern(structs);
  TmcdSearch search(bags, in_eval, kCompoundAlpha);
  stats.initial_compound = search.divergence();

  const std::uint64_t pairs = static_cast<std::uint64_t>(train_pool.size()) * eval_pool.size();
  Rng rng(c.seed ^ kSwapStream);
  while (pairs > 0 && stats.evaluated < c.max_iters) {
    // a pass visits every (train slot, eval slot) pair once in a seeded
    // affine order; accepted swaps exchange the slot contents
    std::uint64_t step = 1 + rng.below(pairs);
    while (gcd_u64(step, pairs) != 1) step = 1 + rng.below(pairs);
    const std::uint64_t offset = rng.below(pairs);
    std::size_t accepted_in_pass = 0;
    bool exhausted = false;
    for (std::uint64_t q = 0; q < pairs; ++q) {
      if (stats.evaluated >= c.max_iters) {
        exhausted = true;
        break;
      }
      const auto slot = static_cast<std::uint64_t>(
          (static_cast<unsigned __int128>(step) * q + offset) % pairs);
      std::size_t& t = train_pool[slot / eval_pool.size()];
      std::size_t& e = eval_pool[slot % eval_pool.size()];
      if (c.label_balance && label_key(ds.examples[t]) != label_key(ds.examples[e])) continue;
      ++stats.evaluated;
      if (search.try_swap(t, e)) {
        std::swap(t, e);
        ++stats.accepted;
        ++accepted_in_pass;
      }
    }
    if (!exhausted) ++stats.passes;
    if (exhausted) break;
    if (accepted_in_pass == 0) {
      stats.converged = true;
      break;
    }
  }

  result.eval.clear();
  result.train.clear();
  for (std::size_t i = 0; i < n; ++i) (in_eval[i] ? result.eval : result.train).push_back(ds.examples[i].id);
  if (search.violations() > 0 || c.atom_constraint) {
    enforce_atom_constraint(result, ds, structures, score_map ? &*score_map : nullptr, false, c.label_balance);
    result.notes.push_back(kAtomNote);
  }
  result.structures_digest = digest_hex(serialize_structures(structures));
  c.atom_constraint = false;  // already enforced above
  finish(result, ds, c, &structures, nullptr);
  result.config.atom_constraint = cfg.atom_constraint;
  stats.final_compound = result.divergence ? result.divergence->compound : search.divergence();
  result.tmcd = stats;
  return result;
}

// ---------------------------------------------------------------------------
// Post-processing

void enforce_atom_constraint(SplitResult& result, const Dataset& ds, const StructureMap& structures,
                             const std::map<std::string, double>* scores, bool reverse, bool label_balance) {
  const std::size_t n = ds.size();
  std::vector<std::vector<std::string>> atoms(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = structures.find(ds.examples[i].id);
    if (it == structures.end()) throw Error(ErrorCode::MissingStructure, ds.examples[i].id);
    const auto d = it->second.atoms.distinct();
    atoms[i].assign(d.begin(), d.end());
  }
  std::vector<bool> in_eval(n, false);
  {
    const std::set<std::string> eval(result.eval.begin(), result.eval.end());
    for (std::size_t i = 0; i < n; ++i) in_eval[i] = eval.count(ds.examples[i].id) > 0;
  }
  std::map<std::string, std::size_t> train_count;
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_eval[i]) {
      for (const auto& a : atoms[i]) ++train_count[a];
    }
  }
  auto missing = [&](std::size_t i) {
    std::size_t m = 0;
    for (const auto& a : atoms[i]) m += train_count[a] == 0;
    return m;
  };

  std::vector<std::size_t> preference(n);
  std::iota(preference.begin(), preference.end(), 0);
  if (scores) {
    std::vector<double> lp(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto it = scores->find(ds.examples[i].id);
      if (it == scores->end()) throw Error(ErrorCode::MissingScore, ds.examples[i].id);
      lp[i] = it->second;
    }
    std::stable_sort(preference.begin(), preference.end(), [&](std::size_t a, std::size_t b) {
      return reverse ? lp[a] > lp[b] : lp[a] < lp[b];
    });
  }

  std::vector<bool> pinned(n, false);
  for (std::size_t iter = 0;; ++iter) {
    std::size_t violator = n;
    std::size_t fewest = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_eval[i]) continue;
      const std::size_t m = missing(i);
      if (m > 0 && m < fewest) {
        fewest = m;
        violator = i;
      }
    }
    if (violator == n) break;
    if (iter >= n) {
      throw Error(ErrorCode::ConstraintUnsatisfiable, "no fixpoint after " + std::to_string(n) + " iterations");
    }
    in_eval[violator] = false;
    pinned[violator] = true;
    for (const auto& a : atoms[violator]) ++train_count[a];
    result.swap_log.push_back({ds.examples[violator].id, "eval", "train", "atom-violation"});

    std::size_t refill = n;
    for (std::size_t i : preference) {
      if (in_eval[i] || pinned[i]) continue;
      if (label_balance && label_key(ds.examples[i]) != label_key(ds.examples[violator])) continue;
      const bool safe = std::all_of(atoms[i].begin(), atoms[i].end(), [&](const std::string& a) {
        return train_count[a] >= 2;
      });
      if (safe) {
        refill = i;
        break;
      }
    }
    if (refill == n) {
      std::string missing_atoms;
      for (const auto& a : atoms[violator]) {
        // atoms the violator was missing are now only backed by itself
        if (train_count[a] == 1) missing_atoms += (missing_atoms.empty() ? "" : ", ") + a;
      }
      throw Error(ErrorCode::ConstraintUnsatisfiable,
                  "no train example can replace " + ds.examples[violator].id + " (atoms only it covers: " +
                      missing_atoms + ")");
    }
    in_eval[refill] = true;
    for (const auto& a : atoms[refill]) --train_count[a];
    result.swap_log.push_back({ds.examples[refill].id, "train", "eval", "restore-size"});
  }

  result.eval.clear();
  result.train.clear();
  for (std::size_t i = 0; i < n; ++i) (in_eval[i] ? result.eval : result.train).push_back(ds.examples[i].id);
}

void partition_dev_test(SplitResult& result, const Dataset& ds, const SplitConfig& cfg) {
  cfg.validate();
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& id : result.eval) {
    const Example* ex = ds.find(id);
    if (!ex) throw Error(ErrorCode::UnknownId, id);
    groups[cfg.label_balance ? label_key(*ex) : std::string()].push_back(id);
  }
  Rng rng(cfg.seed ^ kDevTestStream);
  result.dev.clear();
  result.test.clear();
  for (auto& [label, ids] : groups) {
    rng.shuffle(ids);
    const std::size_t dev = eval_target(ids.size(), cfg.dev_fraction);
    result.dev.insert(result.dev.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(dev));
    result.test.insert(result.test.end(), ids.begin() + static_cast<std::ptrdiff_t>(dev), ids.end());
  }
  std::sort(result.dev.begin(), result.dev.end());
  std::sort(result.test.begin(), result.test.end());
}

// ---------------------------------------------------------------------------
// Orchestration and manifests

SplitResult build_split(SplitType type, const SplitInputs& in, const SplitConfig& cfg) {
  if (!in.dataset) throw Error(ErrorCode::BadArguments, "no dataset");
  const Dataset& ds = *in.dataset;
  auto need_scores = [&]() -> const std::vector<ScoreRecord>& {
    if (!in.scores) {
      throw Error(ErrorCode::BadSplitConfig, std::string(split_type_name(type)) + " splits need scores");
    }
    return in.scores->records;
  };
  auto need_structures = [&]() -> const StructureMap& {
    if (!in.structures) {
      throw Error(ErrorCode::BadSplitConfig, std::string(split_type_name(type)) + " splits need program structures");
    }
    return *in.structures;
  };
  SplitResult result;
  switch (type) {
    case SplitType::Likelihood: result = likelihood_split(ds, need_scores(), cfg, in.structures); break;
    case SplitType::LikelihoodLen: result = likelihood_split_lencontrol(ds, need_scores(), cfg, in.structures); break;
    case SplitType::Reverse: result = reverse_split(ds, need_scores(), cfg, in.structures); break;
    case SplitType::Random: result = random_split(ds, cfg, in.structures); break;
    case SplitType::Length: result = length_split(ds, cfg, in.structures); break;
    case SplitType::Template: {
      const StructureMap& s = need_structures();
      result = template_split(ds, cfg, templates_of(s));
      if (!result.train.empty() && !result.eval.empty()) {
        result.divergence = split_divergences(s, result.train, result.eval);
        if (!result.dev.empty()) result.divergence_dev = split_divergences(s, result.train, result.dev);
      }
      break;
    }
    case SplitType::Tmcd:
      result = tmcd_split(ds, cfg, need_structures(), in.scores ? &in.scores->records : nullptr);
      break;
  }
  if (in.scores) result.scores_digest = in.scores->digest;
  if (in.structures) result.structures_digest = digest_hex(serialize_structures(*in.structures));
  return result;
}

namespace {

json quotas_json(const std::vector<GroupQuota>& quotas) {
  json arr = json::array();
  for (const auto& q : quotas) {
    arr.push_back({{"key", q.key}, {"size", q.size}, {"quota", q.quota}, {"selected", q.selected}});
  }
  return arr;
}

json divergence_json(const std::optional<SplitDivergence>& d) {
  if (!d) return nullptr;
  return {{"atom", d->atom}, {"compound", d->compound}};
}

std::string ids_digest(const std::vector<std::string>& ids) {
  Fnv1a h;
  for (const auto& id : ids) h.update_field(id);
  return h.hex();
}

json nullable(const std::string& s) { return s.empty() ? json(nullptr) : json(s); }

}  // namespace

std::string manifest_json(const SplitResult& r) {
  json m;
  m["split_type"] = std::string(split_type_name(r.type));
  m["config"] = {{"p", r.config.p},
                 {"dev_fraction", r.config.dev_fraction},
                 {"seed", r.config.seed},
                 {"length_control", r.config.length_control},
                 {"reverse", r.config.reverse},
                 {"atom_constraint", r.config.atom_constraint},
                 {"label_balance", r.config.label_balance},
                 {"max_iters", r.config.max_iters}};
  m["inputs"] = {{"dataset_digest", nullable(r.dataset_digest)},
                 {"scores_digest", nullable(r.scores_digest)},
                 {"structures_digest", nullable(r.structures_digest)}};
  m["sizes"] = {{"total", r.total},          {"target_eval", r.target_eval}, {"eval", r.eval.size()},
                {"train", r.train.size()},   {"dev", r.dev.size()},          {"test", r.test.size()},
                {"overshoot", r.overshoot}};
  m["id_digests"] = {{"train", ids_digest(r.train)}, {"dev", ids_digest(r.dev)}, {"test", ids_digest(r.test)}};
  m["length_quotas"] = quotas_json(r.length_quotas);
  m["label_quotas"] = quotas_json(r.label_quotas);
  json log = json::array();
  for (std::size_t i = 0; i < r.swap_log.size(); ++i) {
    const auto& s = r.swap_log[i];
    log.push_back({{"step", i}, {"id", s.id}, {"from", s.from}, {"to", s.to}, {"reason", s.reason}});
  }
  m["swap_log"] = std::move(log);
  if (r.tmcd) {
    const auto& t = *r.tmcd;
    m["tmcd"] = {{"evaluated", t.evaluated},
                 {"accepted", t.accepted},
                 {"passes", t.passes},
                 {"converged", t.converged},
                 {"pinned_unparsed", t.pinned_unparsed},
                 {"initial_compound_divergence", t.initial_compound},
                 {"final_compound_divergence", t.final_compound}};
  } else {
    m["tmcd"] = nullptr;
  }
  m["divergence"] = {{"train_vs_eval", divergence_json(r.divergence)},
                     {"train_vs_dev", divergence_json(r.divergence_dev)}};
  m["notes"] = r.notes;
  return m.dump(2) + "\n";
}

void write_split(const std::filesystem::path& dir, const Dataset& ds, const SplitResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  write_examples(dir / "train.jsonl", ds, result.train);
  write_examples(dir / "dev.jsonl", ds, result.dev);
  write_examples(dir / "test.jsonl", ds, result.test);
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest_json(result);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "manifest.json").string());
}

}  // namespace lsplit
