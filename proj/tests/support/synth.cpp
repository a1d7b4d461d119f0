#include "synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "lsplit/rng.hpp"

namespace lsplit::synth {

namespace {

struct TableSchema {
  const char* name;
  const char* text_column;
  const char* number_column;
};

constexpr TableSchema kTables[] = {
    {"singer", "name", "age"},
    {"concert", "title", "year"},
    {"stadium", "location", "capacity"},
};

constexpr const char* kQuestionWords[] = {"show", "list", "the", "all", "of", "each", "which", "what", "is",
                                          "for", "with", "and", "their", "every", "please", "that", "are"};
constexpr const char* kStrings[] = {"France", "Rock", "Main Hall", "Oslo"};

std::string pick(Rng& rng, const auto& options) {
  return options[rng.below(std::size(options))];
}

std::string sql_program(std::size_t form, const TableSchema& t, Rng& rng) {
  const std::string table = t.name;
  const std::string text = t.text_column;
  const std::string number = t.number_column;
  const std::string num = std::to_string(1 + rng.below(60));
  switch (form) {
    case 0: return "SELECT " + text + " FROM " + table;
    case 1: return "SELECT count(*) FROM " + table + " WHERE " + number + " > " + num;
    case 2: return "SELECT " + text + " FROM " + table + " WHERE " + number + " > " + num;
    case 3: return "SELECT " + text + " FROM " + table + " ORDER BY " + number + " DESC LIMIT " + num;
    case 4: return "SELECT " + text + " , count(*) FROM " + table + " GROUP BY " + text;
    case 5:
      return "SELECT T1.name FROM singer AS T1 JOIN concert AS T2 ON T1.singer_id = T2.singer_id WHERE T2.year > " +
             num;
    case 6: return "SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM concert WHERE year = " + num + ")";
    default: return "SELECT " + number + " FROM " + table + " WHERE " + text + " = '" + pick(rng, kStrings) + "'";
  }
}

constexpr std::size_t kForms = 8;

}  // namespace

TaskConfig sql_task() {
  TaskConfig task;
  task.kind = TaskKind::SingleSentence;
  task.label_set = {"a", "b", "c"};
  task.prompt_template = "{x1}";
  return task;
}

Dataset sql_dataset(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> examples;
  examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    // the first two rounds visit every program shape so each atom occurs at
    // least twice and the atom constraint stays satisfiable
    const std::size_t form = i < 2 * kForms ? i % kForms : rng.below(kForms);
    const TableSchema& t = kTables[i % std::size(kTables)];
    Example ex;
    char id[32];
    std::snprintf(id, sizeof id, "q%05zu", i);
    ex.id = id;
    const std::size_t words = 3 + rng.below(12);
    ex.x1 = pick(rng, kQuestionWords);
    for (std::size_t w = 1; w < words; ++w) ex.x1 += " " + pick(rng, kQuestionWords);
    ex.x1 += " " + std::string(t.name);
    ex.target = sql_program(form, t, rng);
    const std::uint64_t draw = rng.below(6);
    ex.label = draw < 3 ? "a" : (draw < 5 ? "b" : "c");
    examples.push_back(std::move(ex));
  }
  return make_dataset(std::move(examples), sql_task());
}

Dataset with_rare_atoms(const Dataset& ds, std::size_t pairs, std::uint64_t seed) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 2 * kForms; i < ds.size(); ++i) pool.push_back(i);
  Rng rng(seed);
  rng.shuffle(pool);
  std::vector<Example> examples = ds.examples;
  for (std::size_t k = 0; k < pairs && 2 * k + 1 < pool.size(); ++k) {
    const std::string program = "SELECT rare_col" + std::to_string(k) + " FROM " + kTables[k % std::size(kTables)].name;
    examples[pool[2 * k]].target = program;
    examples[pool[2 * k + 1]].target = program;
  }
  return make_dataset(examples, ds.task);
}

std::vector<ScoreRecord> tied_scores(const Dataset& ds, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ScoreRecord> out;
  for (const auto& ex : ds.examples) {
    ScoreRecord r;
    r.id = ex.id;
    r.logprob = -0.5 * static_cast<double>(1 + rng.below(40));
    r.token_count = 1 + rng.below(10);
    r.scorer = kScorerFile;
    out.push_back(r);
  }
  return out;
}

PlantedCorpus planted_tail_corpus(std::size_t n, double planted_fraction, std::uint64_t seed) {
  constexpr const char* kFunction[] = {"the", "a", "of", "to", "in", "on", "at", "by", "near", "with",
                                       "from", "over", "under", "after", "before", "this", "that", "some"};
  constexpr const char* kFillers[3][6] = {
      {"dog", "cat", "bird", "horse", "child", "farmer"},
      {"runs", "sleeps", "waits", "sings", "jumps", "walks"},
      {"red", "small", "quiet", "old", "happy", "tall"},
  };
  constexpr std::size_t kTemplates = 20;
  constexpr int kSlot0 = -1;  // slot markers are -1, -2, -3

  Rng rng(seed);
  std::vector<std::vector<int>> templates(kTemplates);
  for (std::size_t t = 0; t < kTemplates; ++t) {
    const std::size_t length = 6 + t % 5;
    std::vector<int>& parts = templates[t];
    for (std::size_t i = 0; i < length; ++i) parts.push_back(static_cast<int>(rng.below(std::size(kFunction))));
    const std::size_t slots = 2 + t % 2;
    std::vector<std::size_t> positions(length);
    for (std::size_t i = 0; i < length; ++i) positions[i] = i;
    rng.shuffle(positions);
    for (std::size_t s = 0; s < slots; ++s) parts[positions[s]] = kSlot0 - static_cast<int>(s % 3);
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  const auto planted_count = static_cast<std::size_t>(std::llround(planted_fraction * static_cast<double>(n)));
  std::vector<bool> planted(n, false);
  for (std::size_t i = 0; i < planted_count; ++i) planted[order[i]] = true;

  PlantedCorpus out;
  std::vector<Example> examples;
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<int>& parts = templates[rng.below(kTemplates)];
    std::vector<std::string> words;
    std::vector<std::size_t> slot_positions;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (parts[k] >= 0) {
        words.push_back(kFunction[parts[k]]);
      } else {
        words.push_back(kFillers[kSlot0 - parts[k]][rng.below(6)]);
        slot_positions.push_back(k);
      }
    }
    Example ex;
    char id[32];
    std::snprintf(id, sizeof id, "s%05zu", i);
    ex.id = id;
    if (planted[i]) {
      const std::string rare = "zorbly" + std::to_string(i);
      words[slot_positions[rng.below(slot_positions.size())]] = rare;
      out.planted.insert(ex.id);
      out.rare_words.insert(rare);
    } else {
      out.common_words.insert(words.begin(), words.end());
    }
    for (std::size_t k = 0; k < words.size(); ++k) ex.x1 += (k ? " " : "") + words[k];
    examples.push_back(std::move(ex));
  }
  TaskConfig task;
  task.kind = TaskKind::SingleSentence;
  task.prompt_template = "{x1}";
  out.dataset = make_dataset(std::move(examples), task);
  return out;
}

double naive_chernoff_divergence(const std::map<std::string, double>& p, const std::map<std::string, double>& q,
                                 double alpha) {
  std::set<std::string> keys;
  for (const auto& kv : p) keys.insert(kv.first);
  for (const auto& kv : q) keys.insert(kv.first);
  double c = 0.0;
  for (const auto& k : keys) {
    auto pi = p.find(k);
    auto qi = q.find(k);
    const double pk = pi == p.end() ? 0.0 : pi->second;
    const double qk = qi == q.end() ? 0.0 : qi->second;
    if (pk > 0.0 && qk > 0.0) c += std::exp(alpha * std::log(pk) + (1.0 - alpha) * std::log(qk));
  }
  return 1.0 - c;
}

std::map<std::string, double> naive_frequencies(const std::vector<std::vector<std::string>>& bags) {
  std::unordered_map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& bag : bags) {
    for (const auto& item : bag) {
      ++counts[item];
      ++total;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [k, c] : counts) out[k] = static_cast<double>(c) / static_cast<double>(total);
  return out;
}

NaiveDivergence naive_split_divergence(const std::map<std::string, ProgramStructure>& structures,
                                       const std::vector<std::string>& train, const std::vector<std::string>& eval) {
  auto side = [&](const std::vector<std::string>& ids, bool atoms) {
    std::vector<std::vector<std::string>> bags;
    for (const auto& id : ids) {
      const ProgramStructure& s = structures.at(id);
      bags.push_back(atoms ? s.atoms.items : s.compounds.items);
    }
    return naive_frequencies(bags);
  };
  NaiveDivergence d;
  d.atom = naive_chernoff_divergence(side(train, true), side(eval, true), 0.5);
  d.compound = naive_chernoff_divergence(side(train, false), side(eval, false), 0.1);
  return d;
}

std::set<std::string> brute_bottom_k(const std::map<std::string, double>& logprob, std::size_t k, bool reverse) {
  // an id is selected iff fewer than k ids strictly precede it
  std::set<std::string> out;
  for (const auto& [id, lp] : logprob) {
    std::size_t before = 0;
    for (const auto& [other, olp] : logprob) {
      const bool better = reverse ? olp > lp : olp < lp;
      if (better || (olp == lp && other < id)) ++before;
    }
    if (before < k) out.insert(id);
  }
  return out;
}

bool atoms_closed(const std::map<std::string, ProgramStructure>& structures, const std::vector<std::string>& train,
                  const std::vector<std::string>& eval) {
  std::set<std::string> train_atoms;
  for (const auto& id : train) {
    for (const auto& a : structures.at(id).atoms.items) train_atoms.insert(a);
  }
  for (const auto& id : eval) {
    for (const auto& a : structures.at(id).atoms.items) {
      if (!train_atoms.count(a)) return false;
    }
  }
  return true;
}

BruteForceOptimum brute_force_tmcd(const std::map<std::string, ProgramStructure>& structures, std::size_t k,
                                   double alpha) {
  std::vector<std::string> ids;
  for (const auto& kv : structures) ids.push_back(kv.first);
  if (ids.size() > 20) throw std::invalid_argument("brute force limited to 20 examples");
  BruteForceOptimum best;
  const std::uint32_t limit = 1u << ids.size();
  for (std::uint32_t mask = 0; mask < limit; ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != k) continue;
    std::vector<std::string> train, eval;
    for (std::size_t i = 0; i < ids.size(); ++i) ((mask >> i) & 1u ? eval : train).push_back(ids[i]);
    if (!atoms_closed(structures, train, eval)) continue;
    ++best.feasible;
    std::vector<std::vector<std::string>> tb, eb;
    for (const auto& id : train) tb.push_back(structures.at(id).compounds.items);
    for (const auto& id : eval) eb.push_back(structures.at(id).compounds.items);
    best.best = std::max(best.best, naive_chernoff_divergence(naive_frequencies(tb), naive_frequencies(eb), alpha));
  }
  return best;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("lsplit-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace lsplit::synth
