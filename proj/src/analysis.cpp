#include "lsplit/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "lsplit/digest.hpp"
#include "lsplit/error.hpp"
#include "lsplit/parallel.hpp"
#include "lsplit/rng.hpp"
#include "lsplit/splitting.hpp"
#include "lsplit/tokenize.hpp"

namespace lsplit {

using nlohmann::json;

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = end + 1;
  }
  return lines;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', pos);
    out.emplace_back(line.substr(pos, tab == std::string_view::npos ? std::string_view::npos : tab - pos));
    if (tab == std::string_view::npos) break;
    pos = tab + 1;
  }
  return out;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

// ---------------------------------------------------------------------------
// Word rarity

FrequencyTable parse_frequency_table(std::string_view text) {
  FrequencyTable table;
  const auto lines = split_lines(text);
  std::size_t word_col = 0, rate_col = 1;
  std::size_t first = 0;
  while (first < lines.size() && is_blank(lines[first])) ++first;
  if (first < lines.size()) {
    const auto header = split_tabs(lines[first]);
    std::optional<std::size_t> w, r;
    for (std::size_t i = 0; i < header.size(); ++i) {
      const std::string h = ascii_lower(trim(header[i]));
      if (h == "word") w = i;
      if (h == "subtlwf") r = i;
    }
    if (w && r) {
      word_col = *w;
      rate_col = *r;
      ++first;
    }
  }
  for (std::size_t i = first; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const auto cols = split_tabs(lines[i]);
    const std::string where = "frequency table line " + std::to_string(i + 1);
    if (cols.size() <= std::max(word_col, rate_col)) throw Error(ErrorCode::MalformedResource, where + ": too few columns");
    const std::string word = ascii_lower(trim(cols[word_col]));
    double rate = 0.0;
    if (word.empty() || !parse_double(trim(cols[rate_col]), rate) || rate < 0.0) {
      throw Error(ErrorCode::MalformedResource, where + ": expected word<TAB>rate");
    }
    table[word] += rate;
  }
  return table;
}

FrequencyTable load_frequency_table(const std::filesystem::path& path) { return parse_frequency_table(read_file(path)); }

Wordlist parse_wordlist(std::string_view text) {
  Wordlist words;
  for (auto line : split_lines(text)) {
    const std::string w = ascii_lower(trim(line));
    if (!w.empty()) words.insert(w);
  }
  return words;
}

Wordlist load_wordlist(const std::filesystem::path& path) { return parse_wordlist(read_file(path)); }

RareWordStats rare_word_stats(const std::vector<std::string>& ids, const Dataset& ds, const FrequencyTable& freq,
                              const Wordlist& wordlist, double threshold_per_million) {
  RareWordStats stats;
  const TokenizeOptions folded{true};
  for (const auto& id : ids) {
    const Example* ex = ds.find(id);
    if (!ex) throw Error(ErrorCode::UnknownId, id);
    const std::string* text = ex->field(ds.task.score_target());
    if (!text) continue;
    for (const auto& tok : tokenize(*text, folded)) {
      if (!wordlist.count(tok)) continue;
      ++stats.considered;
      auto it = freq.find(tok);
      if (it == freq.end() || it->second <= threshold_per_million) {
        ++stats.rare;
        stats.rare_types.insert(tok);
      }
    }
  }
  return stats;
}

double rare_word_fraction(const std::vector<std::string>& ids, const Dataset& ds, const FrequencyTable& freq,
                          const Wordlist& wordlist, double threshold_per_million) {
  return rare_word_stats(ids, ds, freq, wordlist, threshold_per_million).fraction();
}

// ---------------------------------------------------------------------------
// Null distributions

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::BadArguments, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

double percentile_rank(const std::vector<double>& samples, double value) {
  if (samples.empty()) throw Error(ErrorCode::BadArguments, "percentile of an empty sample");
  double below = 0.0, equal = 0.0;
  for (double s : samples) {
    if (s < value) {
      below += 1.0;
    } else if (s == value) {
      equal += 1.0;
    }
  }
  return 100.0 * (below + 0.5 * equal) / static_cast<double>(samples.size());
}

NullSummary null_distribution(const Dataset& ds, const SetStatistic& statistic, std::size_t trials,
                              std::uint64_t seed, double p, std::optional<double> observed, std::size_t jobs) {
  if (trials == 0) throw Error(ErrorCode::BadArguments, "trials must be >= 1");
  NullSummary out;
  out.samples.assign(trials, 0.0);
  parallel_for(trials, jobs, [&](std::size_t t) {
    SplitConfig cfg;
    cfg.p = p;
    cfg.seed = derive_seed(seed, t);
    const SplitResult split = random_split(ds, cfg);
    out.samples[t] = statistic(split.eval);
  });
  const double n = static_cast<double>(trials);
  out.mean = std::accumulate(out.samples.begin(), out.samples.end(), 0.0) / n;
  double var = 0.0;
  for (double s : out.samples) var += (s - out.mean) * (s - out.mean);
  out.stddev = std::sqrt(var / n);
  out.min = *std::min_element(out.samples.begin(), out.samples.end());
  out.max = *std::max_element(out.samples.begin(), out.samples.end());
  for (int q : {1, 5, 25, 50, 75, 95, 99}) {
    out.percentiles["p" + std::to_string(q)] = quantile(out.samples, q / 100.0);
  }
  if (observed) {
    out.observed = observed;
    out.observed_percentile = percentile_rank(out.samples, *observed);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parse trees

namespace {

class TreeParser {
 public:
  explicit TreeParser(std::string_view text) : s_(text) {}

  ParseTree parse() {
    skip_space();
    if (pos_ >= s_.size()) fail("empty tree");
    ParseTree root = parse_node();
    skip_space();
    if (pos_ != s_.size()) fail("trailing text after the tree");
    while (root.label.empty() && root.children.size() == 1 && !root.children[0].is_word()) {
      ParseTree inner = std::move(root.children[0]);
      root = std::move(inner);
    }
    if (root.label.empty() && root.children.empty()) fail("empty tree");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::MalformedTree, "position " + std::to_string(pos_) + ": " + what);
  }

  void skip_space() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  std::string read_symbol() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) && s_[pos_] != '(' &&
           s_[pos_] != ')') {
      ++pos_;
    }
    return std::string(s_.substr(start, pos_ - start));
  }

  ParseTree parse_node() {
    skip_space();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    if (s_[pos_] == ')') fail("unexpected ')'");
    if (s_[pos_] != '(') return ParseTree{read_symbol(), {}};
    ++pos_;
    skip_space();
    ParseTree node;
    if (pos_ < s_.size() && s_[pos_] != '(' && s_[pos_] != ')') node.label = read_symbol();
    for (;;) {
      skip_space();
      if (pos_ >= s_.size()) fail("missing ')'");
      if (s_[pos_] == ')') {
        ++pos_;
        break;
      }
      node.children.push_back(parse_node());
    }
    if (node.label.empty() && node.children.empty()) fail("empty node");
    return node;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

void yngve_walk(const ParseTree& node, std::size_t acc, std::size_t& total, std::size_t& words) {
  if (node.is_word()) {
    total += acc;
    ++words;
    return;
  }
  const std::size_t k = node.children.size();
  for (std::size_t i = 0; i < k; ++i) yngve_walk(node.children[i], acc + (k - 1 - i), total, words);
}

void depth_walk(const ParseTree& node, std::size_t depth, std::size_t& total, std::size_t& words, std::size_t& max) {
  if (node.is_word()) {
    total += depth;
    ++words;
    max = std::max(max, depth);
    return;
  }
  for (const auto& c : node.children) depth_walk(c, depth + 1, total, words, max);
}

}  // namespace

ParseTree parse_tree(std::string_view text) { return TreeParser(text).parse(); }

double yngve_score(const ParseTree& tree) {
  std::size_t total = 0, words = 0;
  yngve_walk(tree, 0, total, words);
  return words == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(words);
}

TreeDepth tree_depth_stats(const ParseTree& tree) {
  std::size_t total = 0, words = 0, max = 0;
  depth_walk(tree, 0, total, words, max);
  TreeDepth d;
  d.mean = words == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(words);
  d.max = max;
  return d;
}

// ---------------------------------------------------------------------------
// Readability

namespace {

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y'; }

}  // namespace

std::size_t count_syllables(std::string_view word) {
  std::string letters;
  for (char c : word) {
    if (std::isalpha(static_cast<unsigned char>(c))) letters.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (letters.empty()) return 0;
  std::size_t groups = 0;
  bool in_vowel = false;
  for (char c : letters) {
    const bool v = is_vowel(c);
    if (v && !in_vowel) ++groups;
    in_vowel = v;
  }
  const std::size_t n = letters.size();
  if (groups > 1 && n >= 2 && letters[n - 1] == 'e' && !is_vowel(letters[n - 2])) {
    const bool consonant_le = n >= 3 && letters[n - 2] == 'l' && !is_vowel(letters[n - 3]);
    if (!consonant_le) --groups;
  }
  return std::max<std::size_t>(groups, 1);
}

ReadabilityCounts readability_counts(std::string_view text) {
  ReadabilityCounts c;
  std::size_t pos = 0;
  bool pending_fragment = false;
  const auto is_terminal = [](char ch) { return ch == '.' || ch == '!' || ch == '?'; };
  bool in_terminal_run = false;
  for (char ch : text) {
    if (is_terminal(ch)) {
      if (!in_terminal_run && pending_fragment) {
        ++c.sentences;
        pending_fragment = false;
      }
      in_terminal_run = true;
    } else {
      in_terminal_run = false;
      if (std::isalpha(static_cast<unsigned char>(ch))) pending_fragment = true;
    }
  }
  if (pending_fragment) ++c.sentences;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    const std::string_view chunk = text.substr(start, pos - start);
    if (std::any_of(chunk.begin(), chunk.end(), [](unsigned char ch) { return std::isalpha(ch) != 0; })) {
      ++c.words;
      c.syllables += count_syllables(chunk);
    }
  }
  c.sentences = std::max<std::size_t>(c.sentences, 1);
  return c;
}

double flesch_kincaid_grade(std::string_view text) {
  const ReadabilityCounts c = readability_counts(text);
  if (c.words == 0) throw Error(ErrorCode::EmptyText, "text has no words");
  const double w = static_cast<double>(c.words);
  return 0.39 * (w / static_cast<double>(c.sentences)) + 11.8 * (static_cast<double>(c.syllables) / w) - 15.59;
}

// ---------------------------------------------------------------------------
// Novel compounds, hardness, projection

Correctness parse_correctness(std::string_view text) {
  Correctness out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const auto cols = split_tabs(lines[i]);
    const std::string where = "correctness line " + std::to_string(i + 1);
    if (cols.size() != 2) throw Error(ErrorCode::MalformedResource, where + ": expected id<TAB>0|1");
    const std::string id = trim(cols[0]);
    const std::string v = trim(cols[1]);
    if (id.empty() || (v != "0" && v != "1")) throw Error(ErrorCode::MalformedResource, where + ": expected id<TAB>0|1");
    if (!out.emplace(id, v == "1").second) throw Error(ErrorCode::DuplicateId, id);
  }
  return out;
}

Correctness load_correctness(const std::filesystem::path& path) { return parse_correctness(read_file(path)); }

double projected_accuracy(const std::vector<double>& accuracies, const std::vector<double>& weights) {
  if (accuracies.size() != weights.size() || weights.empty()) {
    throw Error(ErrorCode::BadWeights, "need one weight per group");
  }
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::BadWeights, "negative weight");
    wsum += w;
  }
  if (std::fabs(wsum - 1.0) > 0.005) throw Error(ErrorCode::BadWeights, "weights sum to " + std::to_string(wsum));
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) total += accuracies[i] * weights[i];
  return total;
}

NovelCompoundReport novel_compound_report(const std::vector<std::string>& train_ids,
                                          const std::vector<std::string>& eval_ids, const StructureMap& structures,
                                          const Correctness* correctness) {
  auto lookup = [&](const std::string& id) -> const ProgramStructure& {
    auto it = structures.find(id);
    if (it == structures.end()) throw Error(ErrorCode::MissingStructure, id);
    return it->second;
  };
  std::set<std::string> seen;
  for (const auto& id : train_ids) {
    for (const auto& c : lookup(id).compounds.items) seen.insert(c);
  }
  NovelCompoundReport r;
  if (correctness) {
    r.novel_accuracy = GroupAccuracy{};
    r.familiar_accuracy = GroupAccuracy{};
  }
  for (const auto& id : eval_ids) {
    const auto& items = lookup(id).compounds.items;
    const bool novel = std::any_of(items.begin(), items.end(), [&](const std::string& c) { return !seen.count(c); });
    ++r.examples;
    r.novel += novel;
    if (correctness) {
      auto it = correctness->find(id);
      if (it == correctness->end()) continue;
      GroupAccuracy& g = novel ? *r.novel_accuracy : *r.familiar_accuracy;
      ++g.examples;
      g.correct += it->second;
    }
  }
  return r;
}

double project_novel_accuracy(const NovelCompoundReport& base, const NovelCompoundReport& target) {
  if (!base.novel_accuracy || !base.familiar_accuracy) {
    throw Error(ErrorCode::BadArguments, "the base report has no accuracies");
  }
  const double f = target.novel_fraction();
  return projected_accuracy({base.novel_accuracy->accuracy(), base.familiar_accuracy->accuracy()}, {f, 1.0 - f});
}

std::size_t HardnessBreakdown::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::array<double, kHardnessLevels> HardnessBreakdown::fractions() const {
  std::array<double, kHardnessLevels> f{};
  const std::size_t n = total();
  if (n == 0) return f;
  for (std::size_t i = 0; i < kHardnessLevels; ++i) f[i] = static_cast<double>(counts[i]) / static_cast<double>(n);
  return f;
}

HardnessBreakdown hardness_breakdown(const std::vector<std::string>& ids, const StructureMap& structures,
                                     const Correctness* correctness) {
  HardnessBreakdown b;
  b.has_accuracy = correctness != nullptr;
  for (const auto& id : ids) {
    auto it = structures.find(id);
    if (it == structures.end()) throw Error(ErrorCode::MissingStructure, id);
    const auto level = static_cast<std::size_t>(it->second.hardness.level);
    ++b.counts[level];
    if (correctness) {
      auto c = correctness->find(id);
      if (c == correctness->end()) continue;
      ++b.accuracy[level].examples;
      b.accuracy[level].correct += c->second;
    }
  }
  return b;
}

double hardness_projection(const std::array<double, kHardnessLevels>& base_accuracy,
                           const std::array<double, kHardnessLevels>& target_fractions) {
  return projected_accuracy({base_accuracy.begin(), base_accuracy.end()},
                            {target_fractions.begin(), target_fractions.end()});
}

double hardness_projection(const HardnessBreakdown& base, const HardnessBreakdown& target) {
  if (!base.has_accuracy) throw Error(ErrorCode::BadArguments, "the base breakdown has no accuracies");
  const auto fractions = target.fractions();
  std::array<double, kHardnessLevels> acc{};
  for (std::size_t i = 0; i < kHardnessLevels; ++i) {
    if (base.accuracy[i].examples == 0 && fractions[i] > 0.0) {
      throw Error(ErrorCode::BadWeights,
                  "no base accuracy for " + std::string(hardness_name(static_cast<Hardness>(i))) + " programs");
    }
    acc[i] = base.accuracy[i].accuracy();
  }
  return hardness_projection(acc, fractions);
}

// ---------------------------------------------------------------------------
// Reports

void Histogram::add(double value) { ++bins[static_cast<long long>(std::floor(value / width))]; }

std::string format_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_started = true;
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      field_started = false;
    } else if (c != '\r') {
      field += c;
      field_started = true;
    }
  }
  if (field_started || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

void emit_report(const AnalysisReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  json doc = report.document;
  json names = json::array();
  for (const auto& t : report.tables) names.push_back(t.name);
  doc["tables"] = names;
  {
    std::ofstream out(dir / "report.json", std::ios::binary);
    out << doc.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "cannot write report.json");
  }
  for (const auto& t : report.tables) {
    std::ofstream out(dir / (t.name + ".csv"), std::ios::binary);
    for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << csv_escape(t.columns[i]);
    out << '\n';
    for (const auto& row : t.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_escape(row[i]);
      out << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + t.name + ".csv");
  }
}

AnalysisReport load_report(const std::filesystem::path& dir) {
  AnalysisReport report;
  try {
    report.document = json::parse(read_file(dir / "report.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResource, std::string("report.json: ") + e.what());
  }
  const json names = report.document.value("tables", json::array());
  report.document.erase("tables");
  for (const auto& name : names) {
    CsvTable t;
    t.name = name.get<std::string>();
    auto rows = parse_csv(read_file(dir / (t.name + ".csv")));
    if (rows.empty()) throw Error(ErrorCode::MalformedResource, t.name + ".csv has no header");
    t.columns = std::move(rows.front());
    t.rows.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
    report.tables.push_back(std::move(t));
  }
  return report;
}

std::string id_set_digest(const std::vector<std::string>& ids) {
  std::vector<std::string> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  Fnv1a h;
  for (const auto& id : sorted) h.update_field(id);
  return h.hex();
}

namespace {

const char* const kSides[] = {"train", "dev", "test"};

const std::vector<std::string>& side_ids(const SplitSides& s, std::size_t i) {
  return i == 0 ? s.train : (i == 1 ? s.dev : s.test);
}

void add_histogram_rows(CsvTable& t, const std::string& side, const Histogram& h) {
  for (const auto& [bin, count] : h.bins) {
    t.rows.push_back({side, format_number(static_cast<double>(bin) * h.width),
                      format_number(static_cast<double>(bin + 1) * h.width), std::to_string(count)});
  }
}

json histogram_json(const Histogram& h) {
  json bins = json::object();
  for (const auto& [bin, count] : h.bins) bins[format_number(static_cast<double>(bin) * h.width)] = count;
  return {{"width", h.width}, {"bins", bins}};
}

}  // namespace

AnalysisReport audit_split(const AuditInputs& in) {
  if (!in.dataset) throw Error(ErrorCode::BadArguments, "no dataset");
  const Dataset& ds = *in.dataset;
  AnalysisReport report;
  json& doc = report.document;
  const std::string manifest_digest = digest_hex(in.manifest_text);
  doc["manifest_digest"] = manifest_digest;
  doc["dataset_digest"] = ds.digest;
  json sides = json::object();
  for (std::size_t s = 0; s < 3; ++s) {
    sides[kSides[s]] = {{"count", side_ids(in.sides, s).size()}, {"ids_digest", id_set_digest(side_ids(in.sides, s))}};
  }
  doc["sides"] = sides;
  auto over = [&](std::initializer_list<const char*> names) {
    json o = {{"manifest_digest", manifest_digest}};
    json ids = json::object();
    for (const char* n : names) {
      for (std::size_t s = 0; s < 3; ++s) {
        if (std::string(n) == kSides[s]) ids[n] = id_set_digest(side_ids(in.sides, s));
      }
    }
    o["ids_digest"] = ids;
    return o;
  };
  std::vector<std::string> eval_ids = in.sides.dev;
  eval_ids.insert(eval_ids.end(), in.sides.test.begin(), in.sides.test.end());
  std::sort(eval_ids.begin(), eval_ids.end());

  // length of the scored field
  {
    CsvTable table{"length_histogram", {"side", "bin_start", "bin_end", "count"}, {}};
    json stat = {{"computed_over", over({"train", "dev", "test"})}};
    for (std::size_t s = 0; s < 3; ++s) {
      Histogram h;
      double total = 0.0;
      for (const auto& id : side_ids(in.sides, s)) {
        const Example* ex = ds.find(id);
        if (!ex) throw Error(ErrorCode::UnknownId, id);
        const std::string* text = ex->field(ds.task.score_target());
        const double len = text ? static_cast<double>(tokenize(*text).size()) : 0.0;
        h.add(len);
        total += len;
      }
      const auto n = side_ids(in.sides, s).size();
      stat[kSides[s]] = {{"mean", n ? total / static_cast<double>(n) : 0.0}, {"histogram", histogram_json(h)}};
      add_histogram_rows(table, kSides[s], h);
    }
    doc["length"] = stat;
    report.tables.push_back(std::move(table));
  }

  // readability of the scored field
  {
    CsvTable table{"readability_histogram", {"side", "bin_start", "bin_end", "count"}, {}};
    json stat = {{"computed_over", over({"train", "dev", "test"})}};
    for (std::size_t s = 0; s < 3; ++s) {
      Histogram h;
      double total = 0.0;
      std::size_t texts = 0;
      for (const auto& id : side_ids(in.sides, s)) {
        const std::string* text = ds.find(id)->field(ds.task.score_target());
        if (!text || readability_counts(*text).words == 0) continue;
        const double g = flesch_kincaid_grade(*text);
        h.add(g);
        total += g;
        ++texts;
      }
      stat[kSides[s]] = {{"texts", texts},
                         {"grade_mean", texts ? total / static_cast<double>(texts) : 0.0},
                         {"histogram", histogram_json(h)}};
      add_histogram_rows(table, kSides[s], h);
    }
    doc["readability"] = stat;
    report.tables.push_back(std::move(table));
  }

  // parse-tree metrics, when trees are supplied
  {
    CsvTable yngve{"yngve_histogram", {"side", "bin_start", "bin_end", "count"}, {}};
    CsvTable depth{"max_depth_histogram", {"side", "bin_start", "bin_end", "count"}, {}};
    json stat = {{"computed_over", over({"train", "dev", "test"})}};
    bool any = false;
    for (std::size_t s = 0; s < 3; ++s) {
      Histogram hy;
      hy.width = 0.5;
      Histogram hd;
      double sum_y = 0.0, sum_mean = 0.0, sum_max = 0.0;
      std::size_t trees = 0;
      for (const auto& id : side_ids(in.sides, s)) {
        const Example* ex = ds.find(id);
        const auto& parse = ds.task.score_target() == TextField::X1 ? ex->parse_x1 : ex->parse_x2;
        if (!parse) continue;
        const ParseTree tree = parse_tree(*parse);
        const double y = yngve_score(tree);
        const TreeDepth d = tree_depth_stats(tree);
        hy.add(y);
        hd.add(static_cast<double>(d.max));
        sum_y += y;
        sum_mean += d.mean;
        sum_max += static_cast<double>(d.max);
        ++trees;
      }
      any = any || trees > 0;
      const double t = trees ? static_cast<double>(trees) : 1.0;
      stat[kSides[s]] = {{"trees", trees},
                         {"yngve_mean", sum_y / t},
                         {"mean_depth_mean", sum_mean / t},
                         {"max_depth_mean", sum_max / t}};
      add_histogram_rows(yngve, kSides[s], hy);
      add_histogram_rows(depth, kSides[s], hd);
    }
    if (any) {
      doc["tree_metrics"] = stat;
      report.tables.push_back(std::move(yngve));
      report.tables.push_back(std::move(depth));
    }
  }

  // rare words, optionally located in a null distribution of random splits
  if (in.frequencies && in.wordlist) {
    json stat = {{"computed_over", over({"train", "dev", "test"})}, {"threshold_per_million", in.rare_threshold}};
    for (std::size_t s = 0; s < 3; ++s) {
      const RareWordStats r = rare_word_stats(side_ids(in.sides, s), ds, *in.frequencies, *in.wordlist, in.rare_threshold);
      stat[kSides[s]] = {{"considered", r.considered}, {"rare", r.rare}, {"fraction", r.fraction()},
                         {"rare_types", r.rare_types.size()}};
    }
    const double observed = rare_word_fraction(eval_ids, ds, *in.frequencies, *in.wordlist, in.rare_threshold);
    stat["eval_fraction"] = observed;
    if (in.null_trials > 0 && !eval_ids.empty()) {
      const double p = static_cast<double>(eval_ids.size()) / static_cast<double>(ds.size());
      const NullSummary null = null_distribution(
          ds,
          [&](const std::vector<std::string>& ids) {
            return rare_word_fraction(ids, ds, *in.frequencies, *in.wordlist, in.rare_threshold);
          },
          in.null_trials, in.seed, p, observed, in.jobs);
      stat["null"] = {{"trials", in.null_trials},         {"seed", in.seed},
                      {"p", p},                           {"mean", null.mean},
                      {"stddev", null.stddev},            {"percentiles", null.percentiles},
                      {"observed", observed},             {"observed_percentile", *null.observed_percentile}};
      CsvTable table{"rare_word_null", {"trial", "value"}, {}};
      for (std::size_t t = 0; t < null.samples.size(); ++t) {
        table.rows.push_back({std::to_string(t), format_number(null.samples[t])});
      }
      report.tables.push_back(std::move(table));
    }
    doc["rare_words"] = stat;
  }

  // program structure statistics
  if (in.structures) {
    const StructureMap& st = *in.structures;
    json div = json::object();
    for (std::size_t s = 1; s < 3; ++s) {
      if (in.sides.train.empty() || side_ids(in.sides, s).empty()) continue;
      const SplitDivergence d = split_divergences(st, in.sides.train, side_ids(in.sides, s));
      div[std::string("train_vs_") + kSides[s]] = {{"atom", d.atom},
                                                    {"compound", d.compound},
                                                    {"atom_alpha", kAtomAlpha},
                                                    {"compound_alpha", kCompoundAlpha},
                                                    {"computed_over", over({"train", kSides[s]})}};
    }
    doc["divergence"] = div;

    CsvTable table{"hardness", {"side", "level", "count", "fraction"}, {}};
    json hard = {{"computed_over", over({"train", "dev", "test"})}};
    for (std::size_t s = 0; s < 3; ++s) {
      const HardnessBreakdown b = hardness_breakdown(side_ids(in.sides, s), st, in.correctness);
      const auto fr = b.fractions();
      json side = json::object();
      for (std::size_t l = 0; l < kHardnessLevels; ++l) {
        const std::string level(hardness_name(static_cast<Hardness>(l)));
        json entry = {{"count", b.counts[l]}, {"fraction", fr[l]}};
        if (b.has_accuracy && b.accuracy[l].examples > 0) entry["accuracy"] = b.accuracy[l].accuracy();
        side[level] = entry;
        table.rows.push_back({kSides[s], level, std::to_string(b.counts[l]), format_number(fr[l])});
      }
      hard[kSides[s]] = side;
    }
    doc["hardness"] = hard;
    report.tables.push_back(std::move(table));

    json novel = json::object();
    for (std::size_t s = 1; s < 3; ++s) {
      const NovelCompoundReport r = novel_compound_report(in.sides.train, side_ids(in.sides, s), st, in.correctness);
      json entry = {{"examples", r.examples},
                    {"novel", r.novel},
                    {"novel_fraction", r.novel_fraction()},
                    {"computed_over", over({"train", kSides[s]})}};
      if (r.novel_accuracy && r.novel_accuracy->examples > 0) entry["novel_accuracy"] = r.novel_accuracy->accuracy();
      if (r.familiar_accuracy && r.familiar_accuracy->examples > 0) {
        entry["familiar_accuracy"] = r.familiar_accuracy->accuracy();
      }
      novel[kSides[s]] = entry;
    }
    doc["novel_compounds"] = novel;
  }
  return report;
}

}  // namespace lsplit
