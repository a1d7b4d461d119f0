#include "lsplit/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>

#include <json.hpp>

#include "lsplit/digest.hpp"
#include "lsplit/error.hpp"
#include "lsplit/ngram.hpp"
#include "lsplit/parallel.hpp"
#include "lsplit/rng.hpp"

namespace lsplit {

using nlohmann::json;

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (const auto& [id, fold] : assignment) ++sizes[fold];
  return sizes;
}

FoldPlan make_folds(const Dataset& ds, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > ds.size()) {
    throw Error(ErrorCode::BadK, "k=" + std::to_string(k) + " with " + std::to_string(ds.size()) + " examples");
  }
  std::vector<std::string> ids = ds.ids();
  Rng rng(seed ^ kFoldStream);
  rng.shuffle(ids);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  for (std::size_t i = 0; i < ids.size(); ++i) plan.assignment.emplace(ids[i], i % k);
  return plan;
}

namespace {

std::string rtrim(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n')) s.pop_back();
  return s;
}

}  // namespace

Prompt render_prompt(const Example& ex, const TaskConfig& task) {
  const std::string& tmpl = task.prompt_template;
  const std::string scored = task.score_target() == TextField::X2 ? "x2" : "x1";
  const std::string* target = ex.field(task.score_target());
  if (!target) throw Error(ErrorCode::MissingRequiredField, scored + " (id " + ex.id + ")");
  std::string context;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find('{', pos);
    if (open == std::string::npos) {
      context += tmpl.substr(pos);
      break;
    }
    context += tmpl.substr(pos, open - pos);
    const std::size_t close = tmpl.find('}', open);
    if (close == std::string::npos) throw Error(ErrorCode::BadTaskConfig, "unterminated slot");
    const std::string slot = tmpl.substr(open + 1, close - open - 1);
    pos = close + 1;
    if (slot == scored) break;
    if (slot == "x1") {
      context += ex.x1;
    } else if (slot == "label") {
      if (!ex.label) throw Error(ErrorCode::MissingRequiredField, "label (id " + ex.id + ")");
      context += task.verbalize(*ex.label);
    } else {
      throw Error(ErrorCode::BadTaskConfig, "unresolvable slot {" + slot + "}");
    }
  }
  return Prompt{rtrim(std::move(context)), *target};
}

KFoldResult score_kfold(const Dataset& ds, const KFoldOptions& opts) {
  KFoldResult result;
  result.plan = make_folds(ds, opts.k, opts.seed);
  const std::size_t n = ds.size();

  std::vector<TrainingSequence> sequences(n);
  std::vector<std::size_t> fold_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Example& ex = ds.examples[i];
    const Prompt prompt = render_prompt(ex, ds.task);
    sequences[i].context = tokenize(prompt.context, opts.tokenize);
    sequences[i].target = tokenize(prompt.continuation, opts.tokenize);
    if (sequences[i].target.empty()) throw Error(ErrorCode::EmptyScoreTarget, ex.id);
    fold_of[i] = result.plan.assignment.at(ex.id);
  }

  result.records.resize(n);
  result.training_sizes.assign(opts.k, 0);
  parallel_for(opts.k, opts.jobs, [&](std::size_t fold) {
    std::vector<TrainingSequence> corpus;
    std::vector<bool> in_training(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      if (fold_of[i] == fold) continue;
      corpus.push_back(sequences[i]);
      in_training[i] = true;
    }
    const NGramLM lm = train_ngram(corpus, opts.order, opts.discount);
    for (std::size_t i = 0; i < n; ++i) {
      if (fold_of[i] != fold) continue;
      if (in_training[i]) throw Error(ErrorCode::BadArguments, "fold leakage for " + ds.examples[i].id);
      ScoreRecord& rec = result.records[i];
      rec.id = ds.examples[i].id;
      rec.logprob = lm.score(sequences[i].context, sequences[i].target);
      rec.token_count = sequences[i].target.size();
      rec.scorer = kScorerNgram;
      rec.fold = fold;
    }
    result.training_sizes[fold] = corpus.size();
  });
  return result;
}

namespace {

double parse_logprob(const json& v, const std::string& where) {
  double value = 0.0;
  if (v.is_number()) {
    value = v.get<double>();
  } else if (v.is_string()) {
    const std::string s = v.get<std::string>();
    char* end = nullptr;
    value = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) {
      throw Error(ErrorCode::MalformedScore, where + ": logprob `" + s + "` is not a decimal");
    }
  } else {
    throw Error(ErrorCode::MalformedScore, where + ": logprob must be a decimal");
  }
  if (!std::isfinite(value)) throw Error(ErrorCode::MalformedScore, where + ": logprob is not finite");
  if (value > 0.0) throw Error(ErrorCode::MalformedScore, where + ": logprob must be <= 0");
  return value;
}

std::string meta_value(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

ScoreFile parse_scores(std::string_view text) {
  static const std::set<std::string> kKeys = {"id", "logprob", "token_count", "scorer", "fold"};
  ScoreFile file;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool first_record = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedScore, where + ": " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::MalformedScore, where + ": record must be an object");
    if (first_record && j.contains("_meta")) {
      first_record = false;
      if (j.size() != 1 || !j["_meta"].is_object()) throw Error(ErrorCode::MalformedScore, where + ": bad _meta record");
      for (const auto& [k, v] : j["_meta"].items()) file.meta[k] = meta_value(v);
      continue;
    }
    first_record = false;
    for (const auto& [key, value] : j.items()) {
      if (!kKeys.count(key)) throw Error(ErrorCode::MalformedScore, where + ": unknown key `" + key + "`");
    }
    ScoreRecord rec;
    try {
      rec.id = j.at("id").get<std::string>();
      rec.scorer = j.at("scorer").get<std::string>();
      const json& tc = j.at("token_count");
      if (!tc.is_number_integer() || tc.get<long long>() < 1) {
        throw Error(ErrorCode::MalformedScore, where + ": token_count must be an integer >= 1");
      }
      rec.token_count = tc.get<std::size_t>();
      if (auto f = j.find("fold"); f != j.end() && !f->is_null()) {
        if (!f->is_number_unsigned()) throw Error(ErrorCode::MalformedScore, where + ": fold must be >= 0");
        rec.fold = f->get<std::size_t>();
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedScore, where + ": " + e.what());
    }
    if (rec.id.empty() || rec.scorer.empty()) throw Error(ErrorCode::MalformedScore, where + ": empty id or scorer");
    rec.logprob = parse_logprob(j.at("logprob"), where);
    file.records.push_back(std::move(rec));
  }
  std::sort(file.records.begin(), file.records.end(),
            [](const ScoreRecord& a, const ScoreRecord& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < file.records.size(); ++i) {
    if (file.records[i].id == file.records[i - 1].id) throw Error(ErrorCode::DuplicateId, file.records[i].id);
  }
  file.digest = scores_digest(file.records);
  return file;
}

ScoreFile load_scores(const std::filesystem::path& path) { return parse_scores(read_file(path)); }

namespace {

json record_json(const ScoreRecord& r) {
  json j;
  j["id"] = r.id;
  j["logprob"] = r.logprob;
  j["token_count"] = r.token_count;
  j["scorer"] = r.scorer;
  if (r.fold) j["fold"] = *r.fold;
  return j;
}

}  // namespace

std::string serialize_scores(const std::vector<ScoreRecord>& records, const std::map<std::string, std::string>& meta) {
  std::string out;
  if (!meta.empty()) {
    json m;
    m["_meta"] = meta;
    out += m.dump();
    out += '\n';
  }
  for (const auto& r : records) {
    out += record_json(r).dump();
    out += '\n';
  }
  return out;
}

std::string scores_digest(const std::vector<ScoreRecord>& records) { return digest_hex(serialize_scores(records)); }

std::map<std::string, double> join_scores(const Dataset& ds, const std::vector<ScoreRecord>& records) {
  std::map<std::string, double> out;
  for (const auto& r : records) {
    if (!ds.find(r.id)) throw Error(ErrorCode::UnknownId, r.id);
    out[r.id] = r.logprob;
  }
  for (const auto& ex : ds.examples) {
    if (!out.count(ex.id)) throw Error(ErrorCode::MissingScore, ex.id);
  }
  return out;
}

}  // namespace lsplit
