#include "lsplit/ingestion.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lsplit/digest.hpp"
#include "lsplit/error.hpp"

namespace lsplit {

using nlohmann::json;

namespace {

const std::set<std::string>& record_keys() {
  static const std::set<std::string> keys = {"id",    "x1", "x2", "target", "label", "annotator_labels",
                                             "parse_x1", "parse_x2"};
  return keys;
}

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(line) + ": `" + key + "` must be a string");
  }
  return it->get<std::string>();
}

struct Slot {
  std::string name;
  std::size_t begin;
  std::size_t end;  // one past '}'
};

std::vector<Slot> template_slots(const std::string& tmpl) {
  std::vector<Slot> slots;
  std::size_t pos = 0;
  while ((pos = tmpl.find_first_of("{}", pos)) != std::string::npos) {
    if (tmpl[pos] == '}') throw Error(ErrorCode::BadTaskConfig, "unbalanced '}' in prompt template");
    const std::size_t close = tmpl.find('}', pos);
    if (close == std::string::npos) throw Error(ErrorCode::BadTaskConfig, "unterminated slot in prompt template");
    slots.push_back({tmpl.substr(pos + 1, close - pos - 1), pos, close + 1});
    pos = close + 1;
  }
  return slots;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; });
}

}  // namespace

bool TaskConfig::label_allowed(std::string_view label) const {
  if (label_set.empty()) return true;
  return std::find(label_set.begin(), label_set.end(), label) != label_set.end();
}

std::string TaskConfig::verbalize(const std::string& label) const {
  auto it = label_verbalizer.find(label);
  return it == label_verbalizer.end() ? label : it->second;
}

void TaskConfig::validate() const {
  const auto slots = template_slots(prompt_template);
  const std::string scored = score_target() == TextField::X2 ? "x2" : "x1";
  bool has_label = false;
  std::size_t scored_count = 0;
  for (const auto& slot : slots) {
    if (slot.name == "x1") {
      if (scored == "x1") ++scored_count;
    } else if (slot.name == "x2") {
      if (kind != TaskKind::SentencePair) {
        throw Error(ErrorCode::BadTaskConfig, "slot {x2} used by a single-sentence task");
      }
      ++scored_count;
    } else if (slot.name == "label") {
      has_label = true;
    } else {
      throw Error(ErrorCode::BadTaskConfig, "unknown slot {" + slot.name + "}");
    }
  }
  if (has_label != label_in_prompt) {
    throw Error(ErrorCode::BadTaskConfig,
                label_in_prompt ? "label_in_prompt is set but the template has no {label} slot"
                                : "template uses {label} but label_in_prompt is false");
  }
  if (scored_count != 1) {
    throw Error(ErrorCode::BadTaskConfig, "template must contain the scored slot {" + scored + "} exactly once");
  }
  const auto& last = slots.back();
  if (last.name != scored || !is_blank(std::string_view(prompt_template).substr(last.end))) {
    throw Error(ErrorCode::BadTaskConfig, "the scored slot {" + scored + "} must end the template");
  }
  for (const auto& [label, text] : label_verbalizer) {
    if (!label_allowed(label)) throw Error(ErrorCode::BadTaskConfig, "verbalizer for unknown label `" + label + "`");
  }
}

TaskConfig parse_task_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadTaskConfig, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::BadTaskConfig, "task config must be an object");
  TaskConfig task;
  try {
    const std::string kind = j.at("task_kind").get<std::string>();
    if (kind == "single_sentence") {
      task.kind = TaskKind::SingleSentence;
    } else if (kind == "sentence_pair") {
      task.kind = TaskKind::SentencePair;
    } else {
      throw Error(ErrorCode::BadTaskConfig, "task_kind must be single_sentence or sentence_pair");
    }
    task.prompt_template = j.value("prompt_template", task.kind == TaskKind::SentencePair ? "{x1} {x2}" : "{x1}");
    task.label_set = j.value("label_set", std::vector<std::string>{});
    task.label_in_prompt = j.value("label_in_prompt", false);
    task.label_verbalizer = j.value("label_verbalizer", std::map<std::string, std::string>{});
    task.drop_x1 = j.value("drop_x1", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadTaskConfig, e.what());
  }
  task.validate();
  return task;
}

TaskConfig load_task_config(const std::filesystem::path& path) {
  if (auto preset = task_preset(path.string())) return *preset;
  constexpr std::string_view kPresetPrefix = "preset:";
  const std::string s = path.string();
  if (s.rfind(kPresetPrefix, 0) == 0) {
    if (auto preset = task_preset(s.substr(kPresetPrefix.size()))) return *preset;
    throw Error(ErrorCode::BadTaskConfig, "unknown preset `" + s + "`");
  }
  return parse_task_config(read_file(path));
}

std::string task_config_to_json(const TaskConfig& task) {
  json j;
  j["task_kind"] = task.kind == TaskKind::SentencePair ? "sentence_pair" : "single_sentence";
  j["label_set"] = task.label_set;
  j["prompt_template"] = task.prompt_template;
  j["label_in_prompt"] = task.label_in_prompt;
  j["label_verbalizer"] = task.label_verbalizer;
  j["drop_x1"] = task.drop_x1;
  return j.dump();
}

std::optional<TaskConfig> task_preset(std::string_view name) {
  TaskConfig t;
  if (name == "spider") {
    t.kind = TaskKind::SingleSentence;
    t.prompt_template = "write a database question: {x1}";
  } else if (name == "snli") {
    t.kind = TaskKind::SentencePair;
    t.label_set = {"entailment", "neutral", "contradiction"};
    t.prompt_template = "Premise: {x1} This hypothesis is {label}: {x2}";
    t.label_in_prompt = true;
    t.label_verbalizer = {{"entailment", "entailed"}, {"neutral", "neutral"}, {"contradiction", "a contradiction"}};
    t.drop_x1 = {"Cannot see picture to describe."};
  } else if (name == "boolq") {
    t.kind = TaskKind::SentencePair;
    t.label_set = {"false", "true"};
    t.prompt_template = "Passage: {x1} Ask a question about the passage: {x2}";
  } else {
    return std::nullopt;
  }
  return t;
}

const Example* Dataset::find(std::string_view id) const {
  auto it = std::lower_bound(examples.begin(), examples.end(), id,
                             [](const Example& e, std::string_view key) { return e.id < key; });
  return it != examples.end() && it->id == id ? &*it : nullptr;
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.id);
  return out;
}

Example parse_example(std::string_view json_line, std::size_t line) {
  const std::string where = "line " + std::to_string(line);
  json j;
  try {
    j = json::parse(json_line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, where + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::MalformedRecord, where + ": record must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!record_keys().count(key)) throw Error(ErrorCode::MalformedRecord, where + ": unknown key `" + key + "`");
  }
  Example ex;
  for (const char* required : {"id", "x1"}) {
    if (!j.contains(required) || j[required].is_null()) {
      throw Error(ErrorCode::MissingRequiredField, std::string(required) + " (" + where + ")");
    }
  }
  ex.id = *optional_string(j, "id", line);
  ex.x1 = *optional_string(j, "x1", line);
  if (ex.id.empty()) throw Error(ErrorCode::MalformedRecord, where + ": empty id");
  ex.x2 = optional_string(j, "x2", line);
  ex.target = optional_string(j, "target", line);
  ex.label = optional_string(j, "label", line);
  ex.parse_x1 = optional_string(j, "parse_x1", line);
  ex.parse_x2 = optional_string(j, "parse_x2", line);
  if (auto it = j.find("annotator_labels"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorCode::MalformedRecord, where + ": annotator_labels must be a list");
    std::vector<std::string> labels;
    for (const auto& v : *it) {
      if (!v.is_string()) throw Error(ErrorCode::MalformedRecord, where + ": annotator_labels must hold strings");
      labels.push_back(v.get<std::string>());
    }
    ex.annotator_labels = std::move(labels);
  }
  return ex;
}

std::string example_to_json(const Example& ex) {
  json j = json::object();
  j["id"] = ex.id;
  j["x1"] = ex.x1;
  if (ex.x2) j["x2"] = *ex.x2;
  if (ex.target) j["target"] = *ex.target;
  if (ex.label) j["label"] = *ex.label;
  if (ex.annotator_labels) j["annotator_labels"] = *ex.annotator_labels;
  if (ex.parse_x1) j["parse_x1"] = *ex.parse_x1;
  if (ex.parse_x2) j["parse_x2"] = *ex.parse_x2;
  return j.dump();
}

namespace {

void validate_example(const Example& ex, const TaskConfig& task, const std::string& where) {
  if (task.kind == TaskKind::SentencePair && !ex.x2) {
    throw Error(ErrorCode::MissingRequiredField, "x2 (" + where + ")");
  }
  if (task.kind == TaskKind::SingleSentence && ex.x2) {
    throw Error(ErrorCode::MalformedRecord, where + ": x2 present in a single-sentence task");
  }
  if (task.label_in_prompt && !ex.label && !ex.annotator_labels) {
    throw Error(ErrorCode::MissingRequiredField, "label (" + where + ")");
  }
  if (ex.label && !task.label_allowed(*ex.label)) {
    throw Error(ErrorCode::MalformedRecord, where + ": label `" + *ex.label + "` not in label set");
  }
}

Dataset finish_dataset(std::vector<Example> examples, const TaskConfig& task) {
  std::stable_sort(examples.begin(), examples.end(), [](const Example& a, const Example& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < examples.size(); ++i) {
    if (examples[i].id == examples[i - 1].id) throw Error(ErrorCode::DuplicateId, examples[i].id);
  }
  Dataset ds;
  ds.examples = std::move(examples);
  ds.task = task;
  ds.digest = digest_hex(serialize_dataset(ds));
  return ds;
}

}  // namespace

Dataset make_dataset(std::vector<Example> examples, const TaskConfig& task) {
  task.validate();
  for (const auto& ex : examples) validate_example(ex, task, "id " + ex.id);
  return finish_dataset(std::move(examples), task);
}

Dataset parse_dataset(std::string_view text, const TaskConfig& task) {
  task.validate();
  std::vector<Example> examples;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (is_blank(line)) continue;
    Example ex = parse_example(line, line_no);
    validate_example(ex, task, "line " + std::to_string(line_no));
    examples.push_back(std::move(ex));
  }
  return finish_dataset(std::move(examples), task);
}

Dataset load_dataset(const std::filesystem::path& path, const TaskConfig& task) {
  return parse_dataset(read_file(path), task);
}

std::string serialize_dataset(const Dataset& ds) {
  std::string out;
  for (const auto& ex : ds.examples) {
    out += example_to_json(ex);
    out += '\n';
  }
  return out;
}

void write_examples(const std::filesystem::path& path, const Dataset& ds, const std::vector<std::string>& ids) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& id : ids) {
    const Example* ex = ds.find(id);
    if (!ex) throw Error(ErrorCode::UnknownId, id);
    out << example_to_json(*ex) << '\n';
  }
}

std::optional<std::string> majority_label(const std::vector<std::string>& labels) {
  std::map<std::string, std::size_t> counts;
  for (const auto& l : labels) ++counts[l];
  const std::string* best = nullptr;
  std::size_t best_count = 0;
  bool tied = false;
  for (const auto& [label, count] : counts) {
    if (count > best_count) {
      best = &label;
      best_count = count;
      tied = false;
    } else if (count == best_count) {
      tied = true;
    }
  }
  if (!best || tied) return std::nullopt;
  return *best;
}

Dataset filter_majority_label(const Dataset& ds, std::size_t min_annotators) {
  std::vector<Example> kept;
  for (const auto& ex : ds.examples) {
    if (std::find(ds.task.drop_x1.begin(), ds.task.drop_x1.end(), ex.x1) != ds.task.drop_x1.end()) continue;
    if (ex.x2 && is_blank(*ex.x2)) continue;
    if (!ex.annotator_labels || ex.annotator_labels->size() < min_annotators) continue;
    auto mode = majority_label(*ex.annotator_labels);
    if (!mode || !ds.task.label_allowed(*mode)) continue;
    Example survivor = ex;
    survivor.label = std::move(mode);
    kept.push_back(std::move(survivor));
  }
  return finish_dataset(std::move(kept), ds.task);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace lsplit
