#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lsplit {

enum class TaskKind { SingleSentence, SentencePair };

enum class TextField { X1, X2 };

// One dataset record. x1 is the sole input (single-sentence tasks) or the
// premise/passage; x2 is the hypothesis/question of sentence-pair tasks.
struct Example {
  std::string id;
  std::string x1;
  std::optional<std::string> x2;
  std::optional<std::string> target;
  std::optional<std::string> label;
  std::optional<std::vector<std::string>> annotator_labels;
  std::optional<std::string> parse_x1;
  std::optional<std::string> parse_x2;

  const std::string* field(TextField f) const { return f == TextField::X1 ? &x1 : (x2 ? &*x2 : nullptr); }

  friend bool operator==(const Example&, const Example&) = default;
};

// Prompt templates use the slots {x1}, {x2} and {label}. The slot of the
// scored field must close the template: everything before it is the
// conditioning context, the field itself is the continuation.
struct TaskConfig {
  TaskKind kind = TaskKind::SingleSentence;
  std::vector<std::string> label_set;  // empty: labels unconstrained
  std::string prompt_template = "{x1}";
  bool label_in_prompt = false;
  std::map<std::string, std::string> label_verbalizer;  // label -> prompt text
  std::vector<std::string> drop_x1;  // exact x1 values removed by the filter

  TextField score_target() const { return kind == TaskKind::SentencePair ? TextField::X2 : TextField::X1; }
  bool label_allowed(std::string_view label) const;
  std::string verbalize(const std::string& label) const;

  // Throws BadTaskConfig when a template slot cannot be resolved.
  void validate() const;

  friend bool operator==(const TaskConfig&, const TaskConfig&) = default;
};

TaskConfig parse_task_config(std::string_view json_text);
TaskConfig load_task_config(const std::filesystem::path& path);
std::string task_config_to_json(const TaskConfig& task);

// Built-in configurations for the three task shapes: "spider", "snli", "boolq".
std::optional<TaskConfig> task_preset(std::string_view name);

struct Dataset {
  std::vector<Example> examples;  // sorted by id
  TaskConfig task;
  std::string digest;  // digest of the canonical serialization

  std::size_t size() const { return examples.size(); }
  const Example* find(std::string_view id) const;
  std::vector<std::string> ids() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Parses one record; `line` is only used for error messages.
Example parse_example(std::string_view json_line, std::size_t line);
std::string example_to_json(const Example& ex);

// Validates records against `task`, sorts them by id and computes the digest.
Dataset make_dataset(std::vector<Example> examples, const TaskConfig& task);

Dataset parse_dataset(std::string_view text, const TaskConfig& task);
Dataset load_dataset(const std::filesystem::path& path, const TaskConfig& task);

// Canonical form: one record per line in id order, fixed key order, LF.
std::string serialize_dataset(const Dataset& ds);
void write_examples(const std::filesystem::path& path, const Dataset& ds, const std::vector<std::string>& ids);

// Majority vote over annotator labels with a unique mode. Examples without a
// unique mode, with fewer than `min_annotators` labels, with an empty x2, with
// a mode outside the label set, or whose x1 is in the task drop list are
// removed. Survivors get label = mode.
Dataset filter_majority_label(const Dataset& ds, std::size_t min_annotators);

std::optional<std::string> majority_label(const std::vector<std::string>& labels);

std::string read_file(const std::filesystem::path& path);

}  // namespace lsplit
