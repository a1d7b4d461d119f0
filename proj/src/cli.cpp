#include "lsplit/cli.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lsplit/analysis.hpp"
#include "lsplit/digest.hpp"
#include "lsplit/error.hpp"
#include "lsplit/ingestion.hpp"
#include "lsplit/remote.hpp"
#include "lsplit/scoring.hpp"
#include "lsplit/splitting.hpp"
#include "lsplit/sql.hpp"

namespace lsplit {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Options {
  // inputs
  std::string dataset;
  std::string task_config = "spider";
  std::size_t min_annotators = 0;
  std::string scorer;
  std::string structures;
  std::string split_dir;
  std::string freq_table;
  std::string wordlist;
  std::string correctness;
  // scoring
  std::size_t k = 3;
  std::size_t order = 3;
  double discount = 0.75;
  std::size_t retries = 2;
  // splitting
  std::string split_type = "likelihood";
  double p = 0.2;
  double dev_fraction = 0.5;
  bool label_balance = false;
  bool atom_constraint = false;
  std::size_t max_iters = 200000;
  // analysis
  std::size_t trials = 0;
  double threshold = 1.0;
  std::string statistic = "rare-word-fraction";
  // common
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string out;
  bool force = false;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

void check_output_file(const Options& o) {
  if (o.out.empty()) throw Error(ErrorCode::BadArguments, "--out is required");
  if (fs::exists(o.out) && !o.force) throw Error(ErrorCode::BadArguments, o.out + " exists (use --force)");
}

void check_output_dir(const Options& o) {
  if (o.out.empty()) throw Error(ErrorCode::BadArguments, "--out is required");
  if (fs::exists(o.out)) {
    if (!fs::is_directory(o.out)) throw Error(ErrorCode::BadArguments, o.out + " is not a directory");
    if (!fs::is_empty(o.out) && !o.force) throw Error(ErrorCode::BadArguments, o.out + " is not empty (use --force)");
  }
}

Dataset load_inputs(const Options& o) {
  const TaskConfig task = load_task_config(o.task_config);
  Dataset ds = load_dataset(o.dataset, task);
  if (o.min_annotators > 0) ds = filter_majority_label(ds, o.min_annotators);
  return ds;
}

ScoreFile compute_scores(const Dataset& ds, const Options& o) {
  std::map<std::string, std::string> meta;
  meta["dataset_digest"] = ds.digest;
  meta["task_digest"] = digest_hex(task_config_to_json(ds.task));
  meta["scorer"] = o.scorer;
  std::vector<ScoreRecord> records;
  if (o.scorer == "ngram") {
    KFoldOptions k;
    k.k = o.k;
    k.seed = o.seed;
    k.order = o.order;
    k.discount = o.discount;
    k.jobs = o.jobs;
    records = score_kfold(ds, k).records;
    meta["k"] = std::to_string(o.k);
    meta["order"] = std::to_string(o.order);
    meta["discount"] = format_number(o.discount);
    meta["seed"] = std::to_string(o.seed);
  } else if (o.scorer.rfind("file:", 0) == 0) {
    const ScoreFile file = load_scores(o.scorer.substr(5));
    join_scores(ds, file.records);
    records = file.records;
    meta["source_digest"] = file.digest;
  } else if (o.scorer.rfind("remote:", 0) == 0) {
    const std::string target = o.scorer.substr(7);
    std::unique_ptr<ScorerTransport> transport = target.rfind("stdio:", 0) == 0
                                                     ? make_process_transport(target.substr(6))
                                                     : make_http_transport(target);
    RemoteOptions ro;
    ro.max_retries = o.retries;
    records = score_prompted_remote(ds, *transport, ro);
    meta["prompt_join"] = "single-space";
  } else {
    throw Error(ErrorCode::BadArguments, "unknown scorer `" + o.scorer + "`");
  }
  ScoreFile file;
  file.records = std::move(records);
  file.meta = std::move(meta);
  file.digest = scores_digest(file.records);
  return file;
}

StructureMap obtain_structures(const Dataset& ds, const Options& o) {
  if (!o.structures.empty()) return load_structures(o.structures);
  return analyze_dataset(ds);
}

std::string structures_file(const Dataset& ds, const StructureMap& s) {
  json meta;
  meta["_meta"] = {{"dataset_digest", ds.digest}};
  return meta.dump() + "\n" + serialize_structures(s);
}

int cmd_score(const Options& o, std::ostream& out) {
  check_output_file(o);
  if (o.scorer.empty()) throw Error(ErrorCode::BadArguments, "--scorer is required");
  const Dataset ds = load_inputs(o);
  const ScoreFile file = compute_scores(ds, o);
  write_text(o.out, serialize_scores(file.records, file.meta));
  out << json{{"command", "score"}, {"records", file.records.size()}, {"scores_digest", file.digest}}.dump() << '\n';
  return 0;
}

int cmd_split(const Options& o, std::ostream& out) {
  check_output_dir(o);
  const auto type = split_type_from_name(o.split_type);
  if (!type) throw Error(ErrorCode::BadArguments, "unknown split type `" + o.split_type + "`");
  const Dataset ds = load_inputs(o);
  SplitConfig cfg;
  cfg.p = o.p;
  cfg.dev_fraction = o.dev_fraction;
  cfg.seed = o.seed;
  cfg.label_balance = o.label_balance;
  cfg.atom_constraint = o.atom_constraint;
  cfg.max_iters = o.max_iters;
  cfg.length_control = *type == SplitType::LikelihoodLen;
  cfg.validate();

  const bool needs_scores =
      *type == SplitType::Likelihood || *type == SplitType::LikelihoodLen || *type == SplitType::Reverse;
  if (needs_scores && o.scorer.empty()) {
    throw Error(ErrorCode::BadArguments, o.split_type + " splits need --scorer");
  }
  std::optional<ScoreFile> scores;
  if (!o.scorer.empty()) scores = compute_scores(ds, o);
  const bool needs_structures =
      *type == SplitType::Template || *type == SplitType::Tmcd || o.atom_constraint || !o.structures.empty();
  std::optional<StructureMap> structures;
  if (needs_structures) structures = obtain_structures(ds, o);

  SplitInputs in;
  in.dataset = &ds;
  in.scores = scores ? &*scores : nullptr;
  in.structures = structures ? &*structures : nullptr;
  const SplitResult result = build_split(*type, in, cfg);
  write_split(o.out, ds, result);
  out << json{{"command", "split"},
              {"split_type", o.split_type},
              {"train", result.train.size()},
              {"dev", result.dev.size()},
              {"test", result.test.size()},
              {"manifest_digest", digest_hex(manifest_json(result))}}
             .dump()
      << '\n';
  return 0;
}

int cmd_structures(const Options& o, std::ostream& out) {
  check_output_file(o);
  const Dataset ds = load_inputs(o);
  const StructureMap s = analyze_dataset(ds);
  std::size_t unparsed = 0;
  for (const auto& [id, st] : s) unparsed += !st.parsed;
  write_text(o.out, structures_file(ds, s));
  out << json{{"command", "structures"}, {"programs", s.size()}, {"unparsed", unparsed}}.dump() << '\n';
  return 0;
}

std::vector<std::string> read_ids(const fs::path& path) {
  std::vector<std::string> ids;
  const std::string text = read_file(path);
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ids.push_back(json::parse(line).at("id").get<std::string>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, path.string() + ": " + e.what());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct LoadedSplit {
  SplitSides sides;
  std::string manifest_text;
  json manifest;
};

LoadedSplit load_split_dir(const fs::path& dir, const Dataset& ds) {
  LoadedSplit s;
  s.manifest_text = read_file(dir / "manifest.json");
  try {
    s.manifest = json::parse(s.manifest_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResource, std::string("manifest.json: ") + e.what());
  }
  const json digest = s.manifest.value("inputs", json::object()).value("dataset_digest", json());
  if (!digest.is_string() || digest.get<std::string>() != ds.digest) {
    throw Error(ErrorCode::BadArguments, "the split was built from a different dataset");
  }
  s.sides.train = read_ids(dir / "train.jsonl");
  s.sides.dev = read_ids(dir / "dev.jsonl");
  s.sides.test = read_ids(dir / "test.jsonl");
  return s;
}

bool all_have_targets(const Dataset& ds) {
  return std::all_of(ds.examples.begin(), ds.examples.end(), [](const Example& e) { return e.target.has_value(); });
}

int cmd_audit(const Options& o, std::ostream& out) {
  check_output_dir(o);
  if (o.split_dir.empty()) throw Error(ErrorCode::BadArguments, "--split-dir is required");
  const Dataset ds = load_inputs(o);
  const LoadedSplit split = load_split_dir(o.split_dir, ds);
  std::optional<StructureMap> structures;
  if (!o.structures.empty() || all_have_targets(ds)) structures = obtain_structures(ds, o);
  std::optional<FrequencyTable> freq;
  std::optional<Wordlist> words;
  if (o.freq_table.empty() != o.wordlist.empty()) {
    throw Error(ErrorCode::BadArguments, "--freq-table and --wordlist go together");
  }
  if (!o.freq_table.empty()) {
    freq = load_frequency_table(o.freq_table);
    words = load_wordlist(o.wordlist);
  }
  std::optional<Correctness> correct;
  if (!o.correctness.empty()) correct = load_correctness(o.correctness);

  AuditInputs in;
  in.dataset = &ds;
  in.sides = split.sides;
  in.manifest_text = split.manifest_text;
  in.structures = structures ? &*structures : nullptr;
  in.frequencies = freq ? &*freq : nullptr;
  in.wordlist = words ? &*words : nullptr;
  in.rare_threshold = o.threshold;
  in.correctness = correct ? &*correct : nullptr;
  in.null_trials = o.trials;
  in.seed = o.seed;
  in.jobs = o.jobs;
  AnalysisReport report = audit_split(in);
  emit_report(report, o.out);
  out << json{{"command", "audit"}, {"manifest_digest", report.document["manifest_digest"]},
              {"tables", report.tables.size()}}
             .dump()
      << '\n';
  return 0;
}

int cmd_null(const Options& o, std::ostream& out) {
  check_output_dir(o);
  if (o.trials == 0) throw Error(ErrorCode::BadArguments, "--trials must be >= 1");
  const Dataset ds = load_inputs(o);
  SplitConfig probe;
  probe.p = o.p;
  probe.validate();

  SetStatistic stat;
  std::optional<FrequencyTable> freq;
  std::optional<Wordlist> words;
  json resources = json::object();
  if (o.statistic == "rare-word-fraction") {
    if (o.freq_table.empty() || o.wordlist.empty()) {
      throw Error(ErrorCode::BadArguments, "rare-word-fraction needs --freq-table and --wordlist");
    }
    freq = load_frequency_table(o.freq_table);
    words = load_wordlist(o.wordlist);
    resources["freq_table_digest"] = digest_hex(read_file(o.freq_table));
    resources["wordlist_digest"] = digest_hex(read_file(o.wordlist));
    stat = [&](const std::vector<std::string>& ids) { return rare_word_fraction(ids, ds, *freq, *words, o.threshold); };
  } else if (o.statistic == "mean-length") {
    stat = [&](const std::vector<std::string>& ids) {
      if (ids.empty()) return 0.0;
      double total = 0.0;
      for (const auto& id : ids) {
        const std::string* text = ds.find(id)->field(ds.task.score_target());
        total += text ? static_cast<double>(tokenize(*text).size()) : 0.0;
      }
      return total / static_cast<double>(ids.size());
    };
  } else {
    throw Error(ErrorCode::BadArguments, "unknown statistic `" + o.statistic + "`");
  }

  std::optional<double> observed;
  std::string observed_manifest;
  if (!o.split_dir.empty()) {
    const LoadedSplit split = load_split_dir(o.split_dir, ds);
    std::vector<std::string> eval = split.sides.dev;
    eval.insert(eval.end(), split.sides.test.begin(), split.sides.test.end());
    observed = stat(eval);
    observed_manifest = digest_hex(split.manifest_text);
  }
  const NullSummary null = null_distribution(ds, stat, o.trials, o.seed, o.p, observed, o.jobs);

  AnalysisReport report;
  json& doc = report.document;
  doc["statistic"] = o.statistic;
  doc["dataset_digest"] = ds.digest;
  doc["resources"] = resources;
  doc["trials"] = o.trials;
  doc["seed"] = o.seed;
  doc["p"] = o.p;
  doc["mean"] = null.mean;
  doc["stddev"] = null.stddev;
  doc["min"] = null.min;
  doc["max"] = null.max;
  doc["percentiles"] = null.percentiles;
  if (observed) {
    doc["observed"] = *observed;
    doc["observed_percentile"] = *null.observed_percentile;
    doc["observed_manifest_digest"] = observed_manifest;
  }
  CsvTable samples{"null_samples", {"trial", "value"}, {}};
  for (std::size_t t = 0; t < null.samples.size(); ++t) {
    samples.rows.push_back({std::to_string(t), format_number(null.samples[t])});
  }
  report.tables.push_back(std::move(samples));
  emit_report(report, o.out);
  out << json{{"command", "null"}, {"trials", o.trials}, {"mean", null.mean}}.dump() << '\n';
  return 0;
}

void print_error(std::ostream& err, const std::string& command, const std::string& code, const std::string& detail) {
  err << json{{"error", code}, {"detail", detail}, {"command", command}}.dump() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Likelihood-based and comparison dataset splits with audit statistics", "lsplit"};
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--dataset", o.dataset, "JSONL dataset")->required();
    cmd->add_option("--task-config", o.task_config, "preset name (spider, snli, boolq) or JSON file");
    cmd->add_option("--min-annotators", o.min_annotators, "keep majority-vote examples with this many labels");
    cmd->add_option("--seed", o.seed, "random seed");
    cmd->add_option("--jobs", o.jobs, "worker threads (0 = all cores)");
    cmd->add_option("--out", o.out, "output path")->required();
    cmd->add_flag("--force", o.force, "overwrite existing output");
  };
  auto add_scorer = [&](CLI::App* cmd) {
    cmd->add_option("--scorer", o.scorer, "ngram | file:PATH | remote:http://HOST:PORT | remote:stdio:COMMAND");
    cmd->add_option("--k", o.k, "folds for n-gram scoring");
    cmd->add_option("--order", o.order, "n-gram order");
    cmd->add_option("--discount", o.discount, "absolute discount");
    cmd->add_option("--retries", o.retries, "extra attempts per remote request");
  };

  CLI::App* score = app.add_subcommand("score", "score every example");
  add_common(score);
  add_scorer(score);

  CLI::App* split = app.add_subcommand("split", "build a train/dev/test split");
  add_common(split);
  add_scorer(split);
  split->add_option("--split-type", o.split_type, "likelihood | likelihood-len | reverse | random | length | template | tmcd");
  split->add_option("--p", o.p, "evaluation fraction");
  split->add_option("--dev-fraction", o.dev_fraction, "share of the evaluation set used as dev");
  split->add_flag("--label-balance", o.label_balance, "split every label separately");
  split->add_flag("--atom-constraint", o.atom_constraint, "every evaluation atom must occur in train");
  split->add_option("--max-iters", o.max_iters, "TMCD candidate swaps");
  split->add_option("--structures", o.structures, "structure dump (computed from targets when absent)");

  CLI::App* structures = app.add_subcommand("structures", "dump program atoms, compounds, templates, hardness");
  add_common(structures);

  CLI::App* audit = app.add_subcommand("audit", "statistics of an existing split");
  add_common(audit);
  audit->add_option("--split-dir", o.split_dir, "directory written by `split`")->required();
  audit->add_option("--structures", o.structures, "structure dump");
  audit->add_option("--freq-table", o.freq_table, "word<TAB>per-million-rate");
  audit->add_option("--wordlist", o.wordlist, "one word per line");
  audit->add_option("--threshold", o.threshold, "rare-word rate threshold per million");
  audit->add_option("--correctness", o.correctness, "id<TAB>0|1");
  audit->add_option("--trials", o.trials, "random splits for the rare-word null distribution");

  CLI::App* null = app.add_subcommand("null", "statistic over many random splits");
  add_common(null);
  null->add_option("--statistic", o.statistic, "rare-word-fraction | mean-length");
  null->add_option("--trials", o.trials, "number of random splits")->required();
  null->add_option("--p", o.p, "evaluation fraction");
  null->add_option("--split-dir", o.split_dir, "split whose evaluation set gives the observed value");
  null->add_option("--freq-table", o.freq_table, "word<TAB>per-million-rate");
  null->add_option("--wordlist", o.wordlist, "one word per line");
  null->add_option("--threshold", o.threshold, "rare-word rate threshold per million");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    print_error(err, "", "BadArguments", e.what());
    return 2;
  }

  std::string command;
  for (const CLI::App* sub : app.get_subcommands()) command = sub->get_name();
  try {
    if (command == "score") return cmd_score(o, out);
    if (command == "split") return cmd_split(o, out);
    if (command == "structures") return cmd_structures(o, out);
    if (command == "audit") return cmd_audit(o, out);
    if (command == "null") return cmd_null(o, out);
    print_error(err, command, "BadArguments", "unknown command");
    return 2;
  } catch (const Error& e) {
    print_error(err, command, std::string(error_code_name(e.code())), e.detail());
  } catch (const std::exception& e) {
    print_error(err, command, "IoError", e.what());
  }
  return 1;
}

}  // namespace lsplit
