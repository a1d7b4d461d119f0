#include <algorithm>
#include <set>

#include <json.hpp>

#include "helpers.hpp"
#include "lsplit/splitting.hpp"
#include "synth.hpp"

using namespace lsplit;
using namespace lsplit::testing;
using Ids = std::vector<std::string>;

namespace {

std::string words(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " w" : "w") + std::to_string(i);
  return s;
}

// ids with their question lengths and optional labels
Dataset dataset(const std::vector<std::pair<std::string, std::size_t>>& rows, const Ids& labels = {}) {
  std::vector<Example> examples;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Example ex;
    ex.id = rows[i].first;
    ex.x1 = words(rows[i].second);
    if (!labels.empty()) ex.label = labels[i];
    examples.push_back(ex);
  }
  return make_dataset(examples, TaskConfig{});
}

std::vector<ScoreRecord> scores(const std::vector<std::pair<std::string, double>>& values) {
  std::vector<ScoreRecord> out;
  for (const auto& [id, lp] : values) out.push_back({id, lp, 1, kScorerFile, {}});
  return out;
}

SplitConfig with_p(double p, std::uint64_t seed = 0) {
  SplitConfig c;
  c.p = p;
  c.seed = seed;
  return c;
}

ProgramStructure with_atoms(Ids atoms) {
  ProgramStructure s;
  std::sort(atoms.begin(), atoms.end());
  s.atoms.items = atoms;
  s.compounds.items = atoms;
  return s;
}

void check_partition(const SplitResult& r, const Dataset& ds) {
  Ids all = r.train;
  all.insert(all.end(), r.dev.begin(), r.dev.end());
  all.insert(all.end(), r.test.begin(), r.test.end());
  std::sort(all.begin(), all.end());
  CHECK(all == ds.ids());
  Ids eval = r.dev;
  eval.insert(eval.end(), r.test.begin(), r.test.end());
  std::sort(eval.begin(), eval.end());
  CHECK(eval == r.eval);
}

}  // namespace

TEST_SUITE("splitting") {
  TEST_CASE("config validation and target sizes") {
    CHECK(code_of([] { with_p(0.0).validate(); }) == ErrorCode::BadSplitConfig);
    CHECK(code_of([] { with_p(1.0).validate(); }) == ErrorCode::BadSplitConfig);
    SplitConfig c;
    c.dev_fraction = 1.0;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::BadSplitConfig);
    CHECK(eval_target(10, 0.3) == 3);
    CHECK(eval_target(3, 1.0 / 3.0) == 1);
    CHECK(eval_target(3, 2.0 / 3.0) == 2);
    CHECK(eval_target(8034, 0.2) == 1606);
    for (auto t : {SplitType::Likelihood, SplitType::LikelihoodLen, SplitType::Reverse, SplitType::Random,
                   SplitType::Length, SplitType::Template, SplitType::Tmcd}) {
      CHECK(split_type_from_name(split_type_name(t)) == t);
    }
    CHECK_FALSE(split_type_from_name("mcd").has_value());
  }

  TEST_CASE("likelihood split takes the lowest scores") {
    const Dataset ds = dataset({{"a", 3}, {"b", 3}, {"c", 3}});
    const auto s = scores({{"a", -1}, {"b", -5}, {"c", -3}});
    CHECK(likelihood_split(ds, s, with_p(1.0 / 3.0)).eval == Ids{"b"});
    CHECK(likelihood_split(ds, s, with_p(2.0 / 3.0)).eval == Ids{"b", "c"});
    const Dataset two = dataset({{"a", 1}, {"b", 1}});
    CHECK(likelihood_split(two, scores({{"a", -2}, {"b", -2}}), with_p(0.5)).eval == Ids{"a"});
    CHECK(code_of([&] { likelihood_split(ds, scores({{"a", -1}, {"b", -5}}), with_p(0.5)); }) ==
          ErrorCode::MissingScore);
  }

  TEST_CASE("reverse split takes the highest scores") {
    const Dataset ds = dataset({{"a", 3}, {"b", 3}, {"c", 3}});
    const auto s = scores({{"a", -1}, {"b", -5}, {"c", -3}});
    CHECK(reverse_split(ds, s, with_p(1.0 / 3.0)).eval == Ids{"a"});
    const Dataset four = dataset({{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}});
    const auto s4 = scores({{"a", -4}, {"b", -1}, {"c", -3}, {"d", -2}});
    CHECK(reverse_split(four, s4, with_p(0.5)).eval == Ids{"b", "d"});
    const Ids forward = likelihood_split(four, s4, with_p(0.5)).eval;
    const Ids backward = reverse_split(four, s4, with_p(0.5)).eval;
    Ids both;
    std::set_intersection(forward.begin(), forward.end(), backward.begin(), backward.end(), std::back_inserter(both));
    CHECK(both.empty());
  }

  TEST_CASE("selection matches a brute-force bottom-k") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Dataset ds = synth::sql_dataset(60 + seed, seed);
      const auto s = synth::tied_scores(ds, seed + 100);
      const auto lp = join_scores(ds, s);
      const SplitConfig c = with_p(0.1 + 0.02 * static_cast<double>(seed), seed);
      const std::size_t k = eval_target(ds.size(), c.p);
      const SplitResult fwd = likelihood_split(ds, s, c);
      const SplitResult rev = reverse_split(ds, s, c);
      CHECK(std::set<std::string>(fwd.eval.begin(), fwd.eval.end()) == synth::brute_bottom_k(lp, k, false));
      CHECK(std::set<std::string>(rev.eval.begin(), rev.eval.end()) == synth::brute_bottom_k(lp, k, true));
      check_partition(fwd, ds);
    }
  }

  TEST_CASE("length control apportions buckets") {
    std::vector<std::pair<std::string, std::size_t>> rows;
    std::vector<std::pair<std::string, double>> values;
    for (int i = 0; i < 20; ++i) {
      rows.push_back({"e" + std::to_string(100 + i), i < 10 ? 4u : 9u});
      values.push_back({"e" + std::to_string(100 + i), -static_cast<double>(i)});
    }
    const SplitResult two = likelihood_split_lencontrol(dataset(rows), scores(values), with_p(0.2));
    CHECK(two.eval == Ids{"e108", "e109", "e118", "e119"});
    REQUIRE(two.length_quotas.size() == 2);
    CHECK(two.length_quotas[0].quota == 2);
    CHECK(two.length_quotas[1].selected == 2);

    // sizes {3, 3, 4} at p = 0.3: floors {0, 0, 1}, remainders .9 .9 .2
    rows.clear();
    values.clear();
    const std::size_t lengths[] = {2, 2, 2, 5, 5, 5, 7, 7, 7, 7};
    for (int i = 0; i < 10; ++i) {
      rows.push_back({"k" + std::to_string(i), lengths[i]});
      values.push_back({"k" + std::to_string(i), -static_cast<double>(i)});
    }
    const SplitResult three = likelihood_split_lencontrol(dataset(rows), scores(values), with_p(0.3));
    CHECK(three.eval.size() == 3);
    REQUIRE(three.length_quotas.size() == 3);
    CHECK(three.length_quotas[0].quota == 0);
    CHECK(three.length_quotas[1].quota == 0);
    CHECK(three.length_quotas[2].quota == 1);
    for (const auto& q : three.length_quotas) CHECK(q.selected == 1);
    CHECK(three.eval == Ids{"k2", "k5", "k9"});

    const Dataset flat = dataset({{"a", 3}, {"b", 3}, {"c", 3}, {"d", 3}});
    const auto s = scores({{"a", -4}, {"b", -1}, {"c", -3}, {"d", -2}});
    CHECK(likelihood_split_lencontrol(flat, s, with_p(0.5)).eval == likelihood_split(flat, s, with_p(0.5)).eval);
  }

  TEST_CASE("random split") {
    const Dataset ds = synth::sql_dataset(100, 1);
    const SplitResult r = random_split(ds, with_p(0.2, 5));
    CHECK(r.eval.size() == 20);
    CHECK(r.dev.size() == 10);
    CHECK(r.test.size() == 10);
    CHECK(random_split(ds, with_p(0.2, 5)).eval == r.eval);
    const Ids other1 = random_split(ds, with_p(0.2, 6)).eval;
    const Ids other2 = random_split(ds, with_p(0.2, 7)).eval;
    CHECK(other1 != r.eval);
    CHECK(other2 != r.eval);
    CHECK(other1 != other2);
    check_partition(r, ds);
  }

  TEST_CASE("length split") {
    const Dataset ds = dataset({{"a", 3}, {"b", 9}, {"c", 5}});
    CHECK(length_split(ds, with_p(1.0 / 3.0)).eval == Ids{"b"});
    CHECK(length_split(ds, with_p(2.0 / 3.0)).eval == Ids{"b", "c"});
    const Dataset flat = dataset({{"d", 4}, {"a", 4}, {"c", 4}, {"b", 4}});
    CHECK(length_split(flat, with_p(0.5)).eval == Ids{"a", "b"});
  }

  TEST_CASE("template split draws whole groups") {
    const Dataset ds = dataset({{"a", 1}, {"b", 1}, {"c", 1}});
    const std::map<std::string, std::string> templates = {{"a", "T1"}, {"b", "T1"}, {"c", "T2"}};
    const SplitResult r = template_split_ordered(ds, with_p(1.0 / 3.0), templates, {"T2", "T1"});
    CHECK(r.eval == Ids{"c"});
    CHECK(r.overshoot == 0);
    const SplitResult big = template_split_ordered(ds, with_p(1.0 / 3.0), templates, {"T1", "T2"});
    CHECK(big.eval == Ids{"a", "b"});
    CHECK(big.overshoot == 1);
    CHECK(nlohmann::json::parse(manifest_json(big))["sizes"]["overshoot"] == 1);

    std::vector<std::pair<std::string, std::size_t>> rows;
    std::map<std::string, std::string> giant;
    for (int i = 0; i < 20; ++i) {
      const std::string id = "g" + std::to_string(10 + i);
      rows.push_back({id, 2});
      giant[id] = i < 18 ? "BIG" : "S" + std::to_string(i);
    }
    const SplitResult over = template_split_ordered(dataset(rows), with_p(0.2), giant, {"BIG", "S18", "S19"});
    CHECK(over.eval.size() == 18);
    CHECK(over.target_eval == 4);
    CHECK(over.overshoot == 14);

    std::map<std::string, std::string> missing = templates;
    missing.erase("b");
    CHECK(code_of([&] { template_split(ds, with_p(0.3), missing); }) == ErrorCode::MissingTemplate);

    const Dataset corpus = synth::sql_dataset(200, 9);
    const auto t = templates_of(analyze_dataset(corpus));
    const SplitResult rs = template_split(corpus, with_p(0.25, 3), t);
    std::set<std::string> train_t;
    for (const auto& id : rs.train) train_t.insert(t.at(id));
    for (const auto& id : rs.eval) CHECK_FALSE(train_t.count(t.at(id)));
    CHECK(rs.eval.size() >= eval_target(200, 0.25));
  }

  TEST_CASE("atom constraint mechanics") {
    const Dataset ds = dataset({{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}, {"e", 1}});
    StructureMap m;
    m["a"] = with_atoms({"x"});
    m["b"] = with_atoms({"x", "rare"});
    m["c"] = with_atoms({"x", "rare"});
    m["d"] = with_atoms({"x"});
    m["e"] = with_atoms({"x"});

    SplitResult r;
    r.train = {"a", "d", "e"};
    r.eval = {"b", "c"};
    enforce_atom_constraint(r, ds, m, nullptr, false, false);
    REQUIRE(r.swap_log.size() == 2);
    CHECK(r.swap_log[0].id == "b");
    CHECK(r.swap_log[0].reason == "atom-violation");
    CHECK(r.swap_log[1].id == "a");
    CHECK(r.swap_log[1].reason == "restore-size");
    CHECK(r.eval == Ids{"a", "c"});

    SplitResult fine;
    fine.train = {"a", "b", "c"};
    fine.eval = {"d", "e"};
    enforce_atom_constraint(fine, ds, m, nullptr, false, false);
    CHECK(fine.swap_log.empty());
    CHECK(fine.eval == Ids{"d", "e"});

    // the refill prefers the lowest logprob
    const std::map<std::string, double> lp = {{"a", -1}, {"b", -9}, {"c", -9}, {"d", -5}, {"e", -2}};
    SplitResult scored;
    scored.train = {"a", "d", "e"};
    scored.eval = {"b", "c"};
    enforce_atom_constraint(scored, ds, m, &lp, false, false);
    CHECK(scored.swap_log.at(1).id == "d");

    // every train example leans on an atom that only it carries
    const Dataset pair = dataset({{"a", 1}, {"b", 1}});
    StructureMap lonely;
    lonely["a"] = with_atoms({"x", "y"});
    lonely["b"] = with_atoms({"x", "z"});
    SplitResult stuck;
    stuck.train = {"a"};
    stuck.eval = {"b"};
    CHECK(code_of([&] { enforce_atom_constraint(stuck, pair, lonely, nullptr, false, false); }) ==
          ErrorCode::ConstraintUnsatisfiable);
  }

  TEST_CASE("label balance") {
    std::vector<std::pair<std::string, std::size_t>> rows;
    Ids labels;
    std::vector<std::pair<std::string, double>> values;
    for (int i = 0; i < 100; ++i) {
      rows.push_back({"l" + std::to_string(100 + i), 3});
      labels.push_back(i < 50 ? "x" : "y");
      // all of label x scores below label y
      values.push_back({"l" + std::to_string(100 + i), -static_cast<double>(100 - i)});
    }
    TaskConfig task;
    const Dataset ds = dataset(rows, labels);
    const SplitResult r = enforce_label_balance(ds, scores(values), with_p(0.2));
    std::map<std::string, int> per_label;
    for (const auto& id : r.eval) ++per_label[*ds.find(id)->label];
    CHECK(per_label["x"] == 10);
    CHECK(per_label["y"] == 10);
    CHECK(likelihood_split(ds, scores(values), with_p(0.2)).eval.size() == 20);
    std::map<std::string, int> per_dev;
    for (const auto& id : r.dev) ++per_dev[*ds.find(id)->label];
    CHECK(per_dev["x"] == 5);
    CHECK(per_dev["y"] == 5);

    const Dataset three = synth::sql_dataset(300, 21);
    std::map<std::string, int> pool;
    for (const auto& ex : three.examples) ++pool[*ex.label];
    SplitConfig c = with_p(0.2, 4);
    c.label_balance = true;
    const SplitResult rr = random_split(three, c);
    std::map<std::string, int> got;
    for (const auto& id : rr.eval) ++got[*three.find(id)->label];
    for (const auto& [label, size] : pool) CHECK(std::abs(got[label] - 0.2 * size) <= 1.0);

    const Dataset single = dataset({{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}}, {"x", "x", "x", "x"});
    const auto s = scores({{"a", -4}, {"b", -1}, {"c", -3}, {"d", -2}});
    CHECK(enforce_label_balance(single, s, with_p(0.5)).eval == likelihood_split(single, s, with_p(0.5)).eval);
  }

  TEST_CASE("dev and test partition") {
    auto partition = [](std::size_t eval_size) {
      std::vector<std::pair<std::string, std::size_t>> rows;
      for (std::size_t i = 0; i < eval_size; ++i) rows.push_back({"p" + std::to_string(100000 + i), 1});
      const Dataset ds = dataset(rows);
      SplitResult r;
      r.eval = ds.ids();
      partition_dev_test(r, ds, with_p(0.5, 2));
      return std::make_pair(r.dev.size(), r.test.size());
    };
    CHECK(partition(2000) == std::make_pair<std::size_t, std::size_t>(1000, 1000));
    CHECK(partition(2068) == std::make_pair<std::size_t, std::size_t>(1034, 1034));
    CHECK(partition(5) == std::make_pair<std::size_t, std::size_t>(2, 3));
  }

  TEST_CASE("tmcd search") {
    // two compound vocabularies over one shared atom vocabulary
    std::vector<std::pair<std::string, std::size_t>> rows;
    StructureMap m;
    for (int i = 0; i < 8; ++i) {
      const std::string id = "t" + std::to_string(i);
      rows.push_back({id, 2});
      ProgramStructure s = with_atoms({"p", "q"});
      s.compounds.items = i < 4 ? Ids{"A" + std::to_string(i % 2), "A2"} : Ids{"B" + std::to_string(i % 3)};
      std::sort(s.compounds.items.begin(), s.compounds.items.end());
      m[id] = s;
    }
    const Dataset ds = dataset(rows);
    SplitConfig c = with_p(0.5, 1);
    const SplitResult r = tmcd_split(ds, c, m);
    const auto oracle = synth::brute_force_tmcd(m, 4, kCompoundAlpha);
    CHECK(r.divergence->compound == doctest::Approx(oracle.best).epsilon(1e-12));
    CHECK(r.tmcd->converged);
    CHECK(r.tmcd->final_compound >= r.tmcd->initial_compound);

    c.max_iters = 0;
    const SplitResult frozen = tmcd_split(ds, c, m);
    CHECK(frozen.eval == random_split(ds, c).eval);
    CHECK(frozen.tmcd->evaluated == 0);

    StructureMap partial = m;
    partial.erase("t3");
    CHECK(code_of([&] { tmcd_split(ds, c, partial); }) == ErrorCode::MissingStructure);
  }

  TEST_CASE("tmcd on programs respects atoms and never does worse than its start") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const Dataset ds = synth::sql_dataset(80, 40 + seed);
      const StructureMap m = analyze_dataset(ds);
      SplitConfig c = with_p(0.25, seed);
      c.label_balance = seed % 2 == 1;
      const SplitResult r = tmcd_split(ds, c, m);
      CHECK(synth::atoms_closed(m, r.train, r.eval));
      CHECK(r.eval.size() == eval_target(80, 0.25));
      CHECK(r.tmcd->final_compound >= random_split(ds, c, &m).divergence->compound - 1e-12);
      check_partition(r, ds);
    }
  }

  TEST_CASE("unparsed programs stay in train") {
    Dataset ds = synth::sql_dataset(40, 2);
    std::vector<Example> examples = ds.examples;
    examples[3].target = "FROM singer SELECT name";
    examples[7].target = "FROM concert SELECT title";
    ds = make_dataset(examples, ds.task);
    const StructureMap m = analyze_dataset(ds);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const SplitResult r = tmcd_split(ds, with_p(0.4, seed), m);
      CHECK(std::count(r.train.begin(), r.train.end(), examples[3].id) == 1);
      CHECK(std::count(r.train.begin(), r.train.end(), examples[7].id) == 1);
      CHECK(r.tmcd->pinned_unparsed == 2);
    }
  }

  TEST_CASE("build_split checks inputs and manifests are deterministic") {
    const Dataset ds = synth::sql_dataset(120, 5);
    const StructureMap m = analyze_dataset(ds);
    ScoreFile sf;
    sf.records = synth::tied_scores(ds, 3);
    sf.digest = scores_digest(sf.records);
    SplitConfig c = with_p(0.2, 8);
    CHECK(code_of([&] { build_split(SplitType::Likelihood, {&ds, nullptr, nullptr}, c); }) ==
          ErrorCode::BadSplitConfig);
    CHECK(code_of([&] { build_split(SplitType::Tmcd, {&ds, &sf, nullptr}, c); }) == ErrorCode::BadSplitConfig);
    c.atom_constraint = true;
    CHECK(code_of([&] { build_split(SplitType::Random, {&ds, nullptr, nullptr}, c); }) == ErrorCode::BadSplitConfig);
    CHECK(code_of([&] { build_split(SplitType::Template, {&ds, nullptr, &m}, c); }) == ErrorCode::BadSplitConfig);

    const SplitResult a = build_split(SplitType::Likelihood, {&ds, &sf, &m}, c);
    const SplitResult b = build_split(SplitType::Likelihood, {&ds, &sf, &m}, c);
    CHECK(manifest_json(a) == manifest_json(b));
    const auto j = nlohmann::json::parse(manifest_json(a));
    for (const char* key : {"split_type", "config", "inputs", "sizes", "id_digests", "length_quotas", "label_quotas",
                            "swap_log", "divergence", "notes"}) {
      CHECK_MESSAGE(j.contains(key), key);
    }
    CHECK(j["inputs"]["dataset_digest"] == ds.digest);
    CHECK(j["inputs"]["scores_digest"] == sf.digest);
    CHECK(j["split_type"] == "likelihood");
    CHECK(j["sizes"]["dev"].get<std::size_t>() + j["sizes"]["test"].get<std::size_t>() == 24);
    CHECK(synth::atoms_closed(m, a.train, a.eval));

    const auto dir = synth::fresh_dir("split-write");
    write_split(dir, ds, a);
    CHECK(read_file(dir / "manifest.json") == manifest_json(a));
    const Dataset train = load_dataset(dir / "train.jsonl", ds.task);
    CHECK(train.ids() == a.train);
    CHECK(load_dataset(dir / "dev.jsonl", ds.task).ids() == a.dev);
    CHECK(load_dataset(dir / "test.jsonl", ds.task).ids() == a.test);
  }
}
