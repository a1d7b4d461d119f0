#include <cmath>

#include "helpers.hpp"
#include "lsplit/analysis.hpp"
#include "synth.hpp"

using namespace lsplit;
using namespace lsplit::testing;

namespace {

Dataset sentences(const std::vector<std::string>& texts) {
  std::vector<Example> examples;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    Example ex;
    ex.id = "w" + std::to_string(i);
    ex.x1 = texts[i];
    examples.push_back(ex);
  }
  return make_dataset(examples, TaskConfig{});
}

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("frequency tables") {
    const FrequencyTable two = parse_frequency_table("the\t5000\nCat\t12.5\ncat\t0.5\n");
    CHECK(two.at("the") == 5000.0);
    CHECK(two.at("cat") == 13.0);
    const FrequencyTable subtlex =
        parse_frequency_table("Word\tFREQcount\tCDcount\tSUBTLWF\nthe\t1501908\t8388\t29449.18\nzebra\t20\t3\t0.39\n");
    CHECK(subtlex.at("the") == doctest::Approx(29449.18));
    CHECK(subtlex.at("zebra") == doctest::Approx(0.39));
    CHECK(code_of([] { parse_frequency_table("the\tmany\n"); }) == ErrorCode::MalformedResource);
    CHECK(code_of([] { parse_frequency_table("Word\tFREQcount\nthe\t3\n"); }) == ErrorCode::MalformedResource);

    const Wordlist wl = parse_wordlist("Apple\n\nbanana\n");
    CHECK(wl == Wordlist{"apple", "banana"});
  }

  TEST_CASE("rare words") {
    const Dataset ds = sentences({"the zebra ran", "the cat ran fast"});
    const FrequencyTable freq = {{"the", 5000}, {"ran", 40}, {"cat", 9}, {"zebra", 0.5}};
    const Wordlist wl = {"the", "ran", "cat", "zebra", "fast"};
    const RareWordStats s = rare_word_stats({"w0", "w1"}, ds, freq, wl, 1.0);
    CHECK(s.considered == 7);
    CHECK(s.rare == 2);
    CHECK(s.rare_types == std::set<std::string>{"fast", "zebra"});
    double previous = -1.0;
    for (double threshold : {0.1, 1.0, 10.0, 100.0, 10000.0}) {
      const double f = rare_word_fraction({"w0", "w1"}, ds, freq, wl, threshold);
      CHECK(f >= previous);
      previous = f;
    }
    CHECK(previous == 1.0);
    CHECK(rare_word_fraction({}, ds, freq, wl) == 0.0);
  }

  TEST_CASE("quantiles and percentile ranks") {
    const std::vector<double> v = {4, 1, 3, 2};
    CHECK(quantile(v, 0.0) == 1.0);
    CHECK(quantile(v, 1.0) == 4.0);
    CHECK(quantile(v, 0.5) == 2.5);
    CHECK(quantile(v, 1.0 / 3.0) == doctest::Approx(2.0));
    CHECK(percentile_rank(v, 2.0) == 37.5);
    CHECK(percentile_rank(v, 0.0) == 0.0);
    CHECK(percentile_rank(v, 9.0) == 100.0);
  }

  TEST_CASE("null distributions") {
    const Dataset ds = synth::sql_dataset(100, 3);
    const SetStatistic size = [](const std::vector<std::string>& ids) { return static_cast<double>(ids.size()); };
    const NullSummary constant = null_distribution(ds, size, 25, 1, 0.2, 20.0);
    CHECK(constant.samples.size() == 25);
    CHECK(constant.mean == 20.0);
    CHECK(constant.stddev == 0.0);
    CHECK(constant.percentiles.at("p99") == 20.0);
    CHECK(*constant.observed_percentile == 50.0);

    const SetStatistic first = [&](const std::vector<std::string>& ids) {
      return static_cast<double>(std::count(ids.begin(), ids.end(), ds.examples[0].id));
    };
    const NullSummary a = null_distribution(ds, first, 200, 4, 0.2);
    const NullSummary b = null_distribution(ds, first, 200, 4, 0.2, std::nullopt, 3);
    CHECK(a.samples == b.samples);
    CHECK(a.mean == doctest::Approx(0.2).epsilon(0.5));
    CHECK(a.min == 0.0);
    CHECK(a.max == 1.0);
    CHECK(null_distribution(ds, first, 200, 5, 0.2).samples != a.samples);
  }

  TEST_CASE("parse trees") {
    const ParseTree t = parse_tree("(S (NP w1) (VP w2))");
    CHECK(t.label == "S");
    REQUIRE(t.children.size() == 2);
    CHECK(t.children[0].children.at(0).label == "w1");
    CHECK(parse_tree("( (S w))").label == "S");
    CHECK(code_of([] { parse_tree("(S (NP w1)"); }) == ErrorCode::MalformedTree);
    CHECK(code_of([] { parse_tree("(S w) extra"); }) == ErrorCode::MalformedTree);
    CHECK(code_of([] { parse_tree(""); }) == ErrorCode::MalformedTree);
    CHECK(yngve_score(parse_tree("(S (NP w1) (VP w2) (PP w3))")) == 1.0);
    CHECK(tree_depth_stats(parse_tree("(S (NP w1) (VP w2))")).max == 2);
  }

  TEST_CASE("syllables and readability") {
    CHECK(count_syllables("cat") == 1);
    CHECK(count_syllables("table") == 2);
    CHECK(count_syllables("make") == 1);
    CHECK(count_syllables("reading") == 2);
    CHECK(count_syllables("rhythm") == 1);
    CHECK(count_syllables("the") == 1);
    CHECK(count_syllables("queue") == 1);
    const ReadabilityCounts c = readability_counts("Reading is fun. Dogs like to play outside.");
    CHECK(c.words == 8);
    CHECK(c.sentences == 2);
    CHECK(c.syllables == 10);
    CHECK(readability_counts("no terminal punctuation").sentences == 1);
    CHECK(code_of([] { flesch_kincaid_grade("  ... "); }) == ErrorCode::EmptyText);
  }

  TEST_CASE("correctness files and projected accuracy") {
    const Correctness c = parse_correctness("a\t1\nb\t0\n");
    CHECK(c.at("a"));
    CHECK_FALSE(c.at("b"));
    CHECK(code_of([] { parse_correctness("a\tyes\n"); }) == ErrorCode::MalformedResource);
    CHECK(projected_accuracy({50.0, 100.0}, {0.5, 0.5}) == 75.0);
    CHECK(code_of([] { projected_accuracy({1.0}, {0.5, 0.5}); }) == ErrorCode::BadWeights);
    CHECK(code_of([] { projected_accuracy({1.0, 1.0}, {1.2, -0.2}); }) == ErrorCode::BadWeights);
    CHECK(code_of([] { projected_accuracy({1.0, 1.0}, {0.5, 0.4}); }) == ErrorCode::BadWeights);
  }

  TEST_CASE("novel compounds and hardness") {
    StructureMap m;
    auto make = [](std::vector<std::string> compounds, Hardness h) {
      ProgramStructure s;
      s.compounds.items = std::move(compounds);
      s.hardness.level = h;
      return s;
    };
    m["a"] = make({"x", "y"}, Hardness::Easy);
    m["b"] = make({"x"}, Hardness::Easy);
    m["c"] = make({"x", "z"}, Hardness::Hard);
    m["d"] = make({"y"}, Hardness::Medium);
    const Correctness right = {{"a", true}, {"b", true}, {"c", false}, {"d", true}};
    const NovelCompoundReport r = novel_compound_report({"a", "b"}, {"c", "d"}, m, &right);
    CHECK(r.examples == 2);
    CHECK(r.novel == 1);
    CHECK(r.novel_fraction() == 0.5);
    CHECK(r.novel_accuracy->accuracy() == 0.0);
    CHECK(r.familiar_accuracy->accuracy() == 1.0);
    CHECK(code_of([&] { novel_compound_report({"a"}, {"q"}, m); }) == ErrorCode::MissingStructure);

    NovelCompoundReport target;
    target.examples = 4;
    target.novel = 3;
    CHECK(project_novel_accuracy(r, target) == 0.25);

    const HardnessBreakdown all = hardness_breakdown({"a", "b", "c", "d"}, m, &right);
    CHECK(all.total() == 4);
    CHECK(all.counts == std::array<std::size_t, 4>{2, 1, 1, 0});
    CHECK(all.fractions()[0] == 0.5);
    CHECK(all.has_accuracy);
    CHECK(all.accuracy[2].accuracy() == 0.0);
    CHECK(hardness_projection(all, all) == 0.75);
  }
}
