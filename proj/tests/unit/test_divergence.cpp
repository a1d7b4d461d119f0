#include <cmath>

#include "helpers.hpp"
#include "lsplit/divergence.hpp"
#include "synth.hpp"

using namespace lsplit;
using namespace lsplit::testing;

namespace {

ProgramStructure bags(std::vector<std::string> atoms, std::vector<std::string> compounds) {
  ProgramStructure s;
  std::sort(atoms.begin(), atoms.end());
  std::sort(compounds.begin(), compounds.end());
  s.atoms.items = std::move(atoms);
  s.compounds.items = std::move(compounds);
  return s;
}

}  // namespace

TEST_SUITE("divergence") {
  TEST_CASE("closed forms") {
    const Distribution p{{{"a", 0.3}, {"b", 0.7}}};
    CHECK(chernoff_divergence(p, p, 0.5) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(chernoff_divergence(p, Distribution{{{"c", 1.0}}}, 0.1) == 1.0);
    CHECK(chernoff_divergence(Distribution{{{"a", 1.0}}}, Distribution{{{"a", 0.5}, {"b", 0.5}}}, 0.5) ==
          doctest::Approx(1.0 - std::sqrt(0.5)).epsilon(1e-15));
    CHECK(chernoff_coefficient(Distribution{{{"a", 1.0}}}, Distribution{{{"a", 0.5}, {"b", 0.5}}}, 0.5) ==
          doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  }

  TEST_CASE("alpha 0.5 is symmetric and 0.1 is not") {
    const Distribution p{{{"a", 0.9}, {"b", 0.1}}};
    const Distribution q{{{"a", 0.2}, {"b", 0.3}, {"c", 0.5}}};
    CHECK(chernoff_divergence(p, q, 0.5) == chernoff_divergence(q, p, 0.5));
    CHECK(chernoff_divergence(p, q, 0.1) != doctest::Approx(chernoff_divergence(q, p, 0.1)));
  }

  TEST_CASE("argument checks") {
    const Distribution p{{{"a", 1.0}}};
    CHECK(code_of([&] { chernoff_divergence(p, p, 0.0); }) == ErrorCode::BadAlpha);
    CHECK(code_of([&] { chernoff_divergence(p, p, 1.0); }) == ErrorCode::BadAlpha);
    CHECK(code_of([&] { chernoff_divergence(p, Distribution{{{"a", 0.7}}}, 0.5); }) == ErrorCode::BadDistribution);
    CHECK(code_of([&] { Distribution{{{"a", -0.5}, {"b", 1.5}}}.validate(); }) == ErrorCode::BadDistribution);
    CHECK(code_of([] { Distribution::from_counts({{"a", 0}}); }) == ErrorCode::BadDistribution);
    CHECK(Distribution::from_counts({{"a", 1}, {"b", 3}}).weights.at("b") == 0.75);
  }

  TEST_CASE("bag distributions pool multisets") {
    StructureBag x{BagKind::Compound, {"a", "a", "b"}};
    StructureBag y{BagKind::Compound, {"b"}};
    const Distribution d = bag_distribution({&x, &y});
    CHECK(d.weights.at("a") == 0.5);
    CHECK(d.weights.at("b") == 0.5);
  }

  TEST_CASE("split divergences") {
    StructureMap m;
    m["a"] = bags({"x", "y"}, {"x>y"});
    m["b"] = bags({"x", "y"}, {"x>y"});
    m["c"] = bags({"x", "y"}, {"y>x"});
    const SplitDivergence same = split_divergences(m, {"a"}, {"b"});
    CHECK(same.atom == 0.0);
    CHECK(same.compound == 0.0);
    const SplitDivergence novel = split_divergences(m, {"a", "b"}, {"c"});
    CHECK(novel.atom == 0.0);
    CHECK(novel.compound == 1.0);
    CHECK(code_of([&] { split_divergences(m, {"a"}, {"zz"}); }) == ErrorCode::MissingStructure);

    // agreement with the naive construction on real programs
    const Dataset ds = synth::sql_dataset(80, 12);
    const StructureMap s = analyze_dataset(ds);
    std::vector<std::string> train, eval;
    for (const auto& id : ds.ids()) (id.back() % 4 == 0 ? eval : train).push_back(id);
    const SplitDivergence got = split_divergences(s, train, eval);
    const synth::NaiveDivergence want = synth::naive_split_divergence(s, train, eval);
    CHECK(got.atom == doctest::Approx(want.atom).epsilon(1e-12));
    CHECK(got.compound == doctest::Approx(want.compound).epsilon(1e-12));
    CHECK(got.compound > 0.0);
  }
}
