#include <json.hpp>

#include "helpers.hpp"
#include "lsplit/analysis.hpp"
#include "lsplit/digest.hpp"
#include "lsplit/splitting.hpp"
#include "synth.hpp"

using namespace lsplit;
using namespace lsplit::testing;

TEST_SUITE("report") {
  TEST_CASE("csv escaping round-trips") {
    CHECK(csv_escape("plain") == "plain");
    CHECK(csv_escape("a,b") == "\"a,b\"");
    CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
    const std::vector<std::string> fields = {"x", "a,b", "q\"q", "line\nbreak", ""};
    std::string row;
    for (std::size_t i = 0; i < fields.size(); ++i) row += (i ? "," : "") + csv_escape(fields[i]);
    const auto parsed = parse_csv(row + "\n1,2,3,4,5\n");
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0] == fields);
    CHECK(parsed[1].size() == 5);
  }

  TEST_CASE("numbers format stably") {
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(3.0) == "3");
    CHECK(std::stod(format_number(0.1 + 0.2)) == 0.1 + 0.2);
  }

  TEST_CASE("reports survive a write and read") {
    AnalysisReport r;
    r.document = {{"a", 1}, {"b", {{"c", "text, with comma"}}}};
    r.tables.push_back({"first", {"k", "v"}, {{"x", "1"}, {"y,z", "2"}}});
    r.tables.push_back({"second", {"only"}, {}});
    const auto dir = synth::fresh_dir("report-roundtrip");
    emit_report(r, dir);
    CHECK(std::filesystem::exists(dir / "report.json"));
    CHECK(std::filesystem::exists(dir / "first.csv"));
    CHECK(load_report(dir) == r);
  }

  TEST_CASE("histograms bin half-open intervals") {
    Histogram h;
    h.width = 0.5;
    for (double v : {0.0, 0.49, 0.5, 1.2, 1.2}) h.add(v);
    CHECK(h.bins.at(0) == 2);
    CHECK(h.bins.at(1) == 1);
    CHECK(h.bins.at(2) == 2);
  }

  TEST_CASE("audits are tagged with the split they describe") {
    const Dataset ds = synth::sql_dataset(90, 17);
    const StructureMap m = analyze_dataset(ds);
    SplitConfig c;
    c.p = 0.2;
    c.seed = 3;
    const SplitResult split = random_split(ds, c, &m);
    AuditInputs in;
    in.dataset = &ds;
    in.sides = {split.train, split.dev, split.test};
    in.manifest_text = manifest_json(split);
    in.structures = &m;
    const FrequencyTable freq = {{"table", 100.0}};
    const Wordlist words = {"table", "singer", "concert", "stadium"};
    in.frequencies = &freq;
    in.wordlist = &words;
    in.null_trials = 20;
    const AnalysisReport report = audit_split(in);
    const auto& doc = report.document;
    const std::string digest = digest_hex(in.manifest_text);
    CHECK(doc["manifest_digest"] == digest);
    CHECK(doc["sides"]["dev"]["count"] == split.dev.size());
    CHECK(doc["sides"]["train"]["ids_digest"] == id_set_digest(split.train));
    for (const char* key : {"length", "readability", "rare_words", "divergence", "hardness", "novel_compounds"}) {
      REQUIRE_MESSAGE(doc.contains(key), key);
    }
    CHECK(doc["length"]["computed_over"]["manifest_digest"] == digest);
    CHECK(doc["divergence"]["train_vs_dev"]["computed_over"]["ids_digest"]["dev"] == id_set_digest(split.dev));
    CHECK(doc["divergence"]["train_vs_test"]["compound"].get<double>() ==
          split_divergences(m, split.train, split.test).compound);
    CHECK(doc["rare_words"]["null"]["trials"] == 20);

    // histogram rows add up to the side sizes
    for (const auto& t : report.tables) {
      if (t.name != "length_histogram") continue;
      std::size_t rows_total = 0;
      for (const auto& row : t.rows) rows_total += std::stoul(row.at(3));
      CHECK(rows_total == ds.size());
    }
    CHECK(audit_split(in) == report);
    CHECK(id_set_digest({"a", "b"}) != id_set_digest({"a", "c"}));
  }
}
