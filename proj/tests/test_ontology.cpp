#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "oki/ontology.hpp"
#include "support/test_support.hpp"

using namespace oki;

namespace {

Ontology parse_internal(const std::string& text) {
  std::istringstream in(text);
  return parse_ontology(in, OntologyFormat::internal_jsonl);
}

const char* kChain =
    R"({"id":"A","name":"alpha condition","synonyms":[],"definitions":[],"parents":[]})"
    "\n"
    R"({"id":"B","name":"beta condition","synonyms":[],"definitions":[],"parents":["A"]})"
    "\n"
    R"({"id":"C","name":"gamma condition","synonyms":[],"definitions":[],"parents":["B"]})"
    "\n";

}  // namespace

TEST_CASE("empty input yields an empty ontology") {
  Ontology o = parse_internal("");
  CHECK(o.stats().concept_count == 0);
  CHECK(o.stats().isa_edge_count == 0);
}

TEST_CASE("three-node chain has expected stats and ancestry") {
  Ontology o = parse_internal(kChain);
  CHECK(o.stats().concept_count == 3);
  CHECK(o.stats().isa_edge_count == 2);
  const TaxonomyIndex& t = o.taxonomy();
  CHECK(t.is_ancestor("A", "C"));
  CHECK(t.is_ancestor("A", "B"));
  CHECK_FALSE(t.is_ancestor("C", "A"));
  CHECK_FALSE(t.is_ancestor("A", "A"));
  CHECK_THROWS_AS(t.is_ancestor("A", "nope"), LookupError);
}

TEST_CASE("obsolete concepts and their edges are dropped") {
  Ontology o = parse_internal(
      R"({"id":"A","name":"alpha condition"})"
      "\n"
      R"({"id":"B","name":"beta condition","parents":["A"],"obsolete":true})"
      "\n"
      R"({"id":"C","name":"gamma condition","parents":["B","A"]})"
      "\n");
  CHECK(o.stats().concept_count == 2);
  CHECK(o.stats().isa_edge_count == 1);  // only C -> A survives
  CHECK(o.find("B") == nullptr);
  CHECK(o.at("C").parent_ids == std::vector<std::string>{"A"});
}

TEST_CASE("structural errors") {
  CHECK_THROWS_AS(parse_internal(R"({"id":"A","name":"x","parents":["missing"]})" "\n"),
                  StructureError);
  CHECK_THROWS_AS(parse_internal(R"({"id":"A","name":"x"})" "\n" R"({"id":"A","name":"y"})" "\n"),
                  StructureError);
  // two-node cycle
  CHECK_THROWS_WITH_AS(parse_internal(R"({"id":"A","name":"x","parents":["B"]})"
                                      "\n"
                                      R"({"id":"B","name":"y","parents":["A"]})"
                                      "\n"),
                       doctest::Contains("cycle"), StructureError);
}

TEST_CASE("malformed line reports its number") {
  CHECK_THROWS_WITH_AS(parse_internal("{\"id\":\"A\",\"name\":\"x\"}\nnot json\n"),
                       doctest::Contains("line 2"), ParseError);
}

TEST_CASE("obo-graphs subset parsing") {
  std::string doc = R"({"graphs":[{
    "nodes":[
      {"id":"X:1","lbl":"alpha disease","meta":{
        "definition":{"val":"A made-up first disorder."},
        "synonyms":[{"pred":"hasExactSynonym","val":"alpha disorder"},
                     {"pred":"hasRelatedSynonym","val":"alphaish"}]}},
      {"id":"X:2","lbl":"beta disease"},
      {"id":"X:3","lbl":"legacy disease","meta":{"deprecated":true}},
      {"id":"X:p","lbl":"has modifier","type":"PROPERTY"}
    ],
    "edges":[
      {"sub":"X:2","pred":"is_a","obj":"X:1"},
      {"sub":"X:3","pred":"is_a","obj":"X:1"},
      {"sub":"X:2","pred":"part_of","obj":"X:1"}
    ]}]})";
  std::istringstream in(doc);
  Ontology o = parse_ontology(in, OntologyFormat::obo_graphs_json);
  CHECK(o.stats().concept_count == 2);
  CHECK(o.stats().isa_edge_count == 1);
  const Concept& alpha = o.at("X:1");
  CHECK(alpha.synonyms == std::vector<std::string>{"alpha disease", "alpha disorder"});
  CHECK(alpha.real_definitions.size() == 1);
  CHECK(o.stats().with_definition_fraction == doctest::Approx(0.5));
  CHECK(o.find("X:p") == nullptr);

  std::istringstream bad("{\"nope\": 1}");
  CHECK_THROWS_AS(parse_ontology(bad, OntologyFormat::obo_graphs_json), ParseError);
}

TEST_CASE("dump/parse round trip") {
  Ontology o = test::toy_ontology(3, {.concepts = 12});
  std::string dumped = dump_ontology(o);
  Ontology back = parse_internal(dumped);
  CHECK(dump_ontology(back) == dumped);
  CHECK(back.stats().concept_count == o.stats().concept_count);
  CHECK(back.stats().isa_edge_count == o.stats().isa_edge_count);
}

TEST_CASE("levenshtein basics") {
  CHECK(levenshtein("abc", "abc") == 0);
  CHECK(levenshtein("", "abc") == 3);
  CHECK(levenshtein("kitten", "sitting") == 3);
}

TEST_CASE("levenshtein agrees with the full-matrix oracle") {
  SplitMix64 rng(99);
  auto random_string = [&](std::size_t max_len) {
    std::string s;
    std::size_t len = rng.bounded(max_len + 1);
    for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng.bounded(5)));
    return s;
  };
  for (int i = 0; i < 300; ++i) {
    std::string a = random_string(12);
    std::string b = random_string(12);
    CHECK(levenshtein(a, b) == test::oracle_levenshtein(a, b));
  }
}

TEST_CASE("levenshtein is a metric on short strings") {
  SplitMix64 rng(123);
  auto random_string = [&](std::size_t max_len) {
    std::string s;
    std::size_t len = rng.bounded(max_len + 1);
    for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng.bounded(4)));
    return s;
  };
  for (int i = 0; i < 200; ++i) {
    std::string a = random_string(12), b = random_string(12), c = random_string(12);
    std::size_t ab = levenshtein(a, b);
    CHECK(ab == levenshtein(b, a));
    CHECK((ab == 0) == (a == b));
    CHECK(levenshtein(a, c) <= ab + levenshtein(b, c));
  }
}

TEST_CASE("word_order_equal compares token multisets") {
  CHECK(word_order_equal("acute viral fever", "viral acute fever"));
  CHECK(word_order_equal("Acute, viral fever!", "viral ACUTE fever"));
  CHECK_FALSE(word_order_equal("acute viral fever", "acute viral fevers"));
  CHECK_FALSE(word_order_equal("acute fever", "acute viral fever"));
  CHECK_FALSE(word_order_equal("", ""));
}

TEST_CASE("strip_parentheses removes spans and tidies spacing") {
  CHECK(strip_parentheses("Fabry disease (classic)") == "Fabry disease");
  CHECK(strip_parentheses("a (b (c) d) e") == "a e");
  CHECK(strip_parentheses("(all gone)") == "");
  CHECK(strip_parentheses("tail ) paren") == "tail ) paren");
}

TEST_CASE("normalize_synonyms applies the filtering rules") {
  Concept c;
  c.id = "T:1";

  SUBCASE("parenthesis strip plus case-insensitive dedup") {
    c.primary_name = "Fabry disease (classic)";
    c.synonyms = {"Fabry disease (classic)", "fabry disease"};
    Concept out = normalize_synonyms(c, 7);
    CHECK(out.synonyms == std::vector<std::string>{"Fabry disease"});
    CHECK(out.primary_name == "Fabry disease");
  }

  SUBCASE("single synonym unchanged") {
    c.primary_name = "disease X";
    c.synonyms = {"disease X"};
    Concept out = normalize_synonyms(c, 7);
    CHECK(out.synonyms == std::vector<std::string>{"disease X"});
  }

  SUBCASE("word-order duplicates keep exactly one survivor") {
    c.primary_name = "acute viral fever syndrome complication";
    c.synonyms = {"acute viral fever syndrome complication",
                  "viral acute fever syndrome complication"};
    Concept out = normalize_synonyms(c, 7);
    CHECK(out.synonyms.size() == 1);
    CHECK(word_order_equal(out.synonyms[0], c.synonyms[0]));
  }

  SUBCASE("near-duplicate grouping is transitive") {
    // lev(a,b) = 5, lev(b,c) = 5, lev(a,c) = 10: a and c group only through b
    std::string a(20, 'a');
    std::string b = std::string(15, 'a') + std::string(5, 'b');
    std::string mid = std::string(10, 'a') + std::string(10, 'b');
    REQUIRE(levenshtein(a, mid) == 10);
    c.primary_name = a;
    c.synonyms = {a, b, mid};
    Concept out = normalize_synonyms(c, 7);
    CHECK(out.synonyms.size() == 1);
  }

  SUBCASE("distant synonyms all survive") {
    c.primary_name = "kaveloosis hereditary encephalopathy";
    c.synonyms = {"kaveloosis hereditary encephalopathy", "kaveloosis metabolic sarcoidosis"};
    Concept out = normalize_synonyms(c, 7);
    CHECK(out.synonyms.size() == 2);
  }

  SUBCASE("empty after stripping is an error") {
    c.primary_name = "(nothing)";
    c.synonyms = {"(nothing)", "( )"};
    CHECK_THROWS_AS(normalize_synonyms(c, 7), DomainError);
  }

  SUBCASE("same seed reproduces the same survivors; idempotent") {
    c.primary_name = "rilotaxis chronic vasculitis";
    c.synonyms = {"rilotaxis chronic vasculitis", "rilotaxis chronic vasculitides",
                  "rilotaxis systemic histiocytosis"};
    Concept once = normalize_synonyms(c, 11);
    Concept again = normalize_synonyms(c, 11);
    CHECK(once.synonyms == again.synonyms);
    Concept twice = normalize_synonyms(once, 11);
    CHECK(twice.synonyms == once.synonyms);
  }
}

TEST_CASE("filtering never removes the last synonym") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Concept c;
    c.id = "T:" + std::to_string(seed);
    c.primary_name = "alpha beta gamma";
    c.synonyms = {"alpha beta gamma", "beta alpha gamma", "gamma beta alpha"};
    Concept out = normalize_synonyms(c, seed);
    CHECK(out.synonyms.size() == 1);
    CHECK(out.primary_name == out.synonyms[0]);
  }
}

TEST_CASE("is_ancestor matches DFS reachability on random DAGs") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    Ontology o = test::toy_ontology(seed, {.concepts = 30 + 3 * seed});
    auto edges = test::ontology_edges(o);
    const TaxonomyIndex& t = o.taxonomy();
    for (const Concept& a : o.concepts()) {
      for (const Concept& b : o.concepts()) {
        CHECK(t.is_ancestor(a.id, b.id) == test::oracle_reachable(edges, a.id, b.id));
      }
    }
  }
}

TEST_CASE("filter_ontology rewrites every concept and its stats") {
  Ontology o = parse_internal(
      R"x({"id":"A","name":"alpha condition (group)","synonyms":["Alpha Condition"]})x"
      "\n"
      R"x({"id":"B","name":"beta condition","synonyms":["beta condition (variant)"],"parents":["A"]})x"
      "\n");
  CHECK(o.stats().synonym_count == 4);
  Ontology filtered = filter_ontology(o, 5);
  CHECK(filtered.stats().concept_count == 2);
  CHECK(filtered.stats().isa_edge_count == 1);
  // "alpha condition" collapses with its cased duplicate; the beta variant
  // strips down to a duplicate of the primary name
  CHECK(filtered.at("A").synonyms.size() == 1);
  CHECK(filtered.at("B").synonyms == std::vector<std::string>{"beta condition"});
  CHECK(filtered.stats().synonym_count == 2);

  // same seed -> same ontology dump
  CHECK(dump_ontology(filter_ontology(o, 5)) == dump_ontology(filtered));
}

TEST_CASE("stats format output") {
  Ontology o = parse_internal(kChain);
  std::string text = format_stats_text(o.stats());
  CHECK(text.find("3") != std::string::npos);
  std::string json_text = format_stats_json(o.stats());
  CHECK(json_text.find("\"concepts\":3") != std::string::npos);
  CHECK(json_text.find("\"isa_edges\":2") != std::string::npos);
}

// Large-scale figures need the real export; checked only when present.
TEST_CASE("mondo april-2024 statistics") {
  std::filesystem::path path = std::filesystem::path(OKI_DATA_DIR) / "mondo.json";
  if (!file_exists(path)) {
    MESSAGE("mondo.json not present; skipping large-scale figures");
    return;
  }
  std::ifstream in(path);
  Ontology o = parse_ontology(in, OntologyFormat::obo_graphs_json);
  CHECK(o.stats().concept_count == 24201);
  CHECK(o.stats().isa_edge_count == 36459);
}
