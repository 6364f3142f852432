#include "oki/pairgen.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <set>

#include "json.hpp"

namespace oki {

using nlohmann::json;

namespace {

json mention_to_json(const SynonymMention& m) {
  return {{"surface", m.surface}, {"start", m.start}, {"end", m.end}};
}

SynonymMention mention_from_json(const json& doc) {
  SynonymMention m;
  m.surface = doc.at("surface").get<std::string>();
  m.start = doc.at("start").get<std::size_t>();
  m.end = doc.at("end").get<std::size_t>();
  return m;
}

}  // namespace

std::string pair_to_json_line(const PositivePair& p) {
  json doc;
  doc["concept_id"] = p.concept_id;
  doc["anchor"] = {{"text", p.anchor.text},
                   {"provenance", provenance_name(p.anchor.provenance)}};
  if (p.anchor.mention) doc["anchor"]["mention"] = mention_to_json(*p.anchor.mention);
  doc["positive"] = {{"text", p.positive.text},
                     {"provenance", provenance_name(p.positive.provenance)}};
  if (p.positive.mention) doc["positive"]["mention"] = mention_to_json(*p.positive.mention);
  doc["substituted_synonym"] = p.substituted_synonym;
  return doc.dump();
}

PositivePair pair_from_json_line(const std::string& line, std::size_t line_number) {
  try {
    json doc = json::parse(line);
    PositivePair p;
    p.concept_id = doc.at("concept_id").get<std::string>();
    p.anchor.concept_id = p.concept_id;
    p.anchor.text = doc.at("anchor").at("text").get<std::string>();
    p.anchor.provenance = provenance_from_name(doc.at("anchor").at("provenance").get<std::string>());
    if (doc.at("anchor").contains("mention")) p.anchor.mention = mention_from_json(doc.at("anchor").at("mention"));
    p.positive.concept_id = p.concept_id;
    p.positive.text = doc.at("positive").at("text").get<std::string>();
    p.positive.provenance = provenance_from_name(doc.at("positive").at("provenance").get<std::string>());
    if (doc.at("positive").contains("mention")) p.positive.mention = mention_from_json(doc.at("positive").at("mention"));
    p.substituted_synonym = doc.at("substituted_synonym").get<std::string>();
    return p;
  } catch (const json::exception& e) {
    throw ParseError("pair line " + std::to_string(line_number) + ": " + e.what());
  }
}

std::string dump_pairs(const std::vector<PositivePair>& pairs) {
  std::string out;
  for (const PositivePair& p : pairs) {
    out += pair_to_json_line(p);
    out += '\n';
  }
  return out;
}

std::vector<PositivePair> load_pairs(std::istream& in) {
  std::vector<PositivePair> out;
  for_each_line(in, [&](const std::string& line, std::size_t number) {
    out.push_back(pair_from_json_line(line, number));
  });
  return out;
}

// -- mention finding -------------------------------------------------------------

namespace {

struct Match {
  std::size_t synonym_index;
  std::size_t start;
  std::size_t length;
};

bool word_boundary(const std::string& text, std::size_t start, std::size_t end) {
  if (start > 0 && is_ascii_alnum(text[start - 1])) return false;
  if (end < text.size() && is_ascii_alnum(text[end])) return false;
  return true;
}

}  // namespace

std::optional<SynonymMention> find_single_mention(const std::string& text,
                                                  const std::vector<std::string>& synonyms) {
  std::string lower_text = lower_ascii(text);
  std::vector<Match> matches;
  for (std::size_t s = 0; s < synonyms.size(); ++s) {
    if (synonyms[s].empty()) continue;
    std::string needle = lower_ascii(synonyms[s]);
    std::size_t from = 0;
    while (true) {
      std::size_t pos = lower_text.find(needle, from);
      if (pos == std::string::npos) break;
      if (word_boundary(text, pos, pos + needle.size())) {
        matches.push_back({s, pos, needle.size()});
      }
      from = pos + 1;
    }
  }

  // longest match wins on overlap; remaining ties resolved by position then
  // synonym order
  std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
    if (a.length != b.length) return a.length > b.length;
    if (a.start != b.start) return a.start < b.start;
    return a.synonym_index < b.synonym_index;
  });
  std::vector<Match> accepted;
  for (const Match& m : matches) {
    bool overlaps = false;
    for (const Match& kept : accepted) {
      if (m.start < kept.start + kept.length && kept.start < m.start + m.length) {
        overlaps = true;
        break;
      }
    }
    if (!overlaps) accepted.push_back(m);
  }

  if (accepted.size() != 1) return std::nullopt;
  const Match& m = accepted[0];
  SynonymMention mention;
  mention.surface = text.substr(m.start, m.length);
  mention.start = m.start;
  mention.end = m.start + m.length;
  return mention;
}

DefinitionRecord substitute(const DefinitionRecord& definition, const SynonymMention& mention,
                            const std::string& replacement) {
  if (mention.start >= mention.end || mention.end > definition.text.size()) {
    throw DomainError("mention span out of range");
  }
  std::string_view span(definition.text.data() + mention.start, mention.end - mention.start);
  if (!mention.surface.empty() && !iequals_ascii(span, mention.surface)) {
    throw DomainError("mention surface does not match the definition text");
  }
  if (iequals_ascii(span, replacement)) {
    throw DomainError("substitution would replace the synonym with itself: " + replacement);
  }
  DefinitionRecord out;
  out.concept_id = definition.concept_id;
  out.text = definition.text.substr(0, mention.start) + replacement +
             definition.text.substr(mention.end);
  out.provenance = Provenance::substituted;
  out.source_synonym = definition.source_synonym;
  out.mention = SynonymMention{replacement, mention.start, mention.start + replacement.size()};
  return out;
}

std::string synthesize_extra_synonym(const Concept& node, const Ontology& ontology) {
  if (node.synonyms.size() != 1) {
    throw DomainError("synthetic synonyms are only for single-synonym concepts");
  }
  if (node.parent_ids.empty()) {
    throw DomainError("single-synonym root concept " + node.id +
                      " has no parent synonym to borrow");
  }
  const std::string& parent_id =
      *std::min_element(node.parent_ids.begin(), node.parent_ids.end());
  const Concept& parent = ontology.at(parent_id);
  const std::string& parent_synonym =
      *std::min_element(parent.synonyms.begin(), parent.synonyms.end());
  return node.synonyms[0] + " " + parent_synonym;
}

// -- pair generation ---------------------------------------------------------------

PairGenReport generate_pairs(const Ontology& ontology,
                             const std::vector<DefinitionRecord>& definitions,
                             const PairGenOptions& options) {
  std::map<std::string, std::vector<const DefinitionRecord*>> by_concept;
  for (const DefinitionRecord& d : definitions) {
    if (d.provenance == Provenance::substituted) continue;
    by_concept[d.concept_id].push_back(&d);
  }

  PairGenReport report;
  std::set<std::string> seen;  // dedup key

  auto emit = [&](PositivePair&& pair) {
    std::string key = pair.concept_id + '\x1f' + pair.anchor.text + '\x1f' +
                      pair.substituted_synonym + '\x1f' + pair.positive.text;
    if (!seen.insert(std::move(key)).second) return;
    if (pair.anchor.provenance == Provenance::substituted) {
      ++report.variant_variant_pairs;
    } else {
      ++report.anchor_variant_pairs;
    }
    report.pairs.push_back(std::move(pair));
  };

  for (const Concept& node : ontology.concepts()) {
    std::vector<std::string> synonyms = node.synonyms;
    if (synonyms.size() == 1) {
      try {
        synonyms.push_back(synthesize_extra_synonym(node, ontology));
      } catch (const DomainError&) {
        report.warnings.push_back("concept " + node.id +
                                  ": single synonym and no parent; no pairs generated");
        continue;
      }
    }

    auto defs_it = by_concept.find(node.id);
    if (defs_it == by_concept.end()) continue;

    // anchor pairs for every definition first so they win the dedup key over
    // any later variant-variant duplicate
    struct VariantSet {
      std::vector<DefinitionRecord> variants;
      std::vector<std::string> synonyms;
    };
    std::vector<VariantSet> variant_sets;
    for (const DefinitionRecord* def : defs_it->second) {
      auto mention = find_single_mention(def->text, synonyms);
      if (!mention) continue;

      // which synonym list entry the surface corresponds to
      const std::string* mentioned = nullptr;
      for (const std::string& s : synonyms) {
        if (iequals_ascii(s, mention->surface)) {
          mentioned = &s;
          break;
        }
      }
      if (!mentioned) continue;

      DefinitionRecord anchor = *def;
      anchor.mention = mention;

      VariantSet set;
      for (const std::string& alt : synonyms) {
        if (iequals_ascii(alt, *mentioned)) continue;
        PositivePair pair;
        pair.concept_id = node.id;
        pair.anchor = anchor;
        pair.positive = substitute(anchor, *mention, alt);
        pair.substituted_synonym = alt;
        if (options.variant_variant_pairs) {
          set.variants.push_back(pair.positive);
          set.synonyms.push_back(alt);
        }
        emit(std::move(pair));
      }
      if (options.variant_variant_pairs && set.variants.size() >= 2) {
        variant_sets.push_back(std::move(set));
      }
    }

    for (const VariantSet& set : variant_sets) {
      for (std::size_t a = 0; a < set.variants.size(); ++a) {
        for (std::size_t b = a + 1; b < set.variants.size(); ++b) {
          PositivePair pair;
          pair.concept_id = node.id;
          pair.anchor = set.variants[a];
          pair.positive =
              substitute(set.variants[a], *set.variants[a].mention, set.synonyms[b]);
          pair.substituted_synonym = set.synonyms[b];
          emit(std::move(pair));
        }
      }
    }
  }

  std::sort(report.pairs.begin(), report.pairs.end(),
            [](const PositivePair& a, const PositivePair& b) {
              if (a.concept_id != b.concept_id) return a.concept_id < b.concept_id;
              if (a.anchor.text != b.anchor.text) return a.anchor.text < b.anchor.text;
              if (a.substituted_synonym != b.substituted_synonym) {
                return a.substituted_synonym < b.substituted_synonym;
              }
              return a.positive.text < b.positive.text;
            });
  return report;
}

}  // namespace oki
