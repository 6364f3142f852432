#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "oki/definitions.hpp"
#include "oki/ontology.hpp"

namespace oki {

// Anchor/positive pair for one concept. The positive is always derived from
// the anchor by replacing the mentioned synonym span; outside that span the
// two texts are byte-identical.
struct PositivePair {
  std::string concept_id;
  DefinitionRecord anchor;    // provenance real or synthetic (substituted in variant-variant mode)
  DefinitionRecord positive;  // provenance substituted
  std::string substituted_synonym;
};

std::string pair_to_json_line(const PositivePair& p);
PositivePair pair_from_json_line(const std::string& line, std::size_t line_number);
std::string dump_pairs(const std::vector<PositivePair>& pairs);
std::vector<PositivePair> load_pairs(std::istream& in);

// Case-insensitive whole-word scan. When matches of different synonyms
// overlap, only the longest survives. Returns the mention iff exactly one
// occurrence of exactly one synonym remains.
std::optional<SynonymMention> find_single_mention(const std::string& text,
                                                  const std::vector<std::string>& synonyms);

inline std::optional<SynonymMention> find_single_mention(
    const DefinitionRecord& definition, const std::vector<std::string>& synonyms) {
  return find_single_mention(definition.text, synonyms);
}

// Replaces the mention span with `replacement` (verbatim casing) and updates
// the mention to the new span. DomainError when the replacement equals the
// mentioned text case-insensitively.
DefinitionRecord substitute(const DefinitionRecord& definition, const SynonymMention& mention,
                            const std::string& replacement);

// "<own synonym> <parent synonym>" for single-synonym concepts, using the
// lexicographically smallest synonym of the lexicographically smallest parent.
// DomainError for single-synonym roots (no parent to borrow from).
std::string synthesize_extra_synonym(const Concept& node, const Ontology& ontology);

struct PairGenOptions {
  // also pair substituted variants with each other when a concept has >= 3
  // synonyms; excluded from the reported pair total
  bool variant_variant_pairs = false;
};

struct PairGenReport {
  std::vector<PositivePair> pairs;
  std::size_t anchor_variant_pairs = 0;
  std::size_t variant_variant_pairs = 0;
  std::vector<std::string> warnings;
};

// All substitution pairs over the eligible definitions of every concept,
// sorted by (concept id, anchor text, substituted synonym), duplicates
// removed. Definitions written independently of each other are never paired.
PairGenReport generate_pairs(const Ontology& ontology,
                             const std::vector<DefinitionRecord>& definitions,
                             const PairGenOptions& options = {});

}  // namespace oki
