#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "oki/util.hpp"

namespace oki {

// One ontology node. synonyms[0] is always the primary name.
struct Concept {
  std::string id;
  std::string primary_name;
  std::vector<std::string> synonyms;
  std::vector<std::string> real_definitions;
  std::vector<std::string> parent_ids;
  bool obsolete = false;
};

struct OntologyStats {
  std::size_t concept_count = 0;
  std::size_t synonym_count = 0;
  std::size_t isa_edge_count = 0;
  double with_definition_fraction = 0.0;
};

// is-a DAG over child->parent edges with reachability queries. Immutable after
// construction; concurrent readers are fine. For ontologies up to 2^16 nodes a
// transitive-closure bitset is precomputed so ancestor checks are O(1); bigger
// graphs fall back to on-demand DFS.
class TaxonomyIndex {
 public:
  TaxonomyIndex() = default;

  // ids must be unique; parents holds indices into ids. Throws StructureError
  // naming one offending edge if the graph has a cycle.
  static TaxonomyIndex build(std::vector<std::string> ids,
                             std::vector<std::vector<int>> parents);

  std::size_t node_count() const { return ids_.size(); }
  std::size_t edge_count() const { return edge_count_; }

  int index_of(const std::string& id) const;  // LookupError on unknown id

  // true iff `ancestor` is reachable from `descendant` via child->parent
  // edges; irreflexive.
  bool is_ancestor(const std::string& ancestor, const std::string& descendant) const;
  bool is_ancestor_index(int ancestor, int descendant) const;

  // same concept, an ancestor, or a descendant
  bool related_index(int a, int b) const {
    return a == b || is_ancestor_index(a, b) || is_ancestor_index(b, a);
  }

  const std::vector<int>& parents_of(int index) const { return parents_[index]; }
  const std::string& id_at(int index) const { return ids_[index]; }

 private:
  bool dfs_reaches(int target, int from) const;

  std::vector<std::string> ids_;
  std::unordered_map<std::string, int> index_;
  std::vector<std::vector<int>> parents_;
  std::size_t edge_count_ = 0;

  // closure_[i] = bitset of ancestors of node i (row-major, words_per_row_ words)
  bool has_closure_ = false;
  std::size_t words_per_row_ = 0;
  std::vector<std::uint64_t> closure_;
};

class Ontology {
 public:
  Ontology() = default;

  // Validates ids, drops obsolete concepts (and edges touching them), builds
  // the taxonomy and stats. parent_ids referring to ids never seen at all
  // raise StructureError.
  static Ontology build(std::vector<Concept> concepts);

  const std::vector<Concept>& concepts() const { return concepts_; }  // sorted by id
  const Concept* find(const std::string& id) const;
  const Concept& at(const std::string& id) const;  // LookupError
  const TaxonomyIndex& taxonomy() const { return taxonomy_; }
  const OntologyStats& stats() const { return stats_; }

 private:
  std::vector<Concept> concepts_;
  std::unordered_map<std::string, std::size_t> by_id_;
  TaxonomyIndex taxonomy_;
  OntologyStats stats_;
};

enum class OntologyFormat { obo_graphs_json, internal_jsonl };

OntologyFormat ontology_format_from_name(const std::string& name);
std::string ontology_format_name(OntologyFormat format);

Ontology parse_ontology(std::istream& in, OntologyFormat format);

// Internal format: one JSON object per concept per line with keys
// id, name, synonyms, definitions, parents, obsolete.
std::string dump_ontology(const Ontology& ontology);

std::string format_stats_text(const OntologyStats& stats);
std::string format_stats_json(const OntologyStats& stats);

// unit-cost edit distance
std::size_t levenshtein(std::string_view a, std::string_view b);

// case-insensitive, punctuation-insensitive token multiset comparison
bool word_order_equal(std::string_view a, std::string_view b);

// "(...)" spans removed (nested counted), whitespace collapsed
std::string strip_parentheses(std::string_view s);

// Synonym cleanup: strip parenthesised text, collapse whitespace,
// case-insensitive dedup keeping first, then collapse near-duplicate groups
// (edit distance < 10 or equal word multisets) to a single seeded-random
// survivor. Deterministic for a fixed seed. Throws DomainError when nothing
// survives stripping.
Concept normalize_synonyms(const Concept& raw, std::uint64_t rng_seed);

// normalize_synonyms over every concept; stats and taxonomy rebuilt
Ontology filter_ontology(const Ontology& ontology, std::uint64_t rng_seed);

}  // namespace oki
