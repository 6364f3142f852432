#include "oki/ontology.hpp"

#include <algorithm>
#include <deque>
#include <istream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace oki {

using nlohmann::json;

// -- TaxonomyIndex ------------------------------------------------------------

namespace {

// union-find over small index ranges
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) {
    for (std::size_t i = 0; i < n; ++i) parent_[i] = i;
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

constexpr std::size_t kClosureNodeLimit = 1u << 16;

}  // namespace

TaxonomyIndex TaxonomyIndex::build(std::vector<std::string> ids,
                                   std::vector<std::vector<int>> parents) {
  TaxonomyIndex t;
  t.ids_ = std::move(ids);
  t.parents_ = std::move(parents);
  const std::size_t n = t.ids_.size();
  t.index_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) t.index_.emplace(t.ids_[i], static_cast<int>(i));

  std::vector<std::vector<int>> children(n);
  std::vector<int> remaining(n, 0);
  for (std::size_t c = 0; c < n; ++c) {
    remaining[c] = static_cast<int>(t.parents_[c].size());
    t.edge_count_ += t.parents_[c].size();
    for (int p : t.parents_[c]) children[static_cast<std::size_t>(p)].push_back(static_cast<int>(c));
  }

  // parents-first topological order; detects cycles
  std::vector<int> topo;
  topo.reserve(n);
  std::deque<int> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (remaining[i] == 0) ready.push_back(static_cast<int>(i));
  }
  while (!ready.empty()) {
    int node = ready.front();
    ready.pop_front();
    topo.push_back(node);
    for (int child : children[static_cast<std::size_t>(node)]) {
      if (--remaining[static_cast<std::size_t>(child)] == 0) ready.push_back(child);
    }
  }
  if (topo.size() != n) {
    // every unprocessed node still has an unprocessed parent; walk until repeat
    int start = -1;
    for (std::size_t i = 0; i < n; ++i) {
      if (remaining[i] > 0) {
        start = static_cast<int>(i);
        break;
      }
    }
    std::vector<char> seen(n, 0);
    int cur = start;
    int next = -1;
    while (true) {
      seen[static_cast<std::size_t>(cur)] = 1;
      next = -1;
      for (int p : t.parents_[static_cast<std::size_t>(cur)]) {
        if (remaining[static_cast<std::size_t>(p)] > 0) {
          next = p;
          break;
        }
      }
      if (next < 0 || seen[static_cast<std::size_t>(next)]) break;
      cur = next;
    }
    throw StructureError("is-a cycle detected at edge " + t.ids_[static_cast<std::size_t>(cur)] +
                         " -> " + (next >= 0 ? t.ids_[static_cast<std::size_t>(next)] : t.ids_[static_cast<std::size_t>(cur)]));
  }

  if (n > 0 && n <= kClosureNodeLimit) {
    t.has_closure_ = true;
    t.words_per_row_ = (n + 63) / 64;
    t.closure_.assign(n * t.words_per_row_, 0);
    for (int node : topo) {
      std::uint64_t* row = &t.closure_[static_cast<std::size_t>(node) * t.words_per_row_];
      for (int p : t.parents_[static_cast<std::size_t>(node)]) {
        const std::uint64_t* prow = &t.closure_[static_cast<std::size_t>(p) * t.words_per_row_];
        for (std::size_t w = 0; w < t.words_per_row_; ++w) row[w] |= prow[w];
        row[static_cast<std::size_t>(p) / 64] |= 1ULL << (static_cast<std::size_t>(p) % 64);
      }
    }
  }
  return t;
}

int TaxonomyIndex::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw LookupError("unknown concept id: " + id);
  return it->second;
}

bool TaxonomyIndex::dfs_reaches(int target, int from) const {
  std::vector<int> stack(parents_[static_cast<std::size_t>(from)]);
  std::set<int> seen;
  while (!stack.empty()) {
    int cur = stack.back();
    stack.pop_back();
    if (cur == target) return true;
    if (!seen.insert(cur).second) continue;
    for (int p : parents_[static_cast<std::size_t>(cur)]) stack.push_back(p);
  }
  return false;
}

bool TaxonomyIndex::is_ancestor_index(int ancestor, int descendant) const {
  if (ancestor == descendant) return false;
  if (has_closure_) {
    const std::uint64_t* row = &closure_[static_cast<std::size_t>(descendant) * words_per_row_];
    return (row[static_cast<std::size_t>(ancestor) / 64] >>
            (static_cast<std::size_t>(ancestor) % 64)) & 1ULL;
  }
  return dfs_reaches(ancestor, descendant);
}

bool TaxonomyIndex::is_ancestor(const std::string& ancestor, const std::string& descendant) const {
  return is_ancestor_index(index_of(ancestor), index_of(descendant));
}

// -- Ontology -----------------------------------------------------------------

Ontology Ontology::build(std::vector<Concept> concepts) {
  std::set<std::string> all_ids;
  std::set<std::string> obsolete_ids;
  for (const Concept& c : concepts) {
    if (c.id.empty()) throw StructureError("concept with empty id");
    if (!all_ids.insert(c.id).second) throw StructureError("duplicate concept id: " + c.id);
    if (c.obsolete) obsolete_ids.insert(c.id);
  }
  for (const Concept& c : concepts) {
    for (const std::string& p : c.parent_ids) {
      if (!all_ids.count(p)) {
        throw StructureError("dangling parent id " + p + " referenced by " + c.id);
      }
    }
  }

  Ontology o;
  o.concepts_.reserve(concepts.size());
  for (Concept& c : concepts) {
    if (c.obsolete) continue;
    if (c.synonyms.empty() || c.synonyms[0] != c.primary_name) {
      throw StructureError("concept " + c.id + " has no primary name synonym");
    }
    // keep only edges between surviving concepts, deterministically ordered
    std::vector<std::string> parents;
    for (std::string& p : c.parent_ids) {
      if (!obsolete_ids.count(p)) parents.push_back(std::move(p));
    }
    std::sort(parents.begin(), parents.end());
    parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
    c.parent_ids = std::move(parents);
    o.concepts_.push_back(std::move(c));
  }
  std::sort(o.concepts_.begin(), o.concepts_.end(),
            [](const Concept& a, const Concept& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < o.concepts_.size(); ++i) o.by_id_.emplace(o.concepts_[i].id, i);

  std::vector<std::string> ids;
  std::vector<std::vector<int>> parent_idx(o.concepts_.size());
  ids.reserve(o.concepts_.size());
  for (const Concept& c : o.concepts_) ids.push_back(c.id);
  std::size_t with_def = 0;
  for (std::size_t i = 0; i < o.concepts_.size(); ++i) {
    const Concept& c = o.concepts_[i];
    for (const std::string& p : c.parent_ids) {
      parent_idx[i].push_back(static_cast<int>(o.by_id_.at(p)));
    }
    o.stats_.synonym_count += c.synonyms.size();
    if (!c.real_definitions.empty()) ++with_def;
  }
  o.taxonomy_ = TaxonomyIndex::build(std::move(ids), std::move(parent_idx));
  o.stats_.concept_count = o.concepts_.size();
  o.stats_.isa_edge_count = o.taxonomy_.edge_count();
  o.stats_.with_definition_fraction =
      o.concepts_.empty() ? 0.0 : static_cast<double>(with_def) / static_cast<double>(o.concepts_.size());
  return o;
}

const Concept* Ontology::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &concepts_[it->second];
}

const Concept& Ontology::at(const std::string& id) const {
  const Concept* c = find(id);
  if (!c) throw LookupError("unknown concept id: " + id);
  return *c;
}

// -- parsing ------------------------------------------------------------------

OntologyFormat ontology_format_from_name(const std::string& name) {
  if (name == "obo-graphs-json") return OntologyFormat::obo_graphs_json;
  if (name == "internal-json") return OntologyFormat::internal_jsonl;
  throw ConfigError("unknown ontology format: " + name);
}

std::string ontology_format_name(OntologyFormat format) {
  return format == OntologyFormat::obo_graphs_json ? "obo-graphs-json" : "internal-json";
}

namespace {

// primary name first, then case-insensitive dedup keeping first occurrence
std::vector<std::string> assemble_synonyms(const std::string& name,
                                           const std::vector<std::string>& extra) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto push = [&](const std::string& s) {
    if (s.empty()) return;
    std::string key = lower_ascii(s);
    if (seen.insert(key).second) out.push_back(s);
  };
  push(name);
  for (const std::string& s : extra) push(s);
  return out;
}

Ontology parse_internal_jsonl(std::istream& in) {
  std::vector<Concept> concepts;
  for_each_line(in, [&](const std::string& line, std::size_t number) {
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(number) + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("id") || !doc.contains("name")) {
      throw ParseError("line " + std::to_string(number) + ": expected object with id and name");
    }
    Concept c;
    try {
      c.id = doc.at("id").get<std::string>();
      c.primary_name = doc.at("name").get<std::string>();
      std::vector<std::string> extra;
      if (doc.contains("synonyms")) extra = doc.at("synonyms").get<std::vector<std::string>>();
      if (doc.contains("definitions")) c.real_definitions = doc.at("definitions").get<std::vector<std::string>>();
      if (doc.contains("parents")) c.parent_ids = doc.at("parents").get<std::vector<std::string>>();
      if (doc.contains("obsolete")) c.obsolete = doc.at("obsolete").get<bool>();
      c.synonyms = assemble_synonyms(c.primary_name, extra);
      if (!c.synonyms.empty()) c.primary_name = c.synonyms[0];
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(number) + ": " + e.what());
    }
    if (c.primary_name.empty()) {
      throw ParseError("line " + std::to_string(number) + ": concept " + c.id + " has empty name");
    }
    concepts.push_back(std::move(c));
  });
  return Ontology::build(std::move(concepts));
}

Ontology parse_obo_graphs(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed OBO-Graphs JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("graphs") || !doc.at("graphs").is_array()) {
    throw ParseError("OBO-Graphs document must contain a graphs array");
  }

  std::vector<Concept> concepts;
  std::map<std::string, std::size_t> by_id;
  for (const json& graph : doc.at("graphs")) {
    for (const json& node : graph.value("nodes", json::array())) {
      if (!node.contains("id")) continue;
      if (node.contains("type") && node.at("type").get<std::string>() != "CLASS") continue;
      std::string label = node.value("lbl", std::string());
      if (label.empty()) continue;
      Concept c;
      c.id = node.at("id").get<std::string>();
      c.primary_name = label;
      std::vector<std::string> extra;
      if (node.contains("meta")) {
        const json& meta = node.at("meta");
        c.obsolete = meta.value("deprecated", false);
        if (meta.contains("definition") && meta.at("definition").contains("val")) {
          c.real_definitions.push_back(meta.at("definition").at("val").get<std::string>());
        }
        for (const json& syn : meta.value("synonyms", json::array())) {
          if (syn.value("pred", std::string()) == "hasExactSynonym" && syn.contains("val")) {
            extra.push_back(syn.at("val").get<std::string>());
          }
        }
      }
      c.synonyms = assemble_synonyms(c.primary_name, extra);
      if (by_id.count(c.id)) throw StructureError("duplicate concept id: " + c.id);
      by_id.emplace(c.id, concepts.size());
      concepts.push_back(std::move(c));
    }
    for (const json& edge : graph.value("edges", json::array())) {
      if (edge.value("pred", std::string()) != "is_a") continue;
      std::string sub = edge.value("sub", std::string());
      std::string obj = edge.value("obj", std::string());
      auto it = by_id.find(sub);
      if (it == by_id.end()) throw StructureError("is_a edge from unknown node " + sub);
      if (!by_id.count(obj)) throw StructureError("dangling parent id " + obj + " referenced by " + sub);
      concepts[it->second].parent_ids.push_back(obj);
    }
  }
  return Ontology::build(std::move(concepts));
}

}  // namespace

Ontology parse_ontology(std::istream& in, OntologyFormat format) {
  return format == OntologyFormat::obo_graphs_json ? parse_obo_graphs(in)
                                                   : parse_internal_jsonl(in);
}

std::string dump_ontology(const Ontology& ontology) {
  std::string out;
  for (const Concept& c : ontology.concepts()) {
    json doc;
    doc["id"] = c.id;
    doc["name"] = c.synonyms[0];
    doc["synonyms"] = std::vector<std::string>(c.synonyms.begin() + 1, c.synonyms.end());
    doc["definitions"] = c.real_definitions;
    doc["parents"] = c.parent_ids;
    doc["obsolete"] = c.obsolete;
    out += doc.dump();
    out += '\n';
  }
  return out;
}

std::string format_stats_text(const OntologyStats& stats) {
  std::ostringstream out;
  out << "concepts:                  " << stats.concept_count << "\n"
      << "synonyms:                  " << stats.synonym_count << "\n"
      << "is-a edges:                " << stats.isa_edge_count << "\n"
      << "with real definition:      ";
  out.setf(std::ios::fixed);
  out.precision(1);
  out << 100.0 * stats.with_definition_fraction << "%\n";
  return out.str();
}

std::string format_stats_json(const OntologyStats& stats) {
  json doc;
  doc["concepts"] = stats.concept_count;
  doc["synonyms"] = stats.synonym_count;
  doc["isa_edges"] = stats.isa_edge_count;
  doc["with_definition_fraction"] = stats.with_definition_fraction;
  return doc.dump();
}

// -- synonym filtering --------------------------------------------------------

std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() > b.size()) std::swap(a, b);
  const std::size_t na = a.size(), nb = b.size();
  if (na == 0) return nb;
  std::vector<std::size_t> prev(na + 1), cur(na + 1);
  for (std::size_t i = 0; i <= na; ++i) prev[i] = i;
  for (std::size_t j = 1; j <= nb; ++j) {
    cur[0] = j;
    for (std::size_t i = 1; i <= na; ++i) {
      std::size_t sub = prev[i - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[i] = std::min({prev[i] + 1, cur[i - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[na];
}

namespace {

std::vector<std::string> word_tokens(std::string_view s) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : s) {
    if (is_ascii_alnum(ch)) {
      cur.push_back(lower_ascii_char(ch));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

}  // namespace

bool word_order_equal(std::string_view a, std::string_view b) {
  std::vector<std::string> ta = word_tokens(a);
  std::vector<std::string> tb = word_tokens(b);
  if (ta.size() != tb.size() || ta.empty()) return false;
  std::sort(ta.begin(), ta.end());
  std::sort(tb.begin(), tb.end());
  return ta == tb;
}

std::string strip_parentheses(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  int depth = 0;
  for (char ch : s) {
    if (ch == '(') {
      ++depth;
    } else if (ch == ')') {
      if (depth > 0) --depth;
      else out.push_back(ch);
    } else if (depth == 0) {
      out.push_back(ch);
    }
  }
  return collapse_whitespace(out);
}

Concept normalize_synonyms(const Concept& raw, std::uint64_t rng_seed) {
  bool primary_survived_strip = false;
  std::vector<std::string> cleaned;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < raw.synonyms.size(); ++i) {
    std::string s = strip_parentheses(raw.synonyms[i]);
    if (s.empty()) continue;
    if (i == 0) primary_survived_strip = true;
    if (seen.insert(lower_ascii(s)).second) cleaned.push_back(std::move(s));
  }
  if (cleaned.empty()) {
    throw DomainError("concept " + raw.id + " has no synonyms left after normalization");
  }

  // near-duplicate groups, compared in lexicographic order for determinism
  std::vector<std::size_t> order(cleaned.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return cleaned[a] < cleaned[b]; });
  DisjointSets sets(cleaned.size());
  for (std::size_t a = 0; a < order.size(); ++a) {
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      const std::string& sa = cleaned[order[a]];
      const std::string& sb = cleaned[order[b]];
      if (levenshtein(sa, sb) < 10 || word_order_equal(sa, sb)) {
        sets.unite(order[a], order[b]);
      }
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cleaned.size(); ++i) groups[sets.find(i)].push_back(i);

  // one survivor per group; draws happen in order of each group's smallest member
  struct Group {
    std::string key;
    std::vector<std::size_t> members;  // sorted lexicographically
  };
  std::vector<Group> ordered_groups;
  for (auto& [root, members] : groups) {
    Group g;
    g.members = members;
    std::sort(g.members.begin(), g.members.end(),
              [&](std::size_t a, std::size_t b) { return cleaned[a] < cleaned[b]; });
    g.key = cleaned[g.members.front()];
    ordered_groups.push_back(std::move(g));
  }
  std::sort(ordered_groups.begin(), ordered_groups.end(),
            [](const Group& a, const Group& b) { return a.key < b.key; });

  SplitMix64 rng(mix64(rng_seed, fnv1a64(raw.id)));
  std::vector<char> survives(cleaned.size(), 0);
  std::vector<std::size_t> group_survivor(cleaned.size(), 0);  // member index -> survivor index
  for (const Group& g : ordered_groups) {
    std::size_t pick = g.members.size() == 1
                           ? g.members[0]
                           : g.members[rng.bounded(g.members.size())];
    survives[pick] = 1;
    for (std::size_t m : g.members) group_survivor[m] = pick;
  }

  std::size_t primary_index;
  if (primary_survived_strip) {
    primary_index = group_survivor[0];  // cleaned[0] is the stripped primary name
  } else {
    primary_index = cleaned.size();
    for (std::size_t i = 0; i < cleaned.size(); ++i) {
      if (survives[i]) {
        primary_index = i;
        break;
      }
    }
  }

  Concept out = raw;
  out.synonyms.clear();
  out.synonyms.push_back(cleaned[primary_index]);
  for (std::size_t i = 0; i < cleaned.size(); ++i) {
    if (survives[i] && i != primary_index) out.synonyms.push_back(cleaned[i]);
  }
  out.primary_name = out.synonyms[0];
  return out;
}

Ontology filter_ontology(const Ontology& ontology, std::uint64_t rng_seed) {
  std::vector<Concept> filtered;
  filtered.reserve(ontology.concepts().size());
  for (const Concept& c : ontology.concepts()) {
    filtered.push_back(normalize_synonyms(c, rng_seed));
  }
  return Ontology::build(std::move(filtered));
}

}  // namespace oki
