#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "oki/embedding.hpp"
#include "oki/ontology.hpp"
#include "oki/pairgen.hpp"

namespace oki {

struct HardNegative {
  std::string concept_id;
  std::string text;
  double score = 0.0;  // mean cosine similarity against anchor and positive
};

struct TrainingSample {
  std::string concept_id;
  std::string anchor_text;
  std::string positive_text;
  std::vector<HardNegative> hard_negatives;  // scores non-increasing
};

std::string sample_to_json_line(const TrainingSample& s);
TrainingSample sample_from_json_line(const std::string& line, std::size_t line_number);
std::string dump_samples(const std::vector<TrainingSample>& samples);
std::vector<TrainingSample> load_samples(std::istream& in);

// Deduplicated (concept, definition text) entries with unit-normalized
// embeddings, plus the taxonomy for exclusion checks. Immutable after build;
// shared freely across mining threads.
class CandidateIndex {
 public:
  struct Entry {
    std::string concept_id;
    int concept_index = 0;  // into the taxonomy
    std::string text;
    Vec unit_embedding;
  };

  // Indexes base definitions (real + synthetic); substitution variants are
  // included only when include_substituted is set.
  static CandidateIndex build(const std::vector<DefinitionRecord>& definitions,
                              const Encoder& encoder, const TaxonomyIndex& taxonomy,
                              VectorCache* cache = nullptr,
                              bool include_substituted = false);

  const std::vector<Entry>& entries() const { return entries_; }
  const TaxonomyIndex& taxonomy() const { return *taxonomy_; }

  // unit-normalized embedding for an arbitrary text (cached when possible)
  Vec unit_embedding(const std::string& text) const;

 private:
  std::vector<Entry> entries_;
  const Encoder* encoder_ = nullptr;
  const TaxonomyIndex* taxonomy_ = nullptr;
  VectorCache* cache_ = nullptr;
};

struct MiningOptions {
  std::size_t k = 1;
  unsigned threads = 1;
};

struct MiningReport {
  std::vector<TrainingSample> samples;  // one per pair, input order
  std::size_t short_samples = 0;        // fewer than k eligible candidates
  std::size_t empty_samples = 0;
  std::vector<std::string> warnings;    // input order, parallelism-invariant
};

// Top-k candidates by mean cosine similarity against the pair, excluding the
// pair's own concept and its ancestors/descendants. Ties break by concept id
// then text. Returns fewer than k (possibly zero) when the pool runs dry.
TrainingSample mine_hard_negatives(const PositivePair& pair, const CandidateIndex& index,
                                   std::size_t k, std::string* warning = nullptr);

MiningReport mine_all(const std::vector<PositivePair>& pairs, const CandidateIndex& index,
                      const MiningOptions& options = {});

}  // namespace oki
