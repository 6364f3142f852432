#include "oki/hardneg.hpp"

#include <algorithm>
#include <istream>
#include <set>
#include <thread>

#include "json.hpp"

namespace oki {

using nlohmann::json;

std::string sample_to_json_line(const TrainingSample& s) {
  json doc;
  doc["concept_id"] = s.concept_id;
  doc["anchor_text"] = s.anchor_text;
  doc["positive_text"] = s.positive_text;
  doc["hard_negatives"] = json::array();
  for (const HardNegative& n : s.hard_negatives) {
    doc["hard_negatives"].push_back(
        {{"concept_id", n.concept_id}, {"text", n.text}, {"score", n.score}});
  }
  return doc.dump();
}

TrainingSample sample_from_json_line(const std::string& line, std::size_t line_number) {
  try {
    json doc = json::parse(line);
    TrainingSample s;
    s.concept_id = doc.at("concept_id").get<std::string>();
    s.anchor_text = doc.at("anchor_text").get<std::string>();
    s.positive_text = doc.at("positive_text").get<std::string>();
    for (const json& n : doc.at("hard_negatives")) {
      s.hard_negatives.push_back({n.at("concept_id").get<std::string>(),
                                  n.at("text").get<std::string>(),
                                  n.at("score").get<double>()});
    }
    return s;
  } catch (const json::exception& e) {
    throw ParseError("sample line " + std::to_string(line_number) + ": " + e.what());
  }
}

std::string dump_samples(const std::vector<TrainingSample>& samples) {
  std::string out;
  for (const TrainingSample& s : samples) {
    out += sample_to_json_line(s);
    out += '\n';
  }
  return out;
}

std::vector<TrainingSample> load_samples(std::istream& in) {
  std::vector<TrainingSample> out;
  for_each_line(in, [&](const std::string& line, std::size_t number) {
    out.push_back(sample_from_json_line(line, number));
  });
  return out;
}

// -- CandidateIndex ---------------------------------------------------------------

namespace {

Vec unit_of(Vec v) {
  double norm = l2_norm(v);
  if (norm == 0.0) throw DomainError("candidate embedding has zero norm");
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace

CandidateIndex CandidateIndex::build(const std::vector<DefinitionRecord>& definitions,
                                     const Encoder& encoder, const TaxonomyIndex& taxonomy,
                                     VectorCache* cache, bool include_substituted) {
  if (definitions.empty()) throw DomainError("cannot index an empty definition list");

  std::set<std::pair<std::string, std::string>> keys;
  for (const DefinitionRecord& d : definitions) {
    if (d.provenance == Provenance::substituted && !include_substituted) continue;
    keys.emplace(d.concept_id, d.text);
  }

  CandidateIndex index;
  index.encoder_ = &encoder;
  index.taxonomy_ = &taxonomy;
  index.cache_ = cache;
  index.entries_.reserve(keys.size());
  try {
    for (const auto& [concept_id, text] : keys) {
      Entry e;
      e.concept_id = concept_id;
      e.concept_index = taxonomy.index_of(concept_id);
      e.text = text;
      e.unit_embedding = unit_of(cache ? cache->get_or_encode(text, encoder)
                                       : encoder.encode(text));
      index.entries_.push_back(std::move(e));
    }
  } catch (const LookupError&) {
    throw;
  } catch (const Error& e) {
    throw PipelineError(std::string("candidate indexing failed: ") + e.what());
  }
  return index;
}

Vec CandidateIndex::unit_embedding(const std::string& text) const {
  return unit_of(cache_ ? cache_->get_or_encode(text, *encoder_) : encoder_->encode(text));
}

// -- mining -----------------------------------------------------------------------

TrainingSample mine_hard_negatives(const PositivePair& pair, const CandidateIndex& index,
                                   std::size_t k, std::string* warning) {
  TrainingSample sample;
  sample.concept_id = pair.concept_id;
  sample.anchor_text = pair.anchor.text;
  sample.positive_text = pair.positive.text;

  const TaxonomyIndex& taxonomy = index.taxonomy();
  int own = taxonomy.index_of(pair.concept_id);

  if (k == 0) return sample;

  Vec anchor = index.unit_embedding(pair.anchor.text);
  Vec positive = index.unit_embedding(pair.positive.text);

  // top-k by (score desc, entry order asc); entries are sorted by
  // (concept id, text), which is exactly the documented tie-break
  struct Scored {
    double score;
    std::size_t entry;
  };
  std::vector<Scored> top;
  top.reserve(k + 1);
  auto better = [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entry < b.entry;
  };

  const auto& entries = index.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (taxonomy.related_index(e.concept_index, own)) continue;
    double score =
        0.5 * (dot(e.unit_embedding, anchor) + dot(e.unit_embedding, positive));
    if (!std::isfinite(score)) throw NumericError("non-finite candidate score");
    Scored s{score, i};
    auto pos = std::upper_bound(top.begin(), top.end(), s, better);
    if (pos == top.end() && top.size() >= k) continue;
    top.insert(pos, s);
    if (top.size() > k) top.pop_back();
  }

  for (const Scored& s : top) {
    const auto& e = entries[s.entry];
    sample.hard_negatives.push_back({e.concept_id, e.text, s.score});
  }

  if (sample.hard_negatives.size() < k && warning) {
    *warning = "pair (" + pair.concept_id + ", \"" + pair.substituted_synonym + "\"): " +
               (sample.hard_negatives.empty()
                    ? "no eligible hard-negative candidates"
                    : "only " + std::to_string(sample.hard_negatives.size()) + " of " +
                          std::to_string(k) + " hard negatives available");
  }
  return sample;
}

MiningReport mine_all(const std::vector<PositivePair>& pairs, const CandidateIndex& index,
                      const MiningOptions& options) {
  MiningReport report;
  report.samples.resize(pairs.size());
  std::vector<std::string> warnings(pairs.size());

  auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      report.samples[i] = mine_hard_negatives(pairs[i], index, options.k, &warnings[i]);
    }
  };

  unsigned threads = std::max(1u, options.threads);
  if (threads == 1 || pairs.size() < 2 * threads) {
    run_range(0, pairs.size());
  } else {
    std::vector<std::thread> pool;
    std::size_t chunk = (pairs.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      std::size_t begin = t * chunk;
      std::size_t end = std::min(pairs.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(run_range, begin, end);
    }
    for (std::thread& th : pool) th.join();
  }

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (warnings[i].empty()) continue;
    report.warnings.push_back(warnings[i]);
    if (report.samples[i].hard_negatives.empty()) {
      ++report.empty_samples;
    } else {
      ++report.short_samples;
    }
  }
  return report;
}

}  // namespace oki
