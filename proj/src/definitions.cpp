#include "oki/definitions.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <thread>

#include "json.hpp"

namespace oki {

using nlohmann::json;

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::real: return "real";
    case Provenance::synthetic: return "synthetic";
    case Provenance::substituted: return "substituted";
  }
  throw DomainError("invalid provenance value");
}

Provenance provenance_from_name(const std::string& name) {
  if (name == "real") return Provenance::real;
  if (name == "synthetic") return Provenance::synthetic;
  if (name == "substituted") return Provenance::substituted;
  throw ParseError("unknown provenance: " + name);
}

std::string definition_to_json_line(const DefinitionRecord& r) {
  json doc;
  doc["concept_id"] = r.concept_id;
  doc["text"] = r.text;
  doc["provenance"] = provenance_name(r.provenance);
  if (r.source_synonym) doc["source_synonym"] = *r.source_synonym;
  if (r.mention) {
    doc["mention"] = {{"surface", r.mention->surface},
                      {"start", r.mention->start},
                      {"end", r.mention->end}};
  }
  return doc.dump();
}

DefinitionRecord definition_from_json_line(const std::string& line, std::size_t line_number) {
  json doc;
  try {
    doc = json::parse(line);
    DefinitionRecord r;
    r.concept_id = doc.at("concept_id").get<std::string>();
    r.text = doc.at("text").get<std::string>();
    r.provenance = provenance_from_name(doc.at("provenance").get<std::string>());
    if (doc.contains("source_synonym")) r.source_synonym = doc.at("source_synonym").get<std::string>();
    if (doc.contains("mention")) {
      SynonymMention m;
      m.surface = doc.at("mention").at("surface").get<std::string>();
      m.start = doc.at("mention").at("start").get<std::size_t>();
      m.end = doc.at("mention").at("end").get<std::size_t>();
      r.mention = std::move(m);
    }
    if (r.text.empty()) throw ParseError("empty definition text");
    if (r.provenance == Provenance::synthetic && !r.source_synonym) {
      throw ParseError("synthetic record without source_synonym");
    }
    if (r.provenance == Provenance::substituted && !r.mention) {
      throw ParseError("substituted record without mention");
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError("definition line " + std::to_string(line_number) + ": " + e.what());
  }
}

std::string dump_definitions(const std::vector<DefinitionRecord>& records) {
  std::string out;
  for (const DefinitionRecord& r : records) {
    out += definition_to_json_line(r);
    out += '\n';
  }
  return out;
}

std::vector<DefinitionRecord> load_definitions(std::istream& in) {
  std::vector<DefinitionRecord> out;
  for_each_line(in, [&](const std::string& line, std::size_t number) {
    out.push_back(definition_from_json_line(line, number));
  });
  return out;
}

std::vector<ChatMessage> build_prompt(const std::string& synonym) {
  if (synonym.empty()) throw DomainError("cannot build a definition prompt for an empty synonym");
  return {
      {"system", "You are an expert in clinical and biomedical sciences."},
      {"user", "Could you provide a single sentence with the definition of " + synonym + "?"},
  };
}

std::string truncate_to_first_sentence(const std::string& text) {
  std::string trimmed = trim(text);
  for (std::size_t i = 0; i < trimmed.size(); ++i) {
    if (trimmed[i] != '.') continue;
    if (i + 1 == trimmed.size() || trimmed[i + 1] == ' ' || trimmed[i + 1] == '\t' ||
        trimmed[i + 1] == '\n' || trimmed[i + 1] == '\r') {
      return trimmed.substr(0, i + 1);
    }
  }
  return trimmed;
}

std::string offline_definition(const Concept& node, const std::string& synonym,
                               const Ontology& ontology) {
  std::string parent_label = "the root category";
  if (!node.parent_ids.empty()) {
    const std::string& parent_id =
        *std::min_element(node.parent_ids.begin(), node.parent_ids.end());
    parent_label = ontology.at(parent_id).primary_name;
  }
  return synonym + " is a disorder classified under " + parent_label +
         " in the reference ontology.";
}

std::string OfflineDefinitionProvider::complete(const GenerationRequest& request) {
  calls_.fetch_add(1);
  const Concept& node = ontology_->at(request.concept_id);
  return offline_definition(node, request.synonym, *ontology_);
}

// -- GenerationCache ------------------------------------------------------------

namespace {
std::string cache_key(const std::string& model_tag, const std::string& prompt) {
  return model_tag + '\x1f' + prompt;
}
}  // namespace

GenerationCache::GenerationCache(GenerationCache&& other) noexcept {
  std::lock_guard<std::mutex> lock(other.mutex_);
  path_ = std::move(other.path_);
  entries_ = std::move(other.entries_);
}

GenerationCache& GenerationCache::operator=(GenerationCache&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(mutex_, other.mutex_);
    path_ = std::move(other.path_);
    entries_ = std::move(other.entries_);
  }
  return *this;
}

GenerationCache GenerationCache::open(const std::filesystem::path& path) {
  GenerationCache cache;
  cache.path_ = path;
  if (file_exists(path)) {
    std::ifstream in(path);
    for_each_line(in, [&](const std::string& line, std::size_t number) {
      try {
        json doc = json::parse(line);
        cache.entries_[cache_key(doc.at("model").get<std::string>(),
                                 doc.at("prompt").get<std::string>())] =
            doc.at("response").get<std::string>();
      } catch (const json::exception& e) {
        throw CacheError("generation cache line " + std::to_string(number) + ": " + e.what());
      }
    });
  }
  return cache;
}

std::string GenerationCache::prompt_key(const std::vector<ChatMessage>& messages) {
  json doc = json::array();
  for (const ChatMessage& m : messages) {
    doc.push_back({{"content", m.content}, {"role", m.role}});
  }
  return doc.dump();
}

std::optional<std::string> GenerationCache::find(const std::string& model_tag,
                                                 const std::string& prompt) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find(cache_key(model_tag, prompt));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void GenerationCache::put(const std::string& model_tag, const std::string& prompt,
                          const std::string& response) {
  std::lock_guard<std::mutex> lock(mutex_);
  entries_[cache_key(model_tag, prompt)] = response;
  if (path_) {
    auto parent = path_->parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(*path_, std::ios::app);
    if (!out) throw CacheError("cannot append to generation cache: " + path_->string());
    json doc;
    doc["model"] = model_tag;
    doc["prompt"] = prompt;
    doc["response"] = response;
    out << doc.dump() << '\n';
    out.flush();
    if (!out) throw CacheError("write failed on generation cache: " + path_->string());
  }
}

std::size_t GenerationCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.size();
}

// -- generate_definitions --------------------------------------------------------

GenerationReport generate_definitions(const Ontology& ontology, DefinitionProvider& provider,
                                      GenerationCache& cache, const GenerationOptions& options) {
  struct Task {
    const Concept* owner;
    const std::string* synonym;
  };
  std::vector<Task> tasks;
  for (const Concept& c : ontology.concepts()) {
    for (const std::string& s : c.synonyms) tasks.push_back({&c, &s});
  }

  const std::string model_tag = provider.model_tag();
  std::vector<std::optional<DefinitionRecord>> synthetic(tasks.size());
  std::vector<std::optional<SynonymFailure>> failures(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> provider_calls{0};
  std::atomic<std::size_t> cache_hits{0};

  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      GenerationRequest request{task.owner->id, *task.synonym, build_prompt(*task.synonym)};
      std::string prompt = GenerationCache::prompt_key(request.prompt);
      std::string raw;
      if (auto cached = cache.find(model_tag, prompt)) {
        raw = *cached;
        cache_hits.fetch_add(1);
      } else {
        try {
          raw = provider.complete(request);
        } catch (const Error& e) {
          failures[i] = SynonymFailure{task.owner->id, *task.synonym, e.what()};
          continue;
        }
        provider_calls.fetch_add(1);
        cache.put(model_tag, prompt, raw);
      }
      std::string sentence = truncate_to_first_sentence(raw);
      if (sentence.empty()) {
        failures[i] = SynonymFailure{task.owner->id, *task.synonym, "provider returned empty text"};
        continue;
      }
      DefinitionRecord r;
      r.concept_id = task.owner->id;
      r.text = std::move(sentence);
      r.provenance = Provenance::synthetic;
      r.source_synonym = *task.synonym;
      synthetic[i] = std::move(r);
    }
  };

  std::size_t workers = std::max<std::size_t>(1, options.concurrency);
  workers = std::min(workers, std::max<std::size_t>(1, tasks.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  GenerationReport report;
  report.provider_calls = provider_calls.load();
  report.cache_hits = cache_hits.load();

  std::size_t task_index = 0;
  for (const Concept& c : ontology.concepts()) {
    std::size_t records_before = report.records.size();
    for (const std::string& d : c.real_definitions) {
      if (d.empty()) continue;
      DefinitionRecord r;
      r.concept_id = c.id;
      r.text = d;
      r.provenance = Provenance::real;
      report.records.push_back(std::move(r));
    }
    for (std::size_t s = 0; s < c.synonyms.size(); ++s, ++task_index) {
      if (synthetic[task_index]) {
        report.records.push_back(std::move(*synthetic[task_index]));
      } else if (failures[task_index]) {
        report.failures.push_back(std::move(*failures[task_index]));
      }
    }
    if (report.records.size() == records_before) {
      throw PipelineError("concept " + c.id + " has no definition after generation");
    }
  }
  return report;
}

}  // namespace oki
