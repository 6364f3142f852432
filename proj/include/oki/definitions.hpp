#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "oki/http_service.hpp"
#include "oki/ontology.hpp"
#include "oki/util.hpp"

namespace oki {

enum class Provenance { real, synthetic, substituted };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

// A synonym occurrence inside a definition text. `surface` is the verbatim
// span text[start..end); it matches some synonym case-insensitively.
struct SynonymMention {
  std::string surface;
  std::size_t start = 0;
  std::size_t end = 0;
};

struct DefinitionRecord {
  std::string concept_id;
  std::string text;
  Provenance provenance = Provenance::real;
  std::optional<std::string> source_synonym;  // set when provenance == synthetic
  std::optional<SynonymMention> mention;      // set when provenance == substituted
};

std::string definition_to_json_line(const DefinitionRecord& r);
DefinitionRecord definition_from_json_line(const std::string& line, std::size_t line_number);
std::string dump_definitions(const std::vector<DefinitionRecord>& records);
std::vector<DefinitionRecord> load_definitions(std::istream& in);

// Two-message dialogue prompt asking for a one-sentence definition of the
// synonym. Rejects empty synonyms.
std::vector<ChatMessage> build_prompt(const std::string& synonym);

// Everything up to and including the first period followed by whitespace or
// end of text; leading/trailing whitespace trimmed.
std::string truncate_to_first_sentence(const std::string& text);

struct GenerationRequest {
  std::string concept_id;
  std::string synonym;
  std::vector<ChatMessage> prompt;
};

struct GenerationResult {
  std::string text;
  std::string model_tag;
  std::chrono::system_clock::time_point timestamp;
  bool cache_hit = false;
};

class DefinitionProvider {
 public:
  virtual ~DefinitionProvider() = default;
  virtual std::string model_tag() const = 0;
  // raw (untruncated) response text; ProviderError on failure
  virtual std::string complete(const GenerationRequest& request) = 0;
};

// Deterministic template provider:
// "<synonym> is a disorder classified under <parent> in the reference ontology."
// where <parent> is the primary name of the lexicographically smallest parent
// id, or "the root category" for roots.
std::string offline_definition(const Concept& node, const std::string& synonym,
                               const Ontology& ontology);

class OfflineDefinitionProvider : public DefinitionProvider {
 public:
  explicit OfflineDefinitionProvider(const Ontology& ontology) : ontology_(&ontology) {}

  std::string model_tag() const override { return "offline-template-v1"; }
  std::string complete(const GenerationRequest& request) override;
  std::size_t call_count() const { return calls_.load(); }

 private:
  const Ontology* ontology_;
  std::atomic<std::size_t> calls_{0};
};

class ChatDefinitionProvider : public DefinitionProvider {
 public:
  explicit ChatDefinitionProvider(ServiceConfig config) : client_(std::move(config)) {}

  std::string model_tag() const override { return client_.config().model; }
  std::string complete(const GenerationRequest& request) override {
    return client_.complete(request.prompt);
  }
  const ChatCompletionClient& client() const { return client_; }

 private:
  ChatCompletionClient client_;
};

// Response cache keyed by (model tag, full prompt text), persisted as
// line-delimited JSON. Raw responses are cached; truncation happens at use.
class GenerationCache {
 public:
  GenerationCache() = default;
  GenerationCache(GenerationCache&& other) noexcept;
  GenerationCache& operator=(GenerationCache&& other) noexcept;
  GenerationCache(const GenerationCache&) = delete;
  GenerationCache& operator=(const GenerationCache&) = delete;

  // loads path when it exists; subsequent puts append to it
  static GenerationCache open(const std::filesystem::path& path);

  static std::string prompt_key(const std::vector<ChatMessage>& messages);

  std::optional<std::string> find(const std::string& model_tag,
                                  const std::string& prompt) const;
  void put(const std::string& model_tag, const std::string& prompt,
           const std::string& response);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::optional<std::filesystem::path> path_;
  std::unordered_map<std::string, std::string> entries_;
};

struct SynonymFailure {
  std::string concept_id;
  std::string synonym;
  std::string message;
};

struct GenerationOptions {
  std::size_t concurrency = 1;
};

struct GenerationReport {
  std::vector<DefinitionRecord> records;  // real records first per concept, then synthetic per synonym
  std::vector<SynonymFailure> failures;
  std::size_t provider_calls = 0;
  std::size_t cache_hits = 0;
};

// One synthetic record per (concept, synonym) plus the ontology's real
// definitions; per-synonym provider failures are recorded and skipped, but a
// concept left with no definition at all is a hard error.
GenerationReport generate_definitions(const Ontology& ontology, DefinitionProvider& provider,
                                      GenerationCache& cache,
                                      const GenerationOptions& options = {});

}  // namespace oki
