#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "oki/definitions.hpp"
#include "oki/embedding.hpp"
#include "oki/evaluation.hpp"
#include "oki/hardneg.hpp"
#include "oki/http_service.hpp"
#include "oki/ontology.hpp"
#include "oki/pairgen.hpp"
#include "oki/trainer.hpp"

namespace oki {

struct DatasetSpec {
  std::string name;
  std::filesystem::path path;
  std::optional<std::filesystem::path> subset_path;
};

struct EncoderConfig {
  std::string kind = "hash";  // hash | precomputed | remote
  std::size_t dimension = 256;
  std::uint64_t hash_seed = 0x6f6b69;  // independent of the pipeline seed
  std::filesystem::path vectors_path;  // precomputed
  ServiceConfig service;               // remote
};

struct ProviderConfig {
  std::string kind = "offline";  // offline | chat
  ServiceConfig service;
  std::size_t concurrency = 1;
};

struct MiningConfig {
  std::size_t k = 1;
  bool include_substituted = false;
  unsigned threads = 1;
};

struct EvaluationConfig {
  bool include_adapter = true;  // false: score the base encoder only
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  bool offline = false;  // force the offline definition provider
  std::filesystem::path work_dir = "out";

  std::filesystem::path ontology_source;
  OntologyFormat ontology_format = OntologyFormat::internal_jsonl;

  // stage outputs; defaulted under work_dir when left empty
  std::filesystem::path ingested_ontology;
  std::filesystem::path filtered_ontology;
  std::filesystem::path definitions_path;
  std::filesystem::path pairs_path;
  std::filesystem::path samples_path;
  std::filesystem::path generation_cache;
  std::filesystem::path vector_cache;
  std::filesystem::path checkpoint;
  std::filesystem::path training_log;
  std::filesystem::path report_json;
  std::filesystem::path report_text;

  std::filesystem::path selection_dataset;  // optional; Spearman model selection
  std::vector<DatasetSpec> eval_datasets;

  ProviderConfig provider;
  EncoderConfig encoder;
  bool adapter_normalize_output = true;
  PairGenOptions pairgen;
  MiningConfig mining;
  EvaluationConfig evaluation;
  TrainerConfig trainer;

  static PipelineConfig from_json(const nlohmann::json& doc);
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  // section of the config (plus seed) that a stage's outputs depend on
  nlohmann::json stage_config(const std::string& stage) const;
  std::filesystem::path manifest_path(const std::string& stage) const;
};

std::shared_ptr<Encoder> build_base_encoder(const EncoderConfig& config);

struct StageManifest {
  std::string stage;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::map<std::string, std::string> inputs;   // path -> content digest
  std::map<std::string, std::string> outputs;  // path -> content digest
  nlohmann::json counts;
  double wall_time_ms = 0.0;
  bool skipped = false;  // not persisted; set when digests matched

  nlohmann::json to_json() const;
  static StageManifest from_json(const nlohmann::json& doc);
};

extern const std::vector<std::string> kPipelineStages;

// Runs one stage: checks inputs (missing ones name the producing stage),
// skips when input/config/output digests all match the recorded manifest,
// writes outputs atomically and records the manifest.
StageManifest run_stage(const std::string& name, const PipelineConfig& config);

struct PipelineReport {
  std::vector<StageManifest> stages;
  nlohmann::json evaluation;  // orig/kinf rows per dataset
  std::string table;
};

PipelineReport run_pipeline(const PipelineConfig& config);

}  // namespace oki
