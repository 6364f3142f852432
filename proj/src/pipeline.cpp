#include "oki/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <sstream>

namespace oki {

using nlohmann::json;
namespace fs = std::filesystem;

// -- config -------------------------------------------------------------------

namespace {

ServiceConfig service_from_json(const json& doc) {
  ServiceConfig s;
  s.base_url = doc.value("base_url", s.base_url);
  s.model = doc.value("model", s.model);
  s.api_key_env = doc.value("api_key_env", s.api_key_env);
  s.max_retries = doc.value("max_retries", s.max_retries);
  s.initial_backoff_ms = doc.value("initial_backoff_ms", s.initial_backoff_ms);
  s.backoff_factor = doc.value("backoff_factor", s.backoff_factor);
  s.timeout_seconds = doc.value("timeout_seconds", s.timeout_seconds);
  s.max_concurrency = doc.value("max_concurrency", s.max_concurrency);
  if (doc.contains("temperature") && !doc.at("temperature").is_null()) {
    s.temperature = doc.at("temperature").get<double>();
  }
  s.embedding_dimension = doc.value("embedding_dimension", s.embedding_dimension);
  return s;
}

json service_to_json(const ServiceConfig& s) {
  json doc;
  doc["base_url"] = s.base_url;
  doc["model"] = s.model;
  doc["api_key_env"] = s.api_key_env;
  doc["max_retries"] = s.max_retries;
  doc["initial_backoff_ms"] = s.initial_backoff_ms;
  doc["backoff_factor"] = s.backoff_factor;
  doc["timeout_seconds"] = s.timeout_seconds;
  doc["max_concurrency"] = s.max_concurrency;
  if (s.temperature) doc["temperature"] = *s.temperature;
  doc["embedding_dimension"] = s.embedding_dimension;
  return doc;
}

fs::path path_or(const json& doc, const char* key, fs::path fallback) {
  if (doc.contains(key) && !doc.at(key).is_null()) {
    return fs::path(doc.at(key).get<std::string>());
  }
  return fallback;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& doc) {
  PipelineConfig c;
  try {
    c.seed = doc.value("seed", c.seed);
    c.offline = doc.value("offline", c.offline);

    json paths = doc.value("paths", json::object());
    c.work_dir = path_or(paths, "work_dir", c.work_dir);
    c.ontology_source = path_or(paths, "ontology_source", {});
    if (paths.contains("ontology_format")) {
      c.ontology_format = ontology_format_from_name(paths.at("ontology_format").get<std::string>());
    }
    fs::path w = c.work_dir;
    c.ingested_ontology = path_or(paths, "ingested_ontology", w / "ontology.ingested.jsonl");
    c.filtered_ontology = path_or(paths, "filtered_ontology", w / "ontology.filtered.jsonl");
    c.definitions_path = path_or(paths, "definitions", w / "definitions.jsonl");
    c.pairs_path = path_or(paths, "pairs", w / "pairs.jsonl");
    c.samples_path = path_or(paths, "samples", w / "samples.jsonl");
    c.generation_cache = path_or(paths, "generation_cache", w / "cache" / "definitions.jsonl");
    c.vector_cache = path_or(paths, "vector_cache", w / "cache" / "vectors.oivc");
    c.checkpoint = path_or(paths, "checkpoint", w / "adapter.oiad");
    c.training_log = path_or(paths, "training_log", w / "train_log.jsonl");
    c.report_json = path_or(paths, "report", w / "report.json");
    c.report_text = path_or(paths, "report_text", w / "report.txt");
    c.selection_dataset = path_or(paths, "selection_dataset", {});

    for (const json& d : doc.value("datasets", json::array())) {
      DatasetSpec spec;
      spec.name = d.at("name").get<std::string>();
      spec.path = fs::path(d.at("path").get<std::string>());
      if (d.contains("subset") && !d.at("subset").is_null()) {
        spec.subset_path = fs::path(d.at("subset").get<std::string>());
      }
      c.eval_datasets.push_back(std::move(spec));
    }

    json provider = doc.value("provider", json::object());
    c.provider.kind = provider.value("kind", c.provider.kind);
    c.provider.concurrency = provider.value("concurrency", c.provider.concurrency);
    c.provider.service = service_from_json(provider.value("service", json::object()));

    json encoder = doc.value("encoder", json::object());
    c.encoder.kind = encoder.value("kind", c.encoder.kind);
    c.encoder.dimension = encoder.value("dimension", c.encoder.dimension);
    c.encoder.hash_seed = encoder.value("hash_seed", c.encoder.hash_seed);
    c.encoder.vectors_path = path_or(encoder, "vectors", {});
    c.encoder.service = service_from_json(encoder.value("service", json::object()));

    json adapter = doc.value("adapter", json::object());
    c.adapter_normalize_output = adapter.value("normalize_output", c.adapter_normalize_output);

    json pairs = doc.value("pairgen", json::object());
    c.pairgen.variant_variant_pairs =
        pairs.value("variant_variant_pairs", c.pairgen.variant_variant_pairs);

    json mining = doc.value("mining", json::object());
    c.mining.k = mining.value("k", c.mining.k);
    c.mining.include_substituted = mining.value("include_substituted", c.mining.include_substituted);
    c.mining.threads = mining.value("threads", c.mining.threads);

    json evaluation = doc.value("evaluation", json::object());
    c.evaluation.include_adapter = evaluation.value("include_adapter", c.evaluation.include_adapter);

    json trainer = doc.value("trainer", json::object());
    c.trainer.batch_size = trainer.value("batch_size", c.trainer.batch_size);
    c.trainer.temperature = trainer.value("temperature", c.trainer.temperature);
    c.trainer.learning_rate = trainer.value("learning_rate", c.trainer.learning_rate);
    c.trainer.weight_decay = trainer.value("weight_decay", c.trainer.weight_decay);
    c.trainer.warmup_fraction = trainer.value("warmup_fraction", c.trainer.warmup_fraction);
    c.trainer.max_epochs = trainer.value("max_epochs", c.trainer.max_epochs);
    c.trainer.hard_negatives_per_sample =
        trainer.value("hard_negatives", c.trainer.hard_negatives_per_sample);
    c.trainer.max_gradient_norm = trainer.value("max_gradient_norm", c.trainer.max_gradient_norm);
    c.trainer.own_negatives_only = trainer.value("own_negatives_only", c.trainer.own_negatives_only);
    c.trainer.seed = trainer.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid pipeline config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

json PipelineConfig::to_json() const {
  json doc;
  doc["seed"] = seed;
  doc["offline"] = offline;
  json paths;
  paths["work_dir"] = work_dir.generic_string();
  paths["ontology_source"] = ontology_source.generic_string();
  paths["ontology_format"] = ontology_format_name(ontology_format);
  paths["ingested_ontology"] = ingested_ontology.generic_string();
  paths["filtered_ontology"] = filtered_ontology.generic_string();
  paths["definitions"] = definitions_path.generic_string();
  paths["pairs"] = pairs_path.generic_string();
  paths["samples"] = samples_path.generic_string();
  paths["generation_cache"] = generation_cache.generic_string();
  paths["vector_cache"] = vector_cache.generic_string();
  paths["checkpoint"] = checkpoint.generic_string();
  paths["training_log"] = training_log.generic_string();
  paths["report"] = report_json.generic_string();
  paths["report_text"] = report_text.generic_string();
  paths["selection_dataset"] = selection_dataset.generic_string();
  doc["paths"] = paths;
  doc["datasets"] = json::array();
  for (const DatasetSpec& d : eval_datasets) {
    json item;
    item["name"] = d.name;
    item["path"] = d.path.generic_string();
    if (d.subset_path) item["subset"] = d.subset_path->generic_string();
    doc["datasets"].push_back(item);
  }
  doc["provider"] = {{"kind", provider.kind},
                     {"concurrency", provider.concurrency},
                     {"service", service_to_json(provider.service)}};
  doc["encoder"] = {{"kind", encoder.kind},
                    {"dimension", encoder.dimension},
                    {"hash_seed", encoder.hash_seed},
                    {"vectors", encoder.vectors_path.generic_string()},
                    {"service", service_to_json(encoder.service)}};
  doc["adapter"] = {{"normalize_output", adapter_normalize_output}};
  doc["pairgen"] = {{"variant_variant_pairs", pairgen.variant_variant_pairs}};
  doc["mining"] = {{"k", mining.k},
                   {"include_substituted", mining.include_substituted},
                   {"threads", mining.threads}};
  doc["evaluation"] = {{"include_adapter", evaluation.include_adapter}};
  doc["trainer"] = {{"batch_size", trainer.batch_size},
                    {"temperature", trainer.temperature},
                    {"learning_rate", trainer.learning_rate},
                    {"weight_decay", trainer.weight_decay},
                    {"warmup_fraction", trainer.warmup_fraction},
                    {"max_epochs", trainer.max_epochs},
                    {"hard_negatives", trainer.hard_negatives_per_sample},
                    {"max_gradient_norm", trainer.max_gradient_norm},
                    {"own_negatives_only", trainer.own_negatives_only},
                    {"seed", trainer.seed}};
  return doc;
}

namespace {

json encoder_fingerprint(const EncoderConfig& e) {
  json doc;
  doc["kind"] = e.kind;
  doc["dimension"] = e.dimension;
  doc["hash_seed"] = e.hash_seed;
  doc["vectors"] = e.vectors_path.generic_string();
  doc["model"] = e.service.model;
  doc["base_url"] = e.service.base_url;
  doc["embedding_dimension"] = e.service.embedding_dimension;
  return doc;
}

}  // namespace

json PipelineConfig::stage_config(const std::string& stage) const {
  json doc;
  doc["stage"] = stage;
  if (stage == "ingest") {
    doc["format"] = ontology_format_name(ontology_format);
  } else if (stage == "filter-synonyms") {
    doc["seed"] = seed;
  } else if (stage == "gen-definitions") {
    doc["provider_kind"] = offline ? "offline" : provider.kind;
    doc["model"] = provider.service.model;
    doc["base_url"] = provider.service.base_url;
    if (provider.service.temperature) doc["temperature"] = *provider.service.temperature;
  } else if (stage == "gen-pairs") {
    doc["variant_variant_pairs"] = pairgen.variant_variant_pairs;
  } else if (stage == "mine-negatives") {
    doc["k"] = mining.k;
    doc["include_substituted"] = mining.include_substituted;
    doc["encoder"] = encoder_fingerprint(encoder);
  } else if (stage == "train") {
    doc["trainer"] = {{"batch_size", trainer.batch_size},
                      {"temperature", trainer.temperature},
                      {"learning_rate", trainer.learning_rate},
                      {"weight_decay", trainer.weight_decay},
                      {"warmup_fraction", trainer.warmup_fraction},
                      {"max_epochs", trainer.max_epochs},
                      {"hard_negatives", trainer.hard_negatives_per_sample},
                      {"max_gradient_norm", trainer.max_gradient_norm},
                      {"own_negatives_only", trainer.own_negatives_only},
                      {"seed", trainer.seed}};
    doc["adapter_normalize_output"] = adapter_normalize_output;
    doc["encoder"] = encoder_fingerprint(encoder);
    doc["selection_dataset"] = selection_dataset.generic_string();
  } else if (stage == "evaluate") {
    doc["encoder"] = encoder_fingerprint(encoder);
    doc["include_adapter"] = evaluation.include_adapter;
    doc["datasets"] = json::array();
    for (const DatasetSpec& d : eval_datasets) {
      json item;
      item["name"] = d.name;
      item["path"] = d.path.generic_string();
      if (d.subset_path) item["subset"] = d.subset_path->generic_string();
      doc["datasets"].push_back(item);
    }
  } else {
    throw ConfigError("unknown stage: " + stage);
  }
  return doc;
}

fs::path PipelineConfig::manifest_path(const std::string& stage) const {
  return work_dir / "manifests" / (stage + ".manifest.json");
}

std::shared_ptr<Encoder> build_base_encoder(const EncoderConfig& config) {
  if (config.kind == "hash") {
    return std::make_shared<HashEncoder>(config.dimension, config.hash_seed);
  }
  if (config.kind == "precomputed") {
    if (config.vectors_path.empty()) {
      throw ConfigError("precomputed encoder requires encoder.vectors");
    }
    return std::make_shared<PrecomputedEncoder>(VectorCache::load(config.vectors_path));
  }
  if (config.kind == "remote") {
    return std::make_shared<RemoteEncoder>(config.service);
  }
  throw ConfigError("unknown encoder kind: " + config.kind);
}

// -- manifests ------------------------------------------------------------------

json StageManifest::to_json() const {
  json doc;
  doc["stage"] = stage;
  doc["seed"] = seed;
  doc["config_digest"] = config_digest;
  doc["inputs"] = inputs;
  doc["outputs"] = outputs;
  doc["counts"] = counts;
  doc["wall_time_ms"] = wall_time_ms;
  return doc;
}

StageManifest StageManifest::from_json(const json& doc) {
  StageManifest m;
  m.stage = doc.at("stage").get<std::string>();
  m.seed = doc.at("seed").get<std::uint64_t>();
  m.config_digest = doc.at("config_digest").get<std::string>();
  m.inputs = doc.at("inputs").get<std::map<std::string, std::string>>();
  m.outputs = doc.at("outputs").get<std::map<std::string, std::string>>();
  m.counts = doc.at("counts");
  m.wall_time_ms = doc.at("wall_time_ms").get<double>();
  return m;
}

const std::vector<std::string> kPipelineStages = {
    "ingest", "filter-synonyms", "gen-definitions", "gen-pairs",
    "mine-negatives", "train", "evaluate"};

namespace {

struct StagePlan {
  // role description -> path; every input must exist
  std::vector<std::pair<std::string, fs::path>> required_inputs;
  std::vector<std::pair<std::string, fs::path>> optional_inputs;
  std::vector<fs::path> outputs;
  std::function<json()> run;  // returns counts
};

std::string producing_stage(const PipelineConfig& c, const fs::path& path) {
  if (path == c.ingested_ontology) return "ingest";
  if (path == c.filtered_ontology) return "filter-synonyms";
  if (path == c.definitions_path) return "gen-definitions";
  if (path == c.pairs_path) return "gen-pairs";
  if (path == c.samples_path) return "mine-negatives";
  if (path == c.checkpoint) return "train";
  return "";
}

Ontology load_internal_ontology(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError("cannot open ontology file: " + path.string());
  return parse_ontology(in, OntologyFormat::internal_jsonl);
}

std::vector<DefinitionRecord> load_definitions_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError("cannot open definitions file: " + path.string());
  return load_definitions(in);
}

std::vector<StsPair> load_sts_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError("cannot open dataset file: " + path.string());
  return load_sts(in);
}

json stats_counts(const OntologyStats& stats) {
  json doc;
  doc["concepts"] = stats.concept_count;
  doc["synonyms"] = stats.synonym_count;
  doc["isa_edges"] = stats.isa_edge_count;
  doc["with_definition_fraction"] = stats.with_definition_fraction;
  return doc;
}

json capped_warnings(const std::vector<std::string>& warnings, std::size_t cap = 50) {
  json arr = json::array();
  for (std::size_t i = 0; i < warnings.size() && i < cap; ++i) arr.push_back(warnings[i]);
  return arr;
}

StagePlan plan_ingest(const PipelineConfig& c) {
  StagePlan plan;
  if (c.ontology_source.empty()) {
    throw ConfigError("paths.ontology_source is not configured");
  }
  plan.required_inputs = {{"ontology source", c.ontology_source}};
  plan.outputs = {c.ingested_ontology};
  plan.run = [&c]() {
    std::ifstream in(c.ontology_source);
    if (!in) throw PipelineError("cannot open ontology source: " + c.ontology_source.string());
    Ontology o = parse_ontology(in, c.ontology_format);
    atomic_write_file(c.ingested_ontology, dump_ontology(o));
    return stats_counts(o.stats());
  };
  return plan;
}

StagePlan plan_filter(const PipelineConfig& c) {
  StagePlan plan;
  plan.required_inputs = {{"ingested ontology", c.ingested_ontology}};
  plan.outputs = {c.filtered_ontology};
  plan.run = [&c]() {
    Ontology before = load_internal_ontology(c.ingested_ontology);
    Ontology after = filter_ontology(before, c.seed);
    atomic_write_file(c.filtered_ontology, dump_ontology(after));
    json counts = stats_counts(after.stats());
    counts["synonyms_before_filtering"] = before.stats().synonym_count;
    return counts;
  };
  return plan;
}

StagePlan plan_gen_definitions(const PipelineConfig& c) {
  StagePlan plan;
  plan.required_inputs = {{"filtered ontology", c.filtered_ontology}};
  plan.outputs = {c.definitions_path};
  plan.run = [&c]() {
    Ontology ontology = load_internal_ontology(c.filtered_ontology);
    GenerationCache cache = GenerationCache::open(c.generation_cache);
    GenerationOptions options;
    options.concurrency = c.provider.concurrency;

    std::unique_ptr<DefinitionProvider> provider;
    bool offline = c.offline || c.provider.kind == "offline";
    if (offline) {
      provider = std::make_unique<OfflineDefinitionProvider>(ontology);
    } else if (c.provider.kind == "chat") {
      provider = std::make_unique<ChatDefinitionProvider>(c.provider.service);
    } else {
      throw ConfigError("unknown provider kind: " + c.provider.kind);
    }

    GenerationReport report = generate_definitions(ontology, *provider, cache, options);
    atomic_write_file(c.definitions_path, dump_definitions(report.records));

    json counts;
    counts["provider"] = provider->model_tag();
    counts["offline"] = offline;
    counts["records"] = report.records.size();
    std::size_t synthetic = 0;
    for (const DefinitionRecord& r : report.records) {
      if (r.provenance == Provenance::synthetic) ++synthetic;
    }
    counts["synthetic"] = synthetic;
    counts["real"] = report.records.size() - synthetic;
    counts["provider_calls"] = report.provider_calls;
    counts["cache_hits"] = report.cache_hits;
    counts["failures"] = report.failures.size();
    return counts;
  };
  return plan;
}

StagePlan plan_gen_pairs(const PipelineConfig& c) {
  StagePlan plan;
  plan.required_inputs = {{"filtered ontology", c.filtered_ontology},
                          {"definition store", c.definitions_path}};
  plan.outputs = {c.pairs_path};
  plan.run = [&c]() {
    Ontology ontology = load_internal_ontology(c.filtered_ontology);
    std::vector<DefinitionRecord> definitions = load_definitions_file(c.definitions_path);
    PairGenReport report = generate_pairs(ontology, definitions, c.pairgen);
    atomic_write_file(c.pairs_path, dump_pairs(report.pairs));
    json counts;
    counts["pairs"] = report.anchor_variant_pairs;
    counts["variant_variant_pairs"] = report.variant_variant_pairs;
    counts["emitted"] = report.pairs.size();
    counts["warnings"] = capped_warnings(report.warnings);
    counts["warning_count"] = report.warnings.size();
    return counts;
  };
  return plan;
}

StagePlan plan_mine(const PipelineConfig& c) {
  StagePlan plan;
  plan.required_inputs = {{"filtered ontology", c.filtered_ontology},
                          {"definition store", c.definitions_path},
                          {"pair file", c.pairs_path}};
  plan.outputs = {c.samples_path};
  plan.run = [&c]() {
    Ontology ontology = load_internal_ontology(c.filtered_ontology);
    std::vector<DefinitionRecord> definitions = load_definitions_file(c.definitions_path);
    std::ifstream pin(c.pairs_path);
    std::vector<PositivePair> pairs = load_pairs(pin);

    std::shared_ptr<Encoder> encoder = build_base_encoder(c.encoder);
    VectorCache cache;
    if (file_exists(c.vector_cache)) cache = VectorCache::load(c.vector_cache);

    CandidateIndex index = CandidateIndex::build(definitions, *encoder, ontology.taxonomy(),
                                                 &cache, c.mining.include_substituted);
    MiningOptions options;
    options.k = c.mining.k;
    options.threads = c.mining.threads;
    MiningReport report = mine_all(pairs, index, options);

    atomic_write_file(c.samples_path, dump_samples(report.samples));
    cache.save(c.vector_cache);

    json counts;
    counts["samples"] = report.samples.size();
    counts["candidates"] = index.entries().size();
    counts["k"] = c.mining.k;
    counts["short_samples"] = report.short_samples;
    counts["empty_samples"] = report.empty_samples;
    counts["warnings"] = capped_warnings(report.warnings);
    counts["warning_count"] = report.warnings.size();
    return counts;
  };
  return plan;
}

StagePlan plan_train(const PipelineConfig& c) {
  StagePlan plan;
  plan.required_inputs = {{"sample file", c.samples_path}};
  if (!c.selection_dataset.empty()) {
    plan.optional_inputs = {{"selection dataset", c.selection_dataset}};
  }
  plan.outputs = {c.checkpoint, c.training_log};
  plan.run = [&c]() {
    std::ifstream sin(c.samples_path);
    std::vector<TrainingSample> samples = load_samples(sin);

    std::shared_ptr<Encoder> base = build_base_encoder(c.encoder);
    AdapterEncoder adapter = AdapterEncoder::identity(base, c.adapter_normalize_output);

    std::vector<StsPair> selection;
    std::vector<std::string> warnings;
    const std::vector<StsPair>* selection_ptr = nullptr;
    if (!c.selection_dataset.empty()) {
      try {
        selection = load_sts_file(c.selection_dataset);
        selection_ptr = &selection;
      } catch (const Error& e) {
        warnings.push_back(std::string("selection dataset unreadable: ") + e.what());
      }
    }

    TrainResult result = train(samples, std::move(adapter), c.trainer, selection_ptr);
    result.adapter.save(c.checkpoint);
    atomic_write_file(c.training_log, dump_train_log(result.log));

    json counts;
    counts["samples"] = samples.size();
    counts["steps"] = result.log.steps.size();
    counts["best_epoch"] = result.log.best_epoch;
    counts["learning_rate"] = c.trainer.learning_rate;
    counts["full_model_learning_rate"] = kFullModelLearningRate;
    if (!result.log.steps.empty()) {
      counts["first_loss"] = result.log.steps.front().loss;
      counts["last_loss"] = result.log.steps.back().loss;
    }
    json epochs = json::array();
    for (const EpochRecord& e : result.log.epochs) {
      json item;
      item["epoch"] = e.epoch;
      if (e.selection_score) item["selection_score"] = *e.selection_score;
      epochs.push_back(item);
    }
    counts["epochs"] = epochs;
    for (const std::string& w : result.log.warnings) warnings.push_back(w);
    counts["warnings"] = capped_warnings(warnings);
    return counts;
  };
  return plan;
}

StagePlan plan_evaluate(const PipelineConfig& c) {
  StagePlan plan;
  if (c.eval_datasets.empty()) {
    throw ConfigError("no evaluation datasets configured");
  }
  for (const DatasetSpec& d : c.eval_datasets) {
    plan.required_inputs.emplace_back("dataset " + d.name, d.path);
    if (d.subset_path) {
      plan.required_inputs.emplace_back("subset annotation for " + d.name, *d.subset_path);
    }
  }
  if (c.evaluation.include_adapter) {
    plan.required_inputs.emplace_back("adapter checkpoint", c.checkpoint);
  }
  plan.outputs = {c.report_json, c.report_text};
  plan.run = [&c]() {
    std::shared_ptr<Encoder> base = build_base_encoder(c.encoder);
    std::optional<AdapterEncoder> adapter;
    if (c.evaluation.include_adapter) {
      adapter = AdapterEncoder::load(c.checkpoint, base);
    }

    std::vector<std::string> names;
    ScoreRow orig_row{base->name() + "_orig", {}};
    ScoreRow kinf_row{base->name() + "_kinf", {}};
    json rows = json::array();
    json orig_results = json::array();
    json kinf_results = json::array();

    for (const DatasetSpec& spec : c.eval_datasets) {
      names.push_back(spec.name);
      std::vector<StsPair> dataset = load_sts_file(spec.path);
      std::optional<SubsetAnnotation> subset;
      if (spec.subset_path) {
        std::ifstream sin(*spec.subset_path);
        if (!sin) throw PipelineError("cannot open subset file: " + spec.subset_path->string());
        subset = load_subset(sin, spec.name);
      }

      EvalReport orig = evaluate(*base, dataset, subset ? &*subset : nullptr, spec.name);
      orig_results.push_back(json::parse(eval_report_json(orig)));
      orig_row.cells.push_back({orig.all_score, orig.subset_score});

      if (adapter) {
        EvalReport kinf = evaluate(*adapter, dataset, subset ? &*subset : nullptr, spec.name);
        kinf_results.push_back(json::parse(eval_report_json(kinf)));
        kinf_row.cells.push_back({kinf.all_score, kinf.subset_score});
      }
    }

    rows.push_back({{"label", orig_row.label}, {"results", orig_results}});
    std::vector<ScoreRow> table_rows{orig_row};
    if (adapter) {
      rows.push_back({{"label", kinf_row.label}, {"results", kinf_results}});
      table_rows.push_back(kinf_row);
    }

    json report;
    report["datasets"] = names;
    report["rows"] = rows;
    atomic_write_file(c.report_json, report.dump(2) + "\n");
    atomic_write_file(c.report_text, render_score_table(names, table_rows));

    json counts;
    counts["datasets"] = names.size();
    counts["rows"] = table_rows.size();
    return counts;
  };
  return plan;
}

StagePlan make_plan(const std::string& name, const PipelineConfig& c) {
  if (name == "ingest") return plan_ingest(c);
  if (name == "filter-synonyms") return plan_filter(c);
  if (name == "gen-definitions") return plan_gen_definitions(c);
  if (name == "gen-pairs") return plan_gen_pairs(c);
  if (name == "mine-negatives") return plan_mine(c);
  if (name == "train") return plan_train(c);
  if (name == "evaluate") return plan_evaluate(c);
  throw ConfigError("unknown stage: " + name);
}

}  // namespace

StageManifest run_stage(const std::string& name, const PipelineConfig& config) {
  StagePlan plan = make_plan(name, config);

  for (const auto& [role, path] : plan.required_inputs) {
    if (file_exists(path)) continue;
    std::string producer = producing_stage(config, path);
    if (!producer.empty()) {
      throw PipelineError("missing " + role + ": " + path.string() + "; run " + producer + " first");
    }
    throw PipelineError("missing " + role + ": " + path.string());
  }

  StageManifest manifest;
  manifest.stage = name;
  manifest.seed = config.seed;
  manifest.config_digest = sha256_hex(config.stage_config(name).dump());
  for (const auto& [role, path] : plan.required_inputs) {
    manifest.inputs[path.generic_string()] = file_digest(path);
  }
  for (const auto& [role, path] : plan.optional_inputs) {
    if (file_exists(path)) manifest.inputs[path.generic_string()] = file_digest(path);
  }

  // skip when the recorded manifest matches inputs, config and outputs
  fs::path manifest_file = config.manifest_path(name);
  if (file_exists(manifest_file)) {
    try {
      StageManifest previous = StageManifest::from_json(json::parse(read_text_file(manifest_file)));
      bool match = previous.config_digest == manifest.config_digest &&
                   previous.inputs == manifest.inputs;
      if (match) {
        for (const fs::path& out : plan.outputs) {
          auto it = previous.outputs.find(out.generic_string());
          if (it == previous.outputs.end() || !file_exists(out) || file_digest(out) != it->second) {
            match = false;
            break;
          }
        }
      }
      if (match) {
        previous.skipped = true;
        return previous;
      }
    } catch (const Error&) {
      // unreadable manifest: fall through and re-run
    } catch (const json::exception&) {
    }
  }

  auto start = std::chrono::steady_clock::now();
  manifest.counts = plan.run();
  auto elapsed = std::chrono::steady_clock::now() - start;
  manifest.wall_time_ms =
      std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(elapsed).count();

  for (const fs::path& out : plan.outputs) {
    if (!file_exists(out)) throw PipelineError("stage " + name + " did not produce " + out.string());
    manifest.outputs[out.generic_string()] = file_digest(out);
  }
  atomic_write_file(manifest_file, manifest.to_json().dump(2) + "\n");
  return manifest;
}

PipelineReport run_pipeline(const PipelineConfig& config) {
  PipelineReport report;
  for (const std::string& stage : kPipelineStages) {
    report.stages.push_back(run_stage(stage, config));
  }
  report.evaluation = json::parse(read_text_file(config.report_json));
  report.table = read_text_file(config.report_text);
  return report;
}

}  // namespace oki
