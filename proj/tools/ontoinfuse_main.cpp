#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "oki/pipeline.hpp"

namespace {

void print_manifest(const oki::StageManifest& manifest) {
  if (manifest.skipped) {
    std::cout << "[skip] " << manifest.stage << " (inputs and config unchanged)\n";
    return;
  }
  std::cout << "[done] " << manifest.stage << " (" << manifest.wall_time_ms << " ms)\n";
  std::cout << manifest.counts.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ontology knowledge infusion pipeline for text embeddings"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  bool offline = false;
  std::string provider_kind;
  std::optional<std::size_t> provider_concurrency;
  std::optional<std::size_t> provider_retries;
  app.add_option("--config", config_path, "pipeline config file (JSON)");
  app.add_option("--seed", seed_override, "override the config seed");
  app.add_flag("--offline", offline, "force the offline definition provider");
  app.add_option("--provider", provider_kind, "definition provider: offline or chat")
      ->check(CLI::IsMember({"offline", "chat"}));
  app.add_option("--concurrency", provider_concurrency,
                 "max in-flight definition requests");
  app.add_option("--retries", provider_retries, "retry count for remote requests");

  for (const std::string& stage : oki::kPipelineStages) {
    app.add_subcommand(stage, "run the " + stage + " stage");
  }
  CLI::App* pipeline_cmd = app.add_subcommand("pipeline", "run every stage in order");

  CLI::App* evaluate_cmd = app.get_subcommand("evaluate");
  bool orig_only = false;
  std::string vectors_path;
  evaluate_cmd->add_flag("--orig-only", orig_only, "score the base encoder only");
  evaluate_cmd->add_option("--vectors", vectors_path,
                           "score externally supplied vectors (vector cache file)");

  CLI::App* stats_cmd = app.add_subcommand("stats", "print ontology statistics");
  std::string stats_input;
  std::string stats_format = "internal-json";
  bool stats_json = false;
  stats_cmd->add_option("--input", stats_input, "ontology file")->required();
  stats_cmd->add_option("--format", stats_format, "internal-json or obo-graphs-json");
  stats_cmd->add_flag("--json", stats_json, "emit JSON instead of text");

  CLI11_PARSE(app, argc, argv);

  try {
    if (stats_cmd->parsed()) {
      std::ifstream in(stats_input);
      if (!in) {
        std::cerr << "error: cannot open " << stats_input << "\n";
        return 1;
      }
      oki::Ontology ontology =
          oki::parse_ontology(in, oki::ontology_format_from_name(stats_format));
      std::cout << (stats_json ? oki::format_stats_json(ontology.stats()) + "\n"
                               : oki::format_stats_text(ontology.stats()));
      return 0;
    }

    if (config_path.empty()) {
      std::cerr << "error: --config is required for pipeline commands\n";
      return 1;
    }
    oki::PipelineConfig config = oki::PipelineConfig::load(config_path);
    if (seed_override) {
      config.seed = *seed_override;
      config.trainer.seed = *seed_override;
    }
    if (offline) config.offline = true;
    if (!provider_kind.empty()) config.provider.kind = provider_kind;
    if (provider_concurrency) config.provider.concurrency = *provider_concurrency;
    if (provider_retries) config.provider.service.max_retries = *provider_retries;
    if (orig_only) config.evaluation.include_adapter = false;
    if (!vectors_path.empty()) {
      config.encoder.kind = "precomputed";
      config.encoder.vectors_path = vectors_path;
    }

    if (pipeline_cmd->parsed()) {
      oki::PipelineReport report = oki::run_pipeline(config);
      for (const oki::StageManifest& m : report.stages) print_manifest(m);
      std::cout << "\n" << report.table;
      return 0;
    }

    for (const std::string& stage : oki::kPipelineStages) {
      if (app.get_subcommand(stage)->parsed()) {
        print_manifest(oki::run_stage(stage, config));
        if (stage == "evaluate") {
          std::cout << "\n" << oki::read_text_file(config.report_text);
        }
        return 0;
      }
    }
    std::cerr << "error: no subcommand selected\n";
    return 1;
  } catch (const oki::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}
