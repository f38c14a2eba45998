#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ideaeval/generation.hpp"
#include "ideaeval/io.hpp"
#include "ideaeval/matcher.hpp"

namespace ideaeval::pipeline {

struct MatcherSettings {
  matcher::Backend backend = matcher::Backend::LlmJudge;
  std::string judge_model;  ///< empty: the first generation model
  int judge_max_tokens = 64;
  double embedding_threshold = matcher::kDefaultEmbeddingThreshold;
  double decision_threshold = matcher::kDefaultDecisionThreshold;
  std::optional<std::filesystem::path> labeled_pairs;
  double validation_fraction = 0.3;
};

struct RunConfig {
  std::filesystem::path corpus;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> cache_dir;
  bool offline = false;
  std::uint64_t seed = 0;
  io::Json chat_provider;  ///< see providers::make_chat_provider
  io::Json embedding_provider;  ///< see providers::make_embedding_provider
  io::Json client;  ///< see providers::client_options_from_json
  std::vector<std::string> models;
  generation::TemplateName template_name = generation::TemplateName::Full;
  int max_tokens = 512;
  double temperature = 0.0;
  MatcherSettings matcher;
  double overlap_fraction = 0.20;
  std::optional<std::filesystem::path> humaneval_store;  ///< ratings folded into the report when present
  std::size_t parallelism = 4;
  std::filesystem::path base_dir;  ///< relative paths resolve against this

  /// Structural checks only; credentials are checked when providers are built.
  void validate() const;
};

/// Relative paths in the document resolve against `base_dir`.
RunConfig run_config_from_json(const io::Json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
io::Json to_json(const RunConfig& c);

enum class Stage { Ingest, Strip, Generate, Match, Score };

std::string_view to_string(Stage s) noexcept;
Stage parse_stage(std::string_view s);

struct RunResult {
  std::filesystem::path run_dir;
  std::filesystem::path report_path;  ///< empty unless the score stage ran
  std::vector<Stage> executed;  ///< stages that did work (others were already complete)
};

/// Runs every stage up to and including `last`. Providers (and so credentials)
/// are resolved before any stage starts. A stage whose marker matches the
/// current config and corpus is skipped. Failures surface as StageError; the
/// artifacts of finished stages stay on disk.
RunResult run_pipeline(const RunConfig& config, Stage last = Stage::Score);

/// Published reference numbers carried in the report footer; never recomputed.
io::Json reference_values();

}  // namespace ideaeval::pipeline
