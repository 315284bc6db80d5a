#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grsaudit/aggregation.hpp"
#include "grsaudit/llm.hpp"
#include "grsaudit/metrics.hpp"
#include "grsaudit/report.hpp"
#include "grsaudit/structure.hpp"

namespace grsaudit {

struct CorpusSettings {
  std::vector<std::size_t> sizes{25, 50, 75};
  std::size_t per_size = 500;
  std::uint64_t master_seed = 1;
  std::size_t num_users = 4;
};

// Generators: "random", "synthetic:<STRATEGY>" (e.g. "synthetic:APP(50)"), or
// "llm:<model>" for a model served by `endpoint`.
struct ExperimentConfig {
  CorpusSettings corpus;
  std::vector<std::string> generators{"random"};
  std::vector<StrategyKind> strategies = standard_strategies();
  std::size_t k = kDefaultTopK;
  std::filesystem::path ruleset;  // empty: built-in default
  std::filesystem::path output_dir = "run";
  std::filesystem::path replay_dir;  // empty: <output_dir>/replay
  GainMode gain = GainMode::kTopKHits;
  EndpointConfig endpoint;
  std::size_t max_in_flight = 4;

  // Throws ConfigError.
  void validate() const;
  std::filesystem::path replay_path() const { return replay_dir.empty() ? output_dir / "replay" : replay_dir; }
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
// Missing fields keep their defaults.
void from_json(const nlohmann::json& j, ExperimentConfig& c);
// Accepts a config file or a run manifest.json.
ExperimentConfig load_config(const std::filesystem::path& path);

enum class GeneratorKind { kRandom, kSynthetic, kEndpoint };

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::kRandom;
  std::string name;        // as configured
  StrategyKind strategy;   // kSynthetic
  std::string model;       // kEndpoint
};

GeneratorSpec parse_generator(const std::string& name);

enum class RunMode {
  kLive,    // endpoint generators use the replay store as a cache and query on a miss
  kReplay,  // endpoint generators are served from the replay store only
};

struct RunArtifact {
  nlohmann::json manifest;
  std::vector<EvalRecord> records;
  std::vector<FailureRecord> failures;
  std::vector<VerdictRecord> verdicts;
  StructureClassification structure;
  ReportSet reports;
  std::size_t computed_units = 0;  // (scenario, generator) pairs evaluated by this call
};

// Runs every (scenario, generator) pair not yet in <output_dir>/results.jsonl,
// appending one line per pair, then rewrites the manifest and reports from the
// full results file. Throws RunAborted, after persisting everything that did
// succeed, when endpoint responses could not be obtained.
RunArtifact run_experiment(const ExperimentConfig& config, RunMode mode = RunMode::kLive);

// Re-renders reports from a finished run directory without computing anything.
RunArtifact load_run(const std::filesystem::path& output_dir);

// Adds {"scenario_id", "normalized_distance", "label"} entries and the pooled
// statistics to <corpus_dir>/manifest.json.
StructureClassification label_corpus(const std::filesystem::path& corpus_dir);

}  // namespace grsaudit
