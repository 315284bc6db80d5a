#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "grsaudit/errors.hpp"
#include "grsaudit/explain.hpp"
#include "grsaudit/harness.hpp"
#include "grsaudit/scenario.hpp"
#include "grsaudit/structure.hpp"

using namespace grsaudit;

namespace {

constexpr int kExitError = 1;
constexpr int kExitAborted = 2;

// Flags shared by `run` and `replay`; each one overrides the config file.
struct RunFlags {
  std::string config;
  std::vector<std::size_t> sizes;
  std::optional<std::size_t> per_size;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> users;
  std::vector<std::string> generators;
  std::vector<std::string> strategies;
  std::optional<std::size_t> k;
  std::optional<std::string> ruleset;
  std::optional<std::string> out;
  std::optional<std::string> replay_dir;
  std::optional<std::string> gain;
  std::optional<std::string> endpoint_url;
  std::optional<double> temperature;
  std::optional<double> timeout;
  std::optional<int> retries;
  std::optional<std::size_t> max_in_flight;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "JSON experiment config")->check(CLI::ExistingFile);
    app->add_option("--sizes", sizes, "item counts, e.g. 25,50,75")->delimiter(',');
    app->add_option("--per-size", per_size, "scenarios per item count");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--users", users, "users per group");
    app->add_option("--generators", generators, "random, synthetic:<STRATEGY>, llm:<model>")->delimiter(',');
    app->add_option("--strategies", strategies, "ADD, MPL, LMS, APP(<t>)")->delimiter(',');
    app->add_option("-k", k, "recommendation length");
    app->add_option("--ruleset", ruleset, "explanation ruleset JSON");
    app->add_option("-o,--out", out, "run directory");
    app->add_option("--replay-dir", replay_dir, "replay store directory (default <out>/replay)");
    app->add_option("--gain", gain, "NDCG gain: topk_hits or linear");
    app->add_option("--endpoint-url", endpoint_url, "chat-completion base URL, e.g. http://localhost:11434/v1");
    app->add_option("--temperature", temperature, "sampling temperature");
    app->add_option("--timeout", timeout, "per-request timeout in seconds");
    app->add_option("--retries", retries, "extra attempts per request");
    app->add_option("--max-in-flight", max_in_flight, "concurrent endpoint requests");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c = config.empty() ? ExperimentConfig{} : load_config(config);
    c.endpoint.apply_env();
    if (!sizes.empty()) c.corpus.sizes = sizes;
    if (per_size) c.corpus.per_size = *per_size;
    if (seed) c.corpus.master_seed = *seed;
    if (users) c.corpus.num_users = *users;
    if (!generators.empty()) c.generators = generators;
    if (!strategies.empty()) {
      c.strategies.clear();
      for (const auto& s : strategies) c.strategies.push_back(StrategyKind::parse(s));
    }
    if (k) c.k = *k;
    if (ruleset) c.ruleset = *ruleset;
    if (out) c.output_dir = *out;
    if (replay_dir) c.replay_dir = *replay_dir;
    if (gain) c.gain = parse_gain_mode(*gain);
    if (endpoint_url) c.endpoint.base_url = *endpoint_url;
    if (temperature) c.endpoint.temperature = *temperature;
    if (timeout) c.endpoint.timeout_seconds = *timeout;
    if (retries) c.endpoint.retries = *retries;
    if (max_in_flight) c.max_in_flight = *max_in_flight;
    return c;
  }
};

void print_run_summary(const RunArtifact& a) {
  fmt::print("computed {} new (scenario, generator) pairs; {} records, {} failures, {} explanations\n",
             a.computed_units, a.records.size(), a.failures.size(), a.verdicts.size());
  fmt::print("structure: {} uniform, {} intermediate, {} divergent\n", a.structure.count(StructureClass::kUniform),
             a.structure.count(StructureClass::kIntermediate), a.structure.count(StructureClass::kDivergent));
  const auto it = a.reports.files.find("ndcg_by_strategy.md");
  if (it != a.reports.files.end()) fmt::print("\n{}", it->second);
  for (const auto& w : a.reports.warnings) fmt::print(stderr, "warning: {}\n", w);
}

int run(const RunFlags& flags, RunMode mode) {
  const auto config = flags.resolve();
  try {
    const auto artifact = run_experiment(config, mode);
    print_run_summary(artifact);
    fmt::print("\nreports written to {}\n", (config.output_dir / "reports").string());
    return EXIT_SUCCESS;
  } catch (const RunAborted& e) {
    fmt::print(stderr, "run aborted: {}\n", e.what());
    for (const auto& key : e.missing_keys) fmt::print(stderr, "  missing: {}\n", key);
    return kExitAborted;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit group recommendations against social choice aggregation strategies"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-corpus", "generate a seeded scenario corpus");
  std::vector<std::size_t> sizes{25, 50, 75};
  std::size_t per_size = 500, users = 4;
  std::uint64_t seed = 1;
  std::string corpus_out;
  gen->add_option("--sizes", sizes, "item counts")->delimiter(',');
  gen->add_option("--per-size", per_size, "scenarios per item count");
  gen->add_option("--seed", seed, "master seed");
  gen->add_option("--users", users, "users per group");
  gen->add_option("-o,--out", corpus_out, "corpus directory")->required();

  auto* classify = app.add_subcommand("classify-structure", "label corpus groups uniform/intermediate/divergent");
  std::string corpus_dir;
  classify->add_option("corpus", corpus_dir, "corpus directory")->required()->check(CLI::ExistingDirectory);

  RunFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "run an experiment (queries endpoints for responses not in the replay store)");
  run_flags.attach(run_cmd);
  RunFlags replay_flags;
  auto* replay_cmd = app.add_subcommand("replay", "run an experiment offline from the replay store");
  replay_flags.attach(replay_cmd);

  auto* report = app.add_subcommand("report", "re-render reports of a run directory");
  std::string run_dir, report_out;
  report->add_option("run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("-o,--out", report_out, "report directory (default <run>/reports)");

  auto* ruleset_cmd = app.add_subcommand("validate-ruleset", "check an explanation ruleset");
  std::string ruleset_path, fixtures_path;
  bool print_default = false;
  ruleset_cmd->add_option("ruleset", ruleset_path, "ruleset JSON (default: built-in)");
  ruleset_cmd->add_option("--fixtures", fixtures_path, "JSON lines of {text, gold_labels}; prints per-label kappa")
      ->check(CLI::ExistingFile);
  ruleset_cmd->add_flag("--print-default", print_default, "print the built-in ruleset as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto corpus = generate_corpus(sizes, per_size, seed, users);
      write_corpus(corpus, corpus_out);
      fmt::print("wrote {} scenarios to {}\n", corpus.scenarios.size(), corpus_out);
    } else if (*classify) {
      const auto c = label_corpus(corpus_dir);
      fmt::print("mean {:.4f} sd {:.4f} (thresholds {:.4f} / {:.4f})\n", c.stats.mean, c.stats.stddev,
                 c.stats.mean - c.stats.stddev, c.stats.mean + c.stats.stddev);
      fmt::print("uniform {}  intermediate {}  divergent {}\n", c.count(StructureClass::kUniform),
                 c.count(StructureClass::kIntermediate), c.count(StructureClass::kDivergent));
    } else if (*run_cmd) {
      return run(run_flags, RunMode::kLive);
    } else if (*replay_cmd) {
      return run(replay_flags, RunMode::kReplay);
    } else if (*report) {
      const auto artifact = load_run(run_dir);
      const std::filesystem::path dir = report_out.empty() ? std::filesystem::path(run_dir) / "reports" : std::filesystem::path(report_out);
      artifact.reports.write(dir);
      print_run_summary(artifact);
      fmt::print("\nreports written to {}\n", dir.string());
    } else if (*ruleset_cmd) {
      if (print_default) {
        fmt::print("{}\n", nlohmann::json(default_ruleset()).dump(2));
        return EXIT_SUCCESS;
      }
      const RuleSet rules = ruleset_path.empty() ? default_ruleset() : load_ruleset(ruleset_path);
      validate(rules);
      std::size_t phrases = 0;
      for (const auto& c : rules.categories) phrases += c.keyphrases.size();
      fmt::print("ok: {} categories, {} keyphrases, {} negation cues, {} threshold phrases\n", rules.categories.size(),
                 phrases, rules.negation_cues.size(), rules.threshold_phrases.size());
      if (!fixtures_path.empty()) {
        const auto fixtures = load_fixtures(fixtures_path);
        std::vector<std::set<std::string>> gold, predicted;
        for (const auto& f : fixtures) {
          gold.push_back(f.gold_labels);
          predicted.push_back(classify_explanation(f.text, rules).labels);
        }
        for (const auto& label : rules.labels()) {
          try {
            fmt::print("{:<22} kappa {:.3f}\n", label, cohens_kappa(predicted, gold, label));
          } catch (const DegenerateError&) {
            fmt::print("{:<22} kappa undefined (label never or always present)\n", label);
          }
        }
      }
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitError;
  }
  return EXIT_SUCCESS;
}
