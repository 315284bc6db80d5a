#include "grsaudit/harness.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_set>

#include <fmt/core.h>

#include "grsaudit/errors.hpp"
#include "grsaudit/explain.hpp"
#include "grsaudit/rng.hpp"

namespace grsaudit {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  if (corpus.sizes.empty()) throw ConfigError("corpus.sizes is empty");
  if (corpus.per_size < 1) throw ConfigError("corpus.per_size must be at least 1");
  if (corpus.num_users < 2) throw ConfigError("corpus.num_users must be at least 2");
  if (generators.empty()) throw ConfigError("at least one generator is required");
  if (strategies.empty()) throw ConfigError("at least one strategy is required");
  if (k < 1) throw ConfigError("k must be at least 1");
  const auto smallest = *std::min_element(corpus.sizes.begin(), corpus.sizes.end());
  if (k > smallest) throw ConfigError(fmt::format("k = {} exceeds the smallest item count {}", k, smallest));
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be at least 1");
  std::unordered_set<std::string> seen;
  for (const auto& g : generators) {
    parse_generator(g);
    if (!seen.insert(g).second) throw ConfigError(fmt::format("generator '{}' listed twice", g));
  }
}

void to_json(json& j, const ExperimentConfig& c) {
  std::vector<std::string> strategies;
  for (const auto& s : c.strategies) strategies.push_back(s.name());
  json endpoint{{"base_url", c.endpoint.base_url},
                {"model", c.endpoint.model},
                {"timeout_seconds", c.endpoint.timeout_seconds},
                {"retries", c.endpoint.retries},
                {"backoff_ms", c.endpoint.backoff.count()}};
  endpoint["temperature"] = c.endpoint.temperature ? json(*c.endpoint.temperature) : json(nullptr);
  j = json{{"corpus",
            {{"sizes", c.corpus.sizes},
             {"per_size", c.corpus.per_size},
             {"master_seed", c.corpus.master_seed},
             {"num_users", c.corpus.num_users}}},
           {"generators", c.generators},
           {"strategies", strategies},
           {"k", c.k},
           {"ruleset", c.ruleset.string()},
           {"output_dir", c.output_dir.string()},
           {"replay_dir", c.replay_dir.string()},
           {"gain", std::string(to_string(c.gain))},
           {"endpoint", std::move(endpoint)},
           {"max_in_flight", c.max_in_flight}};
}

void from_json(const json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  if (j.contains("corpus")) {
    const auto& cj = j["corpus"];
    c.corpus.sizes = cj.value("sizes", c.corpus.sizes);
    c.corpus.per_size = cj.value("per_size", c.corpus.per_size);
    c.corpus.master_seed = cj.value("master_seed", c.corpus.master_seed);
    c.corpus.num_users = cj.value("num_users", c.corpus.num_users);
  }
  c.generators = j.value("generators", c.generators);
  if (j.contains("strategies")) {
    c.strategies.clear();
    for (const auto& s : j["strategies"]) c.strategies.push_back(StrategyKind::parse(s.get<std::string>()));
  }
  c.k = j.value("k", c.k);
  c.ruleset = j.value("ruleset", std::string());
  c.output_dir = j.value("output_dir", c.output_dir.string());
  c.replay_dir = j.value("replay_dir", std::string());
  if (j.contains("gain")) c.gain = parse_gain_mode(j["gain"].get<std::string>());
  if (j.contains("endpoint")) {
    const auto& e = j["endpoint"];
    c.endpoint.base_url = e.value("base_url", c.endpoint.base_url);
    c.endpoint.model = e.value("model", c.endpoint.model);
    if (e.contains("temperature") && !e["temperature"].is_null()) c.endpoint.temperature = e["temperature"].get<double>();
    c.endpoint.timeout_seconds = e.value("timeout_seconds", c.endpoint.timeout_seconds);
    c.endpoint.retries = e.value("retries", c.endpoint.retries);
    c.endpoint.backoff = std::chrono::milliseconds(e.value("backoff_ms", c.endpoint.backoff.count()));
  }
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
  try {
    const auto j = json::parse(in);
    // A run manifest carries its config under "config".
    if (j.is_object() && j.contains("config") && j["config"].is_object() && !j.contains("generators"))
      return j["config"].get<ExperimentConfig>();
    return j.get<ExperimentConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("malformed config {}: {}", path.string(), e.what()));
  }
}

GeneratorSpec parse_generator(const std::string& name) {
  GeneratorSpec spec;
  spec.name = name;
  if (name == "random") {
    spec.kind = GeneratorKind::kRandom;
  } else if (name.starts_with("synthetic:")) {
    spec.kind = GeneratorKind::kSynthetic;
    spec.strategy = StrategyKind::parse(name.substr(10));
  } else if (name.starts_with("llm:") && name.size() > 4) {
    spec.kind = GeneratorKind::kEndpoint;
    spec.model = name.substr(4);
  } else {
    throw ConfigError(fmt::format("unknown generator '{}' (expected random, synthetic:<STRATEGY> or llm:<model>)", name));
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Persistence helpers

namespace {

std::string unit_key(const std::string& scenario_id, const std::string& generator) {
  return scenario_id + '\x1f' + generator;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot read {}", path.string()));
  return json::parse(in);
}

void write_labels(const fs::path& corpus_dir, const StructureClassification& c) {
  auto manifest = read_json(corpus_dir / "manifest.json");
  json labels = json::array();
  for (const auto& l : c.labels) {
    labels.push_back({{"scenario_id", l.scenario_id},
                      {"normalized_distance", l.normalized_distance},
                      {"label", std::string(to_string(l.label))}});
  }
  manifest["labels"] = std::move(labels);
  manifest["structure"] = {{"mean", c.stats.mean},
                           {"stddev", c.stats.stddev},
                           {"low", c.stats.mean - c.stats.stddev},
                           {"high", c.stats.mean + c.stats.stddev},
                           {"uniform", c.count(StructureClass::kUniform)},
                           {"intermediate", c.count(StructureClass::kIntermediate)},
                           {"divergent", c.count(StructureClass::kDivergent)}};
  write_json(corpus_dir / "manifest.json", manifest);
}

std::uint64_t corpus_fingerprint(const ScenarioCorpus& corpus) {
  std::uint64_t h = fnv1a("corpus");
  for (const auto& s : corpus.scenarios) h = mix64(h ^ fingerprint(s));
  return h;
}

// Parsed contents of results.jsonl, restricted to the given scenarios and
// generators and ordered by (scenario order, generator order).
struct Collected {
  std::vector<EvalRecord> records;
  std::vector<FailureRecord> failures;
  std::vector<VerdictRecord> verdicts;
  std::unordered_set<std::string> done;
};

Collected collect(const fs::path& results_path, const std::vector<std::string>& scenario_order,
                  const std::vector<std::string>& generator_order) {
  std::unordered_map<std::string, json> units;
  std::ifstream in(results_path);
  std::string line;
  while (in && std::getline(in, line)) {
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("scenario_id") || !j.contains("generator")) continue;
    auto key = unit_key(j["scenario_id"].get<std::string>(), j["generator"].get<std::string>());
    units[std::move(key)] = std::move(j);
  }
  Collected out;
  for (const auto& sid : scenario_order) {
    for (const auto& g : generator_order) {
      const auto key = unit_key(sid, g);
      const auto it = units.find(key);
      if (it == units.end()) continue;
      const auto& u = it->second;
      out.done.insert(key);
      if (u.at("status").get<std::string>() == "failed") {
        out.failures.push_back({sid, g, u.at("item_count").get<std::size_t>(), u.value("reason", std::string())});
        continue;
      }
      for (const auto& r : u.at("records")) out.records.push_back(r.get<EvalRecord>());
      if (u.contains("verdict") && !u["verdict"].is_null()) {
        out.verdicts.push_back({sid, g, u.at("item_count").get<std::size_t>(),
                                parse_structure_class(u.value("structure", std::string("intermediate"))),
                                u["verdict"].get<ExplanationVerdict>()});
      }
    }
  }
  return out;
}

RuleSet ruleset_for(const ExperimentConfig& config) {
  if (config.ruleset.empty()) return default_ruleset();
  return load_ruleset(config.ruleset);
}

}  // namespace

StructureClassification label_corpus(const fs::path& corpus_dir) {
  const auto corpus = read_corpus(corpus_dir);
  auto classification = classify_corpus(corpus);
  write_labels(corpus_dir, classification);
  return classification;
}

// ---------------------------------------------------------------------------
// Running

RunArtifact run_experiment(const ExperimentConfig& config, RunMode mode) {
  config.validate();
  const auto started = timestamp();
  const RuleSet rules = ruleset_for(config);
  validate(rules);

  const fs::path out_dir = config.output_dir;
  const fs::path corpus_dir = out_dir / "corpus";
  fs::create_directories(out_dir);

  const auto corpus = generate_corpus(config.corpus.sizes, config.corpus.per_size, config.corpus.master_seed,
                                      config.corpus.num_users);
  if (fs::exists(corpus_dir / "manifest.json")) {
    if (corpus_fingerprint(read_corpus(corpus_dir)) != corpus_fingerprint(corpus))
      throw ConfigError(fmt::format("{} holds a corpus from different settings; use a fresh output directory", corpus_dir.string()));
  } else {
    write_corpus(corpus, corpus_dir);
  }
  auto structure = classify_corpus(corpus);
  write_labels(corpus_dir, structure);
  std::unordered_map<std::string, const GroupStructureLabel*> label_of;
  std::unordered_map<std::string, StructureClass> labels;
  for (const auto& l : structure.labels) {
    label_of[l.scenario_id] = &l;
    labels[l.scenario_id] = l.label;
  }

  std::vector<GeneratorSpec> specs;
  for (const auto& g : config.generators) specs.push_back(parse_generator(g));
  std::vector<std::string> scenario_order;
  for (const auto& s : corpus.scenarios) scenario_order.push_back(s.scenario_id);

  const fs::path results_path = out_dir / "results.jsonl";
  const auto already = collect(results_path, scenario_order, config.generators).done;

  struct WorkItem {
    std::size_t scenario;
    std::size_t generator;
  };
  std::vector<WorkItem> work;
  bool needs_endpoint = false;
  for (std::size_t i = 0; i < corpus.scenarios.size(); ++i) {
    for (std::size_t g = 0; g < specs.size(); ++g) {
      if (already.contains(unit_key(corpus.scenarios[i].scenario_id, specs[g].name))) continue;
      work.push_back({i, g});
      needs_endpoint = needs_endpoint || specs[g].kind == GeneratorKind::kEndpoint;
    }
  }

  ReplayStore store(config.replay_path());
  std::mutex write_mutex;
  std::ofstream results(results_path, std::ios::app);
  if (!results) throw Error(fmt::format("cannot append to {}", results_path.string()));
  std::vector<std::string> missing;

  auto evaluate = [&](const WorkItem& w) -> std::optional<json> {
    const auto& s = corpus.scenarios[w.scenario];
    const auto& spec = specs[w.generator];
    const auto* structure_label = label_of.at(s.scenario_id);

    GeneratorResponse response;
    if (spec.kind == GeneratorKind::kRandom) {
      response.recommendation = random_recommendation(s, config.k, derive_seed(s.seed, fnv1a(spec.name)));
      response.status = ParseStatus::kOk;
    } else {
      std::string raw;
      if (spec.kind == GeneratorKind::kSynthetic) {
        raw = synthetic_generator(s, spec.strategy, config.k, s.seed % kSyntheticTemplates);
      } else if (auto cached = store.lookup(spec.model, s.scenario_id)) {
        raw = std::move(*cached);
      } else if (mode == RunMode::kReplay) {
        std::lock_guard lock(write_mutex);
        missing.push_back(fmt::format("{} / {} (not in replay store)", s.scenario_id, spec.name));
        return std::nullopt;
      } else {
        EndpointConfig endpoint = config.endpoint;
        endpoint.model = spec.model;
        try {
          const auto reply = query_endpoint(endpoint, build_prompt(s, config.k));
          fmt::print(stderr, "[endpoint] {} {} attempts={} latency_ms={:.0f}\n", spec.model, s.scenario_id, reply.attempts,
                     reply.latency_ms);
          store.append(spec.model, s.scenario_id, reply.text);
          raw = reply.text;
        } catch (const TransportError& e) {
          std::lock_guard lock(write_mutex);
          missing.push_back(fmt::format("{} / {} ({})", s.scenario_id, spec.name, e.what()));
          return std::nullopt;
        }
      }
      response = parse_response(raw, s, config.k);
    }

    json unit{{"scenario_id", s.scenario_id},
              {"generator", spec.name},
              {"item_count", s.num_items()},
              {"structure", std::string(to_string(structure_label->label))},
              {"status", std::string(to_string(response.status))},
              {"reason", response.reason},
              {"items", response.recommendation.items()},
              {"explanation", response.explanation}};
    json records = json::array();
    json warnings = json::array();
    if (response.status != ParseStatus::kFailed) {
      for (const auto& strategy : config.strategies) {
        try {
          EvalRecord r;
          r.scenario_id = s.scenario_id;
          r.generator = spec.name;
          r.strategy = strategy;
          r.ndcg = ndcg_at_k(response.recommendation, Reference::from_strategy(s, strategy), config.k, config.gain);
          r.item_count = s.num_items();
          r.structure = structure_label->label;
          r.normalized_distance = structure_label->normalized_distance;
          records.push_back(r);
        } catch (const DegenerateError& e) {
          warnings.push_back(fmt::format("{}: {}", strategy.name(), e.what()));
        }
      }
    }
    unit["records"] = std::move(records);
    if (!warnings.empty()) unit["warnings"] = std::move(warnings);
    unit["verdict"] = response.status != ParseStatus::kFailed && !response.explanation.empty()
                          ? json(classify_explanation(response.explanation, rules))
                          : json(nullptr);
    return unit;
  };

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> computed{0};
  std::exception_ptr first_error;
  auto worker = [&] {
    while (true) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= work.size()) return;
      try {
        if (auto unit = evaluate(work[idx])) {
          const auto line = unit->dump();
          std::lock_guard lock(write_mutex);
          results << line << '\n';
          results.flush();
          ++computed;
        }
      } catch (...) {
        std::lock_guard lock(write_mutex);
        if (!first_error) first_error = std::current_exception();
        next = work.size();
      }
    }
  };
  const std::size_t threads = needs_endpoint ? std::min(config.max_in_flight, std::max<std::size_t>(work.size(), 1)) : 1;
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  results.close();
  if (first_error) std::rethrow_exception(first_error);

  auto collected = collect(results_path, scenario_order, config.generators);

  RunArtifact artifact;
  artifact.computed_units = computed;
  artifact.structure = std::move(structure);
  artifact.records = std::move(collected.records);
  artifact.failures = std::move(collected.failures);
  artifact.verdicts = std::move(collected.verdicts);

  json manifest{{"config", config},
                {"ruleset", config.ruleset.empty() ? std::string("default") : config.ruleset.string()},
                {"corpus",
                 {{"dir", "corpus"},
                  {"scenarios", corpus.scenarios.size()},
                  {"fingerprint", fmt::format("{:016x}", corpus_fingerprint(corpus))}}},
                {"structure",
                 {{"mean", artifact.structure.stats.mean},
                  {"stddev", artifact.structure.stats.stddev},
                  {"uniform", artifact.structure.count(StructureClass::kUniform)},
                  {"intermediate", artifact.structure.count(StructureClass::kIntermediate)},
                  {"divergent", artifact.structure.count(StructureClass::kDivergent)}}},
                {"counts",
                 {{"records", artifact.records.size()},
                  {"failures", artifact.failures.size()},
                  {"verdicts", artifact.verdicts.size()},
                  {"computed_units", artifact.computed_units}}},
                {"started_at", started},
                {"finished_at", timestamp()}};
  manifest["config"]["endpoint"].erase("api_key");
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    manifest["aborted"] = true;
    manifest["missing"] = missing;
    write_json(out_dir / "manifest.json", manifest);
    throw RunAborted(fmt::format("{} responses could not be obtained", missing.size()), missing);
  }
  artifact.manifest = std::move(manifest);
  write_json(out_dir / "manifest.json", artifact.manifest);

  artifact.reports = render_reports(artifact.records, artifact.failures, artifact.verdicts, labels, rules.labels());
  artifact.reports.write(out_dir / "reports");
  return artifact;
}

RunArtifact load_run(const fs::path& output_dir) {
  RunArtifact artifact;
  artifact.manifest = read_json(output_dir / "manifest.json");
  const auto config = artifact.manifest.at("config").get<ExperimentConfig>();
  const RuleSet rules = ruleset_for(config);

  const auto corpus_manifest = read_json(output_dir / "corpus" / "manifest.json");
  std::vector<std::string> scenario_order;
  for (const auto& s : corpus_manifest.at("scenarios")) scenario_order.push_back(s.at("scenario_id").get<std::string>());
  std::unordered_map<std::string, StructureClass> labels;
  for (const auto& l : corpus_manifest.value("labels", json::array())) {
    auto label = l.get<GroupStructureLabel>();
    labels[label.scenario_id] = label.label;
    artifact.structure.labels.push_back(std::move(label));
  }
  if (corpus_manifest.contains("structure")) {
    artifact.structure.stats = {corpus_manifest["structure"].value("mean", 0.0), corpus_manifest["structure"].value("stddev", 0.0)};
  }

  auto collected = collect(output_dir / "results.jsonl", scenario_order, config.generators);
  artifact.records = std::move(collected.records);
  artifact.failures = std::move(collected.failures);
  artifact.verdicts = std::move(collected.verdicts);
  artifact.reports = render_reports(artifact.records, artifact.failures, artifact.verdicts, labels, rules.labels());
  return artifact;
}

}  // namespace grsaudit
