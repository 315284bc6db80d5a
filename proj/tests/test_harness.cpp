#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fake_endpoint.hpp"
#include "grsaudit/errors.hpp"
#include "grsaudit/harness.hpp"

using namespace grsaudit;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("grsaudit_" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentConfig small_config(const fs::path& dir, std::vector<std::string> generators,
                              std::vector<StrategyKind> strategies, std::size_t per_size = 10) {
  ExperimentConfig c;
  c.corpus.sizes = {25};
  c.corpus.per_size = per_size;
  c.corpus.master_seed = 3;
  c.generators = std::move(generators);
  c.strategies = std::move(strategies);
  c.output_dir = dir;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string label_percent(const std::string& csv, const std::string& generator, const std::string& label) {
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.starts_with(generator + ",") && line.find("," + label + ",") != std::string::npos) {
      const auto after = line.substr(line.find("," + label + ",") + label.size() + 2);
      return after.substr(0, after.find(','));
    }
  }
  return "missing";
}

}  // namespace

TEST_CASE("synthetic generator closes the loop") {
  const auto dir = fresh_dir("harness_synth");
  const auto artifact = run_experiment(small_config(dir, {"synthetic:ADD"}, {StrategyKind::add()}));
  CHECK(artifact.records.size() == 10);
  for (const auto& r : artifact.records) CHECK(r.ndcg == 1.0);
  CHECK(artifact.failures.empty());
  CHECK(label_percent(artifact.reports.files.at("categories_by_items.csv"), "synthetic:ADD", "average") == "100.00");
  CHECK(fs::exists(dir / "reports" / "ndcg_by_strategy.md"));
  CHECK(fs::exists(dir / "corpus" / "25" / "s25_0000.json"));
  fs::remove_all(dir);
}

TEST_CASE("rerun is idempotent and reports are byte-identical") {
  const auto dir = fresh_dir("harness_rerun");
  const auto config = small_config(dir, {"random", "synthetic:LMS"}, standard_strategies(), 20);
  const auto first = run_experiment(config);
  CHECK(first.computed_units == 40);
  CHECK(first.records.size() == 160);
  const auto before = slurp(dir / "reports" / "ndcg_by_strategy.csv");
  const auto results_before = slurp(dir / "results.jsonl");

  const auto second = run_experiment(config);
  CHECK(second.computed_units == 0);
  CHECK(second.records.size() == 160);
  CHECK(slurp(dir / "reports" / "ndcg_by_strategy.csv") == before);
  CHECK(slurp(dir / "results.jsonl") == results_before);

  const auto loaded = load_run(dir);
  CHECK(loaded.reports.files == second.reports.files);
  fs::remove_all(dir);
}

TEST_CASE("interrupted results file resumes") {
  const auto dir = fresh_dir("harness_resume");
  const auto config = small_config(dir, {"random"}, {StrategyKind::add()});
  const auto full = run_experiment(config);
  const auto reports = full.reports.files;
  // keep three units plus a torn fourth line
  std::istringstream in(slurp(dir / "results.jsonl"));
  std::string kept, line;
  for (int n = 0; n < 3 && std::getline(in, line); ++n) kept += line + "\n";
  std::getline(in, line);
  kept += line.substr(0, line.size() / 2);
  std::ofstream(dir / "results.jsonl", std::ios::binary | std::ios::trunc) << kept << "\n";
  const auto resumed = run_experiment(config);
  CHECK(resumed.computed_units == 7);
  CHECK(resumed.records.size() == 10);
  CHECK(resumed.reports.files == reports);
  fs::remove_all(dir);
}

TEST_CASE("a corpus from other settings is refused") {
  const auto dir = fresh_dir("harness_mismatch");
  run_experiment(small_config(dir, {"random"}, {StrategyKind::add()}));
  auto other = small_config(dir, {"random"}, {StrategyKind::add()});
  other.corpus.master_seed = 4;
  CHECK_THROWS_AS(run_experiment(other), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("replay mode aborts and lists the missing keys") {
  const auto dir = fresh_dir("harness_replay_abort");
  auto config = small_config(dir, {"llm:absent-model"}, {StrategyKind::add()}, 3);
  try {
    run_experiment(config, RunMode::kReplay);
    FAIL("expected RunAborted");
  } catch (const RunAborted& e) {
    CHECK(e.missing_keys.size() == 3);
  }
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest.at("aborted") == true);
  fs::remove_all(dir);
}

TEST_CASE("live endpoint run fills the replay store and replays offline") {
  const auto dir = fresh_dir("harness_live");
  const auto replay_dir = fresh_dir("harness_live_replay");
  auto config = small_config(dir, {"llm:fake"}, standard_strategies(), 6);
  config.replay_dir = replay_dir;
  config.endpoint.retries = 0;
  config.endpoint.backoff = std::chrono::milliseconds(1);
  {
    int served = 0;
    FakeEndpoint server([&](const std::string& prompt, int) {
      const auto open = prompt.find("<group_scenario>") + 16;
      const auto s = parse_table(prompt.substr(open, prompt.find("</group_scenario>") - open));
      // every third answer is malformed
      return ++served % 3 == 0 ? std::pair{200, std::string("I cannot answer that.")}
                               : std::pair{200, synthetic_generator(s, StrategyKind::mpl(), 10, 1)};
    });
    config.endpoint.base_url = server.base_url();
    const auto live = run_experiment(config);
    CHECK(server.calls() == 6);
    CHECK(live.failures.size() == 2);
    CHECK(live.records.size() == 16);
    CHECK(ReplayStore(replay_dir).size() == 6);
  }
  const auto live_reports = slurp(dir / "reports" / "ndcg_by_strategy.csv");
  CHECK(live_reports.find("0.3333") != std::string::npos);

  const auto replay_out = fresh_dir("harness_live_replayed");
  config.output_dir = replay_out;
  config.endpoint.base_url = "http://127.0.0.1:1/v1";
  const auto replayed = run_experiment(config, RunMode::kReplay);
  CHECK(replayed.records.size() == 16);
  CHECK(slurp(replay_out / "reports" / "ndcg_by_strategy.csv") == live_reports);
  for (const auto& p : {dir, replay_dir, replay_out}) fs::remove_all(p);
}

TEST_CASE("unreachable endpoint in live mode aborts") {
  const auto dir = fresh_dir("harness_unreachable");
  auto config = small_config(dir, {"llm:m"}, {StrategyKind::add()}, 2);
  config.endpoint.base_url = "http://127.0.0.1:1/v1";
  config.endpoint.retries = 0;
  config.endpoint.timeout_seconds = 1;
  CHECK_THROWS_AS(run_experiment(config), RunAborted);
  fs::remove_all(dir);
}

TEST_CASE("render_reports") {
  EvalRecord u{"u", "g", StrategyKind::add(), 0.9, 25, StructureClass::kUniform, 0.1};
  EvalRecord m{"m", "g", StrategyKind::add(), 0.5, 25, StructureClass::kIntermediate, 0.3};
  const auto a = render_reports({u, m}, {}, {}, {{"u", StructureClass::kUniform}}, default_ruleset().labels());
  REQUIRE(a.warnings.size() == 1);
  CHECK(a.files.at("delta_ndcg.csv").find("g,ADD,25") == std::string::npos);
  CHECK(a.files.at("delta_ndcg.md").find("Omitted") != std::string::npos);
  const auto b = render_reports({m, u}, {}, {}, {{"u", StructureClass::kUniform}}, default_ruleset().labels());
  CHECK(a.files == b.files);
  CHECK(a.files.at("ndcg_by_strategy.csv") == "generator,strategy,item_count,mean_ndcg,n,failures,failure_rate\n"
                                              "g,ADD,25,0.700000,2,0,0.0000\n");
}

TEST_CASE("config validation and JSON") {
  ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  c.k = 30;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.k = 10;
  c.generators.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.generators = {"nonsense"};
  CHECK_THROWS_AS(c.validate(), ConfigError);

  ExperimentConfig d;
  d.generators = {"random", "synthetic:APP(60)", "llm:llama3"};
  d.endpoint.api_key = "secret";
  const nlohmann::json j = d;
  CHECK(j.dump().find("secret") == std::string::npos);
  const auto back = j.get<ExperimentConfig>();
  CHECK(back.generators == d.generators);
  CHECK(parse_generator("synthetic:APP(60)").strategy == StrategyKind::app(60));
  CHECK(parse_generator("llm:llama3").model == "llama3");
}

TEST_CASE("load_config reads a run manifest") {
  const auto dir = fresh_dir("harness_manifest_config");
  auto config = small_config(dir, {"synthetic:MPL"}, {StrategyKind::mpl()}, 2);
  config.k = 5;
  run_experiment(config);
  const auto back = load_config(dir / "manifest.json");
  CHECK(back.generators == config.generators);
  CHECK(back.k == 5);
  CHECK(back.corpus.per_size == 2);
  fs::remove_all(dir);
}
