#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fake_endpoint.hpp"
#include "grsaudit/errors.hpp"
#include "grsaudit/explain.hpp"
#include "grsaudit/llm.hpp"
#include "grsaudit/rng.hpp"

using namespace grsaudit;

namespace {

GroupScenario s1() { return make_scenario({{10, 50, 90}, {30, 40, 20}}, "S1"); }

// Scenario id embedded in a prompt is not available, so fake servers answer
// from the table itself.
GroupScenario scenario_from_prompt(const std::string& prompt) {
  const auto open = prompt.find(kScenarioOpenTag);
  const auto close = prompt.find(kScenarioCloseTag);
  return parse_table(std::string_view(prompt).substr(open + kScenarioOpenTag.size(), close - open - kScenarioOpenTag.size()));
}

EndpointConfig config_for(const FakeEndpoint& server) {
  EndpointConfig c;
  c.base_url = server.base_url();
  c.model = "fake-model";
  c.retries = 2;
  c.backoff = std::chrono::milliseconds(1);
  c.timeout_seconds = 5;
  return c;
}

}  // namespace

TEST_CASE("build_prompt") {
  const auto p = build_prompt(s1(), 3);
  CHECK(p.full_text.find("You are an expert in making and explaining group recommendations") != std::string::npos);
  CHECK(p.full_text.find("When referring to items, use item_value") != std::string::npos);
  CHECK(p.scenario_block.find("User_1\t10\t50\t90") != std::string::npos);
  CHECK(p.scenario_block.starts_with(kScenarioOpenTag));
  CHECK(p.full_text.find(p.scenario_block) != std::string::npos);
  CHECK(p.format_instructions.find("recommendation") != std::string::npos);
  CHECK(p.format_instructions.find("explanation") != std::string::npos);
  const auto q = build_prompt(generate_scenario(4, 25, 1), 3);
  CHECK(p.system_text == q.system_text);
  CHECK(p.format_instructions == q.format_instructions);
  CHECK(build_prompt(s1(), 3).full_text == p.full_text);
  CHECK(scenario_from_prompt(p.full_text).ratings == s1().ratings);
}

TEST_CASE("parse_response examples") {
  const auto s = s1();
  auto r = parse_response(R"({"recommendation": ["item_3","item_2","item_1"], "explanation": "Averaged ratings."})", s, 3);
  CHECK(r.status == ParseStatus::kOk);
  CHECK(r.recommendation.items() == std::vector<std::string>{"item_3", "item_2", "item_1"});
  CHECK(r.explanation == "Averaged ratings.");

  r = parse_response(R"(Sure! Here is the answer: {"recommendation": ["Item 2","item_3","item_1"], "explanation": "..."})", s, 3);
  CHECK(r.status == ParseStatus::kOk);
  CHECK(r.recommendation.items() == std::vector<std::string>{"item_2", "item_3", "item_1"});

  r = parse_response(R"({"recommendation": ["item_1","item_1","item_2"], "explanation": "..."})", s, 3);
  CHECK(r.status == ParseStatus::kFailed);
  CHECK(r.reason == "duplicate_item");
}

TEST_CASE("parse_response failure and repair modes") {
  const auto s = s1();
  auto reason = [&](std::string_view text, std::size_t k = 2) {
    const auto r = parse_response(text, s, k);
    return std::string(to_string(r.status)) + ":" + r.reason;
  };
  CHECK(reason("no json here") == "failed:no_object");
  CHECK(reason("{broken") == "failed:no_object");
  CHECK(reason(R"({"items": ["item_1"], "explanation": "x"})") == "failed:missing_key");
  CHECK(reason(R"({"recommendation": ["item_1", "item_9"], "explanation": "x"})") == "failed:unknown_item");
  CHECK(reason(R"({"recommendation": ["item_1", "banana"], "explanation": "x"})") == "failed:bad_item");
  CHECK(reason(R"({"recommendation": ["item_1"], "explanation": "x"})") == "failed:too_few_items");
  CHECK(reason(R"({"recommendation": ["item_1", "item_2"], "explanation": "  "})") == "failed:empty_explanation");
  CHECK(reason(R"({"recommendation": ["item_1", "item_2", "item_3"], "explanation": "x"})") == "repaired:truncated");
  CHECK(reason(R"({"recommendation": "item_1, item_3", "explanation": "x"})") == "repaired:list_from_string");
  // first balanced object that parses wins; braces inside strings do not confuse the scan
  CHECK(reason(R"(note {not json} then {"recommendation": ["item_1","item_2"], "explanation": "a {b} c"})") == "ok:");
}

TEST_CASE("parse_response is total") {
  Rng rng(6);
  const auto s = s1();
  const std::string alphabet = "{}[]\":, item_123abcIt\n\\";
  for (int n = 0; n < 3000; ++n) {
    std::string text;
    const auto len = rng.below(60);
    for (std::size_t i = 0; i < len; ++i) text += alphabet[rng.below(alphabet.size())];
    GeneratorResponse r;
    CHECK_NOTHROW(r = parse_response(text, s, 2));
    if (r.status != ParseStatus::kFailed) CHECK(r.recommendation.entries.size() == 2);
  }
}

TEST_CASE("normalize_item_label") {
  CHECK(normalize_item_label("Item 3") == "item_3");
  CHECK(normalize_item_label("item3") == "item_3");
  CHECK(normalize_item_label("ITEM_03") == "item_3");
  CHECK(normalize_item_label("item_12") == "item_12");
  CHECK(!normalize_item_label("apple"));
  CHECK(!normalize_item_label("item_"));
  CHECK(!normalize_item_label("item_0"));
}

TEST_CASE("synthetic generator examples") {
  const auto s = s1();
  const auto add = parse_response(synthetic_generator(s, StrategyKind::add(), 3), s, 3);
  CHECK(add.status == ParseStatus::kOk);
  CHECK(add.recommendation.items() == std::vector<std::string>{"item_3", "item_2", "item_1"});
  CHECK(classify_explanation(add.explanation, default_ruleset()).labels.contains("average"));
  const auto app = parse_response(synthetic_generator(s, StrategyKind::app(50), 3), s, 3);
  CHECK(app.recommendation.items() == std::vector<std::string>{"item_2", "item_3", "item_1"});
  CHECK(app.explanation.find("above 50") != std::string::npos);
  const auto thresholds = extract_thresholds(app.explanation, default_ruleset());
  REQUIRE(!thresholds.empty());
  CHECK(thresholds[0].value == 50);
}

TEST_CASE("oracle closure over random scenarios and both templates") {
  Rng rng(31);
  for (int n = 0; n < 100; ++n) {
    const auto s = generate_scenario(4, 25, rng.next());
    for (const auto& strategy : standard_strategies()) {
      for (std::size_t t = 0; t < kSyntheticTemplates; ++t) {
        const auto r = parse_response(synthetic_generator(s, strategy, 10, t), s, 10);
        REQUIRE(r.status == ParseStatus::kOk);
        CHECK(r.recommendation.items() == aggregate(s, strategy, 10).items());
      }
    }
  }
}

TEST_CASE("query_endpoint against a local server") {
  SUBCASE("success") {
    FakeEndpoint server([](const std::string& prompt, int) {
      return std::pair{200, synthetic_generator(scenario_from_prompt(prompt), StrategyKind::add(), 3)};
    });
    const auto reply = query_endpoint(config_for(server), build_prompt(s1(), 3));
    CHECK(reply.attempts == 1);
    CHECK(server.last_model() == "fake-model");
    CHECK(parse_response(reply.text, s1(), 3).status == ParseStatus::kOk);
  }
  SUBCASE("retries transient errors") {
    FakeEndpoint server([](const std::string&, int call) {
      return call < 3 ? std::pair{503, std::string("busy")} : std::pair{200, std::string("{}")};
    });
    const auto reply = query_endpoint(config_for(server), build_prompt(s1(), 3));
    CHECK(reply.attempts == 3);
    CHECK(reply.text == "{}");
  }
  SUBCASE("exhausted retries carry the last status") {
    FakeEndpoint server([](const std::string&, int) { return std::pair{500, std::string("down")}; });
    try {
      query_endpoint(config_for(server), build_prompt(s1(), 3));
      FAIL("expected TransportError");
    } catch (const TransportError& e) {
      CHECK(e.last_status == 500);
    }
    CHECK(server.calls() == 3);
  }
  SUBCASE("client errors are not retried") {
    FakeEndpoint server([](const std::string&, int) { return std::pair{404, std::string("no such model")}; });
    CHECK_THROWS_AS(query_endpoint(config_for(server), build_prompt(s1(), 3)), TransportError);
    CHECK(server.calls() == 1);
  }
  SUBCASE("unreachable endpoint") {
    EndpointConfig c;
    c.base_url = "http://127.0.0.1:1/v1";
    c.model = "m";
    c.retries = 0;
    c.timeout_seconds = 1;
    CHECK_THROWS_AS(query_endpoint(c, build_prompt(s1(), 3)), TransportError);
  }
  CHECK_THROWS_AS(query_endpoint(EndpointConfig{}, build_prompt(s1(), 3)), ConfigError);
}

TEST_CASE("ReplayStore") {
  const auto dir = std::filesystem::temp_directory_path() / "grsaudit_replay_test";
  std::filesystem::remove_all(dir);
  {
    ReplayStore store(dir);
    CHECK(store.size() == 0);
    store.append("llama3:8b", "s25_0000", "first");
    store.append("llama3:8b", "s25_0001", "line\nbreak");
    CHECK(store.lookup("llama3:8b", "s25_0000") == "first");
  }
  // torn trailing line is skipped on reload
  for (const auto& entry : std::filesystem::directory_iterator(dir)) std::ofstream(entry.path(), std::ios::app) << "{\"scenario";
  ReplayStore reloaded(dir);
  CHECK(reloaded.size() == 2);
  CHECK(reloaded.lookup("llama3:8b", "s25_0001") == "line\nbreak");
  CHECK(!reloaded.lookup("other", "s25_0001"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("endpoint config reads the environment") {
  setenv("GRSAUDIT_MODEL", "env-model", 1);
  setenv("GRSAUDIT_RETRIES", "5", 1);
  EndpointConfig c;
  c.apply_env();
  CHECK(c.model == "env-model");
  CHECK(c.retries == 5);
  unsetenv("GRSAUDIT_MODEL");
  unsetenv("GRSAUDIT_RETRIES");
}
