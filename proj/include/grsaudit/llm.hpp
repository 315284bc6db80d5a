#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "grsaudit/aggregation.hpp"
#include "grsaudit/scenario.hpp"

namespace grsaudit {

inline constexpr std::string_view kScenarioOpenTag = "<group_scenario>";
inline constexpr std::string_view kScenarioCloseTag = "</group_scenario>";

struct PromptBundle {
  std::string system_text;          // goal and data description
  std::string scenario_block;       // tagged render_table output
  std::string format_instructions;  // output contract
  std::string full_text;
};

PromptBundle build_prompt(const GroupScenario& scenario, std::size_t k = kDefaultTopK);

// Chat-completion style endpoint (OpenAI-compatible, e.g. Ollama's /v1).
struct EndpointConfig {
  std::string base_url = "http://localhost:11434/v1";
  std::string model;
  std::optional<double> temperature;  // unset: whatever the server defaults to
  double timeout_seconds = 120.0;
  int retries = 2;                    // extra attempts after the first
  std::chrono::milliseconds backoff{500};  // doubled after every failed attempt
  std::string api_key;

  // GRSAUDIT_ENDPOINT_URL, GRSAUDIT_MODEL, GRSAUDIT_TEMPERATURE, GRSAUDIT_TIMEOUT,
  // GRSAUDIT_RETRIES and GRSAUDIT_API_KEY replace the matching fields when set.
  void apply_env();
};

struct EndpointReply {
  std::string text;
  int attempts = 0;
  double latency_ms = 0.0;  // of the successful attempt
};

// Throws TransportError once the retry budget is spent; non-retryable HTTP
// statuses (4xx other than 408/429) fail immediately.
EndpointReply query_endpoint(const EndpointConfig& config, const PromptBundle& prompt);

enum class ParseStatus { kOk, kRepaired, kFailed };
std::string_view to_string(ParseStatus status);

struct GeneratorResponse {
  std::string raw_text;
  RankedList recommendation;
  std::string explanation;
  ParseStatus status = ParseStatus::kFailed;
  std::string reason;  // set when failed or repaired
};

// Never throws. Failure reasons: no_object, missing_key, bad_item, unknown_item,
// duplicate_item, too_few_items, empty_explanation.
GeneratorResponse parse_response(std::string_view raw_text, const GroupScenario& scenario, std::size_t k);

// "Item 3", "item3", "ITEM_03" -> "item_3"; nullopt if the text names no item.
std::optional<std::string> normalize_item_label(std::string_view text);

inline constexpr std::size_t kSyntheticTemplates = 2;

// A well-formed answer whose recommendation is aggregate(scenario, strategy, k)
// and whose explanation describes that strategy. Template 1 wraps the JSON in
// prose and a code fence and spells items as "Item N".
std::string synthetic_generator(const GroupScenario& scenario, const StrategyKind& strategy, std::size_t k,
                                std::size_t template_id = 0);

// Explanation text used by synthetic_generator.
std::string synthetic_explanation(const StrategyKind& strategy, std::size_t k, std::size_t template_id);

// Raw model outputs keyed by (model, scenario_id), stored as JSON lines
// {"scenario_id", "model", "raw_text"} in <dir>/<model>.jsonl.
class ReplayStore {
 public:
  explicit ReplayStore(std::filesystem::path dir);

  std::optional<std::string> lookup(std::string_view model, std::string_view scenario_id) const;
  void append(const std::string& model, const std::string& scenario_id, const std::string& raw_text);
  std::size_t size() const;

 private:
  std::filesystem::path file_for(std::string_view model) const;

  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, std::string> entries_;
};

}  // namespace grsaudit
