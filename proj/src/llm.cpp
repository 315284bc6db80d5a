#include "grsaudit/llm.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <thread>
#include <unordered_set>

#include <fmt/core.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "grsaudit/errors.hpp"

namespace grsaudit {

namespace {

constexpr std::string_view kGoal =
    "You are an expert in making and explaining group recommendations based on the knowledge base provided below.";
constexpr std::string_view kDataDescription =
    "The information includes users (user_id) and information on items they like (item_x). The rating is a scale "
    "from 0 to 100. When referring to items, use item_value.";

}  // namespace

PromptBundle build_prompt(const GroupScenario& scenario, std::size_t k) {
  PromptBundle p;
  p.system_text = fmt::format("{}\n{}", kGoal, kDataDescription);
  p.scenario_block = fmt::format("{}\n{}{}", kScenarioOpenTag, render_table(scenario), kScenarioCloseTag);
  p.format_instructions = fmt::format(
      "Recommend the top {0} items for the whole group. Only return a JSON object containing the keys "
      "\"recommendation\" (a list of the top {0} item_x labels, best first) and \"explanation\" (an explanation and "
      "example of your recommendation procedure, which someone with no knowledge of recommender systems could "
      "understand). Do not add any text outside the JSON object.",
      k);
  p.full_text = fmt::format("{}\n\n{}\n\n{}", p.system_text, p.scenario_block, p.format_instructions);
  return p;
}

// ---------------------------------------------------------------------------
// Endpoint client

void EndpointConfig::apply_env() {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
  };
  try {
    if (auto v = env("GRSAUDIT_ENDPOINT_URL")) base_url = *v;
    if (auto v = env("GRSAUDIT_MODEL")) model = *v;
    if (auto v = env("GRSAUDIT_TEMPERATURE")) temperature = std::stod(*v);
    if (auto v = env("GRSAUDIT_TIMEOUT")) timeout_seconds = std::stod(*v);
    if (auto v = env("GRSAUDIT_RETRIES")) retries = std::stoi(*v);
    if (auto v = env("GRSAUDIT_API_KEY")) api_key = *v;
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("bad endpoint environment override: {}", e.what()));
  }
}

namespace {

// Splits "http://host:port/prefix" into ("http://host:port", "/prefix").
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError(fmt::format("endpoint URL '{}' has no scheme", url));
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string path = url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, path_start), path};
}

std::string extract_completion_text(const nlohmann::json& body) {
  if (body.contains("choices") && body["choices"].is_array() && !body["choices"].empty()) {
    const auto& choice = body["choices"][0];
    if (choice.contains("message") && choice["message"].contains("content") && choice["message"]["content"].is_string())
      return choice["message"]["content"].get<std::string>();
    if (choice.contains("text") && choice["text"].is_string()) return choice["text"].get<std::string>();
  }
  if (body.contains("message") && body["message"].contains("content") && body["message"]["content"].is_string())
    return body["message"]["content"].get<std::string>();
  if (body.contains("response") && body["response"].is_string()) return body["response"].get<std::string>();
  throw TransportError("completion response carries no message content", 200);
}

bool retryable(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

}  // namespace

EndpointReply query_endpoint(const EndpointConfig& config, const PromptBundle& prompt) {
  if (config.model.empty()) throw ConfigError("endpoint model name is empty");
  const auto [host, prefix] = split_url(config.base_url);

  nlohmann::json request{{"model", config.model},
                         {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt.full_text}}})},
                         {"stream", false}};
  if (config.temperature) request["temperature"] = *config.temperature;
  const std::string body = request.dump();

  httplib::Client client(host);
  const auto timeout = std::chrono::duration<double>(config.timeout_seconds);
  const auto sec = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout - sec);
  client.set_connection_timeout(sec.count(), usec.count());
  client.set_read_timeout(sec.count(), usec.count());
  client.set_write_timeout(sec.count(), usec.count());
  httplib::Headers headers;
  if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);

  auto backoff = config.backoff;
  int last_status = 0;
  std::string last_error;
  const int attempts = std::max(0, config.retries) + 1;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(prefix + "/chat/completions", headers, body, "application/json");
    const double latency = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (!res) {
      last_status = 0;
      last_error = httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      try {
        return {extract_completion_text(nlohmann::json::parse(res->body)), attempt, latency};
      } catch (const nlohmann::json::exception& e) {
        last_status = res->status;
        last_error = fmt::format("unparseable completion body: {}", e.what());
      }
    } else {
      last_status = res->status;
      last_error = fmt::format("HTTP {}", res->status);
      if (!retryable(res->status)) break;
    }
    if (attempt < attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw TransportError(fmt::format("endpoint {} model {} failed: {}", config.base_url, config.model, last_error), last_status);
}

// ---------------------------------------------------------------------------
// Response parsing

std::string_view to_string(ParseStatus status) {
  switch (status) {
    case ParseStatus::kOk: return "ok";
    case ParseStatus::kRepaired: return "repaired";
    case ParseStatus::kFailed: return "failed";
  }
  return "?";
}

std::optional<std::string> normalize_item_label(std::string_view text) {
  std::size_t i = 0;
  auto skip_space = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  skip_space();
  constexpr std::string_view kItem = "item";
  if (text.size() - i < kItem.size()) return std::nullopt;
  for (std::size_t c = 0; c < kItem.size(); ++c) {
    if (std::tolower(static_cast<unsigned char>(text[i + c])) != kItem[c]) return std::nullopt;
  }
  i += kItem.size();
  skip_space();
  if (i < text.size() && (text[i] == '_' || text[i] == '-' || text[i] == '#')) ++i;
  skip_space();
  const std::size_t digits_start = i;
  while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
  if (i == digits_start) return std::nullopt;
  const std::string_view digits = text.substr(digits_start, i - digits_start);
  skip_space();
  if (i != text.size()) return std::nullopt;
  unsigned long long n = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
  if (ec != std::errc() || n == 0) return std::nullopt;
  return fmt::format("item_{}", n);
}

namespace {

// End offset (exclusive) of the balanced {...} starting at `start`, or npos.
std::size_t balanced_object_end(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

std::optional<nlohmann::json> first_json_object(std::string_view text) {
  for (std::size_t pos = text.find('{'); pos != std::string_view::npos; pos = text.find('{', pos + 1)) {
    const auto end = balanced_object_end(text, pos);
    if (end == std::string_view::npos) continue;
    auto parsed = nlohmann::json::parse(text.substr(pos, end - pos), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
  }
  return std::nullopt;
}

GeneratorResponse failed(GeneratorResponse r, std::string reason) {
  r.status = ParseStatus::kFailed;
  r.reason = std::move(reason);
  r.recommendation.entries.clear();
  return r;
}

}  // namespace

GeneratorResponse parse_response(std::string_view raw_text, const GroupScenario& scenario, std::size_t k) {
  GeneratorResponse r;
  r.raw_text = std::string(raw_text);
  r.recommendation.k = k;
  r.recommendation.source = "response";

  const auto object = first_json_object(raw_text);
  if (!object) return failed(std::move(r), "no_object");
  if (!object->contains("recommendation") || !object->contains("explanation")) return failed(std::move(r), "missing_key");

  std::vector<std::string> repairs;
  std::vector<nlohmann::json> raw_items;
  const auto& rec = (*object)["recommendation"];
  if (rec.is_array()) {
    raw_items.assign(rec.begin(), rec.end());
  } else if (rec.is_string()) {
    // "item_1, item_2, ..." instead of a list
    const auto s = rec.get<std::string>();
    std::size_t start = 0;
    while (start <= s.size()) {
      const auto comma = s.find(',', start);
      raw_items.emplace_back(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    repairs.emplace_back("list_from_string");
  } else {
    return failed(std::move(r), "missing_key");
  }

  std::unordered_set<std::string> known(scenario.items.begin(), scenario.items.end());
  std::unordered_set<std::string> seen;
  std::vector<std::string> items;
  for (const auto& raw : raw_items) {
    std::optional<std::string> label;
    if (raw.is_string()) {
      label = normalize_item_label(raw.get<std::string>());
    } else if (raw.is_number_integer() && raw.get<long long>() > 0) {
      label = fmt::format("item_{}", raw.get<long long>());
    } else if (raw.is_object()) {
      for (const char* key : {"item", "item_id", "id", "name"}) {
        if (raw.contains(key) && raw[key].is_string()) {
          label = normalize_item_label(raw[key].get<std::string>());
          if (label) {
            repairs.emplace_back("item_from_object");
            break;
          }
        }
      }
    }
    if (!label) return failed(std::move(r), "bad_item");
    if (!known.contains(*label)) return failed(std::move(r), "unknown_item");
    if (!seen.insert(*label).second) return failed(std::move(r), "duplicate_item");
    items.push_back(std::move(*label));
  }
  if (items.size() < k) return failed(std::move(r), "too_few_items");
  if (items.size() > k) {
    items.resize(k);
    repairs.emplace_back("truncated");
  }

  const auto& expl = (*object)["explanation"];
  if (expl.is_string()) {
    r.explanation = expl.get<std::string>();
  } else if (!expl.is_null()) {
    r.explanation = expl.dump();
    repairs.emplace_back("explanation_not_string");
  }
  if (r.explanation.find_first_not_of(" \t\r\n") == std::string::npos) return failed(std::move(r), "empty_explanation");

  for (auto& item : items) r.recommendation.entries.push_back({std::move(item), 0.0});
  if (repairs.empty()) {
    r.status = ParseStatus::kOk;
  } else {
    r.status = ParseStatus::kRepaired;
    std::sort(repairs.begin(), repairs.end());
    repairs.erase(std::unique(repairs.begin(), repairs.end()), repairs.end());
    for (const auto& rep : repairs) r.reason += (r.reason.empty() ? "" : ",") + rep;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Synthetic generator

namespace {

std::string threshold_text(double t) {
  if (t == static_cast<double>(static_cast<long long>(t))) return std::to_string(static_cast<long long>(t));
  return fmt::format("{}", t);
}

}  // namespace

std::string synthetic_explanation(const StrategyKind& strategy, std::size_t k, std::size_t template_id) {
  const bool alt = template_id % kSyntheticTemplates == 1;
  switch (strategy.rule) {
    case StrategyKind::Rule::kAdd:
      return alt ? fmt::format("I added up the ratings every member gave to each item and picked the {} items with "
                               "the largest sum. Ranking by this sum is the same as ranking by the average rating.",
                               k)
                 : fmt::format("For every item I averaged the ratings of all group members and recommended the {} "
                               "items with the highest average. For example, an item rated 80, 60, 70 and 90 gets an "
                               "average of 75.",
                               k);
    case StrategyKind::Rule::kMpl:
      return alt ? fmt::format("I used the most pleasure strategy: an item's score is the maximum rating any member "
                               "gave it, so the {} items that someone loves the most come first.",
                               k)
                 : fmt::format("For each item I looked at the highest rating given by any single group member (most "
                               "pleasure) and recommended the {} items where that peak is largest.",
                               k);
    case StrategyKind::Rule::kLms:
      return alt ? fmt::format("I applied least misery: each item is scored by its minimum rating across the group, "
                               "and the {} items whose worst score is best were chosen.",
                               k)
                 : fmt::format("For each item I took the lowest rating given by any group member (least misery) and "
                               "recommended the {} items where that rating is as high as possible, so nobody is left "
                               "unhappy.",
                               k);
    case StrategyKind::Rule::kApp:
      return alt ? fmt::format("A member approves of an item when their rating is {} or higher. I recommended the {} "
                               "items with the most approvals (approval voting).",
                               threshold_text(strategy.threshold), k)
                 : fmt::format("I counted how many group members rated each item at or above {} (approval voting) "
                               "and recommended the {} items approved by the largest number of members.",
                               threshold_text(strategy.threshold), k);
  }
  return {};
}

std::string synthetic_generator(const GroupScenario& scenario, const StrategyKind& strategy, std::size_t k,
                                std::size_t template_id) {
  const auto list = aggregate(scenario, strategy, k);
  const bool alt = template_id % kSyntheticTemplates == 1;
  nlohmann::json items = nlohmann::json::array();
  for (const auto& e : list.entries) {
    if (alt) {
      items.push_back("Item " + e.item.substr(e.item.find('_') + 1));
    } else {
      items.push_back(e.item);
    }
  }
  const nlohmann::json answer{{"recommendation", std::move(items)},
                              {"explanation", synthetic_explanation(strategy, k, template_id)}};
  if (alt) return fmt::format("Sure! Here is the group recommendation:\n```json\n{}\n```\n", answer.dump(2));
  return answer.dump();
}

// ---------------------------------------------------------------------------
// Replay store

namespace {

std::string sanitize(std::string_view model) {
  std::string out;
  for (char c : model) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
  return out.empty() ? "model" : out;
}

}  // namespace

ReplayStore::ReplayStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir_)) return;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) continue;  // torn final line after a crash
      entries_[{j.value("model", ""), j.value("scenario_id", "")}] = j.value("raw_text", "");
    }
  }
}

std::optional<std::string> ReplayStore::lookup(std::string_view model, std::string_view scenario_id) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find({std::string(model), std::string(scenario_id)});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ReplayStore::append(const std::string& model, const std::string& scenario_id, const std::string& raw_text) {
  std::lock_guard lock(mutex_);
  std::filesystem::create_directories(dir_);
  std::ofstream out(file_for(model), std::ios::app);
  if (!out) throw Error(fmt::format("cannot append to replay store {}", file_for(model).string()));
  out << nlohmann::json{{"scenario_id", scenario_id}, {"model", model}, {"raw_text", raw_text}}.dump() << '\n';
  out.flush();
  entries_[{model, scenario_id}] = raw_text;
}

std::size_t ReplayStore::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::filesystem::path ReplayStore::file_for(std::string_view model) const { return dir_ / (sanitize(model) + ".jsonl"); }

}  // namespace grsaudit
