#include "grsaudit/aggregation.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <numeric>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "grsaudit/errors.hpp"
#include "grsaudit/rng.hpp"

namespace grsaudit {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string format_threshold(double t) {
  if (t == static_cast<double>(static_cast<long long>(t))) return std::to_string(static_cast<long long>(t));
  return fmt::format("{}", t);
}

}  // namespace

std::string StrategyKind::name() const {
  switch (rule) {
    case Rule::kAdd: return "ADD";
    case Rule::kMpl: return "MPL";
    case Rule::kLms: return "LMS";
    case Rule::kApp: return fmt::format("APP({})", format_threshold(threshold));
  }
  return "?";
}

StrategyKind StrategyKind::parse(std::string_view text) {
  const std::string s = upper(text);
  if (s == "ADD") return add();
  if (s == "MPL") return mpl();
  if (s == "LMS") return lms();
  if (s == "APP") return app();
  if (s.size() > 5 && s.starts_with("APP(") && s.back() == ')') {
    const std::string_view inner(s.data() + 4, s.size() - 5);
    double t = 0;
    const auto [ptr, ec] = std::from_chars(inner.data(), inner.data() + inner.size(), t);
    if (ec == std::errc() && ptr == inner.data() + inner.size()) return app(t);
  }
  throw ConfigError(fmt::format("unknown strategy '{}'", text));
}

std::vector<StrategyKind> standard_strategies() {
  return {StrategyKind::add(), StrategyKind::mpl(), StrategyKind::lms(), StrategyKind::app()};
}

std::vector<std::string> RankedList::items() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.item);
  return out;
}

std::vector<double> strategy_scores(const GroupScenario& s, const StrategyKind& strategy) {
  std::vector<double> scores(s.num_items(), 0.0);
  for (std::size_t i = 0; i < s.num_items(); ++i) {
    double acc = 0;
    switch (strategy.rule) {
      case StrategyKind::Rule::kAdd:
        for (std::size_t u = 0; u < s.num_users(); ++u) acc += s.rating(u, i);
        break;
      case StrategyKind::Rule::kMpl:
        acc = s.rating(0, i);
        for (std::size_t u = 1; u < s.num_users(); ++u) acc = std::max<double>(acc, s.rating(u, i));
        break;
      case StrategyKind::Rule::kLms:
        acc = s.rating(0, i);
        for (std::size_t u = 1; u < s.num_users(); ++u) acc = std::min<double>(acc, s.rating(u, i));
        break;
      case StrategyKind::Rule::kApp:
        for (std::size_t u = 0; u < s.num_users(); ++u) acc += s.rating(u, i) >= strategy.threshold ? 1 : 0;
        break;
    }
    scores[i] = acc;
  }
  return scores;
}

std::vector<std::size_t> rank_order(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

RankedList aggregate(const GroupScenario& s, const StrategyKind& strategy, std::size_t k) {
  if (k < 1) throw DimensionError("k must be at least 1");
  const auto scores = strategy_scores(s, strategy);
  const auto order = rank_order(scores);
  RankedList list;
  list.k = k;
  list.source = "strategy:" + strategy.name();
  const std::size_t n = std::min(k, order.size());
  list.entries.reserve(n);
  for (std::size_t p = 0; p < n; ++p) list.entries.push_back({s.items[order[p]], scores[order[p]]});
  return list;
}

RankedList random_recommendation(const GroupScenario& s, std::size_t k, std::uint64_t seed) {
  if (k > s.num_items()) throw DimensionError(fmt::format("k = {} exceeds the {} available items", k, s.num_items()));
  std::vector<std::size_t> indices(s.num_items());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(indices));
  RankedList list;
  list.k = k;
  list.source = "random";
  for (std::size_t p = 0; p < k; ++p) list.entries.push_back({s.items[indices[p]], 0.0});
  return list;
}

void to_json(nlohmann::json& j, const RankedList& list) {
  std::vector<double> scores;
  for (const auto& e : list.entries) scores.push_back(e.score);
  j = nlohmann::json{{"source", list.source}, {"items", list.items()}, {"scores", scores}};
}

void from_json(const nlohmann::json& j, RankedList& list) {
  const auto items = j.at("items").get<std::vector<std::string>>();
  const auto scores = j.value("scores", std::vector<double>(items.size(), 0.0));
  if (scores.size() != items.size()) throw ValidationError("ranked list has mismatched items and scores");
  list.source = j.value("source", std::string());
  list.k = items.size();
  list.entries.clear();
  for (std::size_t p = 0; p < items.size(); ++p) list.entries.push_back({items[p], scores[p]});
}

}  // namespace grsaudit
