#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "grsaudit/scenario.hpp"

namespace grsaudit {

inline constexpr int kDefaultApprovalThreshold = 50;
inline constexpr std::size_t kDefaultTopK = 10;

// Social choice aggregation rule. Only APP uses `threshold`
// (a rating counts as approval when rating >= threshold).
struct StrategyKind {
  enum class Rule { kAdd, kMpl, kLms, kApp };

  Rule rule = Rule::kAdd;
  double threshold = kDefaultApprovalThreshold;

  static StrategyKind add() { return {Rule::kAdd, kDefaultApprovalThreshold}; }
  static StrategyKind mpl() { return {Rule::kMpl, kDefaultApprovalThreshold}; }
  static StrategyKind lms() { return {Rule::kLms, kDefaultApprovalThreshold}; }
  static StrategyKind app(double t = kDefaultApprovalThreshold) { return {Rule::kApp, t}; }

  // "ADD", "MPL", "LMS", "APP(50)".
  std::string name() const;
  // Accepts the names above, case-insensitively; bare "APP" uses the default threshold.
  static StrategyKind parse(std::string_view text);

  bool operator==(const StrategyKind& other) const {
    return rule == other.rule && (rule != Rule::kApp || threshold == other.threshold);
  }
};

std::vector<StrategyKind> standard_strategies();  // ADD, MPL, LMS, APP(50)

struct RankedEntry {
  std::string item;
  double score = 0.0;
  bool operator==(const RankedEntry&) const = default;
};

struct RankedList {
  std::vector<RankedEntry> entries;
  std::size_t k = kDefaultTopK;
  std::string source;

  std::vector<std::string> items() const;
  bool operator==(const RankedList&) const = default;
};

// One score per item, indexed like scenario.items.
std::vector<double> strategy_scores(const GroupScenario& scenario, const StrategyKind& strategy);

// Item indices ordered by descending score, ties by ascending index.
std::vector<std::size_t> rank_order(const std::vector<double>& scores);

RankedList aggregate(const GroupScenario& scenario, const StrategyKind& strategy, std::size_t k = kDefaultTopK);

// k distinct items in uniformly random order; scores are 0. Throws DimensionError when k > I.
RankedList random_recommendation(const GroupScenario& scenario, std::size_t k, std::uint64_t seed);

// {"source": ..., "items": [...], "scores": [...]}
void to_json(nlohmann::json& j, const RankedList& list);
void from_json(const nlohmann::json& j, RankedList& list);

}  // namespace grsaudit
