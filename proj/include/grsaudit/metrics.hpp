#pragma once

#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "grsaudit/aggregation.hpp"
#include "grsaudit/structure.hpp"

namespace grsaudit {

// How an NDCG reference turns into gains.
//  kLinear:   gain = reference strategy score; ideal = reference top-k.
//  kTopKHits: gain = 1 for items in the reference top-k, else 0; the ideal is
//             the candidate's own hits moved to the front, and a candidate with
//             no hits scores 0. This reproduces the published random-baseline
//             values and is the scoring default of the experiment harness.
enum class GainMode { kLinear, kTopKHits };

std::string_view to_string(GainMode mode);
GainMode parse_gain_mode(std::string_view text);

// Reference scores for every item of a scenario, in scenario item order.
struct Reference {
  std::vector<std::string> items;
  std::vector<double> scores;

  static Reference from_strategy(const GroupScenario& scenario, const StrategyKind& strategy);
};

// Throws ValidationError for unknown or repeated candidate items and
// DegenerateError when the ideal DCG is zero in kLinear mode.
double ndcg_at_k(const RankedList& candidate, const Reference& reference, std::size_t k,
                 GainMode mode = GainMode::kLinear);

struct EvalRecord {
  std::string scenario_id;
  std::string generator;
  StrategyKind strategy;
  double ndcg = 0.0;
  std::size_t item_count = 0;
  StructureClass structure = StructureClass::kIntermediate;
  double normalized_distance = 0.0;
};

// A (scenario, generator) pair whose response could not be scored.
struct FailureRecord {
  std::string scenario_id;
  std::string generator;
  std::size_t item_count = 0;
  std::string reason;
};

void to_json(nlohmann::json& j, const EvalRecord& r);
void from_json(const nlohmann::json& j, EvalRecord& r);
void to_json(nlohmann::json& j, const FailureRecord& r);
void from_json(const nlohmann::json& j, FailureRecord& r);

// Orders strategies ADD, MPL, LMS, APP (by threshold).
struct StrategyLess {
  bool operator()(const StrategyKind& a, const StrategyKind& b) const {
    return std::tie(a.rule, a.threshold) < std::tie(b.rule, b.threshold);
  }
};

struct SummaryKey {
  std::string generator;
  StrategyKind strategy;
  std::size_t item_count = 0;

  bool operator<(const SummaryKey& o) const {
    if (generator != o.generator) return generator < o.generator;
    if (!(strategy == o.strategy)) return StrategyLess{}(strategy, o.strategy);
    return item_count < o.item_count;
  }
};

struct SummaryCell {
  double mean_ndcg = 0.0;
  std::size_t count = 0;
  std::size_t failures = 0;  // failed (scenario, generator) pairs for this generator and item count
  double failure_rate() const {
    const auto total = count + failures;
    return total == 0 ? 0.0 : static_cast<double>(failures) / static_cast<double>(total);
  }
};

using SummaryTable = std::map<SummaryKey, SummaryCell>;

// Mean NDCG per (generator, strategy, item count). Throws ValidationError on empty input.
SummaryTable summarize(const std::vector<EvalRecord>& records, const std::vector<FailureRecord>& failures = {});

struct DeltaEntry {
  SummaryKey key;
  double delta = 0.0;  // mean(uniform) - mean(divergent)
  double uniform_mean = 0.0;
  double divergent_mean = 0.0;
  std::size_t uniform_count = 0;
  std::size_t divergent_count = 0;
};

struct DeltaReport {
  std::vector<DeltaEntry> entries;
  std::vector<std::string> warnings;  // keys omitted for lack of a class
};

// `labels` maps scenario_id to its structure class; intermediates are ignored.
DeltaReport delta_ndcg(const std::vector<EvalRecord>& records,
                       const std::unordered_map<std::string, StructureClass>& labels);

}  // namespace grsaudit
