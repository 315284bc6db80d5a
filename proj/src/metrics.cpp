#include "grsaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "grsaudit/errors.hpp"

namespace grsaudit {

std::string_view to_string(GainMode mode) {
  switch (mode) {
    case GainMode::kLinear: return "linear";
    case GainMode::kTopKHits: return "topk_hits";
  }
  return "?";
}

GainMode parse_gain_mode(std::string_view text) {
  if (text == "linear") return GainMode::kLinear;
  if (text == "topk_hits") return GainMode::kTopKHits;
  throw ConfigError(fmt::format("unknown gain mode '{}' (expected linear or topk_hits)", text));
}

Reference Reference::from_strategy(const GroupScenario& scenario, const StrategyKind& strategy) {
  return {scenario.items, strategy_scores(scenario, strategy)};
}

namespace {

double discount(std::size_t position) { return 1.0 / std::log2(static_cast<double>(position) + 2.0); }

}  // namespace

double ndcg_at_k(const RankedList& candidate, const Reference& reference, std::size_t k, GainMode mode) {
  if (k < 1) throw ValidationError("k must be at least 1");
  if (reference.items.size() != reference.scores.size()) throw ValidationError("reference items and scores differ in length");

  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < reference.items.size(); ++i) index.emplace(reference.items[i], i);

  const std::size_t depth = std::min(k, candidate.entries.size());
  std::vector<std::size_t> picked;
  picked.reserve(depth);
  std::unordered_set<std::size_t> seen;
  for (std::size_t p = 0; p < depth; ++p) {
    const auto it = index.find(candidate.entries[p].item);
    if (it == index.end()) throw ValidationError(fmt::format("unknown item '{}' in candidate list", candidate.entries[p].item));
    if (!seen.insert(it->second).second) throw ValidationError(fmt::format("item '{}' repeated in candidate list", candidate.entries[p].item));
    picked.push_back(it->second);
  }

  const auto order = rank_order(reference.scores);
  const std::size_t ideal_depth = std::min(k, order.size());

  if (mode == GainMode::kLinear) {
    double dcg = 0.0;
    for (std::size_t p = 0; p < picked.size(); ++p) dcg += reference.scores[picked[p]] * discount(p);
    double idcg = 0.0;
    for (std::size_t p = 0; p < ideal_depth; ++p) idcg += reference.scores[order[p]] * discount(p);
    if (!(idcg > 0.0)) throw DegenerateError("ideal DCG is zero; reference gives no item a positive score");
    return dcg / idcg;
  }

  std::vector<bool> relevant(reference.items.size(), false);
  for (std::size_t p = 0; p < ideal_depth; ++p) relevant[order[p]] = true;
  double dcg = 0.0;
  std::size_t hits = 0;
  for (std::size_t p = 0; p < picked.size(); ++p) {
    if (relevant[picked[p]]) {
      dcg += discount(p);
      ++hits;
    }
  }
  if (hits == 0) return 0.0;
  double idcg = 0.0;
  for (std::size_t p = 0; p < hits; ++p) idcg += discount(p);
  return dcg / idcg;
}

void to_json(nlohmann::json& j, const EvalRecord& r) {
  j = nlohmann::json{{"scenario_id", r.scenario_id},
                     {"generator", r.generator},
                     {"strategy", r.strategy.name()},
                     {"ndcg", r.ndcg},
                     {"item_count", r.item_count},
                     {"structure", std::string(to_string(r.structure))},
                     {"normalized_distance", r.normalized_distance}};
}

void from_json(const nlohmann::json& j, EvalRecord& r) {
  r.scenario_id = j.at("scenario_id").get<std::string>();
  r.generator = j.at("generator").get<std::string>();
  r.strategy = StrategyKind::parse(j.at("strategy").get<std::string>());
  r.ndcg = j.at("ndcg").get<double>();
  r.item_count = j.at("item_count").get<std::size_t>();
  r.structure = parse_structure_class(j.at("structure").get<std::string>());
  r.normalized_distance = j.value("normalized_distance", 0.0);
}

void to_json(nlohmann::json& j, const FailureRecord& r) {
  j = nlohmann::json{{"scenario_id", r.scenario_id}, {"generator", r.generator}, {"item_count", r.item_count}, {"reason", r.reason}};
}

void from_json(const nlohmann::json& j, FailureRecord& r) {
  r.scenario_id = j.at("scenario_id").get<std::string>();
  r.generator = j.at("generator").get<std::string>();
  r.item_count = j.at("item_count").get<std::size_t>();
  r.reason = j.at("reason").get<std::string>();
}

SummaryTable summarize(const std::vector<EvalRecord>& records, const std::vector<FailureRecord>& failures) {
  if (records.empty() && failures.empty()) throw ValidationError("nothing to summarize");
  SummaryTable table;
  std::map<SummaryKey, double> sums;
  for (const auto& r : records) {
    SummaryKey key{r.generator, r.strategy, r.item_count};
    sums[key] += r.ndcg;
    ++table[key].count;
  }
  for (auto& [key, cell] : table) cell.mean_ndcg = sums[key] / static_cast<double>(cell.count);

  std::map<std::pair<std::string, std::size_t>, std::size_t> failed;
  for (const auto& f : failures) ++failed[{f.generator, f.item_count}];
  for (auto& [key, cell] : table) {
    const auto it = failed.find({key.generator, key.item_count});
    if (it != failed.end()) cell.failures = it->second;
  }
  // Generators that failed on every scenario of a size still get a row per
  // strategy seen elsewhere in the run.
  std::vector<StrategyKind> strategies;
  for (const auto& [key, cell] : table) {
    if (std::find(strategies.begin(), strategies.end(), key.strategy) == strategies.end()) strategies.push_back(key.strategy);
  }
  for (const auto& [gk, count] : failed) {
    for (const auto& s : strategies) {
      SummaryKey key{gk.first, s, gk.second};
      if (!table.contains(key)) table[key] = SummaryCell{0.0, 0, count};
    }
  }
  return table;
}

DeltaReport delta_ndcg(const std::vector<EvalRecord>& records,
                       const std::unordered_map<std::string, StructureClass>& labels) {
  struct Acc {
    double uniform_sum = 0.0, divergent_sum = 0.0;
    std::size_t uniform = 0, divergent = 0;
  };
  std::map<SummaryKey, Acc> acc;
  for (const auto& r : records) {
    auto& a = acc[{r.generator, r.strategy, r.item_count}];
    const auto it = labels.find(r.scenario_id);
    const StructureClass c = it == labels.end() ? r.structure : it->second;
    if (c == StructureClass::kUniform) {
      a.uniform_sum += r.ndcg;
      ++a.uniform;
    } else if (c == StructureClass::kDivergent) {
      a.divergent_sum += r.ndcg;
      ++a.divergent;
    }
  }
  DeltaReport report;
  for (const auto& [key, a] : acc) {
    if (a.uniform == 0 || a.divergent == 0) {
      report.warnings.push_back(fmt::format("delta omitted for {} / {} / {} items: no {} groups", key.generator,
                                            key.strategy.name(), key.item_count, a.uniform == 0 ? "uniform" : "divergent"));
      continue;
    }
    DeltaEntry e;
    e.key = key;
    e.uniform_mean = a.uniform_sum / static_cast<double>(a.uniform);
    e.divergent_mean = a.divergent_sum / static_cast<double>(a.divergent);
    e.delta = e.uniform_mean - e.divergent_mean;
    e.uniform_count = a.uniform;
    e.divergent_count = a.divergent;
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace grsaudit
