#include "grsaudit/structure.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "grsaudit/errors.hpp"

namespace grsaudit {

DistanceReport pairwise_distances(const GroupScenario& s) {
  const std::size_t n = s.num_users();
  DistanceReport report;
  report.num_users = n;
  report.pairwise.assign(n * n, 0.0);
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      double sq = 0.0;
      for (std::size_t i = 0; i < s.num_items(); ++i) {
        const double d = s.rating(a, i) - s.rating(b, i);
        sq += d * d;
      }
      const double dist = std::sqrt(sq);
      report.pairwise[a * n + b] = dist;
      report.pairwise[b * n + a] = dist;
      total += dist;
      ++pairs;
    }
  }
  const double max_distance = kMaxRating * std::sqrt(static_cast<double>(s.num_items()));
  report.normalized_distance = pairs == 0 ? 0.0 : total / static_cast<double>(pairs) / max_distance;
  return report;
}

std::string_view to_string(StructureClass c) {
  switch (c) {
    case StructureClass::kUniform: return "uniform";
    case StructureClass::kIntermediate: return "intermediate";
    case StructureClass::kDivergent: return "divergent";
  }
  return "?";
}

StructureClass parse_structure_class(std::string_view text) {
  if (text == "uniform") return StructureClass::kUniform;
  if (text == "intermediate") return StructureClass::kIntermediate;
  if (text == "divergent") return StructureClass::kDivergent;
  throw ValidationError(fmt::format("unknown structure label '{}'", text));
}

std::size_t StructureClassification::count(StructureClass c) const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [c](const auto& l) { return l.label == c; }));
}

StructureClassification classify_corpus(const std::vector<std::pair<std::string, double>>& distances) {
  if (distances.size() < 2) throw DegenerateError("need at least two groups to estimate the distance distribution");
  const double n = static_cast<double>(distances.size());
  double mean = 0.0;
  for (const auto& [id, d] : distances) mean += d;
  mean /= n;
  double ss = 0.0;
  for (const auto& [id, d] : distances) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) throw DegenerateError("all group distances are equal; uniform/divergent split is undefined");

  StructureClassification out;
  out.stats = {mean, sd};
  out.labels.reserve(distances.size());
  for (const auto& [id, d] : distances) {
    GroupStructureLabel label{id, StructureClass::kIntermediate, d, mean - sd, mean + sd};
    if (d < label.low) label.label = StructureClass::kUniform;
    else if (d > label.high) label.label = StructureClass::kDivergent;
    out.labels.push_back(std::move(label));
  }
  return out;
}

StructureClassification classify_corpus(const ScenarioCorpus& corpus) {
  std::vector<std::pair<std::string, double>> distances;
  distances.reserve(corpus.scenarios.size());
  for (const auto& s : corpus.scenarios) distances.emplace_back(s.scenario_id, pairwise_distances(s).normalized_distance);
  return classify_corpus(distances);
}

void to_json(nlohmann::json& j, const GroupStructureLabel& l) {
  j = nlohmann::json{{"scenario_id", l.scenario_id},
                     {"normalized_distance", l.normalized_distance},
                     {"label", std::string(to_string(l.label))},
                     {"low", l.low},
                     {"high", l.high}};
}

void from_json(const nlohmann::json& j, GroupStructureLabel& l) {
  l.scenario_id = j.at("scenario_id").get<std::string>();
  l.normalized_distance = j.at("normalized_distance").get<double>();
  l.label = parse_structure_class(j.at("label").get<std::string>());
  l.low = j.value("low", 0.0);
  l.high = j.value("high", 0.0);
}

}  // namespace grsaudit
