#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "grsaudit/scenario.hpp"

namespace grsaudit {

struct DistanceReport {
  std::size_t num_users = 0;
  std::vector<double> pairwise;  // num_users x num_users, row-major
  double normalized_distance = 0.0;

  double at(std::size_t a, std::size_t b) const { return pairwise[a * num_users + b]; }
};

// Euclidean distances between user rating vectors. The normalized distance is
// the mean over user pairs divided by 100 * sqrt(I), the largest distance two
// users can have on the [0, 100] scale, so groups of different sizes compare.
DistanceReport pairwise_distances(const GroupScenario& scenario);

enum class StructureClass { kUniform, kIntermediate, kDivergent };

std::string_view to_string(StructureClass c);
StructureClass parse_structure_class(std::string_view text);

struct GroupStructureLabel {
  std::string scenario_id;
  StructureClass label = StructureClass::kIntermediate;
  double normalized_distance = 0.0;
  double low = 0.0;   // mean - sd
  double high = 0.0;  // mean + sd
};

struct PopulationStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
};

struct StructureClassification {
  PopulationStats stats;
  std::vector<GroupStructureLabel> labels;

  std::size_t count(StructureClass c) const;
};

// Pooled mean/sd over every entry; uniform below mean - sd, divergent above
// mean + sd. Throws DegenerateError for fewer than two entries or zero variance.
StructureClassification classify_corpus(const std::vector<std::pair<std::string, double>>& distances);

StructureClassification classify_corpus(const ScenarioCorpus& corpus);

// {"scenario_id", "normalized_distance", "label"}
void to_json(nlohmann::json& j, const GroupStructureLabel& label);
void from_json(const nlohmann::json& j, GroupStructureLabel& label);

}  // namespace grsaudit
