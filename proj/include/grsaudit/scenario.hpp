#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace grsaudit {

inline constexpr int kMinRating = 0;
inline constexpr int kMaxRating = 100;

// One anonymized group: U users rating I items on the integer scale [0, 100].
// Ratings are stored row-major, one row per user.
struct GroupScenario {
  std::string scenario_id;
  std::vector<std::string> users;
  std::vector<std::string> items;
  std::vector<int> ratings;
  std::uint64_t seed = 0;

  std::size_t num_users() const { return users.size(); }
  std::size_t num_items() const { return items.size(); }

  int rating(std::size_t user, std::size_t item) const { return ratings[user * items.size() + item]; }
  int& rating(std::size_t user, std::size_t item) { return ratings[user * items.size() + item]; }

  bool operator==(const GroupScenario&) const = default;
};

std::string user_label(std::size_t index);  // 0-based index -> "User_1"
std::string item_label(std::size_t index);  // 0-based index -> "item_1"

// Builds a scenario from a rating matrix (one row per user), assigning the
// canonical labels. Throws DimensionError on ragged or empty input.
GroupScenario make_scenario(const std::vector<std::vector<int>>& rows, std::string scenario_id = "custom",
                            std::uint64_t seed = 0);

// Throws ParseError/DimensionError when labels, shape or rating bounds are off.
void validate(const GroupScenario& scenario);

GroupScenario generate_scenario(std::size_t num_users, std::size_t num_items, std::uint64_t seed);

struct ScenarioCorpus {
  std::vector<GroupScenario> scenarios;
  // item count -> indices into `scenarios`
  std::map<std::size_t, std::vector<std::size_t>> size_strata;
  std::uint64_t master_seed = 0;
};

// Scenario ids are "s<items>_<index>", e.g. "s25_0007". Child seeds depend only
// on (master_seed, stratum position, scenario index).
ScenarioCorpus generate_corpus(const std::vector<std::size_t>& sizes, std::size_t per_size,
                               std::uint64_t master_seed, std::size_t num_users = 4);

// Tab-separated table: header "user_id\titem_1\t...", then one row per user.
std::string render_table(const GroupScenario& scenario);
GroupScenario parse_table(std::string_view text);

std::uint64_t fingerprint(const GroupScenario& scenario);

void to_json(nlohmann::json& j, const GroupScenario& s);
void from_json(const nlohmann::json& j, GroupScenario& s);

// Layout: <dir>/<size>/<scenario_id>.json plus <dir>/manifest.json.
void write_corpus(const ScenarioCorpus& corpus, const std::filesystem::path& dir);
ScenarioCorpus read_corpus(const std::filesystem::path& dir);

}  // namespace grsaudit
