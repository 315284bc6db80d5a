#include "grsaudit/scenario.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "grsaudit/errors.hpp"
#include "grsaudit/rng.hpp"

namespace grsaudit {

std::string user_label(std::size_t index) { return fmt::format("User_{}", index + 1); }
std::string item_label(std::size_t index) { return fmt::format("item_{}", index + 1); }

namespace {

GroupScenario empty_scenario(std::size_t num_users, std::size_t num_items) {
  GroupScenario s;
  s.users.reserve(num_users);
  for (std::size_t u = 0; u < num_users; ++u) s.users.push_back(user_label(u));
  s.items.reserve(num_items);
  for (std::size_t i = 0; i < num_items; ++i) s.items.push_back(item_label(i));
  s.ratings.assign(num_users * num_items, 0);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace

GroupScenario make_scenario(const std::vector<std::vector<int>>& rows, std::string scenario_id,
                            std::uint64_t seed) {
  if (rows.empty() || rows.front().empty()) throw DimensionError("scenario needs at least one user and one item");
  const std::size_t num_items = rows.front().size();
  GroupScenario s = empty_scenario(rows.size(), num_items);
  for (std::size_t u = 0; u < rows.size(); ++u) {
    if (rows[u].size() != num_items) throw DimensionError(fmt::format("row {} has {} ratings, expected {}", u + 1, rows[u].size(), num_items));
    for (std::size_t i = 0; i < num_items; ++i) s.rating(u, i) = rows[u][i];
  }
  s.scenario_id = std::move(scenario_id);
  s.seed = seed;
  validate(s);
  return s;
}

void validate(const GroupScenario& s) {
  if (s.users.empty() || s.items.empty()) throw DimensionError("scenario needs at least one user and one item");
  if (s.ratings.size() != s.users.size() * s.items.size())
    throw DimensionError(fmt::format("rating matrix has {} cells, expected {}x{}", s.ratings.size(), s.users.size(), s.items.size()));
  for (std::size_t u = 0; u < s.users.size(); ++u) {
    if (s.users[u] != user_label(u)) throw ParseError(fmt::format("unexpected user label '{}'", s.users[u]), s.users[u]);
  }
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    if (s.items[i] != item_label(i)) throw ParseError(fmt::format("unexpected item label '{}'", s.items[i]), {}, s.items[i]);
  }
  for (std::size_t u = 0; u < s.users.size(); ++u) {
    for (std::size_t i = 0; i < s.items.size(); ++i) {
      const int r = s.rating(u, i);
      if (r < kMinRating || r > kMaxRating)
        throw ParseError(fmt::format("rating {} out of range at ({}, {})", r, s.users[u], s.items[i]), s.users[u], s.items[i]);
    }
  }
}

GroupScenario generate_scenario(std::size_t num_users, std::size_t num_items, std::uint64_t seed) {
  if (num_users < 2) throw DimensionError(fmt::format("need at least 2 users, got {}", num_users));
  if (num_items < 1) throw DimensionError("need at least 1 item");
  GroupScenario s = empty_scenario(num_users, num_items);
  Rng rng(seed);
  for (int& r : s.ratings) r = rng.uniform_int(kMinRating, kMaxRating);
  s.scenario_id = fmt::format("u{}i{}_{:016x}", num_users, num_items, seed);
  s.seed = seed;
  return s;
}

ScenarioCorpus generate_corpus(const std::vector<std::size_t>& sizes, std::size_t per_size,
                               std::uint64_t master_seed, std::size_t num_users) {
  if (sizes.empty()) throw DimensionError("corpus needs at least one item count");
  if (per_size < 1) throw DimensionError("corpus needs at least one scenario per item count");
  ScenarioCorpus corpus;
  corpus.master_seed = master_seed;
  corpus.scenarios.reserve(sizes.size() * per_size);
  for (std::size_t stratum = 0; stratum < sizes.size(); ++stratum) {
    const std::size_t items = sizes[stratum];
    if (corpus.size_strata.contains(items)) throw DimensionError(fmt::format("duplicate item count {}", items));
    auto& indices = corpus.size_strata[items];
    for (std::size_t n = 0; n < per_size; ++n) {
      GroupScenario s = generate_scenario(num_users, items, derive_seed(master_seed, stratum, n));
      s.scenario_id = fmt::format("s{}_{:04}", items, n);
      indices.push_back(corpus.scenarios.size());
      corpus.scenarios.push_back(std::move(s));
    }
  }
  return corpus;
}

std::string render_table(const GroupScenario& s) {
  std::string out = "user_id";
  for (const auto& item : s.items) {
    out += '\t';
    out += item;
  }
  out += '\n';
  for (std::size_t u = 0; u < s.num_users(); ++u) {
    out += s.users[u];
    for (std::size_t i = 0; i < s.num_items(); ++i) {
      out += '\t';
      out += std::to_string(s.rating(u, i));
    }
    out += '\n';
  }
  return out;
}

GroupScenario parse_table(std::string_view text) {
  std::vector<std::string_view> lines;
  for (auto line : split(text, '\n')) {
    line = strip_cr(line);
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw ParseError("empty table");

  const auto header = split(lines.front(), '\t');
  if (header.front() != "user_id") throw ParseError("header must start with 'user_id'");
  if (header.size() < 2) throw ParseError("header lists no items");
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i] != item_label(i - 1))
      throw ParseError(fmt::format("header column {} is '{}', expected '{}'", i, header[i], item_label(i - 1)), {},
                       std::string(header[i]));
  }
  const std::size_t num_items = header.size() - 1;
  const std::size_t num_users = lines.size() - 1;
  if (num_users == 0) throw ParseError("table has no user rows");

  GroupScenario s = empty_scenario(num_users, num_items);
  for (std::size_t u = 0; u < num_users; ++u) {
    const auto cells = split(lines[u + 1], '\t');
    const std::string row = cells.empty() ? std::string() : std::string(cells.front());
    if (row != user_label(u)) throw ParseError(fmt::format("row {} is '{}', expected '{}'", u + 1, row, user_label(u)), row);
    if (cells.size() != num_items + 1)
      throw ParseError(fmt::format("row {} has {} ratings, expected {}", row, cells.size() - 1, num_items), row);
    for (std::size_t i = 0; i < num_items; ++i) {
      const auto cell = cells[i + 1];
      int value = 0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size())
        throw ParseError(fmt::format("non-integer rating '{}' at ({}, {})", cell, row, s.items[i]), row, s.items[i]);
      if (value < kMinRating || value > kMaxRating)
        throw ParseError(fmt::format("rating {} out of range at ({}, {})", value, row, s.items[i]), row, s.items[i]);
      s.rating(u, i) = value;
    }
  }
  s.scenario_id = "parsed";
  return s;
}

std::uint64_t fingerprint(const GroupScenario& s) { return fnv1a(render_table(s), fnv1a(s.scenario_id)); }

void to_json(nlohmann::json& j, const GroupScenario& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t u = 0; u < s.num_users(); ++u) {
    std::vector<int> row(s.ratings.begin() + static_cast<std::ptrdiff_t>(u * s.num_items()),
                         s.ratings.begin() + static_cast<std::ptrdiff_t>((u + 1) * s.num_items()));
    rows.push_back(std::move(row));
  }
  j = nlohmann::json{{"scenario_id", s.scenario_id}, {"users", s.users}, {"items", s.items},
                     {"ratings", std::move(rows)}, {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, GroupScenario& s) {
  const auto rows = j.at("ratings").get<std::vector<std::vector<int>>>();
  s = make_scenario(rows, j.at("scenario_id").get<std::string>(), j.value<std::uint64_t>("seed", 0));
  if (j.at("users").get<std::vector<std::string>>() != s.users || j.at("items").get<std::vector<std::string>>() != s.items)
    throw ParseError("labels do not match the rating matrix");
}

void write_corpus(const ScenarioCorpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  nlohmann::json manifest{{"master_seed", corpus.master_seed}, {"scenarios", nlohmann::json::array()}};
  nlohmann::json sizes = nlohmann::json::array();
  for (const auto& [items, indices] : corpus.size_strata) {
    sizes.push_back({{"items", items}, {"count", indices.size()}});
    fs::create_directories(dir / std::to_string(items));
  }
  manifest["sizes"] = std::move(sizes);
  for (const auto& s : corpus.scenarios) {
    const fs::path rel = fs::path(std::to_string(s.num_items())) / (s.scenario_id + ".json");
    std::ofstream out(dir / rel);
    if (!out) throw Error(fmt::format("cannot write {}", (dir / rel).string()));
    out << nlohmann::json(s).dump() << '\n';
    manifest["scenarios"].push_back({{"scenario_id", s.scenario_id},
                                     {"items", s.num_items()},
                                     {"users", s.num_users()},
                                     {"seed", s.seed},
                                     {"fingerprint", fmt::format("{:016x}", fingerprint(s))},
                                     {"path", rel.generic_string()}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error(fmt::format("cannot write {}", (dir / "manifest.json").string()));
  out << manifest.dump(2) << '\n';
}

ScenarioCorpus read_corpus(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error(fmt::format("no corpus manifest in {}", dir.string()));
  const auto manifest = nlohmann::json::parse(in);
  ScenarioCorpus corpus;
  corpus.master_seed = manifest.at("master_seed").get<std::uint64_t>();
  for (const auto& entry : manifest.at("scenarios")) {
    const auto path = dir / entry.at("path").get<std::string>();
    std::ifstream file(path);
    if (!file) throw Error(fmt::format("missing scenario file {}", path.string()));
    auto s = nlohmann::json::parse(file).get<GroupScenario>();
    corpus.size_strata[s.num_items()].push_back(corpus.scenarios.size());
    corpus.scenarios.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace grsaudit
