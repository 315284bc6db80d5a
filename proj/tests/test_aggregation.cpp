#include <doctest.h>

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "grsaudit/aggregation.hpp"
#include "grsaudit/errors.hpp"
#include "grsaudit/rng.hpp"
#include "oracles.hpp"

using namespace grsaudit;

namespace {

GroupScenario s1() { return make_scenario({{10, 50, 90}, {30, 40, 20}}, "S1"); }

std::vector<std::string> labels(const RankedList& l) { return l.items(); }

}  // namespace

TEST_CASE("strategy_scores on S1") {
  const auto s = s1();
  CHECK(strategy_scores(s, StrategyKind::add()) == std::vector<double>{40, 90, 110});
  CHECK(strategy_scores(s, StrategyKind::lms()) == std::vector<double>{10, 40, 20});
  CHECK(strategy_scores(s, StrategyKind::mpl()) == std::vector<double>{30, 50, 90});
  CHECK(strategy_scores(s, StrategyKind::app(50)) == std::vector<double>{0, 1, 1});
}

TEST_CASE("approval threshold is inclusive") {
  const auto s = make_scenario({{49, 50, 51}, {50, 50, 50}});
  CHECK(strategy_scores(s, StrategyKind::app(50)) == std::vector<double>{1, 2, 2});
}

TEST_CASE("aggregate on S1") {
  const auto s = s1();
  CHECK(labels(aggregate(s, StrategyKind::add(), 3)) == std::vector<std::string>{"item_3", "item_2", "item_1"});
  CHECK(labels(aggregate(s, StrategyKind::app(50), 3)) == std::vector<std::string>{"item_2", "item_3", "item_1"});
  const auto top1 = aggregate(s, StrategyKind::lms(), 1);
  REQUIRE(top1.entries.size() == 1);
  CHECK(top1.entries[0] == RankedEntry{"item_2", 40});
  // k beyond I keeps every item once
  CHECK(aggregate(s, StrategyKind::add(), 10).entries.size() == 3);
  CHECK_THROWS_AS(aggregate(s, StrategyKind::add(), 0), DimensionError);
}

TEST_CASE("unanimous groups make every strategy agree") {
  const std::vector<int> row{5, 80, 80, 12, 99, 0, 45};
  const auto s = make_scenario({row, row, row});
  std::vector<std::size_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return row[a] > row[b]; });
  std::vector<std::string> expected;
  for (auto i : idx) expected.push_back(item_label(i));
  for (const auto& strategy : {StrategyKind::add(), StrategyKind::mpl(), StrategyKind::lms()}) {
    CHECK(labels(aggregate(s, strategy, row.size())) == expected);
  }
}

TEST_CASE("strategy names round trip") {
  for (const auto& s : standard_strategies()) CHECK(StrategyKind::parse(s.name()) == s);
  CHECK(StrategyKind::parse("app").threshold == 50);
  CHECK(StrategyKind::parse("APP(37.5)").threshold == 37.5);
  CHECK(StrategyKind::app(37.5).name() == "APP(37.5)");
  CHECK_THROWS_AS(StrategyKind::parse("BORDA"), ConfigError);
  CHECK_THROWS_AS(StrategyKind::parse("APP(x)"), ConfigError);
}

TEST_CASE("random_recommendation") {
  const auto s = s1();
  const auto a = random_recommendation(s, 3, 5);
  auto items = labels(a);
  std::sort(items.begin(), items.end());
  CHECK(items == std::vector<std::string>{"item_1", "item_2", "item_3"});
  CHECK(random_recommendation(s, 3, 5) == a);
  for (const auto& e : a.entries) CHECK(e.score == 0.0);
  CHECK_THROWS_AS(random_recommendation(s, 4, 5), DimensionError);
}

TEST_CASE("random_recommendation inclusion frequency is 10/25") {
  const auto s = generate_scenario(4, 25, 1);
  std::vector<std::size_t> hits(25, 0);
  const std::size_t draws = 10000;
  for (std::uint64_t seed = 0; seed < draws; ++seed) {
    for (const auto& e : random_recommendation(s, 10, seed).entries) ++hits[std::stoul(e.item.substr(5)) - 1];
  }
  for (auto h : hits) CHECK(std::abs(static_cast<double>(h) / draws - 0.40) < 0.02);
}

TEST_CASE("relabeling invariance") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = generate_scenario(3, 12, rng.next());
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    // new item j holds old item perm[j]
    std::vector<std::vector<int>> rows(3, std::vector<int>(12));
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t j = 0; j < 12; ++j) rows[u][j] = s.rating(u, perm[j]);
    const auto t = make_scenario(rows);
    for (const auto& strategy : standard_strategies()) {
      const auto old_scores = strategy_scores(s, strategy);
      const auto new_scores = strategy_scores(t, strategy);
      for (std::size_t j = 0; j < 12; ++j) CHECK(new_scores[j] == old_scores[perm[j]]);
      // The ranking of scores is the same multiset; order differs only within ties.
      const auto ranked = aggregate(t, strategy, 12);
      for (std::size_t p = 0; p < 12; ++p) {
        const auto j = std::stoul(ranked.entries[p].item.substr(5)) - 1;
        CHECK(ranked.entries[p].score == old_scores[perm[j]]);
      }
      std::vector<double> sorted_old = old_scores;
      std::sort(sorted_old.rbegin(), sorted_old.rend());
      for (std::size_t p = 0; p < 12; ++p) CHECK(ranked.entries[p].score == sorted_old[p]);
    }
  }
}

TEST_CASE("monotonicity of scores in a single rating") {
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    auto s = generate_scenario(4, 10, rng.next());
    const auto u = rng.below(4), i = rng.below(10);
    if (s.rating(u, i) == 100) continue;
    auto t = s;
    t.rating(u, i) = s.rating(u, i) + rng.uniform_int(1, 100 - s.rating(u, i));
    for (const auto& strategy : {StrategyKind::add(), StrategyKind::mpl(), StrategyKind::lms(), StrategyKind::app(50),
                                 StrategyKind::app(80)}) {
      CHECK(strategy_scores(t, strategy)[i] >= strategy_scores(s, strategy)[i]);
    }
  }
}

TEST_CASE("affine maps preserve every strategy's ordering") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = generate_scenario(4, 15, rng.next());
    const int a = rng.uniform_int(1, 5);
    const int b = rng.uniform_int(-50, 50);
    // Scores are computed on the mapped matrix directly (it may leave [0,100]).
    std::vector<std::vector<int>> mapped(4, std::vector<int>(15));
    for (std::size_t u = 0; u < 4; ++u)
      for (std::size_t i = 0; i < 15; ++i) mapped[u][i] = a * s.rating(u, i) + b;
    for (auto [rule, t] : {std::pair{oracle::Rule::kAdd, 0.0}, std::pair{oracle::Rule::kMpl, 0.0},
                           std::pair{oracle::Rule::kLms, 0.0}, std::pair{oracle::Rule::kApp, 50.0}}) {
      std::vector<double> mapped_scores;
      for (std::size_t i = 0; i < 15; ++i) mapped_scores.push_back(oracle::item_score(mapped, i, rule, a * t + b));
      const auto kind = rule == oracle::Rule::kAdd   ? StrategyKind::add()
                        : rule == oracle::Rule::kMpl ? StrategyKind::mpl()
                        : rule == oracle::Rule::kLms ? StrategyKind::lms()
                                                     : StrategyKind::app(t);
      CHECK(rank_order(mapped_scores) == rank_order(strategy_scores(s, kind)));
    }
  }
}

TEST_CASE("aggregate matches the brute-force oracle on small scenarios") {
  Rng rng(99);
  std::size_t cases = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    const auto users = static_cast<std::size_t>(rng.uniform_int(2, 3));
    const auto items = static_cast<std::size_t>(rng.uniform_int(1, 6));
    std::vector<std::vector<int>> rows(users, std::vector<int>(items));
    for (auto& row : rows)
      for (auto& r : row) r = rng.uniform_int(0, 4);
    const auto s = make_scenario(rows);
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, 6));
    for (auto [rule, kind] : {std::pair{oracle::Rule::kAdd, StrategyKind::add()}, std::pair{oracle::Rule::kMpl, StrategyKind::mpl()},
                              std::pair{oracle::Rule::kLms, StrategyKind::lms()}, std::pair{oracle::Rule::kApp, StrategyKind::app(2)}}) {
      const auto expected = oracle::top_k(rows, rule, 2, k);
      const auto got = aggregate(s, kind, k);
      REQUIRE(got.entries.size() == expected.size());
      for (std::size_t p = 0; p < expected.size(); ++p) CHECK(got.entries[p].item == item_label(expected[p]));
      ++cases;
    }
  }
  CHECK(cases == 20000);
}

TEST_CASE("ranked list JSON") {
  const auto list = aggregate(s1(), StrategyKind::add(), 3);
  const nlohmann::json j = list;
  CHECK(j.at("items") == nlohmann::json::array({"item_3", "item_2", "item_1"}));
  CHECK(j.at("scores") == nlohmann::json::array({110.0, 90.0, 40.0}));
  CHECK(j.at("source") == "strategy:ADD");
  CHECK(j.get<RankedList>() == list);
}
