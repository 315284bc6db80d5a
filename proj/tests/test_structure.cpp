#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "grsaudit/errors.hpp"
#include "grsaudit/structure.hpp"

using namespace grsaudit;

TEST_CASE("pairwise_distances examples") {
  SUBCASE("maximal disagreement") {
    const auto d = pairwise_distances(make_scenario({{0, 0}, {100, 100}}));
    CHECK(d.at(0, 1) == doctest::Approx(100.0 * std::sqrt(2.0)));
    CHECK(d.at(1, 0) == d.at(0, 1));
    CHECK(d.at(0, 0) == 0.0);
    CHECK(d.normalized_distance == doctest::Approx(1.0));
  }
  SUBCASE("identical users") {
    CHECK(pairwise_distances(make_scenario({{3, 70, 12}, {3, 70, 12}, {3, 70, 12}})).normalized_distance == 0.0);
  }
  SUBCASE("one differing item") {
    const auto d = pairwise_distances(make_scenario({{0, 0}, {100, 0}}));
    CHECK(d.at(0, 1) == doctest::Approx(100.0));
    CHECK(d.normalized_distance == doctest::Approx(1.0 / std::sqrt(2.0)));
  }
  SUBCASE("mean over all pairs") {
    // pairs: (0,1)=100, (0,2)=0, (1,2)=100 over one item
    const auto d = pairwise_distances(make_scenario({{0}, {100}, {0}}));
    CHECK(d.normalized_distance == doctest::Approx(200.0 / 3.0 / 100.0));
  }
}

TEST_CASE("classify_corpus rejects degenerate populations") {
  CHECK_THROWS_AS(classify_corpus({{"a", 0.3}, {"b", 0.3}, {"c", 0.3}}), DegenerateError);
  CHECK_THROWS_AS(classify_corpus({{"a", 0.3}}), DegenerateError);
}

TEST_CASE("classify_corpus thresholds") {
  // mean 0.5, sample sd 0.1
  const auto c = classify_corpus({{"a", 0.4}, {"b", 0.5}, {"c", 0.6}});
  CHECK(c.stats.mean == doctest::Approx(0.5));
  CHECK(c.stats.stddev == doctest::Approx(0.1));
  // boundaries themselves are intermediate
  for (const auto& l : c.labels) CHECK(l.label == StructureClass::kIntermediate);
  const auto d = classify_corpus({{"lo", 0.0}, {"m1", 0.5}, {"m2", 0.5}, {"m3", 0.5}, {"hi", 1.0}});
  CHECK(d.labels[0].label == StructureClass::kUniform);
  CHECK(d.labels[2].label == StructureClass::kIntermediate);
  CHECK(d.labels[4].label == StructureClass::kDivergent);
  CHECK(d.count(StructureClass::kUniform) == 1);
  CHECK(d.labels[0].low == doctest::Approx(d.stats.mean - d.stats.stddev));
}

TEST_CASE("normal population splits at one sigma") {
  std::mt19937_64 engine(5);
  std::normal_distribution<double> normal(0.4, 0.05);
  std::vector<std::pair<std::string, double>> population;
  for (int n = 0; n < 1000; ++n) population.emplace_back("g" + std::to_string(n), normal(engine));
  const auto c = classify_corpus(population);
  CHECK(std::abs(c.count(StructureClass::kUniform) / 1000.0 - 0.159) < 0.03);
  CHECK(std::abs(c.count(StructureClass::kDivergent) / 1000.0 - 0.159) < 0.03);
}

TEST_CASE("generated corpus lands near the published class counts") {
  const auto c = classify_corpus(generate_corpus({25, 50, 75}, 500, 1));
  CHECK(c.labels.size() == 1500);
  CHECK(c.count(StructureClass::kUniform) >= 200);
  CHECK(c.count(StructureClass::kUniform) <= 280);
  CHECK(c.count(StructureClass::kDivergent) >= 200);
  CHECK(c.count(StructureClass::kDivergent) <= 280);
}

TEST_CASE("structure labels ignore item order") {
  const auto s = generate_scenario(4, 30, 77);
  std::vector<std::vector<int>> reversed(4, std::vector<int>(30));
  for (std::size_t u = 0; u < 4; ++u)
    for (std::size_t i = 0; i < 30; ++i) reversed[u][i] = s.rating(u, 29 - i);
  CHECK(pairwise_distances(make_scenario(reversed)).normalized_distance ==
        doctest::Approx(pairwise_distances(s).normalized_distance).epsilon(1e-12));
}

TEST_CASE("structure class names and JSON") {
  for (auto c : {StructureClass::kUniform, StructureClass::kIntermediate, StructureClass::kDivergent})
    CHECK(parse_structure_class(to_string(c)) == c);
  CHECK_THROWS_AS(parse_structure_class("mixed"), ValidationError);
  const GroupStructureLabel label{"s25_0001", StructureClass::kDivergent, 0.42, 0, 0};
  const nlohmann::json j = label;
  CHECK(j.at("label") == "divergent");
  const auto back = j.get<GroupStructureLabel>();
  CHECK(back.scenario_id == "s25_0001");
  CHECK(back.label == StructureClass::kDivergent);
  CHECK(back.normalized_distance == 0.42);
}
