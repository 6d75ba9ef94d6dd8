#include <cmath>
#include <random>

#include "doctest.h"
#include "loadshift/flexibility.hpp"

using namespace loadshift;

namespace {

const std::vector<double> kThreeZoneFlex = {200, 200, 400};

// Same polytope as the box, but without the closed-form shortcuts.
FlexibilitySet as_general(const FlexibilitySet& box) { return FlexibilitySet(box.T(), box.q()); }

}  // namespace

TEST_SUITE("flexibility") {

TEST_CASE("box with balance at low flexibility") {
  const auto set = FlexibilitySet::box_with_balance(0.25, kThreeZoneFlex);
  CHECK(set.dimension() == 3);
  CHECK(set.alpha() == 0.25);
  REQUIRE(set.box_bounds());
  CHECK(*set.box_bounds() == std::vector<double>{50, 50, 100});
  CHECK(set.contains(std::vector<double>{50, 50, -100}));
  CHECK(set.contains(std::vector<double>{-48, -48, 96}));
  CHECK_FALSE(set.contains(std::vector<double>{51, 49, -100}));
  CHECK_FALSE(set.contains(std::vector<double>{10, 0, 0}));

  const auto ranges = set.coordinate_ranges();
  CHECK(ranges[0].first == -50);
  CHECK(ranges[0].second == 50);
  CHECK(ranges[2].second == 100);
  CHECK(set.free_dimension() == 2);

  const auto verts = set.vertices();
  CHECK(verts.size() == 4);
  for (const auto& v : verts) CHECK(set.contains(v));
}

TEST_CASE("ranges honour the balance row") {
  // One large flexible bus cannot move more than the others can absorb.
  const std::vector<double> flex = {10, 10, 400};
  const auto set = FlexibilitySet::box_with_balance(1.0, flex);
  CHECK(set.coordinate_ranges()[2].second == doctest::Approx(20));
  const auto general = as_general(set).coordinate_ranges();
  CHECK(general[2].first == doctest::Approx(-20));
  CHECK(general[2].second == doctest::Approx(20));
}

TEST_CASE("pinned coordinates reduce the free dimension") {
  const std::vector<double> flex = {100, 0, 100};
  const auto set = FlexibilitySet::box_with_balance(0.5, flex);
  CHECK(set.free_dimension() == 1);
  CHECK(FlexibilitySet::box_with_balance(0.0, flex).free_dimension() == 0);
  const auto pts = grid_points(set, 10);
  CHECK(pts.size() == 11);
  for (const auto& p : pts) CHECK(p[1] == 0);
}

TEST_CASE("grid enumeration") {
  const auto set = FlexibilitySet::box_with_balance(0.25, kThreeZoneFlex);
  const auto pts = grid_points(set, 6);
  CHECK(pts.size() == 17 * 17);
  CHECK(pts.front() == std::vector<double>{-48, -48, 96});
  for (const auto& p : pts) CHECK(set.contains(p, 1e-9));
  CHECK(grid_points(set, 300).size() == 1);
  CHECK_THROWS_AS(grid_points(set, 0), FlexibilityError);
  CHECK_THROWS_AS(grid_points(set, 6, 1), FlexibilityError);
}

TEST_CASE("max step along a direction") {
  const auto set = FlexibilitySet::box_with_balance(0.25, kThreeZoneFlex);
  const std::vector<double> zero(3, 0.0);
  const std::vector<double> dir = {1, -1, 0};
  CHECK(set.max_step(zero, dir, 1000) == doctest::Approx(50));
  CHECK(set.max_step(zero, dir, 7) == doctest::Approx(7));
  const std::vector<double> corner = {50, -50, 0};
  CHECK(set.max_step(corner, dir, 1) == doctest::Approx(0).epsilon(1e-12));
  const std::vector<double> unbalanced = {1, 0, 0};
  CHECK(set.max_step(zero, unbalanced, 1) == 0);
}

TEST_CASE("general polytopes match the box shortcuts") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> flex(0, 100), alpha(0.1, 1);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 4;
    std::vector<double> d(n);
    for (double& x : d) x = flex(rng);
    const auto box = FlexibilitySet::box_with_balance(alpha(rng), d);
    const auto general = as_general(box);
    const auto a = box.coordinate_ranges();
    const auto b = general.coordinate_ranges();
    for (int i = 0; i < n; ++i) {
      CHECK(a[i].first == doctest::Approx(b[i].first).scale(1.0));
      CHECK(a[i].second == doctest::Approx(b[i].second).scale(1.0));
    }
    CHECK(box.free_dimension() == general.free_dimension());
    const auto verts = box.vertices();
    CHECK(verts.size() == general.vertices().size());
    for (const auto& v : verts) {
      CHECK(general.contains(v));
      double sum = 0.0;
      for (double x : v) sum += x;
      CHECK(std::abs(sum) <= 1e-9);
    }
  }
}

TEST_CASE("validation and parsing") {
  const std::vector<double> neg = {1, -1};
  CHECK_THROWS_AS(FlexibilitySet::box_with_balance(1.5, kThreeZoneFlex), FlexibilityError);
  CHECK_THROWS_AS(FlexibilitySet::box_with_balance(0.5, neg), FlexibilityError);
  CHECK_THROWS_AS(FlexibilitySet(Eigen::MatrixXd::Ones(2, 2), Eigen::VectorXd::Ones(3)), FlexibilityError);
  CHECK_THROWS_AS(FlexibilitySet(Eigen::MatrixXd::Ones(1, 2), -Eigen::VectorXd::Ones(1)), FlexibilityError);

  const auto from_alpha = parse_flexibility(nlohmann::json{{"alpha", 0.5}}, kThreeZoneFlex);
  CHECK(from_alpha.alpha() == 0.5);
  const auto from_rows = parse_flexibility(
      nlohmann::json::parse(R"({"T": [[1, 0, 0], [-1, 0, 0]], "q": [5, 5]})"), kThreeZoneFlex);
  CHECK(from_rows.T().rows() == 2);
  CHECK_FALSE(from_rows.box_bounds());
  CHECK_THROWS_AS(parse_flexibility(nlohmann::json{{"alpha", "x"}}, kThreeZoneFlex), FlexibilityError);
  CHECK_THROWS_AS(parse_flexibility(nlohmann::json::object(), kThreeZoneFlex), FlexibilityError);
  CHECK_THROWS_AS(parse_flexibility(nlohmann::json::parse(R"({"T": [[1, 0]], "q": [5]})"), kThreeZoneFlex),
                  FlexibilityError);
}

}  // TEST_SUITE
