#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "loadshift/bilevel.hpp"
#include "loadshift/regimes.hpp"
#include "support/properties.hpp"
#include "support/random_instance.hpp"
#include "support/temp_dir.hpp"

using namespace loadshift;

namespace {

NetworkCase three_zone() {
  return load_network_file(std::filesystem::path(LOADSHIFT_DATA_DIR) / "three_zone.json");
}

HourDispatch dispatch_at(const NetworkCase& c, std::span<const double> delta, int hour) {
  const auto mc = clear_market(c.network, c.load, delta);
  return HourDispatch{hour, mc.dispatch.p, marginal_generators(mc, c.network)};
}

const MeritOrderRow& row_for(const std::vector<MeritOrderRow>& rows, const std::string& id) {
  return *std::find_if(rows.begin(), rows.end(), [&](const MeritOrderRow& r) { return r.generator_id == id; });
}

}  // namespace

TEST_SUITE("regimes") {

TEST_CASE("three-zone baseline active set") {
  const auto c = three_zone();
  const std::vector<double> zero(3, 0.0);
  const auto mc = clear_market(c.network, c.load, zero);
  const auto set = extract_active_set(mc.dispatch, c.network);
  // Lines are stored A->C and B->C, so C's exports sit at the lower flow limit.
  CHECK(set.lines_upper.empty());
  CHECK(set.lines_lower == std::vector<int>{1, 2});
  CHECK(set.gens_upper == std::vector<int>{2});
  CHECK(set.gens_lower.empty());
  CHECK(set.id(c.network) == "L+:|L-:A-C,B-C|G+:C1|G-:");
  const auto j = active_set_to_json(set, c.network);
  CHECK(j["lines_lower"] == nlohmann::json::array({"A-C", "B-C"}));
  CHECK(marginal_generators(mc, c.network) == std::vector<bool>{true, true, false, true});
}

TEST_CASE("active set edge conventions") {
  const Network single({"x"}, {}, {Generator{"g", "x", 10, 100}, Generator{"z", "x", 5, 0}}, "x");
  const LoadProfile load{{50.0}, {0.0}};
  const std::vector<double> zero(1, 0.0);
  const auto set = extract_active_set(clear_market(single, load, zero).dispatch, single);
  CHECK(set.lines_upper.empty());
  CHECK(set.lines_lower.empty());
  // A zero-capacity unit counts as at its upper bound.
  CHECK(set.gens_upper == std::vector<int>{1});
  CHECK(set.gens_lower.empty());
  CHECK_FALSE(is_on_boundary(single, load, zero));
}

TEST_CASE("active sets do not depend on LP row order") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto c = testing::random_instance(rng);
    const std::vector<double> zero(c.network.num_buses(), 0.0);
    const auto prob = build_dcopf(c.network, c.load, zero);
    std::vector<int> perm(prob.lp.num_rows());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto a = lp::solve_lp(prob.lp);
    const auto b = lp::solve_lp(lp::permute_rows(prob.lp, perm));
    REQUIRE(a.optimal());
    REQUIRE(b.optimal());
    auto dispatch = [&](const lp::LpSolution& s) {
      DispatchSolution d;
      const auto& lay = prob.layout;
      d.p.assign(s.x.begin() + lay.p, s.x.begin() + lay.p + lay.generators);
      d.f.assign(s.x.begin() + lay.f, s.x.begin() + lay.f + lay.lines);
      return d;
    };
    CHECK(a.objective == doctest::Approx(b.objective));
    // Degenerate problems may legitimately pick different vertices; compare only when the
    // dispatch itself agrees.
    const auto da = dispatch(a);
    const auto db = dispatch(b);
    bool same = true;
    for (std::size_t g = 0; g < da.p.size(); ++g) same = same && std::abs(da.p[g] - db.p[g]) <= 1e-7;
    for (std::size_t l = 0; l < da.f.size(); ++l) same = same && std::abs(da.f[l] - db.f[l]) <= 1e-7;
    if (same) CHECK(extract_active_set(da, c.network) == extract_active_set(db, c.network));
  }
}

TEST_CASE("boundary probes") {
  const auto c = three_zone();
  const auto set = FlexibilitySet::box_with_balance(0.5, c.load.flex_mw);
  const std::vector<double> zero(3, 0.0);
  CHECK_FALSE(is_on_boundary(c.network, c.load, zero, kProbeEpsilon, &set));
  const std::vector<double> kink = {54, 96, -150};
  const auto probe = probe_boundary(c.network, c.load, kink, kProbeEpsilon, &set);
  CHECK(probe.on_boundary);
  CHECK(probe.probes > 0);
  // Interior point of the baseline regime.
  const std::vector<double> inside = {-10, -10, 20};
  CHECK_FALSE(is_on_boundary(c.network, c.load, inside, kProbeEpsilon, &set));
  // A pinned set has nowhere to probe.
  const auto pinned = FlexibilitySet::box_with_balance(0.0, c.load.flex_mw);
  CHECK_FALSE(is_on_boundary(c.network, c.load, zero, kProbeEpsilon, &pinned));
}

TEST_CASE("alignment classification on the three-zone lattice points") {
  const auto c = three_zone();
  const auto high = FlexibilitySet::box_with_balance(0.5, c.load.flex_mw);
  const std::vector<double> consumer = {54, 96, -150};
  const auto rec = classify_alignment(c.network, c.load, consumer, &high);
  CHECK(rec.misaligned);
  CHECK(rec.boundary);
  CHECK(rec.delta_v() / 2500 == doctest::Approx(1.632));

  const auto low = FlexibilitySet::box_with_balance(0.25, c.load.flex_mw);
  const std::vector<double> aligned = {-48, -48, 96};
  const auto rec_low = classify_alignment(c.network, c.load, aligned, &low);
  CHECK_FALSE(rec_low.misaligned);
  CHECK(rec_low.delta_v() / 2500 == doctest::Approx(-1.152));

  const std::vector<double> zero(3, 0.0);
  CHECK_FALSE(classify_alignment(c.network, c.load, zero, &high).misaligned);
}

TEST_CASE("merit order: displacing the marginal unit") {
  const auto c = three_zone();
  const std::vector<double> zero(3, 0.0);
  const std::vector<double> consumer = {54, 96, -150};
  const auto rows = merit_order_report(c.network, {dispatch_at(c, zero, 0)}, {dispatch_at(c, consumer, 0)});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].generator_id == "C1");
  CHECK(rows[3].generator_id == "A1");
  CHECK(row_for(rows, "C2").delta_marginal_hours == -1);
}

TEST_CASE("merit order: energy moves with the shift") {
  const auto c = three_zone();
  const std::vector<double> zero(3, 0.0);
  const std::vector<double> shift = {-48, -48, 96};
  const auto rows = merit_order_report(c.network, {dispatch_at(c, zero, 0)}, {dispatch_at(c, shift, 0)});
  CHECK(row_for(rows, "C2").delta_energy_mwh == doctest::Approx(96));
  CHECK(row_for(rows, "A1").delta_energy_mwh == doctest::Approx(-48));
  CHECK(row_for(rows, "B1").delta_energy_mwh == doctest::Approx(-48));
  CHECK(row_for(rows, "C1").delta_energy_mwh == doctest::Approx(0).scale(1.0));

  const auto same = merit_order_report(c.network, {dispatch_at(c, zero, 0)}, {dispatch_at(c, zero, 0)});
  for (const auto& r : same) {
    CHECK(r.delta_marginal_hours == 0);
    CHECK(r.delta_energy_mwh == 0);
  }

  testing::TempDir dir;
  write_merit_order_csv(dir.path() / "merit.csv", rows);
  const auto text = dir.read("merit.csv");
  CHECK(text.rfind("generator_id,cost,delta_marginal_hours,delta_energy_mwh\nC1,0,", 0) == 0);
}

TEST_CASE("merit order rejects mismatched hours") {
  const auto c = three_zone();
  const std::vector<double> zero(3, 0.0);
  CHECK_THROWS_AS(merit_order_report(c.network, {dispatch_at(c, zero, 0)}, {dispatch_at(c, zero, 1)}),
                  std::invalid_argument);
  CHECK_THROWS_AS(merit_order_report(c.network, {dispatch_at(c, zero, 0), dispatch_at(c, zero, 0)},
                                     {dispatch_at(c, zero, 0), dispatch_at(c, zero, 0)}),
                  std::invalid_argument);
}

TEST_CASE("random instances: constant operator margin inside one regime") {
  std::mt19937 rng(17);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const auto c = testing::random_instance(rng);
    const auto set = FlexibilitySet::box_with_balance(0.25, c.load.flex_mw);
    if (!testing::set_inside_base_regime(c.network, c.load, set)) continue;
    ++checked;
    const std::vector<double> zero(c.network.num_buses(), 0.0);
    const double h0 = testing::operator_margin(c.network, c.load, zero);
    for (const auto& d : testing::sample_shifts(set, rng, 10)) {
      CHECK(testing::operator_margin(c.network, c.load, d) == doctest::Approx(h0).epsilon(1e-9).scale(1.0));
    }
  }
  CHECK(checked >= 5);
}

TEST_CASE("random instances: misalignment only on regime boundaries") {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const auto c = testing::random_instance(rng);
    const auto set = FlexibilitySet::box_with_balance(0.25 * (1 + trial % 4), c.load.flex_mw);
    BilevelOptions opt;
    opt.tie_break = TieBreak::kMaxSystemCost;
    const auto sol = solve_bilevel(c.network, c.load, set, opt);
    const auto rec = classify_alignment(c.network, c.load, sol.delta, &set);
    CAPTURE(trial);
    if (rec.misaligned) CHECK(rec.boundary);
    CHECK(sol.price_bound_holds);
  }
}

}  // TEST_SUITE
