#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "loadshift/network.hpp"
#include "loadshift/rts.hpp"
#include "support/temp_dir.hpp"

using namespace loadshift;
using nlohmann::json;

namespace {

json two_bus() {
  return json::parse(R"({
    "buses": [{"id": "x"}, {"id": "y"}],
    "lines": [{"from": "x", "to": "y", "capacity_mw": 10}],
    "generators": [{"id": "g", "bus": "x", "cost_usd_per_mwh": 5, "pmax_mw": 50}],
    "loads": [{"bus": "y", "base_mw": 8, "flex_mw": 2}]
  })");
}

std::string error_of(const json& doc) {
  try {
    parse_network(doc);
  } catch (const NetworkError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("three-zone file parses with bus order and defaults") {
  const auto c = load_network_file(std::filesystem::path(LOADSHIFT_DATA_DIR) / "three_zone.json");
  CHECK(c.network.num_buses() == 3);
  CHECK(c.network.num_lines() == 3);
  CHECK(c.network.num_generators() == 4);
  CHECK(c.network.reference_bus() == "A");
  CHECK(c.network.lines()[0].susceptance == 1.0);
  CHECK(c.load.total() == doctest::Approx(2500));
  CHECK(c.load.flex_mw == std::vector<double>{200, 200, 400});
  CHECK(c.network.generator_bus(3) == c.network.bus_index("C"));
}

TEST_CASE("incidence and generator map") {
  const auto c = parse_network(two_bus());
  const auto inc = build_incidence(c.network);
  CHECK(inc.matrix(0, 0) == 1);
  CHECK(inc.matrix(0, 1) == -1);
  CHECK(inc.susceptance[0] == 1);
  const auto g = generator_map(c.network);
  CHECK(g(0, 0) == 1);
  CHECK(g(1, 0) == 0);
  CHECK(c.network.line_from(0) == 0);
  CHECK(c.network.line_to(0) == 1);
}

TEST_CASE("parse errors name the offending field") {
  auto doc = two_bus();
  doc["lines"][0]["to"] = "z";
  CHECK(error_of(doc).find("lines[0]") != std::string::npos);
  CHECK(error_of(doc).find("unknown bus 'z'") != std::string::npos);

  doc = two_bus();
  doc["generators"][0]["pmax_mw"] = -1;
  CHECK(error_of(doc).find("generators[0].pmax_mw") != std::string::npos);

  doc = two_bus();
  doc["loads"][0]["base_mw"] = -3;
  CHECK(error_of(doc).find("loads[0].base_mw") != std::string::npos);

  doc = two_bus();
  doc["buses"].push_back({{"id", "x"}});
  CHECK(error_of(doc).find("duplicate bus id") != std::string::npos);

  doc = two_bus();
  doc["lines"][0]["to"] = "x";
  CHECK(error_of(doc).find("self loop") != std::string::npos);

  doc = two_bus();
  doc["lines"][0].erase("capacity_mw");
  CHECK(error_of(doc).find("capacity_mw: missing field") != std::string::npos);

  doc = two_bus();
  doc["reference_bus"] = "q";
  CHECK_FALSE(error_of(doc).empty());

  CHECK_FALSE(error_of(json::array()).empty());
  CHECK_THROWS_AS(load_network_file("/nonexistent/net.json"), NetworkError);
}

TEST_CASE("loads on the same bus accumulate") {
  auto doc = two_bus();
  doc["loads"].push_back({{"bus", "y"}, {"base_mw", 1}});
  const auto c = parse_network(doc);
  CHECK(c.load.base_mw[1] == 9);
  CHECK(c.load.nominal()[1] == 11);
}

TEST_CASE("json round trip") {
  const auto c = parse_network(two_bus());
  const auto again = parse_network(network_to_json(c.network, c.load));
  CHECK(again.network.buses() == c.network.buses());
  CHECK(again.load.base_mw == c.load.base_mw);
  CHECK(again.network.generators()[0].cost_usd_per_mwh == 5);
}

TEST_CASE("capacity scaling") {
  const auto c = parse_network(two_bus());
  CHECK(c.network.with_scaled_capacities(0.5).generators()[0].pmax_mw == 25);
  CHECK_THROWS_AS((void)c.network.with_scaled_capacities(-1), NetworkError);
  const std::vector<double> wrong = {1, 2};
  CHECK_THROWS_AS((void)c.network.with_capacities(wrong), NetworkError);
}

TEST_CASE("marginal cost from heat rate") {
  CHECK(marginal_cost_from_heat_rate(4.0, 7000) == doctest::Approx(28));
  CHECK_THROWS(marginal_cost_from_heat_rate(-1, 7000));
}

}  // TEST_SUITE

TEST_SUITE("rts") {

TEST_CASE("mini dataset loads with regional load split by bus share") {
  RtsOptions opt;
  opt.placements = {{"202", 100}};
  const auto ds = load_rts_dataset(std::filesystem::path(LOADSHIFT_TEST_DATA) / "mini_rts", opt);
  CHECK(ds.hours() == 48);
  CHECK(ds.network.num_buses() == 4);
  CHECK(ds.network.num_generators() == 5);
  CHECK(ds.network.reference_bus() == "101");
  // 1 / X
  CHECK(ds.network.lines()[0].susceptance == doctest::Approx(20));
  CHECK(ds.network.lines()[1].capacity_mw == 90);
  CHECK(ds.network.generators()[0].cost_usd_per_mwh == doctest::Approx(20));
  CHECK(ds.network.generators()[4].cost_usd_per_mwh == 0);

  const auto h0 = ds.hour_case(0);
  CHECK(h0.load.base_mw[0] == doctest::Approx(132.0 * 100 / 220));
  CHECK(h0.load.base_mw[1] == doctest::Approx(132.0 * 120 / 220));
  CHECK(h0.load.base_mw[2] == doctest::Approx(168.0 * 150 / 280));
  CHECK(h0.load.flex_mw[3] == 100);
  CHECK(h0.network.generators()[4].pmax_mw == doctest::Approx(145));
  CHECK_THROWS_AS((void)ds.hour_case(48), std::out_of_range);
}

TEST_CASE("capacity scale applies to static and time-series units") {
  RtsOptions opt;
  opt.capacity_scale = 0.5;
  const auto ds = load_rts_dataset(std::filesystem::path(LOADSHIFT_TEST_DATA) / "mini_rts", opt);
  const auto h0 = ds.hour_case(0);
  CHECK(h0.network.generators()[0].pmax_mw == doctest::Approx(150));
  CHECK(h0.network.generators()[4].pmax_mw == doctest::Approx(72.5));
}

TEST_CASE("hourly averaging") {
  CHECK(average_to_hourly({1, 3, 5, 7}, 2) == std::vector<double>{2, 6});
  CHECK_THROWS(average_to_hourly({1, 2, 3}, 2));
  CHECK_THROWS(average_to_hourly({1}, 0));
}

TEST_CASE("five-minute series are averaged to hours") {
  testing::TempDir dir;
  dir.write("bus.csv", "Bus ID,MW Load,Area\n1,10,1\n2,20,1\n");
  dir.write("branch.csv", "UID,From Bus,To Bus,X,Cont Rating\nL,1,2,0.1,50\n");
  dir.write("gen.csv", "GEN UID,Bus ID,PMax MW,HR_avg_0,Fuel Price $/MMBTU\nG,1,100,10000,3\n");
  std::ostringstream series;
  series << "Year,Month,Day,Period,1,2\n";
  for (int p = 1; p <= 288; ++p) series << "2020,1,1," << p << "," << (p % 2 ? 4 : 6) << ",1\n";
  dir.write("timeseries_data_files/load.csv", series.str());
  const auto ds = load_rts_dataset(dir.path(), {});
  CHECK(ds.hours() == 24);
  CHECK(ds.hour_case(5).load.base_mw[0] == doctest::Approx(5));
  CHECK(ds.hour_case(5).load.base_mw[1] == doctest::Approx(1));
}

TEST_CASE("malformed directories are rejected") {
  testing::TempDir dir;
  CHECK_THROWS(load_rts_dataset(dir.path(), {}));

  dir.write("bus.csv", "Bus ID,MW Load,Area\n1,10,1\n2,20,1\n");
  dir.write("branch.csv", "UID,From Bus,To Bus,X,Cont Rating\nL,1,2,0,50\n");
  dir.write("gen.csv", "GEN UID,Bus ID,PMax MW,HR_avg_0,Fuel Price $/MMBTU\nG,1,100,10000,3\n");
  CHECK_THROWS(load_rts_dataset(dir.path(), {}));

  dir.write("branch.csv", "UID,From Bus,To Bus,X,Cont Rating\nL,1,2,0.1,50\n");
  auto day = [](const std::string& column, double value) {
    std::ostringstream os;
    os << "Year,Month,Day,Period," << column << "\n";
    for (int p = 1; p <= 24; ++p) os << "2020,1,1," << p << "," << value << "\n";
    return os.str();
  };
  dir.write("timeseries_data_files/bad.csv", day("G", 5));
  CHECK_NOTHROW(load_rts_dataset(dir.path(), {}));
  dir.write("timeseries_data_files/bad.csv", day("G", -5));
  CHECK_THROWS(load_rts_dataset(dir.path(), {}));

  dir.write("timeseries_data_files/bad.csv", day("nobody", 5));
  CHECK_THROWS(load_rts_dataset(dir.path(), {}));

  std::filesystem::remove(dir.path() / "timeseries_data_files/bad.csv");
  RtsOptions opt;
  opt.placements = {{"9", 1}};
  CHECK_THROWS_AS(load_rts_dataset(dir.path(), opt), NetworkError);
}

}  // TEST_SUITE
