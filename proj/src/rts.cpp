#include "loadshift/rts.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "csv.hpp"

namespace loadshift {

namespace fs = std::filesystem;
using detail::CsvTable;
using detail::parse_number;
using detail::read_csv;

int RtsDataset::hours() const {
  if (!hourly_caps.empty()) return static_cast<int>(hourly_caps.size());
  if (!hourly_bus_loads.empty()) return static_cast<int>(hourly_bus_loads.size());
  return 1;
}

NetworkCase RtsDataset::hour_case(int hour) const {
  if (hour < 0 || hour >= hours()) {
    throw std::out_of_range("hour " + std::to_string(hour) + " outside dataset");
  }
  auto caps = network.generator_capacities();
  if (!hourly_caps.empty()) {
    for (std::size_t i = 0; i < timeseries_generators.size(); ++i) {
      caps[timeseries_generators[i]] = hourly_caps[hour][i];
    }
  }
  LoadProfile load = nominal;
  if (!hourly_bus_loads.empty()) load.base_mw = hourly_bus_loads[hour];
  return NetworkCase{network.with_capacities(caps), std::move(load)};
}

std::vector<double> average_to_hourly(const std::vector<double>& samples, int per_hour) {
  if (per_hour <= 0) throw std::invalid_argument("samples per hour must be positive");
  if (samples.size() % static_cast<std::size_t>(per_hour) != 0) {
    throw std::runtime_error("series length " + std::to_string(samples.size()) +
                             " is not a whole number of hours");
  }
  std::vector<double> hourly(samples.size() / per_hour, 0.0);
  for (std::size_t h = 0; h < hourly.size(); ++h) {
    double sum = 0.0;
    for (int k = 0; k < per_hour; ++k) sum += samples[h * per_hour + k];
    hourly[h] = sum / per_hour;
  }
  return hourly;
}

namespace {

fs::path locate(const fs::path& dir, const std::string& name) {
  for (const auto& candidate : {dir / name, dir / "SourceData" / name}) {
    if (fs::exists(candidate)) return candidate;
  }
  throw std::runtime_error("dataset '" + dir.string() + "' has no " + name);
}

std::vector<fs::path> timeseries_files(const fs::path& dir) {
  std::vector<fs::path> roots = {dir / "timeseries_data_files", dir / "timeseries",
                                 dir.parent_path() / "timeseries_data_files"};
  std::vector<fs::path> files;
  for (const auto& root : roots) {
    if (!fs::is_directory(root)) continue;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    break;
  }
  std::sort(files.begin(), files.end());
  const bool has_real_time = std::any_of(files.begin(), files.end(), [](const fs::path& p) {
    return p.filename().string().find("REAL_TIME") != std::string::npos;
  });
  if (has_real_time) {
    std::erase_if(files, [](const fs::path& p) {
      return p.filename().string().find("DAY_AHEAD") != std::string::npos;
    });
  }
  return files;
}

struct Series {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> hourly;  // [column][hour]
};

Series read_series(const CsvTable& table) {
  static const std::vector<std::string> kDate = {"Year", "Month", "Day", "Period"};
  for (const auto& c : kDate) (void)table.require(c);
  const std::size_t period_col = table.require("Period");
  int periods_per_day = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    periods_per_day = std::max(
        periods_per_day, static_cast<int>(parse_number(table.rows[r][period_col], table, r, "Period")));
  }
  if (periods_per_day <= 0 || periods_per_day % 24 != 0) {
    throw std::runtime_error(table.source.string() + ": periods per day (" +
                             std::to_string(periods_per_day) + ") is not a multiple of 24");
  }
  const int per_hour = periods_per_day / 24;
  Series s;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    if (std::find(kDate.begin(), kDate.end(), name) != kDate.end() || name.empty()) continue;
    std::vector<double> samples;
    samples.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const double v = parse_number(table.rows[r][c], table, r, name);
      if (v < 0.0) {
        throw std::runtime_error(table.source.string() + ": negative value in column '" + name +
                                 "' at row " + std::to_string(r + 1));
      }
      samples.push_back(v);
    }
    s.columns.push_back(name);
    s.hourly.push_back(average_to_hourly(samples, per_hour));
  }
  return s;
}

}  // namespace

RtsDataset load_rts_dataset(const fs::path& dir, const RtsOptions& options) {
  if (!(options.capacity_scale >= 0.0)) throw std::invalid_argument("capacity_scale must be >= 0");
  const CsvTable bus = read_csv(locate(dir, "bus.csv"));
  const CsvTable branch = read_csv(locate(dir, "branch.csv"));
  const CsvTable gen = read_csv(locate(dir, "gen.csv"));

  const auto bus_id = bus.require("Bus ID");
  const auto bus_load = bus.find("MW Load");
  const auto bus_area = bus.find("Area");
  const auto bus_type = bus.find("Bus Type");
  std::vector<std::string> buses;
  std::vector<double> mw_load;
  std::vector<std::string> areas;
  std::string reference;
  for (std::size_t r = 0; r < bus.rows.size(); ++r) {
    const auto& row = bus.rows[r];
    buses.push_back(row[bus_id]);
    mw_load.push_back(bus_load ? parse_number(row[*bus_load], bus, r, "MW Load") : 0.0);
    areas.push_back(bus_area ? row[*bus_area] : std::string{});
    if (bus_type && row[*bus_type] == "Ref" && reference.empty()) reference = row[bus_id];
  }
  if (buses.empty()) throw std::runtime_error(bus.source.string() + ": no buses");
  if (reference.empty()) reference = buses.front();

  const auto br_uid = branch.require("UID");
  const auto br_from = branch.require("From Bus");
  const auto br_to = branch.require("To Bus");
  const auto br_x = branch.require("X");
  const auto br_rating = branch.require(options.rating_column);
  std::vector<Line> lines;
  for (std::size_t r = 0; r < branch.rows.size(); ++r) {
    const auto& row = branch.rows[r];
    const double x = parse_number(row[br_x], branch, r, "X");
    if (!(std::abs(x) > 0.0)) {
      throw std::runtime_error(branch.source.string() + ": zero reactance at row " +
                               std::to_string(r + 1));
    }
    lines.push_back(Line{row[br_from], row[br_to], 1.0 / std::abs(x),
                         parse_number(row[br_rating], branch, r, options.rating_column),
                         row[br_uid]});
  }

  const auto g_uid = gen.require("GEN UID");
  const auto g_bus = gen.require("Bus ID");
  const auto g_pmax = gen.require("PMax MW");
  const auto g_hr = gen.require("HR_avg_0");
  const auto g_price = gen.require("Fuel Price $/MMBTU");
  std::vector<Generator> gens;
  std::map<std::string, int> gen_index;
  for (std::size_t r = 0; r < gen.rows.size(); ++r) {
    const auto& row = gen.rows[r];
    const double cost = marginal_cost_from_heat_rate(
        parse_number(row[g_price], gen, r, "Fuel Price $/MMBTU"),
        parse_number(row[g_hr], gen, r, "HR_avg_0"));
    const double pmax = parse_number(row[g_pmax], gen, r, "PMax MW") * options.capacity_scale;
    gen_index[row[g_uid]] = static_cast<int>(gens.size());
    gens.push_back(Generator{row[g_uid], row[g_bus], cost, pmax});
  }

  RtsDataset data{Network(buses, std::move(lines), std::move(gens), reference), {}, {}, {}, {}};
  const Network& net = data.network;
  data.nominal.base_mw = mw_load;
  data.nominal.flex_mw.assign(net.num_buses(), 0.0);
  for (const auto& placement : options.placements) {
    if (!net.has_bus(placement.bus)) {
      throw NetworkError("flexible placement at unknown bus '" + placement.bus + "'");
    }
    if (!(placement.mw >= 0.0)) throw NetworkError("flexible placement must be non-negative");
    data.nominal.flex_mw[net.bus_index(placement.bus)] += placement.mw;
  }
  data.nominal.validate(net.num_buses());

  std::set<std::string> area_ids(areas.begin(), areas.end());
  area_ids.erase(std::string{});
  int hours = -1;
  auto check_hours = [&](std::size_t h, const fs::path& src) {
    if (hours < 0) {
      hours = static_cast<int>(h);
    } else if (hours != static_cast<int>(h)) {
      throw std::runtime_error(src.string() + ": hour count mismatch (" + std::to_string(h) +
                               " vs " + std::to_string(hours) + ")");
    }
  };
  std::map<int, std::vector<double>> caps_by_gen;
  std::vector<std::vector<double>> bus_series(net.num_buses());
  bool have_load = false;

  for (const auto& file : timeseries_files(dir)) {
    const CsvTable table = read_csv(file);
    const Series s = read_series(table);
    if (s.columns.empty()) continue;
    const auto all = [&](auto pred) { return std::all_of(s.columns.begin(), s.columns.end(), pred); };
    check_hours(s.hourly.front().size(), file);
    if (all([&](const std::string& c) { return gen_index.contains(c); })) {
      for (std::size_t c = 0; c < s.columns.size(); ++c) {
        auto hourly = s.hourly[c];
        for (double& v : hourly) v *= options.capacity_scale;
        caps_by_gen[gen_index.at(s.columns[c])] = std::move(hourly);
      }
    } else if (all([&](const std::string& c) { return net.has_bus(c); })) {
      for (std::size_t c = 0; c < s.columns.size(); ++c) {
        bus_series[net.bus_index(s.columns[c])] = s.hourly[c];
      }
      have_load = true;
    } else if (!area_ids.empty() && all([&](const std::string& c) { return area_ids.contains(c); })) {
      if (!bus_load) throw std::runtime_error(bus.source.string() + ": regional load needs 'MW Load'");
      for (std::size_t c = 0; c < s.columns.size(); ++c) {
        double area_total = 0.0;
        for (int b = 0; b < net.num_buses(); ++b) {
          if (areas[b] == s.columns[c]) area_total += mw_load[b];
        }
        for (int b = 0; b < net.num_buses(); ++b) {
          if (areas[b] != s.columns[c]) continue;
          const double share = area_total > 0.0 ? mw_load[b] / area_total : 0.0;
          std::vector<double> series(s.hourly[c].size());
          for (std::size_t h = 0; h < series.size(); ++h) series[h] = s.hourly[c][h] * share;
          bus_series[b] = std::move(series);
        }
      }
      have_load = true;
    } else {
      throw std::runtime_error(file.string() +
                               ": columns match neither generator UIDs, bus IDs nor areas");
    }
  }

  for (const auto& entry : caps_by_gen) data.timeseries_generators.push_back(entry.first);
  if (!caps_by_gen.empty()) {
    data.hourly_caps.assign(hours, std::vector<double>(caps_by_gen.size()));
    std::size_t i = 0;
    for (const auto& [g, series] : caps_by_gen) {
      for (int h = 0; h < hours; ++h) data.hourly_caps[h][i] = series[h];
      ++i;
    }
  }
  if (have_load) {
    data.hourly_bus_loads.assign(hours, std::vector<double>(net.num_buses(), 0.0));
    for (int b = 0; b < net.num_buses(); ++b) {
      for (int h = 0; h < hours; ++h) {
        data.hourly_bus_loads[h][b] = bus_series[b].empty() ? mw_load[b] : bus_series[b][h];
      }
    }
  }
  return data;
}

}  // namespace loadshift
