// Loader for RTS-GMLC style CSV directories.
//
// Expected layout (either directly in the directory or under SourceData/):
//   bus.csv     Bus ID [, MW Load, Area, Bus Type]
//   branch.csv  UID, From Bus, To Bus, X, Cont Rating [, LTE Rating, STE Rating]
//   gen.csv     GEN UID, Bus ID, PMax MW, HR_avg_0, Fuel Price $/MMBTU [, Fuel]
// Time series live under timeseries_data_files/ (recursively); each file starts with
// Year, Month, Day, Period and carries one column per generator UID, bus ID or area.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "loadshift/network.hpp"

namespace loadshift {

struct FlexPlacement {
  std::string bus;
  double mw = 0.0;
};

struct RtsOptions {
  double capacity_scale = 1.0;
  std::string rating_column = "Cont Rating";
  std::vector<FlexPlacement> placements;
};

struct RtsDataset {
  /// Static network with capacities already scaled.
  Network network;
  /// Bus "MW Load" as base plus the configured flexible placements.
  LoadProfile nominal;
  /// Generators whose capacity follows a time series.
  std::vector<int> timeseries_generators;
  /// [hour][i] hourly capacity of timeseries_generators[i], scaled.
  std::vector<std::vector<double>> hourly_caps;
  /// [hour][bus] hourly inflexible load; empty when the directory has no load series.
  std::vector<std::vector<double>> hourly_bus_loads;

  [[nodiscard]] int hours() const;
  /// Network and load for one hour: time-varying caps applied, base load from the series.
  [[nodiscard]] NetworkCase hour_case(int hour) const;
};

RtsDataset load_rts_dataset(const std::filesystem::path& dir, const RtsOptions& options);

/// Averages consecutive blocks of `per_hour` samples (5-minute data uses 12).
std::vector<double> average_to_hourly(const std::vector<double>& samples, int per_hour);

}  // namespace loadshift
