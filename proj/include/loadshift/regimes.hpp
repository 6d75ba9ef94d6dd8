// Active sets, regime-boundary probes, alignment classification and merit-order analytics.
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "loadshift/dcopf.hpp"
#include "loadshift/flexibility.hpp"
#include "loadshift/network.hpp"

namespace loadshift {

inline constexpr double kBindingTolerance = 1e-5;
inline constexpr double kProbeEpsilon = 1e-3;
inline constexpr double kAlignTolerance = 1e-4;
inline constexpr double kMarginalPriceTolerance = 1e-6;

/// Indices of binding lines and generators. Lines are oriented from -> to as in the network.
struct ActiveSet {
  std::vector<int> lines_upper;  // f = +capacity
  std::vector<int> lines_lower;  // f = -capacity
  std::vector<int> gens_upper;   // p = pmax (includes pmax = 0)
  std::vector<int> gens_lower;   // p = 0

  friend bool operator==(const ActiveSet&, const ActiveSet&) = default;
  friend auto operator<=>(const ActiveSet&, const ActiveSet&) = default;

  /// Compact identifier such as "L+:A-C|L-:|G+:C1|G-:".
  [[nodiscard]] std::string id(const Network& network) const;
};

ActiveSet extract_active_set(const DispatchSolution& dispatch, const Network& network,
                             double tol = kBindingTolerance);

struct BoundaryProbe {
  bool on_boundary = false;
  /// At least one probe was shortened to stay inside the flexibility set.
  bool clipped = false;
  int probes = 0;
};

/// Probes delta +/- probe_eps along e_i - e_n (i < n-1) and along delta itself, and reports
/// whether any probe pair sees two different active sets. Infeasible probes count as a
/// distinct regime. When `set` is given, probes are clipped into it.
BoundaryProbe probe_boundary(const Network& network, const LoadProfile& load, std::span<const double> delta,
                             double probe_eps = kProbeEpsilon, const FlexibilitySet* set = nullptr,
                             double tol = kBindingTolerance);

bool is_on_boundary(const Network& network, const LoadProfile& load, std::span<const double> delta,
                    double probe_eps = kProbeEpsilon, const FlexibilitySet* set = nullptr);

struct MisalignmentRecord {
  ShiftVector delta;
  double v0 = 0.0;
  double v_star = 0.0;
  double pi0 = 0.0;
  double pi_star = 0.0;
  bool misaligned = false;
  bool boundary = false;
  bool clipped = false;
  ActiveSet active_set;

  [[nodiscard]] double delta_v() const { return v_star - v0; }
};

/// misaligned iff (V(delta) - V(0)) / total load > align_tol.
MisalignmentRecord classify_alignment(const Network& network, const LoadProfile& load,
                                      std::span<const double> delta, const FlexibilitySet* set = nullptr,
                                      double align_tol = kAlignTolerance, double probe_eps = kProbeEpsilon);

/// A generator is marginal if 0 < p < pmax, or if it sits at a bound with price equal to its cost.
std::vector<bool> marginal_generators(const MarketClearing& clearing, const Network& network,
                                      double tol = kBindingTolerance,
                                      double price_tol = kMarginalPriceTolerance);

struct HourDispatch {
  int hour = 0;
  std::vector<double> p;
  std::vector<bool> marginal;
};

struct MeritOrderRow {
  std::string generator_id;
  double cost = 0.0;
  int delta_marginal_hours = 0;
  double delta_energy_mwh = 0.0;
};

/// Shifted minus baseline, one row per generator, ordered by cost then id.
/// Throws std::invalid_argument when the two runs cover different hours.
std::vector<MeritOrderRow> merit_order_report(const Network& network, const std::vector<HourDispatch>& baseline,
                                              const std::vector<HourDispatch>& shifted);

void write_merit_order_csv(const std::filesystem::path& path, const std::vector<MeritOrderRow>& rows);

nlohmann::json active_set_to_json(const ActiveSet& set, const Network& network);

}  // namespace loadshift
