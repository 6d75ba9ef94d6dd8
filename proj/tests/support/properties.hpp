// Helpers shared by the property suites and the acceptance binary.
#pragma once

#include <random>
#include <vector>

#include "loadshift/dcopf.hpp"
#include "loadshift/flexibility.hpp"
#include "loadshift/regimes.hpp"

namespace loadshift::testing {

/// True when delta = 0 and every vertex of the set clear with the same active set. Regions
/// are convex, so the whole set then lies in the baseline regime.
inline bool set_inside_base_regime(const Network& net, const LoadProfile& load, const FlexibilitySet& set) {
  ClearingOptions raw;
  raw.selection = PriceSelection::kAsSolved;
  const std::vector<double> zero(net.num_buses(), 0.0);
  const auto base = extract_active_set(clear_market(net, load, zero, raw).dispatch, net);
  for (const auto& v : set.vertices()) {
    try {
      if (extract_active_set(clear_market(net, load, v, raw).dispatch, net) != base) return false;
    } catch (const InfeasibleMarketError&) {
      return false;
    }
  }
  return true;
}

/// Random points of the set as convex combinations of its vertices.
inline std::vector<ShiftVector> sample_shifts(const FlexibilitySet& set, std::mt19937& rng, int count) {
  const auto verts = set.vertices();
  std::vector<ShiftVector> out;
  std::exponential_distribution<double> weight(1.0);
  for (int s = 0; s < count; ++s) {
    std::vector<double> w(verts.size());
    double total = 0.0;
    for (double& x : w) total += (x = weight(rng));
    ShiftVector d(set.dimension(), 0.0);
    for (std::size_t k = 0; k < verts.size(); ++k) {
      for (int i = 0; i < set.dimension(); ++i) d[i] += w[k] / total * verts[k][i];
    }
    out.push_back(std::move(d));
  }
  return out;
}

/// V(delta) - Pi(delta) with consumer-favorable prices.
inline double operator_margin(const Network& net, const LoadProfile& load, std::span<const double> delta) {
  const auto mc = clear_market(net, load, delta);
  return mc.dispatch.system_cost - procurement_cost(mc.duals.lambda, load, delta);
}

}  // namespace loadshift::testing
