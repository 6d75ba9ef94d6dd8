#include "loadshift/regimes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "loadshift/io.hpp"

namespace loadshift {

namespace {

std::string join_ids(const std::vector<int>& idx, const auto& name_of) {
  std::string out;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i) out += ',';
    out += name_of(idx[i]);
  }
  return out;
}

std::optional<ActiveSet> active_set_at(const Network& network, const LoadProfile& load,
                                       std::span<const double> delta, double tol) {
  ClearingOptions opts;
  opts.selection = PriceSelection::kAsSolved;
  try {
    return extract_active_set(clear_market(network, load, delta, opts).dispatch, network, tol);
  } catch (const InfeasibleMarketError&) {
    return std::nullopt;
  }
}

}  // namespace

std::string ActiveSet::id(const Network& network) const {
  auto line = [&](int l) { return network.lines()[l].id; };
  auto gen = [&](int g) { return network.generators()[g].id; };
  return "L+:" + join_ids(lines_upper, line) + "|L-:" + join_ids(lines_lower, line) +
         "|G+:" + join_ids(gens_upper, gen) + "|G-:" + join_ids(gens_lower, gen);
}

ActiveSet extract_active_set(const DispatchSolution& dispatch, const Network& network, double tol) {
  if (dispatch.f.size() != static_cast<std::size_t>(network.num_lines()) ||
      dispatch.p.size() != static_cast<std::size_t>(network.num_generators())) {
    throw std::invalid_argument("extract_active_set: dispatch does not match network");
  }
  ActiveSet a;
  for (int l = 0; l < network.num_lines(); ++l) {
    const double cap = network.lines()[l].capacity_mw;
    if (dispatch.f[l] >= cap - tol) {
      a.lines_upper.push_back(l);
    } else if (dispatch.f[l] <= -cap + tol) {
      a.lines_lower.push_back(l);
    }
  }
  for (int g = 0; g < network.num_generators(); ++g) {
    const double cap = network.generators()[g].pmax_mw;
    if (dispatch.p[g] >= cap - tol) {
      a.gens_upper.push_back(g);
    } else if (dispatch.p[g] <= tol) {
      a.gens_lower.push_back(g);
    }
  }
  return a;
}

BoundaryProbe probe_boundary(const Network& network, const LoadProfile& load, std::span<const double> delta,
                             double probe_eps, const FlexibilitySet* set, double tol) {
  const int n = network.num_buses();
  if (static_cast<int>(delta.size()) != n) throw std::invalid_argument("probe_boundary: dimension mismatch");
  if (!(probe_eps > 0.0)) throw std::invalid_argument("probe_boundary: probe_eps must be positive");
  BoundaryProbe result;
  if (n < 2) return result;

  std::vector<std::vector<double>> directions;
  for (int i = 0; i + 1 < n; ++i) {
    std::vector<double> e(n, 0.0);
    e[i] = 1.0;
    e[n - 1] = -1.0;
    directions.push_back(std::move(e));
  }
  double norm = 0.0;
  for (double x : delta) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 1e-12) {
    std::vector<double> e(delta.begin(), delta.end());
    for (double& x : e) x /= norm;
    directions.push_back(std::move(e));
  }

  const auto center = active_set_at(network, load, delta, tol);
  std::vector<double> point(n);
  for (const auto& dir : directions) {
    std::optional<ActiveSet> sides[2];
    int moved = 0;
    for (int s = 0; s < 2; ++s) {
      const double sign = s == 0 ? 1.0 : -1.0;
      std::vector<double> d(n);
      for (int i = 0; i < n; ++i) d[i] = sign * dir[i];
      double t = probe_eps;
      if (set) {
        t = set->max_step(delta, d, probe_eps);
        if (t < probe_eps) result.clipped = true;
      }
      if (t <= 0.0) {
        sides[s] = center;
        continue;
      }
      for (int i = 0; i < n; ++i) point[i] = delta[i] + t * d[i];
      sides[s] = active_set_at(network, load, point, tol);
      ++moved;
      ++result.probes;
    }
    if (moved > 0 && sides[0] != sides[1]) {
      result.on_boundary = true;
      return result;
    }
  }
  return result;
}

bool is_on_boundary(const Network& network, const LoadProfile& load, std::span<const double> delta,
                    double probe_eps, const FlexibilitySet* set) {
  return probe_boundary(network, load, delta, probe_eps, set).on_boundary;
}

MisalignmentRecord classify_alignment(const Network& network, const LoadProfile& load,
                                      std::span<const double> delta, const FlexibilitySet* set,
                                      double align_tol, double probe_eps) {
  const std::vector<double> zero(network.num_buses(), 0.0);
  const auto base = clear_market(network, load, zero);
  const auto star = clear_market(network, load, delta);
  MisalignmentRecord rec;
  rec.delta.assign(delta.begin(), delta.end());
  rec.v0 = base.dispatch.system_cost;
  rec.v_star = star.dispatch.system_cost;
  rec.pi0 = procurement_cost(base.duals.lambda, load, zero);
  rec.pi_star = procurement_cost(star.duals.lambda, load, delta);
  rec.misaligned = normalized(rec.v_star - rec.v0, load) > align_tol;
  const auto probe = probe_boundary(network, load, delta, probe_eps, set);
  rec.boundary = probe.on_boundary;
  rec.clipped = probe.clipped;
  rec.active_set = extract_active_set(star.dispatch, network);
  return rec;
}

std::vector<bool> marginal_generators(const MarketClearing& clearing, const Network& network, double tol,
                                      double price_tol) {
  std::vector<bool> out(network.num_generators(), false);
  for (int g = 0; g < network.num_generators(); ++g) {
    const auto& gen = network.generators()[g];
    const double p = clearing.dispatch.p[g];
    if (p > tol && p < gen.pmax_mw - tol) {
      out[g] = true;
    } else {
      const double price = clearing.duals.lambda[network.generator_bus(g)];
      out[g] = std::abs(price - gen.cost_usd_per_mwh) <= price_tol;
    }
  }
  return out;
}

std::vector<MeritOrderRow> merit_order_report(const Network& network, const std::vector<HourDispatch>& baseline,
                                              const std::vector<HourDispatch>& shifted) {
  std::map<int, const HourDispatch*> base_by_hour;
  for (const auto& h : baseline) {
    if (!base_by_hour.emplace(h.hour, &h).second) {
      throw std::invalid_argument("baseline run lists hour " + std::to_string(h.hour) + " twice");
    }
  }
  std::set<int> seen;
  const auto k = static_cast<std::size_t>(network.num_generators());
  std::vector<MeritOrderRow> rows(k);
  for (std::size_t g = 0; g < k; ++g) {
    rows[g].generator_id = network.generators()[g].id;
    rows[g].cost = network.generators()[g].cost_usd_per_mwh;
  }
  for (const auto& h : shifted) {
    const auto it = base_by_hour.find(h.hour);
    if (it == base_by_hour.end() || !seen.insert(h.hour).second) {
      throw std::invalid_argument("hour " + std::to_string(h.hour) + " is not paired with the baseline run");
    }
    const auto& b = *it->second;
    if (h.p.size() != k || b.p.size() != k || h.marginal.size() != k || b.marginal.size() != k) {
      throw std::invalid_argument("hour " + std::to_string(h.hour) + " has the wrong generator count");
    }
    for (std::size_t g = 0; g < k; ++g) {
      rows[g].delta_marginal_hours += static_cast<int>(h.marginal[g]) - static_cast<int>(b.marginal[g]);
      rows[g].delta_energy_mwh += h.p[g] - b.p[g];
    }
  }
  if (seen.size() != base_by_hour.size()) {
    throw std::invalid_argument("baseline run has hours missing from the shifted run");
  }
  std::stable_sort(rows.begin(), rows.end(), [](const MeritOrderRow& a, const MeritOrderRow& b) {
    return a.cost != b.cost ? a.cost < b.cost : a.generator_id < b.generator_id;
  });
  return rows;
}

void write_merit_order_csv(const std::filesystem::path& path, const std::vector<MeritOrderRow>& rows) {
  std::ostringstream out;
  out.precision(12);
  out << "generator_id,cost,delta_marginal_hours,delta_energy_mwh\n";
  for (const auto& r : rows) {
    out << r.generator_id << ',' << r.cost << ',' << r.delta_marginal_hours << ',' << r.delta_energy_mwh << '\n';
  }
  write_file_atomic(path, out.str());
}

nlohmann::json active_set_to_json(const ActiveSet& set, const Network& network) {
  auto names = [](const std::vector<int>& idx, const auto& name_of) {
    nlohmann::json arr = nlohmann::json::array();
    for (int i : idx) arr.push_back(name_of(i));
    return arr;
  };
  auto line = [&](int l) { return network.lines()[l].id; };
  auto gen = [&](int g) { return network.generators()[g].id; };
  return {{"lines_upper", names(set.lines_upper, line)},
          {"lines_lower", names(set.lines_lower, line)},
          {"gens_upper", names(set.gens_upper, gen)},
          {"gens_lower", names(set.gens_lower, gen)}};
}

}  // namespace loadshift
