#include "loadshift/dcopf.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace loadshift {

namespace {

void check_dimensions(const Network& network, const LoadProfile& load, std::span<const double> shift) {
  const auto n = static_cast<std::size_t>(network.num_buses());
  if (load.base_mw.size() != n || load.flex_mw.size() != n) {
    throw std::invalid_argument("load profile length does not match bus count");
  }
  if (shift.size() != n) throw std::invalid_argument("shift vector length does not match bus count");
}

}  // namespace

DcopfProblem build_dcopf(const Network& network, const LoadProfile& load, std::span<const double> shift) {
  check_dimensions(network, load, shift);
  const int n = network.num_buses();
  const int m = network.num_lines();
  const int k = network.num_generators();
  DcopfProblem prob;
  auto& lp = prob.lp;
  auto& lay = prob.layout;
  lay.generators = k;
  lay.buses = n;
  lay.lines = m;

  lay.p = lp.num_variables();
  for (const auto& g : network.generators()) lp.add_variable(0.0, g.pmax_mw, g.cost_usd_per_mwh, "p_" + g.id);
  lay.theta = lp.num_variables();
  for (const auto& b : network.buses()) lp.add_variable(-lp::kInf, lp::kInf, 0.0, "theta_" + b);
  lay.f = lp.num_variables();
  for (const auto& l : network.lines()) lp.add_variable(-l.capacity_mw, l.capacity_mw, 0.0, "f_" + l.id);

  lay.flow_rows = lp.num_rows();
  for (int l = 0; l < m; ++l) {
    const double b = network.lines()[l].susceptance;
    lp.add_row({{lay.f + l, 1.0}, {lay.theta + network.line_from(l), -b}, {lay.theta + network.line_to(l), b}},
               lp::RowSense::kEqual, 0.0, "flow_" + network.lines()[l].id);
  }
  std::vector<std::vector<lp::Term>> balance(n);
  for (int g = 0; g < k; ++g) balance[network.generator_bus(g)].push_back({lay.p + g, 1.0});
  for (int l = 0; l < m; ++l) {
    balance[network.line_from(l)].push_back({lay.f + l, -1.0});
    balance[network.line_to(l)].push_back({lay.f + l, 1.0});
  }
  lay.balance_rows = lp.num_rows();
  for (int i = 0; i < n; ++i) {
    lp.add_row(std::move(balance[i]), lp::RowSense::kEqual,
               load.base_mw[i] + load.flex_mw[i] + shift[i], "balance_" + network.buses()[i]);
  }
  lay.reference_row = lp.num_rows();
  lp.add_row({{lay.theta + network.reference_index(), 1.0}}, lp::RowSense::kEqual, 0.0, "reference");
  return prob;
}

DualProblem build_dcopf_dual(const Network& network, const LoadProfile& load, std::span<const double> shift) {
  check_dimensions(network, load, shift);
  const int n = network.num_buses();
  const int m = network.num_lines();
  const int k = network.num_generators();
  DualProblem prob;
  auto& lp = prob.lp;
  auto& lay = prob.layout;

  lay.lambda = lp.num_variables();
  for (int i = 0; i < n; ++i) {
    const double d = load.base_mw[i] + load.flex_mw[i] + shift[i];
    lp.add_variable(-lp::kInf, lp::kInf, -d, "lambda_" + network.buses()[i]);
  }
  lay.eta = lp.num_variables();
  for (const auto& l : network.lines()) lp.add_variable(-lp::kInf, lp::kInf, 0.0, "eta_" + l.id);
  lay.nu = lp.add_variable(-lp::kInf, lp::kInf, 0.0, "nu");
  lay.mu_plus = lp.num_variables();
  for (const auto& l : network.lines()) lp.add_variable(0.0, lp::kInf, l.capacity_mw, "mu_plus_" + l.id);
  lay.mu_minus = lp.num_variables();
  for (const auto& l : network.lines()) lp.add_variable(0.0, lp::kInf, l.capacity_mw, "mu_minus_" + l.id);
  lay.pi_plus = lp.num_variables();
  for (const auto& g : network.generators()) lp.add_variable(0.0, lp::kInf, g.pmax_mw, "pi_plus_" + g.id);
  lay.pi_minus = lp.num_variables();
  for (const auto& g : network.generators()) lp.add_variable(0.0, lp::kInf, 0.0, "pi_minus_" + g.id);

  for (int g = 0; g < k; ++g) {
    lp.add_row({{lay.lambda + network.generator_bus(g), 1.0}, {lay.pi_plus + g, -1.0}, {lay.pi_minus + g, 1.0}},
               lp::RowSense::kEqual, network.generators()[g].cost_usd_per_mwh,
               "stat_p_" + network.generators()[g].id);
  }
  for (int l = 0; l < m; ++l) {
    lp.add_row({{lay.lambda + network.line_from(l), 1.0},
                {lay.lambda + network.line_to(l), -1.0},
                {lay.eta + l, -1.0},
                {lay.mu_plus + l, 1.0},
                {lay.mu_minus + l, -1.0}},
               lp::RowSense::kEqual, 0.0, "stat_f_" + network.lines()[l].id);
  }
  std::vector<std::vector<lp::Term>> angle(n);
  for (int l = 0; l < m; ++l) {
    const double b = network.lines()[l].susceptance;
    angle[network.line_from(l)].push_back({lay.eta + l, b});
    angle[network.line_to(l)].push_back({lay.eta + l, -b});
  }
  angle[network.reference_index()].push_back({lay.nu, -1.0});
  for (int i = 0; i < n; ++i) {
    lp.add_row(std::move(angle[i]), lp::RowSense::kEqual, 0.0, "stat_theta_" + network.buses()[i]);
  }
  return prob;
}

namespace {

DualBundle duals_from_primal(const DcopfLayout& lay, const lp::LpSolution& sol) {
  DualBundle d;
  d.lambda.assign(sol.row_duals.begin() + lay.balance_rows,
                  sol.row_duals.begin() + lay.balance_rows + lay.buses);
  d.eta.assign(sol.row_duals.begin() + lay.flow_rows, sol.row_duals.begin() + lay.flow_rows + lay.lines);
  d.nu = sol.row_duals[lay.reference_row];
  for (int l = 0; l < lay.lines; ++l) {
    const double rc = sol.reduced_costs[lay.f + l];
    d.mu_plus.push_back(std::max(0.0, -rc));
    d.mu_minus.push_back(std::max(0.0, rc));
  }
  for (int g = 0; g < lay.generators; ++g) {
    const double rc = sol.reduced_costs[lay.p + g];
    d.pi_plus.push_back(std::max(0.0, -rc));
    d.pi_minus.push_back(std::max(0.0, rc));
  }
  return d;
}

DualBundle duals_from_dual(const DualLayout& lay, const Network& net, const lp::LpSolution& sol) {
  auto slice = [&](int start, int count) {
    return std::vector<double>(sol.x.begin() + start, sol.x.begin() + start + count);
  };
  DualBundle d;
  d.lambda = slice(lay.lambda, net.num_buses());
  d.eta = slice(lay.eta, net.num_lines());
  d.nu = sol.x[lay.nu];
  d.mu_plus = slice(lay.mu_plus, net.num_lines());
  d.mu_minus = slice(lay.mu_minus, net.num_lines());
  d.pi_plus = slice(lay.pi_plus, net.num_generators());
  d.pi_minus = slice(lay.pi_minus, net.num_generators());
  return d;
}

[[noreturn]] void throw_infeasible(const Network& network, const LoadProfile& load,
                                   std::span<const double> shift) {
  double demand = load.total();
  for (double s : shift) demand += s;
  double capacity = 0.0;
  for (const auto& g : network.generators()) capacity += g.pmax_mw;
  std::ostringstream msg;
  msg.precision(10);
  if (demand > capacity) {
    msg << "infeasible market: demand " << demand << " MW exceeds generation capacity " << capacity << " MW";
  } else {
    msg << "infeasible market: network cannot deliver demand " << demand
        << " MW from generation capacity " << capacity << " MW";
  }
  throw InfeasibleMarketError(msg.str(), demand, capacity);
}

}  // namespace

MarketClearing clear_market(const Network& network, const LoadProfile& load, std::span<const double> shift,
                            const ClearingOptions& options) {
  const auto primal = build_dcopf(network, load, shift);
  const auto sol = lp::solve_lp(primal.lp, options.tolerances);
  if (sol.status == lp::Status::kInfeasible) throw_infeasible(network, load, shift);
  if (!sol.optimal()) {
    throw std::runtime_error(std::string("DC-OPF solve failed: ") + lp::to_string(sol.status));
  }
  const auto& lay = primal.layout;
  MarketClearing out;
  out.dispatch.p.assign(sol.x.begin() + lay.p, sol.x.begin() + lay.p + lay.generators);
  out.dispatch.theta.assign(sol.x.begin() + lay.theta, sol.x.begin() + lay.theta + lay.buses);
  out.dispatch.f.assign(sol.x.begin() + lay.f, sol.x.begin() + lay.f + lay.lines);
  out.dispatch.system_cost = sol.objective;
  out.primal_duals = duals_from_primal(lay, sol);

  if (options.selection == PriceSelection::kAsSolved) {
    out.duals = out.primal_duals;
    return out;
  }

  const auto dual = build_dcopf_dual(network, load, shift);
  const auto dual_sol = lp::solve_lp(dual.lp, options.tolerances);
  if (!dual_sol.optimal()) {
    throw std::runtime_error(std::string("DC-OPF dual solve failed: ") + lp::to_string(dual_sol.status));
  }
  std::vector<double> secondary(dual.lp.num_variables(), 0.0);
  const double sign = options.selection == PriceSelection::kConsumerFavorable ? 1.0 : -1.0;
  for (int i = 0; i < network.num_buses(); ++i) {
    secondary[dual.layout.lambda + i] = sign * (load.flex_mw[i] + shift[i]);
  }
  const auto face = lp::resolve_over_optimal_face(dual.lp, dual_sol, secondary, options.tolerances);
  if (!face.optimal()) {
    throw std::runtime_error(std::string("dual face re-optimization failed: ") + lp::to_string(face.status));
  }
  out.duals = duals_from_dual(dual.layout, network, face);
  return out;
}

double value_function(const Network& network, const LoadProfile& load, std::span<const double> shift) {
  ClearingOptions opts;
  opts.selection = PriceSelection::kAsSolved;
  return clear_market(network, load, shift, opts).dispatch.system_cost;
}

double procurement_cost(std::span<const double> lambda, const LoadProfile& load, std::span<const double> shift) {
  if (lambda.size() != load.flex_mw.size() || shift.size() != load.flex_mw.size()) {
    throw std::invalid_argument("procurement_cost: dimension mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < lambda.size(); ++i) total += lambda[i] * (load.flex_mw[i] + shift[i]);
  return total;
}

double Ledger::conservation_residual() const {
  return flex_cost + inflex_cost - system_cost - gen_profit - congestion_rent;
}

Ledger stakeholder_ledger(const DispatchSolution& dispatch, const DualBundle& duals, const Network& network,
                          const LoadProfile& load, std::span<const double> shift) {
  check_dimensions(network, load, shift);
  if (duals.lambda.size() != static_cast<std::size_t>(network.num_buses()) ||
      dispatch.p.size() != static_cast<std::size_t>(network.num_generators()) ||
      duals.mu_plus.size() != static_cast<std::size_t>(network.num_lines())) {
    throw std::invalid_argument("stakeholder_ledger: dimension mismatch");
  }
  Ledger led;
  led.flex_cost = procurement_cost(duals.lambda, load, shift);
  for (int i = 0; i < network.num_buses(); ++i) led.inflex_cost += duals.lambda[i] * load.base_mw[i];
  led.profit_by_generator.resize(network.num_generators());
  for (int g = 0; g < network.num_generators(); ++g) {
    const double c = network.generators()[g].cost_usd_per_mwh;
    const double margin = duals.lambda[network.generator_bus(g)] - c;
    led.profit_by_generator[g] = margin * dispatch.p[g];
    led.gen_profit += led.profit_by_generator[g];
    led.system_cost += c * dispatch.p[g];
  }
  for (int l = 0; l < network.num_lines(); ++l) {
    led.congestion_rent += (duals.mu_plus[l] + duals.mu_minus[l]) * network.lines()[l].capacity_mw;
  }
  return led;
}

nlohmann::json clearing_to_json(const Network& network, const LoadProfile& load, std::span<const double> shift,
                                const MarketClearing& clearing) {
  const Ledger led = stakeholder_ledger(clearing.dispatch, clearing.duals, network, load, shift);
  nlohmann::json j;
  j["delta"] = std::vector<double>(shift.begin(), shift.end());
  j["V_usd"] = clearing.dispatch.system_cost;
  j["V_normalized"] = normalized(clearing.dispatch.system_cost, load);
  j["Pi_usd"] = led.flex_cost;
  j["Pi_normalized"] = normalized(led.flex_cost, load);
  j["lambda"] = clearing.duals.lambda;
  j["p"] = clearing.dispatch.p;
  j["f"] = clearing.dispatch.f;
  j["theta"] = clearing.dispatch.theta;
  j["ledger"] = {{"flex_cost", led.flex_cost},
                 {"inflex_cost", led.inflex_cost},
                 {"gen_profit", led.gen_profit},
                 {"system_cost", led.system_cost},
                 {"congestion_rent", led.congestion_rent},
                 {"conservation_residual", led.conservation_residual()}};
  return j;
}

}  // namespace loadshift
