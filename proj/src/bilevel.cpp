#include "loadshift/bilevel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <queue>
#include <stdexcept>

namespace loadshift {

const char* to_string(PairKind kind) {
  switch (kind) {
    case PairKind::kGenUpper: return "gen_upper";
    case PairKind::kGenLower: return "gen_lower";
    case PairKind::kLineUpper: return "line_upper";
    case PairKind::kLineLower: return "line_lower";
  }
  return "?";
}

const char* to_string(BilevelMode mode) { return mode == BilevelMode::kConsumer ? "consumer" : "system"; }

BilevelMode parse_mode(const std::string& text) {
  if (text == "consumer") return BilevelMode::kConsumer;
  if (text == "system") return BilevelMode::kSystem;
  throw std::invalid_argument("unknown mode '" + text + "' (expected consumer or system)");
}

const char* to_string(TieBreak tie) {
  switch (tie) {
    case TieBreak::kAsFound: return "as_found";
    case TieBreak::kMinSystemCost: return "min_system_cost";
    case TieBreak::kMaxSystemCost: return "max_system_cost";
  }
  return "?";
}

TieBreak parse_tie_break(const std::string& text) {
  if (text == "as_found") return TieBreak::kAsFound;
  if (text == "min_system_cost") return TieBreak::kMinSystemCost;
  if (text == "max_system_cost") return TieBreak::kMaxSystemCost;
  throw std::invalid_argument("unknown tie-break '" + text + "' (expected as_found, min_system_cost or max_system_cost)");
}

const char* to_string(BilevelStatus status) {
  return status == BilevelStatus::kOptimal ? "optimal" : "budget_exhausted";
}

ComplementaritySystem build_single_level(const Network& network, const LoadProfile& load,
                                         const FlexibilitySet& set) {
  const int n = network.num_buses();
  const int m = network.num_lines();
  const int k = network.num_generators();
  if (load.base_mw.size() != static_cast<std::size_t>(n) || load.flex_mw.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("load profile length does not match bus count");
  }
  if (set.dimension() != n) throw std::invalid_argument("flexibility set dimension does not match bus count");

  ComplementaritySystem sys;
  auto& lp = sys.lp;
  auto& lay = sys.layout;
  auto& pl = lay.primal;
  auto& dl = lay.dual;
  pl.generators = k;
  pl.buses = n;
  pl.lines = m;

  pl.p = lp.num_variables();
  for (const auto& g : network.generators()) lp.add_variable(0.0, g.pmax_mw, 0.0, "p_" + g.id);
  pl.theta = lp.num_variables();
  for (const auto& b : network.buses()) lp.add_variable(-lp::kInf, lp::kInf, 0.0, "theta_" + b);
  pl.f = lp.num_variables();
  for (const auto& l : network.lines()) lp.add_variable(-l.capacity_mw, l.capacity_mw, 0.0, "f_" + l.id);
  lay.delta = lp.num_variables();
  const auto& box = set.box_bounds();
  for (int i = 0; i < n; ++i) {
    const double b = box ? (*box)[i] : lp::kInf;
    lp.add_variable(-b, b, 0.0, "delta_" + network.buses()[i]);
  }
  dl.lambda = lp.num_variables();
  for (const auto& b : network.buses()) lp.add_variable(-lp::kInf, lp::kInf, 0.0, "lambda_" + b);
  dl.eta = lp.num_variables();
  for (const auto& l : network.lines()) lp.add_variable(-lp::kInf, lp::kInf, 0.0, "eta_" + l.id);
  dl.nu = lp.add_variable(-lp::kInf, lp::kInf, 0.0, "nu");
  dl.mu_plus = lp.num_variables();
  for (const auto& l : network.lines()) lp.add_variable(0.0, lp::kInf, 0.0, "mu_plus_" + l.id);
  dl.mu_minus = lp.num_variables();
  for (const auto& l : network.lines()) lp.add_variable(0.0, lp::kInf, 0.0, "mu_minus_" + l.id);
  dl.pi_plus = lp.num_variables();
  for (const auto& g : network.generators()) lp.add_variable(0.0, lp::kInf, 0.0, "pi_plus_" + g.id);
  dl.pi_minus = lp.num_variables();
  for (const auto& g : network.generators()) lp.add_variable(0.0, lp::kInf, 0.0, "pi_minus_" + g.id);

  // Follower primal rows.
  pl.flow_rows = lp.num_rows();
  for (int l = 0; l < m; ++l) {
    const double b = network.lines()[l].susceptance;
    lp.add_row({{pl.f + l, 1.0}, {pl.theta + network.line_from(l), -b}, {pl.theta + network.line_to(l), b}},
               lp::RowSense::kEqual, 0.0, "flow_" + network.lines()[l].id);
  }
  std::vector<std::vector<lp::Term>> balance(n);
  for (int g = 0; g < k; ++g) balance[network.generator_bus(g)].push_back({pl.p + g, 1.0});
  for (int l = 0; l < m; ++l) {
    balance[network.line_from(l)].push_back({pl.f + l, -1.0});
    balance[network.line_to(l)].push_back({pl.f + l, 1.0});
  }
  pl.balance_rows = lp.num_rows();
  for (int i = 0; i < n; ++i) {
    balance[i].push_back({lay.delta + i, -1.0});
    lp.add_row(std::move(balance[i]), lp::RowSense::kEqual, load.base_mw[i] + load.flex_mw[i],
               "balance_" + network.buses()[i]);
  }
  pl.reference_row = lp.num_rows();
  lp.add_row({{pl.theta + network.reference_index(), 1.0}}, lp::RowSense::kEqual, 0.0, "reference");

  // Follower dual stationarity.
  lay.dual_rows = lp.num_rows();
  for (int g = 0; g < k; ++g) {
    lp.add_row({{dl.lambda + network.generator_bus(g), 1.0}, {dl.pi_plus + g, -1.0}, {dl.pi_minus + g, 1.0}},
               lp::RowSense::kEqual, network.generators()[g].cost_usd_per_mwh,
               "stat_p_" + network.generators()[g].id);
  }
  for (int l = 0; l < m; ++l) {
    lp.add_row({{dl.lambda + network.line_from(l), 1.0},
                {dl.lambda + network.line_to(l), -1.0},
                {dl.eta + l, -1.0},
                {dl.mu_plus + l, 1.0},
                {dl.mu_minus + l, -1.0}},
               lp::RowSense::kEqual, 0.0, "stat_f_" + network.lines()[l].id);
  }
  std::vector<std::vector<lp::Term>> angle(n);
  for (int l = 0; l < m; ++l) {
    const double b = network.lines()[l].susceptance;
    angle[network.line_from(l)].push_back({dl.eta + l, b});
    angle[network.line_to(l)].push_back({dl.eta + l, -b});
  }
  angle[network.reference_index()].push_back({dl.nu, -1.0});
  for (int i = 0; i < n; ++i) {
    lp.add_row(std::move(angle[i]), lp::RowSense::kEqual, 0.0, "stat_theta_" + network.buses()[i]);
  }

  // Leader feasible set. A box is carried by the delta bounds.
  lay.flexibility_rows = lp.num_rows();
  if (!box) {
    for (Eigen::Index r = 0; r < set.T().rows(); ++r) {
      std::vector<lp::Term> terms;
      for (int i = 0; i < n; ++i) {
        if (set.T()(r, i) != 0.0) terms.push_back({lay.delta + i, set.T()(r, i)});
      }
      lp.add_row(std::move(terms), lp::RowSense::kLessEqual, set.q()[r], "flex_" + std::to_string(r));
    }
  }
  std::vector<lp::Term> sum;
  for (int i = 0; i < n; ++i) sum.push_back({lay.delta + i, 1.0});
  lay.balance_row = lp.add_row(std::move(sum), lp::RowSense::kEqual, 0.0, "shift_balance");

  sys.system_costs.assign(lp.num_variables(), 0.0);
  sys.consumer_costs.assign(lp.num_variables(), 0.0);
  for (int g = 0; g < k; ++g) {
    const auto& gen = network.generators()[g];
    sys.system_costs[pl.p + g] = gen.cost_usd_per_mwh;
    sys.consumer_costs[pl.p + g] = gen.cost_usd_per_mwh;
    sys.consumer_costs[dl.pi_plus + g] = gen.pmax_mw;
  }
  for (int l = 0; l < m; ++l) {
    sys.consumer_costs[dl.mu_plus + l] = network.lines()[l].capacity_mw;
    sys.consumer_costs[dl.mu_minus + l] = network.lines()[l].capacity_mw;
  }
  for (int i = 0; i < n; ++i) sys.consumer_costs[dl.lambda + i] = -load.base_mw[i];
  for (int j = 0; j < lp.num_variables(); ++j) lp.set_cost(j, sys.consumer_costs[j]);

  for (int g = 0; g < k; ++g) {
    sys.pairs.push_back({PairKind::kGenUpper, g, pl.p + g, dl.pi_plus + g, network.generators()[g].pmax_mw, k + g});
  }
  for (int g = 0; g < k; ++g) {
    sys.pairs.push_back({PairKind::kGenLower, g, pl.p + g, dl.pi_minus + g, 0.0, g});
  }
  for (int l = 0; l < m; ++l) {
    sys.pairs.push_back(
        {PairKind::kLineUpper, l, pl.f + l, dl.mu_plus + l, network.lines()[l].capacity_mw, 2 * k + m + l});
  }
  for (int l = 0; l < m; ++l) {
    sys.pairs.push_back(
        {PairKind::kLineLower, l, pl.f + l, dl.mu_minus + l, -network.lines()[l].capacity_mw, 2 * k + l});
  }
  return sys;
}

namespace {

enum : std::uint8_t { kFree = 0, kBinding = 1, kInactive = 2 };

double pair_slack(const ComplementarityPair& pair, const std::vector<double>& x) {
  const double v = x[pair.primal_var];
  switch (pair.kind) {
    case PairKind::kGenUpper:
    case PairKind::kLineUpper: return pair.bound - v;
    case PairKind::kGenLower:
    case PairKind::kLineLower: return v - pair.bound;
  }
  return 0.0;
}

struct Node {
  double bound;
  long id;
  std::vector<std::uint8_t> status;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    return a.bound != b.bound ? a.bound > b.bound : a.id > b.id;
  }
};

// Sets pair j to `side` and propagates the partner implication; false on conflict.
bool assign(const std::vector<ComplementarityPair>& pairs, std::vector<std::uint8_t>& status, int j,
            std::uint8_t side) {
  if (status[j] != kFree && status[j] != side) return false;
  status[j] = side;
  if (side == kBinding) {
    const auto& pair = pairs[j];
    const auto& partner = pairs[pair.partner];
    if (partner.bound != pair.bound) {
      if (status[pair.partner] == kBinding) return false;
      status[pair.partner] = kInactive;
    }
  }
  return true;
}

struct SearchProblem {
  const ComplementaritySystem* sys;
  lp::LinearProgram lp;  // objective and any extra rows already installed
  std::function<std::optional<double>(const ShiftVector&)> evaluate;
};

struct SearchResult {
  BilevelStatus status = BilevelStatus::kOptimal;
  std::optional<ShiftVector> best;
  double incumbent = lp::kInf;
  double lower_bound = -lp::kInf;
  BilevelStats stats;
};

ShiftVector shift_of(const ComplementaritySystem& sys, const std::vector<double>& x) {
  const int n = sys.layout.primal.buses;
  ShiftVector d(x.begin() + sys.layout.delta, x.begin() + sys.layout.delta + n);
  for (double& v : d) {
    if (std::abs(v) < 1e-9) v = 0.0;
  }
  return d;
}

double strong_duality_residual(const ComplementaritySystem& sys, const Network& network, const LoadProfile& load,
                               const std::vector<double>& x) {
  const auto& pl = sys.layout.primal;
  const auto& dl = sys.layout.dual;
  double primal = 0.0;
  double dual = 0.0;
  for (int g = 0; g < pl.generators; ++g) {
    primal += network.generators()[g].cost_usd_per_mwh * x[pl.p + g];
    dual -= network.generators()[g].pmax_mw * x[dl.pi_plus + g];
  }
  for (int i = 0; i < pl.buses; ++i) {
    dual += x[dl.lambda + i] * (load.base_mw[i] + load.flex_mw[i] + x[sys.layout.delta + i]);
  }
  for (int l = 0; l < pl.lines; ++l) {
    dual -= network.lines()[l].capacity_mw * (x[dl.mu_plus + l] + x[dl.mu_minus + l]);
  }
  return std::abs(primal - dual);
}

SearchResult branch_and_bound(const SearchProblem& prob, const Network& network, const LoadProfile& load,
                              double epsilon, long node_budget, bool heuristic, const lp::Tolerances& tol,
                              std::optional<double> seed_value, const ShiftVector& seed) {
  const auto& sys = *prob.sys;
  const auto& pairs = sys.pairs;
  const int np = static_cast<int>(pairs.size());
  SearchResult res;
  if (seed_value) {
    res.incumbent = *seed_value;
    res.best = seed;
  }
  std::map<std::vector<long long>, std::optional<double>> cache;
  auto try_incumbent = [&](const ShiftVector& d) {
    std::vector<long long> key(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) key[i] = std::llround(d[i] * 1e6);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, prob.evaluate(d)).first;
    if (it->second && *it->second < res.incumbent - 1e-9) {
      res.incumbent = *it->second;
      res.best = d;
    }
  };

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  long next_id = 0;
  open.push(Node{-lp::kInf, next_id++, std::vector<std::uint8_t>(np, kFree)});
  double pruned_floor = lp::kInf;
  lp::LinearProgram work = prob.lp;
  const auto& base_vars = prob.lp.variables();

  while (!open.empty()) {
    if (open.top().bound >= res.incumbent - epsilon) {
      pruned_floor = std::min(pruned_floor, open.top().bound);
      break;
    }
    if (res.stats.nodes >= node_budget) {
      res.status = BilevelStatus::kBudgetExhausted;
      break;
    }
    Node node = open.top();
    open.pop();
    ++res.stats.nodes;

    for (int j = 0; j < work.num_variables(); ++j) work.set_bounds(j, base_vars[j].lower, base_vars[j].upper);
    bool conflict = false;
    for (int j = 0; j < np && !conflict; ++j) {
      const auto& pair = pairs[j];
      if (node.status[j] == kBinding) {
        const auto& v = work.variable(pair.primal_var);
        if (pair.bound < v.lower - 1e-12 || pair.bound > v.upper + 1e-12) {
          conflict = true;
        } else {
          work.set_bounds(pair.primal_var, pair.bound, pair.bound);
        }
      } else if (node.status[j] == kInactive) {
        work.set_bounds(pair.multiplier, 0.0, 0.0);
      }
    }
    if (conflict) continue;

    const auto sol = lp::solve_lp(work, tol);
    ++res.stats.lp_solves;
    if (sol.status == lp::Status::kInfeasible) continue;
    double value = -lp::kInf;
    if (sol.optimal()) {
      value = sol.objective;
      const double slack = 1e-9 * std::max(1.0, std::abs(node.bound));
      if (std::isfinite(node.bound) && value < node.bound - slack) ++res.stats.bound_monotonicity_violations;
      if (value >= res.incumbent - epsilon) {
        pruned_floor = std::min(pruned_floor, value);
        continue;
      }
      if (heuristic) try_incumbent(shift_of(sys, sol.x));
    } else if (sol.status != lp::Status::kUnbounded) {
      throw std::runtime_error(std::string("node relaxation failed: ") + lp::to_string(sol.status));
    }

    int branch = -1;
    if (sol.optimal()) {
      double worst = 0.0;
      for (int j = 0; j < np; ++j) {
        if (node.status[j] != kFree) continue;
        const double s = pair_slack(pairs[j], sol.x);
        const double mult = sol.x[pairs[j].multiplier];
        if (std::min(s, mult) <= 1e-9) continue;
        const double product = s * mult;
        if (product > 1e-8 && product > worst) {
          worst = product;
          branch = j;
        }
      }
      if (branch < 0) {
        ++res.stats.leaves;
        res.stats.max_strong_duality_residual =
            std::max(res.stats.max_strong_duality_residual, strong_duality_residual(sys, network, load, sol.x));
        if (!heuristic) try_incumbent(shift_of(sys, sol.x));
        continue;
      }
    } else {
      for (int j = 0; j < np && branch < 0; ++j) {
        if (node.status[j] == kFree) branch = j;
      }
      if (branch < 0) throw std::runtime_error("relaxation unbounded with every pair resolved");
    }

    for (const std::uint8_t side : {kBinding, kInactive}) {
      auto status = node.status;
      if (assign(pairs, status, branch, side)) open.push(Node{value, next_id++, std::move(status)});
    }
  }

  double floor = pruned_floor;
  if (res.status == BilevelStatus::kBudgetExhausted && !open.empty()) floor = std::min(floor, open.top().bound);
  res.lower_bound = std::min(floor, res.incumbent);
  return res;
}

}  // namespace

BilevelSolution solve_bilevel(const Network& network, const LoadProfile& load, const FlexibilitySet& set,
                              const BilevelOptions& options) {
  if (!(options.epsilon >= 0.0)) throw std::invalid_argument("epsilon must be non-negative");
  if (options.node_budget <= 0) throw std::invalid_argument("node budget must be positive");
  const int n = network.num_buses();
  const ShiftVector zero(n, 0.0);
  ClearingOptions clear_opts;
  clear_opts.tolerances = options.tolerances;
  const auto base = clear_market(network, load, zero, clear_opts);

  BilevelSolution out;
  out.mode = options.mode;
  out.v0 = base.dispatch.system_cost;
  out.pi0 = procurement_cost(base.duals.lambda, load, zero);

  const auto sys = build_single_level(network, load, set);
  auto clear_at = [&](const ShiftVector& d) -> std::optional<MarketClearing> {
    try {
      return clear_market(network, load, d, clear_opts);
    } catch (const InfeasibleMarketError&) {
      return std::nullopt;
    }
  };

  if (options.mode == BilevelMode::kSystem) {
    lp::LinearProgram prog = sys.lp;
    for (int j = 0; j < prog.num_variables(); ++j) prog.set_cost(j, sys.system_costs[j]);
    const auto sol = lp::solve_lp(prog, options.tolerances);
    out.stats.lp_solves = 1;
    out.stats.nodes = 1;
    if (!sol.optimal()) {
      throw std::runtime_error(std::string("system-optimal shift LP failed: ") + lp::to_string(sol.status));
    }
    out.delta = shift_of(sys, sol.x);
    out.lower_bound = sol.objective;
    const auto at = clear_at(out.delta);
    if (!at || at->dispatch.system_cost > out.v0) {
      out.delta = zero;
    }
  } else {
    SearchProblem prob{&sys, sys.lp, [&](const ShiftVector& d) -> std::optional<double> {
                         const auto c = clear_at(d);
                         if (!c) return std::nullopt;
                         return procurement_cost(c->duals.lambda, load, d);
                       }};
    auto res = branch_and_bound(prob, network, load, options.epsilon, options.node_budget, options.node_heuristic, options.tolerances,
                                out.pi0, zero);
    out.status = res.status;
    out.delta = *res.best;
    out.lower_bound = res.lower_bound;
    out.stats = res.stats;

    if (options.tie_break != TieBreak::kAsFound && res.status == BilevelStatus::kOptimal) {
      const double cap = res.incumbent + 1e-6;
      const double sign = options.tie_break == TieBreak::kMinSystemCost ? 1.0 : -1.0;
      SearchProblem second{&sys, sys.lp, [&](const ShiftVector& d) -> std::optional<double> {
                             const auto c = clear_at(d);
                             if (!c || procurement_cost(c->duals.lambda, load, d) > cap + 1e-9) return std::nullopt;
                             return sign * c->dispatch.system_cost;
                           }};
      for (int j = 0; j < second.lp.num_variables(); ++j) second.lp.set_cost(j, sign * sys.system_costs[j]);
      std::vector<lp::Term> surrogate;
      for (int j = 0; j < second.lp.num_variables(); ++j) {
        if (sys.consumer_costs[j] != 0.0) surrogate.push_back({j, sys.consumer_costs[j]});
      }
      second.lp.add_row(std::move(surrogate), lp::RowSense::kLessEqual, cap, "consumer_cap");
      const auto incumbent_clear = clear_at(out.delta);
      auto tie = branch_and_bound(second, network, load, options.epsilon, options.node_budget, options.node_heuristic, options.tolerances,
                                  sign * incumbent_clear->dispatch.system_cost, out.delta);
      out.delta = *tie.best;
      out.stats.nodes += tie.stats.nodes;
      out.stats.lp_solves += tie.stats.lp_solves;
      out.stats.leaves += tie.stats.leaves;
      out.stats.max_strong_duality_residual =
          std::max(out.stats.max_strong_duality_residual, tie.stats.max_strong_duality_residual);
      out.stats.bound_monotonicity_violations += tie.stats.bound_monotonicity_violations;
      if (tie.status == BilevelStatus::kBudgetExhausted) out.status = BilevelStatus::kBudgetExhausted;
    }
  }

  const auto star = clear_market(network, load, out.delta, clear_opts);
  out.v = star.dispatch.system_cost;
  out.lambda = star.duals.lambda;
  out.pi = procurement_cost(star.duals.lambda, load, out.delta);
  const double achieved = options.mode == BilevelMode::kConsumer ? out.pi : out.v;
  out.lower_bound = std::min(out.lower_bound, achieved);
  out.gap = std::max(0.0, achieved - out.lower_bound);
  if (out.v > out.v0 + 1e-9) {
    double price_shift = 0.0;
    for (int i = 0; i < n; ++i) price_shift += out.lambda[i] * out.delta[i];
    out.price_bound_holds = price_shift >= out.v - out.v0 - 1e-5;
  }
  return out;
}

OracleResult brute_force_oracle(const Network& network, const LoadProfile& load, const FlexibilitySet& set,
                                double step, int max_free_dimension, double tie_tol) {
  OracleResult out;
  auto better = [&](double value, const ShiftVector& d, std::optional<std::size_t> current, auto field) {
    if (!current) return true;
    const auto& row = out.landscape[*current];
    const double best = row.*field;
    if (value < best - tie_tol) return true;
    return value <= best + tie_tol && d < row.delta;
  };
  for_each_grid_point(
      set, step,
      [&](const ShiftVector& d) {
        LandscapeRow row;
        row.delta = d;
        try {
          const auto c = clear_market(network, load, d);
          row.feasible = true;
          row.v = c.dispatch.system_cost;
          row.pi = procurement_cost(c.duals.lambda, load, d);
          row.active_set_id = extract_active_set(c.dispatch, network).id(network);
        } catch (const InfeasibleMarketError&) {
          row.feasible = false;
        }
        const bool take_pi = row.feasible && better(row.pi, d, out.argmin_pi, &LandscapeRow::pi);
        const bool take_v = row.feasible && better(row.v, d, out.argmin_v, &LandscapeRow::v);
        out.landscape.push_back(std::move(row));
        if (take_pi) out.argmin_pi = out.landscape.size() - 1;
        if (take_v) out.argmin_v = out.landscape.size() - 1;
      },
      max_free_dimension);
  return out;
}

nlohmann::json bilevel_to_json(const BilevelSolution& sol, const LoadProfile& load) {
  return {{"mode", to_string(sol.mode)},
          {"status", to_string(sol.status)},
          {"delta", sol.delta},
          {"Pi_usd", sol.pi},
          {"Pi_normalized", normalized(sol.pi, load)},
          {"V_usd", sol.v},
          {"V_normalized", normalized(sol.v, load)},
          {"Pi0_usd", sol.pi0},
          {"V0_usd", sol.v0},
          {"lambda", sol.lambda},
          {"lower_bound_usd", sol.lower_bound},
          {"gap_usd", sol.gap},
          {"nodes", sol.stats.nodes},
          {"lp_solves", sol.stats.lp_solves},
          {"leaves", sol.stats.leaves},
          {"max_strong_duality_residual", sol.stats.max_strong_duality_residual},
          {"bound_monotonicity_violations", sol.stats.bound_monotonicity_violations},
          {"price_bound_holds", sol.price_bound_holds}};
}

}  // namespace loadshift
