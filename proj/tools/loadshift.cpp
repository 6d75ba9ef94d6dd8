// loadshift command-line tool.
//
// Every command prints one JSON summary object on stdout. Exit codes:
//   0 ok, 1 usage or input error, 2 infeasible market, 3 node budget exhausted,
//   4 internal failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "loadshift/bilevel.hpp"
#include "loadshift/dcopf.hpp"
#include "loadshift/flexibility.hpp"
#include "loadshift/io.hpp"
#include "loadshift/regimes.hpp"
#include "loadshift/runner.hpp"

using namespace loadshift;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInfeasible = 2, kBudget = 3, kInternal = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int emit(json summary, int code) {
  summary["exit_code"] = code;
  std::cout << summary.dump() << '\n';
  return code;
}

struct TolFlags {
  lp::Tolerances tol;

  void add(CLI::App* app) {
    app->add_option("--feas-tol", tol.feasibility, "Primal feasibility tolerance")->capture_default_str();
    app->add_option("--duality-tol", tol.duality, "Duality gap tolerance for optimal-face re-solves")
        ->capture_default_str();
    app->add_option("--pivot-tol", tol.pivot, "Smallest accepted pivot magnitude")->capture_default_str();
    app->add_option("--opt-tol", tol.optimality, "Reduced-cost optimality tolerance")->capture_default_str();
    app->add_option("--refactor", tol.refactor_interval, "Pivots between basis refactorizations")
        ->capture_default_str();
  }
};

NetworkCase read_case(const std::string& path) {
  try {
    return load_network_file(path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

ShiftVector read_shift(const std::vector<double>& shift, const Network& net) {
  if (shift.empty()) return ShiftVector(net.num_buses(), 0.0);
  if (static_cast<int>(shift.size()) != net.num_buses()) {
    throw UsageError("--shift needs " + std::to_string(net.num_buses()) + " values, got " +
                     std::to_string(shift.size()));
  }
  return shift;
}

void dump_lp(const std::string& path, const lp::LinearProgram& prog) {
  if (path.empty()) return;
  std::ostringstream os;
  prog.write_text(os);
  write_file_atomic(path, os.str());
}

PriceSelection parse_selection(const std::string& s) {
  if (s == "favorable") return PriceSelection::kConsumerFavorable;
  if (s == "adverse") return PriceSelection::kConsumerAdverse;
  if (s == "as_solved") return PriceSelection::kAsSolved;
  throw UsageError("unknown price selection '" + s + "'");
}

json infeasible_summary(const std::string& command, const InfeasibleMarketError& e) {
  std::cerr << "error: " << e.what() << '\n';
  return {{"command", command},
          {"status", "infeasible"},
          {"message", e.what()},
          {"demand_mw", e.demand_mw},
          {"capacity_mw", e.capacity_mw}};
}

int cmd_solve_opf(const std::string& network, const std::vector<double>& shift_arg, const std::string& out,
                  const std::string& selection, const std::string& lp_dump, const lp::Tolerances& tol) {
  const auto c = read_case(network);
  const auto shift = read_shift(shift_arg, c.network);
  dump_lp(lp_dump, build_dcopf(c.network, c.load, shift).lp);
  ClearingOptions opts;
  opts.selection = parse_selection(selection);
  opts.tolerances = tol;
  try {
    const auto clearing = clear_market(c.network, c.load, shift, opts);
    json doc = clearing_to_json(c.network, c.load, shift, clearing);
    doc["active_set"] = active_set_to_json(extract_active_set(clearing.dispatch, c.network), c.network);
    if (!out.empty()) write_file_atomic(out, doc.dump(2) + '\n');
    json summary = {{"command", "solve-opf"},
                    {"status", "ok"},
                    {"V_usd", doc["V_usd"]},
                    {"V_normalized", doc["V_normalized"]},
                    {"Pi_usd", doc["Pi_usd"]},
                    {"Pi_normalized", doc["Pi_normalized"]},
                    {"lambda", doc["lambda"]},
                    {"conservation_residual", doc["ledger"]["conservation_residual"]}};
    if (!out.empty()) summary["outputs"] = {out};
    return emit(summary, kOk);
  } catch (const InfeasibleMarketError& e) {
    return emit(infeasible_summary("solve-opf", e), kInfeasible);
  }
}

int cmd_sweep(const std::string& network, double alpha, double step, const std::string& out) {
  const auto c = read_case(network);
  std::optional<FlexibilitySet> set;
  try {
    set = FlexibilitySet::box_with_balance(alpha, c.load.flex_mw);
    if (set->free_dimension() > 2) {
      throw UsageError("sweep needs free dimension <= 2, this set has " + std::to_string(set->free_dimension()));
    }
  } catch (const FlexibilityError& e) {
    throw UsageError(e.what());
  }
  OracleResult res;
  try {
    res = brute_force_oracle(c.network, c.load, *set, step, 2);
  } catch (const FlexibilityError& e) {
    throw UsageError(e.what());
  }
  std::ostringstream csv;
  csv.precision(12);
  for (const auto& b : c.network.buses()) csv << "delta_" << b << ',';
  csv << "V_norm,Pi_norm,active_set_id,feasible\n";
  for (const auto& row : res.landscape) {
    for (double d : row.delta) csv << d << ',';
    if (row.feasible) {
      csv << normalized(row.v, c.load) << ',' << normalized(row.pi, c.load) << ',' << '"' << row.active_set_id << "\",1\n";
    } else {
      csv << ",,,0\n";
    }
  }
  if (!out.empty()) write_file_atomic(out, csv.str());
  json summary = {{"command", "sweep"}, {"status", "ok"}, {"rows", res.landscape.size()}};
  if (res.argmin_pi) {
    const auto& p = res.min_pi();
    summary["argmin_pi"] = {{"delta", p.delta},
                            {"V_normalized", normalized(p.v, c.load)},
                            {"Pi_normalized", normalized(p.pi, c.load)}};
  }
  if (res.argmin_v) {
    const auto& v = res.min_v();
    summary["argmin_v"] = {{"delta", v.delta},
                           {"V_normalized", normalized(v.v, c.load)},
                           {"Pi_normalized", normalized(v.pi, c.load)}};
  }
  if (!out.empty()) summary["outputs"] = {out};
  return emit(summary, kOk);
}

struct BilevelFlags {
  std::string network;
  double alpha = 0.5;
  std::string mode = "consumer";
  double epsilon = 1e-3;
  long node_budget = 200000;
  std::string tie_break = "as_found";
  bool no_heuristic = false;
  bool sequential = false;
  std::string out;
  std::string lp_dump;
};

int cmd_bilevel(const BilevelFlags& f, const lp::Tolerances& tol) {
  const auto c = read_case(f.network);
  BilevelOptions opts;
  std::optional<FlexibilitySet> set;
  try {
    set = FlexibilitySet::box_with_balance(f.alpha, c.load.flex_mw);
    opts.mode = parse_mode(f.mode);
    opts.tie_break = parse_tie_break(f.tie_break);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  opts.epsilon = f.epsilon;
  opts.node_budget = f.node_budget;
  opts.node_heuristic = !f.no_heuristic;
  opts.tolerances = tol;
  dump_lp(f.lp_dump, build_single_level(c.network, c.load, *set).lp);
  try {
    const auto sol = solve_bilevel(c.network, c.load, *set, opts);
    const auto rec = classify_alignment(c.network, c.load, sol.delta, &*set);
    json doc = bilevel_to_json(sol, c.load);
    doc["alpha"] = f.alpha;
    doc["misaligned"] = rec.misaligned;
    doc["boundary"] = rec.boundary;
    doc["boundary_clipped"] = rec.clipped;
    doc["delta_V_normalized"] = normalized(rec.delta_v(), c.load);
    doc["active_set"] = active_set_to_json(rec.active_set, c.network);
    if (!f.out.empty()) write_file_atomic(f.out, doc.dump(2) + '\n');
    const bool exhausted = sol.status == BilevelStatus::kBudgetExhausted;
    json summary = {{"command", "bilevel"},
                    {"status", exhausted ? "budget_exhausted" : "ok"},
                    {"mode", doc["mode"]},
                    {"alpha", f.alpha},
                    {"delta", sol.delta},
                    {"V_normalized", doc["V_normalized"]},
                    {"Pi_normalized", doc["Pi_normalized"]},
                    {"gap_usd", sol.gap},
                    {"nodes", sol.stats.nodes},
                    {"misaligned", rec.misaligned},
                    {"boundary", rec.boundary}};
    if (!f.out.empty()) summary["outputs"] = {f.out};
    return emit(summary, exhausted ? kBudget : kOk);
  } catch (const InfeasibleMarketError& e) {
    return emit(infeasible_summary("bilevel", e), kInfeasible);
  }
}

RunConfig read_config(const std::string& path, int workers_flag) {
  RunConfig cfg;
  try {
    if (!path.empty()) cfg = load_run_config(path);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (const char* env = std::getenv(kWorkersEnv)) {
    try {
      cfg.workers = std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      throw UsageError(std::string(kWorkersEnv) + " must be an integer");
    }
  }
  if (workers_flag > 0) cfg.workers = workers_flag;
  return cfg;
}

int cmd_run(const std::string& dataset, const std::string& config, const std::string& out, int workers) {
  const RunConfig cfg = read_config(config, workers);
  RunSummary s;
  try {
    s = run_scenarios(dataset, cfg, out);
  } catch (const NetworkError& e) {
    throw UsageError(e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  json summary = {{"command", "run"},
                  {"status", s.budget_exhausted > 0 ? "budget_exhausted" : "ok"},
                  {"tasks_total", s.tasks_total},
                  {"tasks_run", s.tasks_run},
                  {"tasks_skipped", s.tasks_skipped},
                  {"quarantined", s.quarantined},
                  {"infeasible_hours", s.infeasible},
                  {"budget_exhausted_hours", s.budget_exhausted},
                  {"report", report_to_json(s.report)},
                  {"outputs", {(std::filesystem::path(out) / "results.jsonl").string(),
                               (std::filesystem::path(out) / "report.csv").string()}}};
  return emit(summary, s.budget_exhausted > 0 ? kBudget : kOk);
}

int cmd_report(const std::string& dataset, const std::string& config, const std::string& out) {
  const RunConfig cfg = read_config(config, 0);
  int quarantined = 0;
  std::optional<AggregateReport> report;
  try {
    const Dataset ds = Dataset::open(dataset, cfg);
    const auto records = load_results(out, &quarantined);
    report = write_reports(out, ds.network(), records);
  } catch (const NetworkError& e) {
    throw UsageError(e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  json summary = {{"command", "report"},
                  {"status", "ok"},
                  {"quarantined", quarantined},
                  {"report", report_to_json(*report)},
                  {"outputs", {(std::filesystem::path(out) / "report.csv").string()}}};
  return emit(summary, kOk);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial load shifting in DC-OPF electricity markets"};
  app.require_subcommand(1);
  TolFlags tol;

  auto* solve = app.add_subcommand("solve-opf", "Clear the market for one shift and report dispatch, prices, ledger");
  std::string network, out, selection = "favorable", lp_dump;
  std::vector<double> shift;
  solve->add_option("--network", network, "Network JSON file")->required();
  solve->add_option("--shift", shift, "Comma-separated per-bus shift in MW")->delimiter(',');
  solve->add_option("--out", out, "Output JSON path");
  solve->add_option("--selection", selection, "Price selection on a degenerate dual face")
      ->check(CLI::IsMember({"favorable", "adverse", "as_solved"}))
      ->capture_default_str();
  solve->add_option("--dump-lp", lp_dump, "Write the LP in text form");
  tol.add(solve);

  auto* sweep = app.add_subcommand("sweep", "Evaluate V and Pi on a lattice over the flexibility set");
  double alpha = 0.5, step = 6.0;
  sweep->add_option("--network", network, "Network JSON file")->required();
  sweep->add_option("--alpha", alpha, "Flexibility level in [0, 1]")->required();
  sweep->add_option("--step", step, "Lattice spacing in MW")->capture_default_str();
  sweep->add_option("--out", out, "Output CSV path");

  auto* bilevel = app.add_subcommand("bilevel", "Solve for the optimal shift of the consumer or the operator");
  BilevelFlags bf;
  bilevel->add_option("--network", bf.network, "Network JSON file")->required();
  bilevel->add_option("--alpha", bf.alpha, "Flexibility level in [0, 1]")->required();
  bilevel->add_option("--mode", bf.mode, "consumer or system")
      ->check(CLI::IsMember({"consumer", "system"}))
      ->capture_default_str();
  bilevel->add_option("--epsilon", bf.epsilon, "Optimality gap in USD")->capture_default_str();
  bilevel->add_option("--node-budget", bf.node_budget, "Branch-and-bound node limit")->capture_default_str();
  bilevel->add_option("--tie-break", bf.tie_break, "Choice among consumer-optimal shifts")
      ->check(CLI::IsMember({"as_found", "min_system_cost", "max_system_cost"}))
      ->capture_default_str();
  bilevel->add_flag("--no-heuristic", bf.no_heuristic, "Disable the market-clearing node heuristic");
  bilevel->add_flag("--sequential", bf.sequential, "Evaluate nodes one at a time (the search is always sequential)");
  bilevel->add_option("--out", bf.out, "Output JSON path");
  bilevel->add_option("--dump-lp", bf.lp_dump, "Write the single-level LP relaxation in text form");
  tol.add(bilevel);

  auto* run = app.add_subcommand("run", "Run baseline and shifted scenarios for every hour of a dataset");
  std::string dataset, config;
  int workers = 0;
  run->add_option("--dataset", dataset, "RTS-style directory or network JSON file")->required();
  run->add_option("--config", config, "Run configuration JSON");
  run->add_option("--out", out, "Run directory")->required();
  run->add_option("--workers", workers, std::string("Worker threads (default: $") + kWorkersEnv + " or config)");

  auto* report = app.add_subcommand("report", "Rebuild report.csv and merit-order CSVs from results.jsonl");
  report->add_option("--dataset", dataset, "RTS-style directory or network JSON file")->required();
  report->add_option("--config", config, "Run configuration JSON");
  report->add_option("--out", out, "Run directory")->required();

  const std::string command = argc > 1 ? argv[1] : "";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return emit({{"command", command}, {"status", "usage_error"}, {"message", e.what()}}, kUsage);
  }

  try {
    if (*solve) return cmd_solve_opf(network, shift, out, selection, lp_dump, tol.tol);
    if (*sweep) return cmd_sweep(network, alpha, step, out);
    if (*bilevel) return cmd_bilevel(bf, tol.tol);
    if (*run) return cmd_run(dataset, config, out, workers);
    if (*report) return cmd_report(dataset, config, out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return emit({{"command", command}, {"status", "usage_error"}, {"message", e.what()}}, kUsage);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return emit({{"command", command}, {"status", "error"}, {"message", e.what()}}, kInternal);
  }
  return kUsage;
}
