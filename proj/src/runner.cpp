#include "loadshift/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "loadshift/io.hpp"
#include "loadshift/regimes.hpp"

namespace loadshift {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
T get_or(const json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config key '") + key + "': " + e.what());
  }
}

std::string alpha_label(double alpha) {
  std::ostringstream os;
  os << alpha;
  return os.str();
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("run config must be a JSON object");
  static const std::set<std::string> known = {"alphas",  "modes",        "placements",  "capacity_scale",
                                              "rating",  "hours",        "epsilon",     "node_budget",
                                              "tie_break", "probe_boundary", "workers"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  RunConfig cfg;
  cfg.alphas = get_or(doc, "alphas", cfg.alphas);
  for (double a : cfg.alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("config key 'alphas': values must lie in [0, 1]");
  }
  cfg.modes = get_or(doc, "modes", cfg.modes);
  for (const auto& m : cfg.modes) {
    if (m != "consumer" && m != "system") {
      throw std::invalid_argument("config key 'modes': unknown mode '" + m + "'");
    }
  }
  if (doc.contains("placements")) {
    const auto& arr = doc.at("placements");
    if (!arr.is_array()) throw std::invalid_argument("config key 'placements': expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& p = arr[i];
      if (!p.is_object() || !p.contains("bus") || !p.contains("mw")) {
        throw std::invalid_argument("placements[" + std::to_string(i) + "]: expected {\"bus\", \"mw\"}");
      }
      const auto& bus = p.at("bus");
      cfg.placements.push_back({bus.is_string() ? bus.get<std::string>() : bus.dump(), p.at("mw").get<double>()});
    }
  }
  cfg.capacity_scale = get_or(doc, "capacity_scale", cfg.capacity_scale);
  cfg.rating_column = get_or(doc, "rating", cfg.rating_column);
  if (doc.contains("hours")) {
    const auto& h = doc.at("hours");
    if (!h.is_array() || h.size() != 2) throw std::invalid_argument("config key 'hours': expected [start, end)");
    cfg.hour_start = h[0].get<int>();
    cfg.hour_end = h[1].get<int>();
    if (cfg.hour_start < 0 || *cfg.hour_end <= cfg.hour_start) {
      throw std::invalid_argument("config key 'hours': empty or negative range");
    }
  }
  cfg.epsilon = get_or(doc, "epsilon", cfg.epsilon);
  cfg.node_budget = get_or(doc, "node_budget", cfg.node_budget);
  if (doc.contains("tie_break")) cfg.tie_break = parse_tie_break(doc.at("tie_break").get<std::string>());
  cfg.probe_boundary = get_or(doc, "probe_boundary", cfg.probe_boundary);
  cfg.workers = get_or(doc, "workers", cfg.workers);
  if (cfg.workers < 1) throw std::invalid_argument("config key 'workers': must be >= 1");
  if (!(cfg.epsilon >= 0.0)) throw std::invalid_argument("config key 'epsilon': must be >= 0");
  if (cfg.node_budget < 1) throw std::invalid_argument("config key 'node_budget': must be >= 1");
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  try {
    return parse_run_config(json::parse(in));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

Dataset Dataset::open(const fs::path& path, const RunConfig& config) {
  if (fs::is_directory(path)) {
    RtsOptions opts;
    opts.capacity_scale = config.capacity_scale;
    opts.rating_column = config.rating_column;
    opts.placements = config.placements;
    return Dataset(load_rts_dataset(path, opts));
  }
  NetworkCase c = load_network_file(path);
  if (config.capacity_scale != 1.0) c.network = c.network.with_scaled_capacities(config.capacity_scale);
  for (const auto& p : config.placements) {
    if (!c.network.has_bus(p.bus)) throw NetworkError("flexible placement at unknown bus '" + p.bus + "'");
    c.load.flex_mw[c.network.bus_index(p.bus)] += p.mw;
  }
  return Dataset(std::move(c));
}

int Dataset::hours() const {
  if (const auto* rts = std::get_if<RtsDataset>(&data_)) return rts->hours();
  return 1;
}

NetworkCase Dataset::hour_case(int hour) const {
  if (const auto* rts = std::get_if<RtsDataset>(&data_)) return rts->hour_case(hour);
  if (hour != 0) throw std::out_of_range("single-network dataset has only hour 0");
  return std::get<NetworkCase>(data_);
}

const Network& Dataset::network() const {
  if (const auto* rts = std::get_if<RtsDataset>(&data_)) return rts->network;
  return std::get<NetworkCase>(data_).network;
}

const char* to_string(HourStatus status) {
  switch (status) {
    case HourStatus::kOk: return "ok";
    case HourStatus::kInfeasible: return "infeasible";
    case HourStatus::kBudgetExhausted: return "budget_exhausted";
    case HourStatus::kError: return "error";
  }
  return "?";
}

HourStatus parse_hour_status(const std::string& text) {
  for (auto s : {HourStatus::kOk, HourStatus::kInfeasible, HourStatus::kBudgetExhausted, HourStatus::kError}) {
    if (text == to_string(s)) return s;
  }
  throw std::invalid_argument("unknown hour status '" + text + "'");
}

json record_to_json(const HourRecord& rec) {
  json j;
  j["hour"] = rec.key.hour;
  j["mode"] = rec.key.mode;
  j["alpha"] = rec.key.alpha;
  j["status"] = to_string(rec.status);
  if (!rec.message.empty()) j["message"] = rec.message;
  if (rec.status == HourStatus::kOk || rec.status == HourStatus::kBudgetExhausted) {
    j["delta"] = rec.delta;
    j["V_usd"] = rec.v;
    j["Pi_usd"] = rec.pi;
    j["V0_usd"] = rec.v0;
    j["Pi0_usd"] = rec.pi0;
    j["ledger"] = {{"flex_cost", rec.ledger.flex_cost},
                   {"inflex_cost", rec.ledger.inflex_cost},
                   {"gen_profit", rec.ledger.gen_profit},
                   {"system_cost", rec.ledger.system_cost},
                   {"congestion_rent", rec.ledger.congestion_rent}};
    j["misaligned"] = rec.misaligned;
    j["boundary"] = rec.boundary;
    j["clipped"] = rec.clipped;
    j["price_bound_holds"] = rec.price_bound_holds;
    j["gap_usd"] = rec.gap;
    j["nodes"] = rec.nodes;
    j["lambda"] = rec.lambda;
    j["p"] = rec.p;
    j["marginal"] = rec.marginal;
  }
  return j;
}

HourRecord record_from_json(const json& j) {
  try {
    HourRecord rec;
    rec.key.hour = j.at("hour").get<int>();
    rec.key.mode = j.at("mode").get<std::string>();
    rec.key.alpha = j.at("alpha").get<double>();
    if (rec.key.mode != "none" && rec.key.mode != "consumer" && rec.key.mode != "system") {
      throw std::invalid_argument("unknown mode '" + rec.key.mode + "'");
    }
    rec.status = parse_hour_status(j.at("status").get<std::string>());
    rec.message = j.value("message", std::string{});
    if (rec.status == HourStatus::kOk || rec.status == HourStatus::kBudgetExhausted) {
      rec.delta = j.at("delta").get<std::vector<double>>();
      rec.v = j.at("V_usd").get<double>();
      rec.pi = j.at("Pi_usd").get<double>();
      rec.v0 = j.at("V0_usd").get<double>();
      rec.pi0 = j.at("Pi0_usd").get<double>();
      const auto& led = j.at("ledger");
      rec.ledger.flex_cost = led.at("flex_cost").get<double>();
      rec.ledger.inflex_cost = led.at("inflex_cost").get<double>();
      rec.ledger.gen_profit = led.at("gen_profit").get<double>();
      rec.ledger.system_cost = led.at("system_cost").get<double>();
      rec.ledger.congestion_rent = led.at("congestion_rent").get<double>();
      rec.misaligned = j.at("misaligned").get<bool>();
      rec.boundary = j.at("boundary").get<bool>();
      rec.clipped = j.at("clipped").get<bool>();
      rec.price_bound_holds = j.at("price_bound_holds").get<bool>();
      rec.gap = j.at("gap_usd").get<double>();
      rec.nodes = j.at("nodes").get<long>();
      rec.lambda = j.at("lambda").get<std::vector<double>>();
      rec.p = j.at("p").get<std::vector<double>>();
      rec.marginal = j.at("marginal").get<std::vector<bool>>();
    }
    return rec;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed record: ") + e.what());
  }
}

HourRecord run_hour(const NetworkCase& hc, const TaskKey& key, const RunConfig& config) {
  HourRecord rec;
  rec.key = key;
  const auto& net = hc.network;
  const auto& load = hc.load;
  const ShiftVector zero(net.num_buses(), 0.0);
  try {
    const auto base = clear_market(net, load, zero);
    rec.v0 = base.dispatch.system_cost;
    rec.pi0 = procurement_cost(base.duals.lambda, load, zero);
    std::optional<FlexibilitySet> set;
    if (key.mode == "none") {
      rec.delta = zero;
    } else {
      set = FlexibilitySet::box_with_balance(key.alpha, load.flex_mw);
      BilevelOptions opts;
      opts.mode = parse_mode(key.mode);
      opts.epsilon = config.epsilon;
      opts.node_budget = config.node_budget;
      opts.tie_break = config.tie_break;
      const auto sol = solve_bilevel(net, load, *set, opts);
      rec.delta = sol.delta;
      rec.gap = sol.gap;
      rec.nodes = sol.stats.nodes;
      rec.price_bound_holds = sol.price_bound_holds;
      if (sol.status == BilevelStatus::kBudgetExhausted) {
        rec.status = HourStatus::kBudgetExhausted;
        rec.message = "node budget exhausted; incumbent gap " + std::to_string(sol.gap) + " USD";
      }
    }
    const auto star = key.mode == "none" ? base : clear_market(net, load, rec.delta);
    rec.v = star.dispatch.system_cost;
    rec.pi = procurement_cost(star.duals.lambda, load, rec.delta);
    rec.ledger = stakeholder_ledger(star.dispatch, star.duals, net, load, rec.delta);
    rec.lambda = star.duals.lambda;
    rec.p = star.dispatch.p;
    rec.marginal = marginal_generators(star, net);
    rec.misaligned = normalized(rec.v - rec.v0, load) > kAlignTolerance;
    if (key.mode != "none" && config.probe_boundary) {
      const auto probe = probe_boundary(net, load, rec.delta, kProbeEpsilon, &*set);
      rec.boundary = probe.on_boundary;
      rec.clipped = probe.clipped;
    }
  } catch (const InfeasibleMarketError& e) {
    rec = HourRecord{};
    rec.key = key;
    rec.status = HourStatus::kInfeasible;
    rec.message = e.what();
  } catch (const std::exception& e) {
    rec = HourRecord{};
    rec.key = key;
    rec.status = HourStatus::kError;
    rec.message = e.what();
  }
  return rec;
}

AggregateReport aggregate(const std::vector<HourRecord>& records) {
  std::map<int, const HourRecord*> baseline;
  std::map<std::pair<std::string, double>, std::vector<const HourRecord*>> scenarios;
  std::vector<std::pair<std::string, double>> order;
  for (const auto& r : records) {
    if (r.key.mode == "none") {
      if (r.status == HourStatus::kOk) baseline[r.key.hour] = &r;
      continue;
    }
    const auto key = std::make_pair(r.key.mode, r.key.alpha);
    if (!scenarios.contains(key)) order.push_back(key);
    scenarios[key].push_back(&r);
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    const int ra = a.first == "consumer" ? 0 : 1;
    const int rb = b.first == "consumer" ? 0 : 1;
    return ra != rb ? ra < rb : a.second < b.second;
  });

  AggregateReport out;
  bool any_solved = false;
  static const char* kStakeholders[] = {"flexible_consumer", "inflexible_consumer", "generator", "system_operator"};
  for (const auto& key : order) {
    ScenarioCounts counts{key.first, key.second, 0, 0, 0, 0, 0};
    double change[4] = {0, 0, 0, 0};
    double base_total[4] = {0, 0, 0, 0};
    for (const HourRecord* r : scenarios[key]) {
      switch (r->status) {
        case HourStatus::kInfeasible: ++counts.infeasible; continue;
        case HourStatus::kBudgetExhausted: ++counts.budget_exhausted; continue;
        case HourStatus::kError: ++counts.errors; continue;
        case HourStatus::kOk: break;
      }
      const auto it = baseline.find(r->key.hour);
      if (it == baseline.end()) {
        ++counts.errors;
        continue;
      }
      const Ledger& b = it->second->ledger;
      const double shifted[4] = {r->ledger.flex_cost, r->ledger.inflex_cost, r->ledger.gen_profit,
                                 r->ledger.system_cost};
      const double base[4] = {b.flex_cost, b.inflex_cost, b.gen_profit, b.system_cost};
      for (int s = 0; s < 4; ++s) {
        change[s] += shifted[s] - base[s];
        base_total[s] += base[s];
      }
      ++counts.solved;
      if (r->misaligned) ++counts.misaligned;
    }
    if (counts.solved > 0) any_solved = true;
    for (int s = 0; s < 4; ++s) {
      ReportRow row;
      row.stakeholder = kStakeholders[s];
      row.alpha = key.second;
      row.mode = key.first;
      row.usd_change = change[s];
      row.pct_change = base_total[s] != 0.0 ? 100.0 * change[s] / base_total[s] : 0.0;
      if (key.first == "consumer" && counts.solved > 0) {
        row.misalign_pct = 100.0 * counts.misaligned / counts.solved;
      }
      out.rows.push_back(std::move(row));
    }
    out.counts.push_back(counts);
  }
  if (!any_solved) throw std::invalid_argument("aggregate: no solved hours");
  return out;
}

std::string report_to_csv(const AggregateReport& report) {
  std::ostringstream os;
  os.precision(10);
  os << "stakeholder,alpha,mode,usd_change,pct_change,misalign_pct\n";
  for (const auto& r : report.rows) {
    os << r.stakeholder << ',' << r.alpha << ',' << r.mode << ',' << r.usd_change << ',' << r.pct_change << ',';
    if (r.misalign_pct) os << *r.misalign_pct;
    os << '\n';
  }
  return os.str();
}

json report_to_json(const AggregateReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"stakeholder", r.stakeholder},
                    {"alpha", r.alpha},
                    {"mode", r.mode},
                    {"usd_change", r.usd_change},
                    {"pct_change", r.pct_change},
                    {"misalign_pct", r.misalign_pct ? json(*r.misalign_pct) : json(nullptr)}});
  }
  json counts = json::array();
  for (const auto& c : report.counts) {
    counts.push_back({{"mode", c.mode},
                      {"alpha", c.alpha},
                      {"solved", c.solved},
                      {"infeasible", c.infeasible},
                      {"budget_exhausted", c.budget_exhausted},
                      {"errors", c.errors},
                      {"misaligned", c.misaligned}});
  }
  return {{"rows", rows}, {"counts", counts}};
}

std::vector<HourRecord> load_results(const fs::path& out_dir, int* quarantined) {
  const fs::path results = out_dir / "results.jsonl";
  std::vector<HourRecord> records;
  if (quarantined) *quarantined = 0;
  if (!fs::exists(results)) return records;
  std::ifstream in(results, std::ios::binary);
  std::string line;
  std::string good;
  std::vector<std::string> bad;
  std::set<TaskKey> seen;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      HourRecord rec = record_from_json(json::parse(line));
      if (!seen.insert(rec.key).second) throw std::invalid_argument("duplicate record");
      records.push_back(std::move(rec));
      good += line + '\n';
    } catch (const std::exception& e) {
      std::cerr << "warning: " << results.string() << ":" << line_no << ": " << e.what()
                << "; moved to results.quarantine.jsonl\n";
      bad.push_back(line);
    }
  }
  in.close();
  if (!bad.empty()) {
    std::ofstream q(out_dir / "results.quarantine.jsonl", std::ios::app | std::ios::binary);
    for (const auto& b : bad) q << b << '\n';
    write_file_atomic(results, good);
    if (quarantined) *quarantined = static_cast<int>(bad.size());
  }
  return records;
}

AggregateReport write_reports(const fs::path& out_dir, const Network& network,
                              const std::vector<HourRecord>& records) {
  const AggregateReport report = aggregate(records);
  write_file_atomic(out_dir / "report.csv", report_to_csv(report));

  std::map<int, HourDispatch> baseline;
  for (const auto& r : records) {
    if (r.key.mode == "none" && r.status == HourStatus::kOk) baseline[r.key.hour] = {r.key.hour, r.p, r.marginal};
  }
  std::map<std::pair<std::string, double>, std::vector<HourDispatch>> shifted;
  for (const auto& r : records) {
    if (r.key.mode == "none" || r.status != HourStatus::kOk || !baseline.contains(r.key.hour)) continue;
    shifted[{r.key.mode, r.key.alpha}].push_back({r.key.hour, r.p, r.marginal});
  }
  for (auto& [key, hours] : shifted) {
    std::sort(hours.begin(), hours.end(), [](const auto& a, const auto& b) { return a.hour < b.hour; });
    std::vector<HourDispatch> paired;
    for (const auto& h : hours) paired.push_back(baseline.at(h.hour));
    const auto rows = merit_order_report(network, paired, hours);
    write_merit_order_csv(out_dir / ("merit_order_" + key.first + "_" + alpha_label(key.second) + ".csv"), rows);
  }
  return report;
}

RunSummary run_scenarios(const fs::path& dataset_path, const RunConfig& config, const fs::path& out_dir) {
  const Dataset dataset = Dataset::open(dataset_path, config);
  const int end = config.hour_end.value_or(dataset.hours());
  if (config.hour_start >= dataset.hours() || end > dataset.hours()) {
    throw std::invalid_argument("hour range [" + std::to_string(config.hour_start) + ", " + std::to_string(end) +
                                ") outside dataset with " + std::to_string(dataset.hours()) + " hours");
  }
  fs::create_directories(out_dir);

  std::vector<TaskKey> tasks;
  for (int h = config.hour_start; h < end; ++h) tasks.push_back({h, "none", 0.0});
  for (const auto& mode : config.modes) {
    for (double a : config.alphas) {
      for (int h = config.hour_start; h < end; ++h) tasks.push_back({h, mode, a});
    }
  }

  RunSummary summary;
  summary.tasks_total = static_cast<int>(tasks.size());
  auto existing = load_results(out_dir, &summary.quarantined);
  std::set<TaskKey> done;
  for (const auto& r : existing) done.insert(r.key);
  std::vector<TaskKey> todo;
  for (const auto& t : tasks) {
    if (!done.contains(t)) todo.push_back(t);
  }
  summary.tasks_skipped = summary.tasks_total - static_cast<int>(todo.size());

  std::vector<std::optional<HourRecord>> slots(todo.size());
  std::mutex mu;
  std::condition_variable ready;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      HourRecord rec = run_hour(dataset.hour_case(todo[i].hour), todo[i], config);
      {
        std::lock_guard lock(mu);
        slots[i] = std::move(rec);
      }
      ready.notify_all();
    }
  };
  const int workers = std::max(1, std::min<int>(config.workers, static_cast<int>(todo.size())));
  std::vector<std::jthread> pool;
  for (int w = 0; w < workers && !todo.empty(); ++w) pool.emplace_back(work);

  {
    std::ofstream out(out_dir / "results.jsonl", std::ios::app | std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + (out_dir / "results.jsonl").string());
    for (std::size_t i = 0; i < todo.size(); ++i) {
      HourRecord rec;
      {
        std::unique_lock lock(mu);
        ready.wait(lock, [&] { return slots[i].has_value(); });
        rec = std::move(*slots[i]);
        slots[i].reset();
      }
      out << record_to_json(rec).dump() << '\n';
      out.flush();
      if (rec.status == HourStatus::kBudgetExhausted) ++summary.budget_exhausted;
      if (rec.status == HourStatus::kInfeasible) ++summary.infeasible;
      existing.push_back(std::move(rec));
      ++summary.tasks_run;
    }
  }
  pool.clear();
  summary.report = write_reports(out_dir, dataset.network(), existing);
  return summary;
}

}  // namespace loadshift
