// Batch pipeline: per-hour clearing and bilevel solves, persisted as JSON lines, then
// aggregated into stakeholder reports.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "loadshift/bilevel.hpp"
#include "loadshift/network.hpp"
#include "loadshift/rts.hpp"

namespace loadshift {

inline constexpr const char* kWorkersEnv = "LOADSHIFT_WORKERS";

struct RunConfig {
  std::vector<double> alphas{0.25, 0.5};
  /// Shifting modes to run ("consumer", "system"); the "none" baseline always runs.
  std::vector<std::string> modes{"consumer", "system"};
  std::vector<FlexPlacement> placements;
  double capacity_scale = 1.0;
  std::string rating_column = "Cont Rating";
  int hour_start = 0;
  std::optional<int> hour_end;  // exclusive; dataset end when absent
  double epsilon = 1e-3;
  long node_budget = 200000;
  TieBreak tie_break = TieBreak::kAsFound;
  bool probe_boundary = true;
  int workers = 1;
};

/// Throws std::invalid_argument naming the offending key.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

/// Either an RTS-style directory or a single network JSON file (one hour).
class Dataset {
 public:
  static Dataset open(const std::filesystem::path& path, const RunConfig& config);

  [[nodiscard]] int hours() const;
  [[nodiscard]] NetworkCase hour_case(int hour) const;
  [[nodiscard]] const Network& network() const;

 private:
  explicit Dataset(std::variant<RtsDataset, NetworkCase> data) : data_(std::move(data)) {}
  std::variant<RtsDataset, NetworkCase> data_;
};

struct TaskKey {
  int hour = 0;
  std::string mode;  // none, consumer, system
  double alpha = 0.0;

  friend bool operator==(const TaskKey&, const TaskKey&) = default;
  friend auto operator<=>(const TaskKey&, const TaskKey&) = default;
};

enum class HourStatus { kOk, kInfeasible, kBudgetExhausted, kError };

const char* to_string(HourStatus status);
HourStatus parse_hour_status(const std::string& text);

struct HourRecord {
  TaskKey key;
  HourStatus status = HourStatus::kOk;
  std::string message;
  ShiftVector delta;
  double v = 0.0;
  double pi = 0.0;
  double v0 = 0.0;
  double pi0 = 0.0;
  Ledger ledger;
  bool misaligned = false;
  bool boundary = false;
  bool clipped = false;
  bool price_bound_holds = true;
  double gap = 0.0;
  long nodes = 0;
  std::vector<double> lambda;
  std::vector<double> p;
  std::vector<bool> marginal;
};

nlohmann::json record_to_json(const HourRecord& rec);
/// Throws std::invalid_argument on a malformed record.
HourRecord record_from_json(const nlohmann::json& j);

/// Solves one (hour, mode, alpha) task. Market infeasibility and solver failures are
/// reported in the record status, never thrown.
HourRecord run_hour(const NetworkCase& hour_case, const TaskKey& key, const RunConfig& config);

struct ReportRow {
  std::string stakeholder;  // flexible_consumer, inflexible_consumer, generator, system_operator
  double alpha = 0.0;
  std::string mode;
  double usd_change = 0.0;
  double pct_change = 0.0;
  std::optional<double> misalign_pct;
};

struct ScenarioCounts {
  std::string mode;
  double alpha = 0.0;
  int solved = 0;
  int infeasible = 0;
  int budget_exhausted = 0;
  int errors = 0;
  int misaligned = 0;
};

struct AggregateReport {
  std::vector<ReportRow> rows;
  std::vector<ScenarioCounts> counts;
};

/// Sums shifted-minus-baseline changes over hours solved in both runs. Percentages use the
/// stored baseline records. Throws std::invalid_argument when no hour was solved.
AggregateReport aggregate(const std::vector<HourRecord>& records);

std::string report_to_csv(const AggregateReport& report);
nlohmann::json report_to_json(const AggregateReport& report);

struct RunSummary {
  int tasks_total = 0;
  int tasks_run = 0;
  int tasks_skipped = 0;
  int quarantined = 0;
  int budget_exhausted = 0;
  int infeasible = 0;
  AggregateReport report;
};

/// Loads results.jsonl from `out_dir`, moving corrupt lines to results.quarantine.jsonl, and
/// returns the valid records in file order.
std::vector<HourRecord> load_results(const std::filesystem::path& out_dir, int* quarantined = nullptr);

/// Runs every missing task, appending to out_dir/results.jsonl in task order, then writes
/// report.csv and one merit-order CSV per (mode, alpha).
RunSummary run_scenarios(const std::filesystem::path& dataset, const RunConfig& config,
                         const std::filesystem::path& out_dir);

/// Rebuilds report.csv and merit-order CSVs from an existing results.jsonl.
AggregateReport write_reports(const std::filesystem::path& out_dir, const Network& network,
                              const std::vector<HourRecord>& records);

}  // namespace loadshift
