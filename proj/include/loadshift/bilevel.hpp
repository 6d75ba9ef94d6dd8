// Leader-follower load shifting: the flexible consumer (or the operator) picks delta inside the
// flexibility set, the market clears by DC-OPF, and the consumer pays lambda'(d_flex + delta).
//
// The follower is replaced by its optimality conditions (primal rows, dual stationarity,
// sign constraints) and complementary slackness is enforced by branch-and-bound on the
// slack/multiplier disjunction of each inequality pair. With the duality identity
//   lambda'(d + delta) = c'p + F'(mu+ + mu-) + pmax'pi+
// the consumer objective becomes c'p + F'(mu+ + mu-) + pmax'pi+ - lambda'd_base, which is
// linear, so every node relaxation is an LP.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "loadshift/dcopf.hpp"
#include "loadshift/flexibility.hpp"
#include "loadshift/lp.hpp"
#include "loadshift/network.hpp"
#include "loadshift/regimes.hpp"

namespace loadshift {

enum class PairKind : std::uint8_t { kGenUpper, kGenLower, kLineUpper, kLineLower };

const char* to_string(PairKind kind);

/// One inequality of the follower LP and its multiplier: slack >= 0, multiplier >= 0,
/// slack * multiplier = 0.
struct ComplementarityPair {
  PairKind kind;
  int element = 0;     // generator or line index
  int primal_var = 0;  // p_g or f_l column
  int multiplier = 0;  // pi+/pi-/mu+/mu- column
  double bound = 0.0;  // value of primal_var when the slack is zero
  int partner = -1;    // opposite-side pair of the same element
};

struct SingleLevelLayout {
  DcopfLayout primal;
  int delta = 0;
  DualLayout dual;  // lambda/eta/nu/mu/pi columns inside the single-level LP
  int dual_rows = 0;
  int flexibility_rows = 0;
  int balance_row = 0;
};

struct ComplementaritySystem {
  lp::LinearProgram lp;  // objective = consumer surrogate
  SingleLevelLayout layout;
  std::vector<ComplementarityPair> pairs;
  std::vector<double> consumer_costs;
  std::vector<double> system_costs;
};

/// Throws std::invalid_argument on dimension mismatch.
ComplementaritySystem build_single_level(const Network& network, const LoadProfile& load,
                                         const FlexibilitySet& set);

enum class BilevelMode { kConsumer, kSystem };

const char* to_string(BilevelMode mode);
BilevelMode parse_mode(const std::string& text);

/// How to choose among consumer-optimal shifts.
enum class TieBreak {
  kAsFound,        // first incumbent reached by the search
  kMinSystemCost,  // lowest V among consumer-optimal shifts
  kMaxSystemCost,  // highest V among consumer-optimal shifts (worst case for the operator)
};

const char* to_string(TieBreak tie);
TieBreak parse_tie_break(const std::string& text);

struct BilevelOptions {
  BilevelMode mode = BilevelMode::kConsumer;
  double epsilon = 1e-3;  // USD
  long node_budget = 200000;
  TieBreak tie_break = TieBreak::kAsFound;
  /// Clear the market at each node's relaxation shift to find incumbents early. Turning it
  /// off leaves only complementarity-feasible leaves as incumbents (plus delta = 0).
  bool node_heuristic = true;
  lp::Tolerances tolerances{};
};

enum class BilevelStatus { kOptimal, kBudgetExhausted };

const char* to_string(BilevelStatus status);

struct BilevelStats {
  long nodes = 0;
  long lp_solves = 0;
  long leaves = 0;
  double max_strong_duality_residual = 0.0;
  long bound_monotonicity_violations = 0;
};

struct BilevelSolution {
  BilevelMode mode = BilevelMode::kConsumer;
  BilevelStatus status = BilevelStatus::kOptimal;
  ShiftVector delta;
  double pi = 0.0;  // USD, consumer-favorable prices at delta
  double v = 0.0;   // USD
  std::vector<double> lambda;
  double lower_bound = 0.0;
  double gap = 0.0;
  BilevelStats stats;
  double v0 = 0.0;
  double pi0 = 0.0;
  /// lambda'delta >= V(delta) - V(0) - 1e-5 whenever V(delta) > V(0).
  bool price_bound_holds = true;
};

/// Throws InfeasibleMarketError when the market cannot clear at delta = 0.
BilevelSolution solve_bilevel(const Network& network, const LoadProfile& load, const FlexibilitySet& set,
                              const BilevelOptions& options = {});

struct LandscapeRow {
  ShiftVector delta;
  bool feasible = false;
  double v = 0.0;
  double pi = 0.0;
  std::string active_set_id;
};

struct OracleResult {
  std::optional<std::size_t> argmin_pi;
  std::optional<std::size_t> argmin_v;
  std::vector<LandscapeRow> landscape;

  [[nodiscard]] const LandscapeRow& min_pi() const { return landscape.at(argmin_pi.value()); }
  [[nodiscard]] const LandscapeRow& min_v() const { return landscape.at(argmin_v.value()); }
};

/// Clears the market at every lattice point of the set. Ties within `tie_tol` USD go to
/// the lexicographically smallest delta; infeasible points are kept but never selected.
OracleResult brute_force_oracle(const Network& network, const LoadProfile& load, const FlexibilitySet& set,
                                double step, int max_free_dimension = 3, double tie_tol = 1e-6);

nlohmann::json bilevel_to_json(const BilevelSolution& sol, const LoadProfile& load);

}  // namespace loadshift
