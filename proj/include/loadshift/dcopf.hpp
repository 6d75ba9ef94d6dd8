// DC optimal power flow market clearing.
//
// Primal:  min c'p
//          f - B A theta = 0          (eta)
//          G p - A' f    = d + delta  (lambda)
//          theta_ref     = 0          (nu)
//          -F <= f <= F               (mu-, mu+)
//          0 <= p <= pmax             (pi-, pi+)
//
// Duals use the sensitivity sign convention, so lambda is the LMP in USD/MWh.
#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "loadshift/lp.hpp"
#include "loadshift/network.hpp"

namespace loadshift {

/// Market cannot be cleared; carries the aggregate that was violated.
class InfeasibleMarketError : public std::runtime_error {
 public:
  InfeasibleMarketError(std::string message, double demand_mw, double capacity_mw)
      : std::runtime_error(std::move(message)), demand_mw(demand_mw), capacity_mw(capacity_mw) {}
  double demand_mw;
  double capacity_mw;
};

/// Column and row positions of the primal DC-OPF inside its LinearProgram.
struct DcopfLayout {
  int generators = 0;
  int buses = 0;
  int lines = 0;
  int p = 0;      // first dispatch column
  int theta = 0;  // first angle column
  int f = 0;      // first flow column
  int flow_rows = 0;
  int balance_rows = 0;
  int reference_row = 0;
};

struct DcopfProblem {
  lp::LinearProgram lp;
  DcopfLayout layout;
};

DcopfProblem build_dcopf(const Network& network, const LoadProfile& load, std::span<const double> shift);

/// Column positions of the DC-OPF dual, written as a minimization of the negated dual objective.
struct DualLayout {
  int lambda = 0;
  int eta = 0;
  int nu = 0;
  int mu_plus = 0;
  int mu_minus = 0;
  int pi_plus = 0;
  int pi_minus = 0;
};

struct DualProblem {
  lp::LinearProgram lp;
  DualLayout layout;
};

DualProblem build_dcopf_dual(const Network& network, const LoadProfile& load, std::span<const double> shift);

struct DispatchSolution {
  std::vector<double> p;
  std::vector<double> theta;
  std::vector<double> f;
  double system_cost = 0.0;
};

struct DualBundle {
  std::vector<double> lambda;
  std::vector<double> eta;
  std::vector<double> mu_plus;
  std::vector<double> mu_minus;
  std::vector<double> pi_plus;
  std::vector<double> pi_minus;
  double nu = 0.0;
};

/// Which element of a degenerate dual optimal face to report.
enum class PriceSelection {
  kConsumerFavorable,  // minimize lambda'(d_flex + delta)
  kConsumerAdverse,    // maximize lambda'(d_flex + delta)
  kAsSolved,           // first dual vertex found
};

struct ClearingOptions {
  PriceSelection selection = PriceSelection::kConsumerFavorable;
  lp::Tolerances tolerances{};
};

struct MarketClearing {
  DispatchSolution dispatch;
  DualBundle duals;
  /// Duals read directly off the primal simplex, before face re-optimization.
  DualBundle primal_duals;
};

/// Throws InfeasibleMarketError when the load cannot be served.
MarketClearing clear_market(const Network& network, const LoadProfile& load, std::span<const double> shift,
                            const ClearingOptions& options = {});

double value_function(const Network& network, const LoadProfile& load, std::span<const double> shift);

/// lambda'(d_flex + delta).
double procurement_cost(std::span<const double> lambda, const LoadProfile& load,
                        std::span<const double> shift);

struct Ledger {
  double flex_cost = 0.0;
  double inflex_cost = 0.0;
  double gen_profit = 0.0;
  double system_cost = 0.0;
  double congestion_rent = 0.0;
  std::vector<double> profit_by_generator;

  /// flex + inflex - system - profit - rent; zero up to solver tolerance.
  [[nodiscard]] double conservation_residual() const;
};

Ledger stakeholder_ledger(const DispatchSolution& dispatch, const DualBundle& duals,
                          const Network& network, const LoadProfile& load,
                          std::span<const double> shift);

/// USD total divided by total nominal load, i.e. USD/MWh over one hour.
inline double normalized(double usd, const LoadProfile& load) { return usd / load.total(); }

nlohmann::json clearing_to_json(const Network& network, const LoadProfile& load,
                                std::span<const double> shift, const MarketClearing& clearing);

}  // namespace loadshift
