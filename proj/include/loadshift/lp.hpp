// Dense bounded-variable primal simplex with dual extraction.
//
// Every row carries a logical variable s_i = a_i x with bounds [L_i, U_i];
// equality rows are fixed logicals rather than split rows, so each row owns
// exactly one dual. Duals follow the sensitivity convention
// y_i = d(objective) / d(rhs_i).
#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace loadshift::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class RowSense { kLessEqual, kEqual, kGreaterEqual };

struct Term {
  int var;
  double coef;
};

struct Row {
  std::vector<Term> terms;
  RowSense sense = RowSense::kLessEqual;
  double rhs = 0.0;
  std::string name;
};

struct Variable {
  double lower = 0.0;
  double upper = kInf;
  double cost = 0.0;
  std::string name;
};

/// Minimization LP over bounded variables and sensed rows.
class LinearProgram {
 public:
  int add_variable(double lower, double upper, double cost, std::string name = {});
  int add_row(std::vector<Term> terms, RowSense sense, double rhs, std::string name = {});

  void set_bounds(int var, double lower, double upper);
  void set_cost(int var, double cost);
  void set_rhs(int row, double rhs);

  [[nodiscard]] int num_variables() const { return static_cast<int>(vars_.size()); }
  [[nodiscard]] int num_rows() const { return static_cast<int>(rows_.size()); }
  [[nodiscard]] const Variable& variable(int j) const { return vars_.at(j); }
  [[nodiscard]] const Row& row(int i) const { return rows_.at(i); }
  [[nodiscard]] const std::vector<Variable>& variables() const { return vars_; }
  [[nodiscard]] const std::vector<Row>& rows() const { return rows_; }
  [[nodiscard]] std::vector<double> costs() const;

  /// Throws std::invalid_argument on out-of-range indices, NaN data or lower > upper.
  void validate() const;

  /// One line per objective/variable/row; meant for bug reports.
  void write_text(std::ostream& os) const;

 private:
  std::vector<Variable> vars_;
  std::vector<Row> rows_;
};

/// Returns a copy with rows reordered so that new row i is old row perm[i].
LinearProgram permute_rows(const LinearProgram& lp, std::span<const int> perm);

struct Tolerances {
  double feasibility = 1e-7;
  double duality = 1e-6;
  double pivot = 1e-9;
  double complementarity = 1e-6;
  double optimality = 1e-9;
  int refactor_interval = 64;
};

enum class Status { kOptimal, kInfeasible, kUnbounded, kNumericalFailure, kIterationLimit };

const char* to_string(Status s);

enum class VarState : std::uint8_t { kBasic, kAtLower, kAtUpper, kFree, kFixed };

struct Basis {
  /// basic[r] is the column basic in row r; columns >= num_variables are row logicals.
  std::vector<int> basic;
  /// State of every structural column followed by every row logical.
  std::vector<VarState> state;
};

struct LpSolution {
  Status status = Status::kNumericalFailure;
  std::vector<double> x;
  std::vector<double> row_activity;
  std::vector<double> row_duals;
  std::vector<double> reduced_costs;
  double objective = 0.0;
  double dual_objective = 0.0;
  Basis basis;
  int iterations = 0;
  bool used_bland = false;

  [[nodiscard]] bool optimal() const { return status == Status::kOptimal; }
};

LpSolution solve_lp(const LinearProgram& lp, const Tolerances& tol = {});

/// Optimizes `secondary` over the optimal face of `lp`, i.e. with the
/// original objective pinned to primary.objective + tol.duality.
LpSolution resolve_over_optimal_face(const LinearProgram& lp, const LpSolution& primary,
                                     std::span<const double> secondary,
                                     const Tolerances& tol = {});

struct Residuals {
  double primal = 0.0;          // max bound/row violation
  double dual = 0.0;            // max reduced-cost sign violation
  double duality_gap = 0.0;     // |primal objective - dual objective|
  double complementarity = 0.0; // max |slack * dual| over rows and bounds
};

/// Recomputes optimality residuals from the LP data and a solution.
Residuals check_solution(const LinearProgram& lp, const LpSolution& sol);

}  // namespace loadshift::lp
