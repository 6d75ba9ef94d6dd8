#include "loadshift/lp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace loadshift::lp {

int LinearProgram::add_variable(double lower, double upper, double cost, std::string name) {
  vars_.push_back(Variable{lower, upper, cost, std::move(name)});
  return num_variables() - 1;
}

int LinearProgram::add_row(std::vector<Term> terms, RowSense sense, double rhs, std::string name) {
  rows_.push_back(Row{std::move(terms), sense, rhs, std::move(name)});
  return num_rows() - 1;
}

void LinearProgram::set_bounds(int var, double lower, double upper) {
  auto& v = vars_.at(var);
  v.lower = lower;
  v.upper = upper;
}

void LinearProgram::set_cost(int var, double cost) { vars_.at(var).cost = cost; }

void LinearProgram::set_rhs(int row, double rhs) { rows_.at(row).rhs = rhs; }

std::vector<double> LinearProgram::costs() const {
  std::vector<double> c(vars_.size());
  for (std::size_t j = 0; j < vars_.size(); ++j) c[j] = vars_[j].cost;
  return c;
}

void LinearProgram::validate() const {
  for (std::size_t j = 0; j < vars_.size(); ++j) {
    const auto& v = vars_[j];
    if (std::isnan(v.lower) || std::isnan(v.upper) || !std::isfinite(v.cost)) {
      throw std::invalid_argument("variable " + std::to_string(j) + ": NaN or infinite data");
    }
    if (v.lower > v.upper) {
      throw std::invalid_argument("variable " + std::to_string(j) + ": lower bound exceeds upper");
    }
    if (v.lower == kInf || v.upper == -kInf) {
      throw std::invalid_argument("variable " + std::to_string(j) + ": empty bound range");
    }
  }
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& r = rows_[i];
    if (!std::isfinite(r.rhs)) {
      throw std::invalid_argument("row " + std::to_string(i) + ": non-finite rhs");
    }
    for (const auto& t : r.terms) {
      if (t.var < 0 || t.var >= num_variables()) {
        throw std::invalid_argument("row " + std::to_string(i) + ": variable index out of range");
      }
      if (!std::isfinite(t.coef)) {
        throw std::invalid_argument("row " + std::to_string(i) + ": non-finite coefficient");
      }
    }
  }
}

namespace {

std::string var_label(const LinearProgram& lp, int j) {
  const auto& name = lp.variable(j).name;
  return name.empty() ? "x" + std::to_string(j) : name;
}

const char* sense_text(RowSense s) {
  switch (s) {
    case RowSense::kLessEqual: return "<=";
    case RowSense::kEqual: return "=";
    case RowSense::kGreaterEqual: return ">=";
  }
  return "?";
}

}  // namespace

void LinearProgram::write_text(std::ostream& os) const {
  os.precision(17);
  os << "minimize";
  for (int j = 0; j < num_variables(); ++j) {
    if (vars_[j].cost != 0.0) os << ' ' << vars_[j].cost << '*' << var_label(*this, j);
  }
  os << '\n';
  for (int i = 0; i < num_rows(); ++i) {
    const auto& r = rows_[i];
    os << (r.name.empty() ? "r" + std::to_string(i) : r.name) << ':';
    for (const auto& t : r.terms) os << ' ' << t.coef << '*' << var_label(*this, t.var);
    os << ' ' << sense_text(r.sense) << ' ' << r.rhs << '\n';
  }
  for (int j = 0; j < num_variables(); ++j) {
    os << "bound " << var_label(*this, j) << " [" << vars_[j].lower << ", " << vars_[j].upper
       << "]\n";
  }
}

LinearProgram permute_rows(const LinearProgram& lp, std::span<const int> perm) {
  if (static_cast<int>(perm.size()) != lp.num_rows()) {
    throw std::invalid_argument("permute_rows: permutation length mismatch");
  }
  LinearProgram out;
  for (const auto& v : lp.variables()) out.add_variable(v.lower, v.upper, v.cost, v.name);
  for (int i : perm) {
    const auto& r = lp.row(i);
    out.add_row(r.terms, r.sense, r.rhs, r.name);
  }
  return out;
}

const char* to_string(Status s) {
  switch (s) {
    case Status::kOptimal: return "optimal";
    case Status::kInfeasible: return "infeasible";
    case Status::kUnbounded: return "unbounded";
    case Status::kNumericalFailure: return "numerical_failure";
    case Status::kIterationLimit: return "iteration_limit";
  }
  return "unknown";
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double row_lower(const Row& r) { return r.sense == RowSense::kLessEqual ? -kInf : r.rhs; }
double row_upper(const Row& r) { return r.sense == RowSense::kGreaterEqual ? kInf : r.rhs; }

// Tableau simplex over z = (x, s) with [A  -I] z = 0 and box bounds on z.
class Simplex {
 public:
  Simplex(const LinearProgram& lp, const Tolerances& tol)
      : lp_(lp), tol_(tol), n_(lp.num_variables()), m_(lp.num_rows()), cols_(n_ + m_) {
    lo_.resize(cols_);
    up_.resize(cols_);
    cost_.assign(cols_, 0.0);
    x_.assign(cols_, 0.0);
    state_.resize(cols_);
    matrix_ = RowMatrix::Zero(m_, cols_);
    cost_scale_ = 1.0;
    for (int j = 0; j < n_; ++j) {
      const auto& v = lp.variable(j);
      lo_[j] = v.lower;
      up_[j] = v.upper;
      cost_[j] = v.cost;
      cost_scale_ = std::max(cost_scale_, std::abs(v.cost));
    }
    for (int i = 0; i < m_; ++i) {
      const auto& r = lp.row(i);
      for (const auto& t : r.terms) matrix_(i, t.var) += t.coef;
      matrix_(i, n_ + i) = -1.0;
      lo_[n_ + i] = row_lower(r);
      up_[n_ + i] = row_upper(r);
    }
    for (int j = 0; j < n_; ++j) {
      if (lo_[j] == up_[j]) {
        state_[j] = VarState::kFixed;
        x_[j] = lo_[j];
      } else if (std::isfinite(lo_[j])) {
        state_[j] = VarState::kAtLower;
        x_[j] = lo_[j];
      } else if (std::isfinite(up_[j])) {
        state_[j] = VarState::kAtUpper;
        x_[j] = up_[j];
      } else {
        state_[j] = VarState::kFree;
        x_[j] = 0.0;
      }
    }
    basic_.resize(m_);
    for (int i = 0; i < m_; ++i) {
      basic_[i] = n_ + i;
      state_[n_ + i] = VarState::kBasic;
    }
    tableau_ = -matrix_;
    recompute_basics();
  }

  LpSolution run() {
    LpSolution out;
    const long max_iter = 50L * (m_ + cols_) + 1000;
    const long degenerate_limit = 3L * (m_ + cols_);
    long degenerate_run = 0;
    bool bland = false;
    int since_refactor = 0;
    long iter = 0;
    Status status = Status::kOptimal;

    for (;;) {
      if (iter >= max_iter) {
        status = Status::kIterationLimit;
        break;
      }
      if (since_refactor >= tol_.refactor_interval) {
        if (!refactor()) {
          status = Status::kNumericalFailure;
          break;
        }
        since_refactor = 0;
      }

      const bool phase1 = max_infeasibility() > tol_.feasibility;
      Eigen::VectorXd basic_cost(m_);
      for (int r = 0; r < m_; ++r) {
        const int j = basic_[r];
        if (phase1) {
          if (x_[j] < lo_[j] - tol_.feasibility) {
            basic_cost[r] = -1.0;
          } else if (x_[j] > up_[j] + tol_.feasibility) {
            basic_cost[r] = 1.0;
          } else {
            basic_cost[r] = 0.0;
          }
        } else {
          basic_cost[r] = cost_[j];
        }
      }
      const Eigen::RowVectorXd w = basic_cost.transpose() * tableau_;
      const double dtol = phase1 ? tol_.optimality : tol_.optimality * cost_scale_;

      int entering = -1;
      int direction = 0;
      double best = 0.0;
      for (int j = 0; j < cols_; ++j) {
        const VarState st = state_[j];
        if (st == VarState::kBasic || st == VarState::kFixed) continue;
        const double d = (phase1 ? 0.0 : cost_[j]) - w[j];
        int dir = 0;
        if (d < -dtol && (st == VarState::kAtLower || st == VarState::kFree)) {
          dir = 1;
        } else if (d > dtol && (st == VarState::kAtUpper || st == VarState::kFree)) {
          dir = -1;
        }
        if (dir == 0) continue;
        if (bland) {
          entering = j;
          direction = dir;
          break;
        }
        if (std::abs(d) > best) {
          best = std::abs(d);
          entering = j;
          direction = dir;
        }
      }

      if (entering < 0) {
        if (since_refactor > 0) {
          if (!refactor()) {
            status = Status::kNumericalFailure;
            break;
          }
          since_refactor = 0;
          continue;
        }
        status = phase1 ? Status::kInfeasible : Status::kOptimal;
        break;
      }

      // Ratio test: the entering column moves by direction * t; basic r moves at rate
      // -T(r, q) * direction.
      double step = up_[entering] - lo_[entering];
      int leaving_row = -1;
      double leaving_value = 0.0;
      double leaving_alpha = 0.0;
      for (int r = 0; r < m_; ++r) {
        const double t_rq = tableau_(r, entering);
        if (std::abs(t_rq) <= tol_.pivot) continue;
        const double rate = -t_rq * direction;
        const int j = basic_[r];
        const double xj = x_[j];
        double limit = kInf;
        double target = 0.0;
        if (rate > 0.0) {
          if (phase1 && xj < lo_[j] - tol_.feasibility) {
            target = lo_[j];
          } else if (phase1 && xj > up_[j] + tol_.feasibility) {
            continue;
          } else {
            target = up_[j];
          }
          if (std::isfinite(target)) limit = std::max(0.0, (target - xj) / rate);
        } else {
          if (phase1 && xj > up_[j] + tol_.feasibility) {
            target = up_[j];
          } else if (phase1 && xj < lo_[j] - tol_.feasibility) {
            continue;
          } else {
            target = lo_[j];
          }
          if (std::isfinite(target)) limit = std::max(0.0, (target - xj) / rate);
        }
        if (!std::isfinite(limit)) continue;
        bool take = limit < step - 1e-12;
        if (!take && leaving_row >= 0 && limit <= step + 1e-12) {
          take = bland ? j < basic_[leaving_row] : std::abs(t_rq) > std::abs(leaving_alpha);
        }
        if (take) {
          step = limit;
          leaving_row = r;
          leaving_value = target;
          leaving_alpha = t_rq;
        }
      }

      if (!std::isfinite(step)) {
        status = phase1 ? Status::kNumericalFailure : Status::kUnbounded;
        break;
      }

      ++iter;
      if (step <= 1e-12) {
        if (++degenerate_run > degenerate_limit) bland = true;
      } else {
        degenerate_run = 0;
      }

      for (int r = 0; r < m_; ++r) x_[basic_[r]] -= tableau_(r, entering) * direction * step;
      x_[entering] += direction * step;

      if (leaving_row < 0) {
        // Bound flip of the entering column.
        if (direction > 0) {
          x_[entering] = up_[entering];
          state_[entering] = VarState::kAtUpper;
        } else {
          x_[entering] = lo_[entering];
          state_[entering] = VarState::kAtLower;
        }
        continue;
      }

      const int leaving = basic_[leaving_row];
      x_[leaving] = leaving_value;
      if (lo_[leaving] == up_[leaving]) {
        state_[leaving] = VarState::kFixed;
      } else {
        state_[leaving] = leaving_value == lo_[leaving] ? VarState::kAtLower : VarState::kAtUpper;
      }
      pivot(leaving_row, entering);
      ++since_refactor;
    }

    out.status = status;
    out.iterations = static_cast<int>(iter);
    out.used_bland = bland;
    fill_solution(out);
    return out;
  }

 private:
  void pivot(int r, int q) {
    const double alpha = tableau_(r, q);
    tableau_.row(r) /= alpha;
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      const double factor = tableau_(i, q);
      if (factor != 0.0) tableau_.row(i) -= factor * tableau_.row(r);
    }
    basic_[r] = q;
    state_[q] = VarState::kBasic;
  }

  bool refactor() {
    if (m_ == 0) return true;
    Eigen::MatrixXd basis(m_, m_);
    for (int r = 0; r < m_; ++r) basis.col(r) = matrix_.col(basic_[r]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(basis);
    if (!(lu.rcond() > 1e-14)) return false;
    tableau_ = lu.solve(Eigen::MatrixXd(matrix_));
    recompute_basics();
    return true;
  }

  void recompute_basics() {
    Eigen::VectorXd xn = Eigen::VectorXd::Zero(cols_);
    for (int j = 0; j < cols_; ++j) {
      if (state_[j] != VarState::kBasic) xn[j] = x_[j];
    }
    const Eigen::VectorXd xb = -(tableau_ * xn);
    for (int r = 0; r < m_; ++r) x_[basic_[r]] = xb[r];
  }

  double max_infeasibility() const {
    double worst = 0.0;
    for (int r = 0; r < m_; ++r) {
      const int j = basic_[r];
      worst = std::max({worst, lo_[j] - x_[j], x_[j] - up_[j]});
    }
    return worst;
  }

  void fill_solution(LpSolution& out) const {
    out.x.assign(x_.begin(), x_.begin() + n_);
    out.row_activity.assign(x_.begin() + n_, x_.end());
    out.basis.basic = basic_;
    out.basis.state = state_;
    Eigen::VectorXd basic_cost(m_);
    for (int r = 0; r < m_; ++r) basic_cost[r] = cost_[basic_[r]];
    const Eigen::RowVectorXd w = basic_cost.transpose() * tableau_;
    out.reduced_costs.resize(n_);
    out.row_duals.resize(m_);
    double primal = 0.0;
    double dual = 0.0;
    const double zero_tol = tol_.optimality * cost_scale_;
    for (int j = 0; j < cols_; ++j) {
      const double d = state_[j] == VarState::kBasic ? 0.0 : cost_[j] - w[j];
      if (j < n_) {
        out.reduced_costs[j] = d;
        primal += cost_[j] * x_[j];
      } else {
        out.row_duals[j - n_] = d;
      }
      if (d > zero_tol) {
        dual += d * lo_[j];
      } else if (d < -zero_tol) {
        dual += d * up_[j];
      }
    }
    out.objective = primal;
    out.dual_objective = std::isfinite(dual) ? dual : primal;
  }

  const LinearProgram& lp_;
  const Tolerances& tol_;
  int n_;
  int m_;
  int cols_;
  std::vector<double> lo_, up_, cost_, x_;
  std::vector<VarState> state_;
  std::vector<int> basic_;
  RowMatrix matrix_;
  RowMatrix tableau_;
  double cost_scale_;
};

}  // namespace

LpSolution solve_lp(const LinearProgram& lp, const Tolerances& tol) {
  lp.validate();
  Simplex simplex(lp, tol);
  return simplex.run();
}

LpSolution resolve_over_optimal_face(const LinearProgram& lp, const LpSolution& primary,
                                     std::span<const double> secondary, const Tolerances& tol) {
  if (!primary.optimal()) {
    throw std::invalid_argument("resolve_over_optimal_face: primary solution is not optimal");
  }
  if (static_cast<int>(secondary.size()) != lp.num_variables()) {
    throw std::invalid_argument("resolve_over_optimal_face: secondary objective size mismatch");
  }
  LinearProgram face = lp;
  std::vector<Term> pin;
  for (int j = 0; j < lp.num_variables(); ++j) {
    const double c = lp.variable(j).cost;
    if (c != 0.0) pin.push_back({j, c});
    face.set_cost(j, secondary[j]);
  }
  face.add_row(std::move(pin), RowSense::kLessEqual, primary.objective + tol.duality,
               "optimal_face");
  LpSolution sol = solve_lp(face, tol);
  if (!sol.row_duals.empty()) {
    sol.row_duals.pop_back();
    sol.row_activity.pop_back();
  }
  return sol;
}

Residuals check_solution(const LinearProgram& lp, const LpSolution& sol) {
  Residuals res;
  const int n = lp.num_variables();
  const int m = lp.num_rows();
  std::vector<double> stationarity(n);
  for (int j = 0; j < n; ++j) stationarity[j] = lp.variable(j).cost - sol.reduced_costs[j];

  auto bound_terms = [&](double value, double lower, double upper, double d) {
    res.primal = std::max({res.primal, lower - value, value - upper});
    const double to_lower = std::isfinite(lower) ? value - lower : kInf;
    const double to_upper = std::isfinite(upper) ? upper - value : kInf;
    const double scale = 1e-7;
    const bool at_lower = to_lower <= scale;
    const bool at_upper = to_upper <= scale;
    double viol = 0.0;
    if (at_lower && at_upper) {
      viol = 0.0;
    } else if (at_lower) {
      viol = std::max(0.0, -d);
    } else if (at_upper) {
      viol = std::max(0.0, d);
    } else {
      viol = std::abs(d);
    }
    res.dual = std::max(res.dual, viol);
    const double slack = std::min(to_lower, to_upper);
    if (std::isfinite(slack)) res.complementarity = std::max(res.complementarity, std::abs(d) * slack);
  };

  for (int j = 0; j < n; ++j) {
    const auto& v = lp.variable(j);
    bound_terms(sol.x[j], v.lower, v.upper, sol.reduced_costs[j]);
  }
  for (int i = 0; i < m; ++i) {
    const auto& r = lp.row(i);
    double activity = 0.0;
    for (const auto& t : r.terms) {
      activity += t.coef * sol.x[t.var];
      stationarity[t.var] -= sol.row_duals[i] * t.coef;
    }
    bound_terms(activity, row_lower(r), row_upper(r), sol.row_duals[i]);
  }
  for (double s : stationarity) res.dual = std::max(res.dual, std::abs(s));
  res.duality_gap = std::abs(sol.objective - sol.dual_objective);
  return res;
}

}  // namespace loadshift::lp
