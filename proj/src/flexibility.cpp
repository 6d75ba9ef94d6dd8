#include "loadshift/flexibility.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "loadshift/lp.hpp"

namespace loadshift {

FlexibilitySet::FlexibilitySet(Eigen::MatrixXd T, Eigen::VectorXd q, std::optional<double> alpha)
    : T_(std::move(T)), q_(std::move(q)), alpha_(alpha) {
  if (T_.rows() != q_.size()) throw FlexibilityError("T and q have different row counts");
  if (T_.cols() < 1) throw FlexibilityError("flexibility set needs at least one bus");
  for (Eigen::Index i = 0; i < q_.size(); ++i) {
    if (!(q_[i] >= 0.0) || !std::isfinite(q_[i])) {
      throw FlexibilityError("q[" + std::to_string(i) + "] must be finite and non-negative");
    }
  }
  if (!T_.allFinite()) throw FlexibilityError("T must be finite");
}

FlexibilitySet FlexibilitySet::box_with_balance(double alpha, std::span<const double> d_flex) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw FlexibilityError("alpha must lie in [0, 1]");
  const auto n = static_cast<Eigen::Index>(d_flex.size());
  std::vector<double> caps(d_flex.size());
  Eigen::MatrixXd T(2 * n, n);
  T << Eigen::MatrixXd::Identity(n, n), -Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd q(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(d_flex[i] >= 0.0)) throw FlexibilityError("d_flex must be non-negative");
    caps[i] = alpha * d_flex[i];
    q[i] = caps[i];
    q[n + i] = caps[i];
  }
  FlexibilitySet set(std::move(T), std::move(q), alpha);
  set.box_ = std::move(caps);
  return set;
}

bool FlexibilitySet::contains(std::span<const double> delta, double tol) const {
  if (static_cast<int>(delta.size()) != dimension()) return false;
  const Eigen::Map<const Eigen::VectorXd> d(delta.data(), dimension());
  if (std::abs(d.sum()) > tol) return false;
  return ((T_ * d - q_).array() <= tol).all();
}

std::vector<std::pair<double, double>> FlexibilitySet::coordinate_ranges() const {
  const int n = dimension();
  std::vector<std::pair<double, double>> out(n);
  if (box_) {
    const auto& b = *box_;
    const double total = std::accumulate(b.begin(), b.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      const double hi = std::min(b[i], total - b[i]);
      out[i] = {-hi, hi};
    }
    return out;
  }
  lp::LinearProgram prog;
  for (int i = 0; i < n; ++i) prog.add_variable(-lp::kInf, lp::kInf, 0.0);
  for (Eigen::Index r = 0; r < T_.rows(); ++r) {
    std::vector<lp::Term> terms;
    for (int i = 0; i < n; ++i) {
      if (T_(r, i) != 0.0) terms.push_back({i, T_(r, i)});
    }
    prog.add_row(std::move(terms), lp::RowSense::kLessEqual, q_[r]);
  }
  std::vector<lp::Term> balance;
  for (int i = 0; i < n; ++i) balance.push_back({i, 1.0});
  prog.add_row(std::move(balance), lp::RowSense::kEqual, 0.0);
  for (int i = 0; i < n; ++i) {
    double ends[2];
    for (int side = 0; side < 2; ++side) {
      for (int j = 0; j < n; ++j) prog.set_cost(j, j == i ? (side == 0 ? 1.0 : -1.0) : 0.0);
      const auto sol = lp::solve_lp(prog);
      if (sol.status == lp::Status::kUnbounded) {
        ends[side] = side == 0 ? -lp::kInf : lp::kInf;
      } else if (sol.optimal()) {
        ends[side] = sol.x[i];
      } else {
        throw FlexibilityError(std::string("coordinate range LP failed: ") + lp::to_string(sol.status));
      }
    }
    out[i] = {ends[0], ends[1]};
  }
  return out;
}

int FlexibilitySet::free_dimension() const {
  int free = 0;
  for (const auto& [lo, hi] : coordinate_ranges()) {
    if (hi - lo > 1e-9) ++free;
  }
  return std::max(0, free - 1);
}

std::vector<ShiftVector> FlexibilitySet::vertices() const {
  const int n = dimension();
  const int rows = static_cast<int>(T_.rows());
  if (n > 8) throw FlexibilityError("vertex enumeration limited to dimension 8");
  const int choose = n - 1;
  std::vector<ShiftVector> out;
  std::vector<int> pick(choose);
  std::iota(pick.begin(), pick.end(), 0);
  if (choose > rows) return out;
  Eigen::MatrixXd system(n, n);
  Eigen::VectorXd rhs(n);
  for (;;) {
    for (int c = 0; c < choose; ++c) {
      system.row(c) = T_.row(pick[c]);
      rhs[c] = q_[pick[c]];
    }
    system.row(n - 1).setOnes();
    rhs[n - 1] = 0.0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
    if (lu.rank() == n) {
      const Eigen::VectorXd v = lu.solve(rhs);
      ShiftVector cand(v.data(), v.data() + n);
      if (contains(cand, 1e-7)) {
        const bool seen = std::any_of(out.begin(), out.end(), [&](const ShiftVector& o) {
          for (int i = 0; i < n; ++i) {
            if (std::abs(o[i] - cand[i]) > 1e-7) return false;
          }
          return true;
        });
        if (!seen) {
          for (double& x : cand) {
            if (std::abs(x) < 1e-12) x = 0.0;
          }
          out.push_back(std::move(cand));
        }
      }
    }
    int c = choose - 1;
    while (c >= 0 && pick[c] == rows - choose + c) --c;
    if (c < 0) break;
    ++pick[c];
    for (int j = c + 1; j < choose; ++j) pick[j] = pick[j - 1] + 1;
  }
  std::sort(out.begin(), out.end());
  return out;
}

double FlexibilitySet::max_step(std::span<const double> delta, std::span<const double> direction,
                                double max_step) const {
  const int n = dimension();
  const Eigen::Map<const Eigen::VectorXd> d(delta.data(), n);
  const Eigen::Map<const Eigen::VectorXd> e(direction.data(), n);
  if (std::abs(e.sum()) > 1e-12) return 0.0;
  const Eigen::VectorXd slack = q_ - T_ * d;
  const Eigen::VectorXd rate = T_ * e;
  double t = max_step;
  for (Eigen::Index r = 0; r < rate.size(); ++r) {
    if (rate[r] > 1e-15) t = std::min(t, std::max(0.0, slack[r]) / rate[r]);
  }
  return std::max(0.0, t);
}

void for_each_grid_point(const FlexibilitySet& set, double step,
                         const std::function<void(const ShiftVector&)>& visit, int max_free_dimension) {
  if (!(step > 0.0) || !std::isfinite(step)) throw FlexibilityError("grid step must be positive");
  const int n = set.dimension();
  const auto ranges = set.coordinate_ranges();
  std::vector<int> free;
  ShiftVector point(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto [lo, hi] = ranges[i];
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw FlexibilityError("flexibility set is unbounded");
    if (hi - lo > 1e-9) {
      free.push_back(i);
    } else {
      point[i] = 0.5 * (lo + hi);
    }
  }
  const int free_dim = std::max(0, static_cast<int>(free.size()) - 1);
  if (free_dim > max_free_dimension) {
    throw FlexibilityError("grid enumeration needs free dimension <= " + std::to_string(max_free_dimension) +
                           ", set has " + std::to_string(free_dim));
  }
  if (free.empty()) {
    if (set.contains(point, 1e-9)) visit(point);
    return;
  }
  const int dependent = free.back();
  free.pop_back();
  double pinned_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (std::find(free.begin(), free.end(), i) == free.end() && i != dependent) pinned_sum += point[i];
  }
  std::function<void(std::size_t, double)> recurse = [&](std::size_t depth, double partial) {
    if (depth == free.size()) {
      point[dependent] = -(partial + pinned_sum);
      if (point[dependent] == 0.0) point[dependent] = 0.0;  // drop negative zero
      if (set.contains(point, 1e-9)) visit(point);
      return;
    }
    const int i = free[depth];
    const auto [lo, hi] = ranges[i];
    const auto k_lo = static_cast<long>(std::ceil(lo / step - 1e-9));
    const auto k_hi = static_cast<long>(std::floor(hi / step + 1e-9));
    for (long k = k_lo; k <= k_hi; ++k) {
      point[i] = static_cast<double>(k) * step;
      recurse(depth + 1, partial + point[i]);
    }
  };
  recurse(0, 0.0);
}

std::vector<ShiftVector> grid_points(const FlexibilitySet& set, double step, int max_free_dimension) {
  std::vector<ShiftVector> out;
  for_each_grid_point(set, step, [&](const ShiftVector& p) { out.push_back(p); }, max_free_dimension);
  return out;
}

FlexibilitySet parse_flexibility(const nlohmann::json& fragment, std::span<const double> d_flex) {
  if (fragment.contains("alpha")) {
    if (!fragment.at("alpha").is_number()) throw FlexibilityError("alpha: expected a number");
    return FlexibilitySet::box_with_balance(fragment.at("alpha").get<double>(), d_flex);
  }
  if (!fragment.contains("T") || !fragment.contains("q")) {
    throw FlexibilityError("flexibility config needs either 'alpha' or both 'T' and 'q'");
  }
  const auto& jt = fragment.at("T");
  const auto& jq = fragment.at("q");
  if (!jt.is_array() || !jq.is_array() || jt.size() != jq.size()) {
    throw FlexibilityError("T and q must be arrays with one entry per row");
  }
  const auto n = static_cast<Eigen::Index>(d_flex.size());
  Eigen::MatrixXd T(jt.size(), n);
  Eigen::VectorXd q(jq.size());
  for (std::size_t r = 0; r < jt.size(); ++r) {
    if (!jt[r].is_array() || static_cast<Eigen::Index>(jt[r].size()) != n) {
      throw FlexibilityError("T[" + std::to_string(r) + "] must have one entry per bus");
    }
    for (Eigen::Index i = 0; i < n; ++i) T(r, i) = jt[r][i].get<double>();
    q[r] = jq[r].get<double>();
  }
  return FlexibilitySet(std::move(T), std::move(q));
}

}  // namespace loadshift
