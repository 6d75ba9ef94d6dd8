// Admissible load-shift polytope {delta : T delta <= q, 1'delta = 0}.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "json.hpp"
#include "loadshift/network.hpp"

namespace loadshift {

class FlexibilityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kMembershipTolerance = 1e-6;

class FlexibilitySet {
 public:
  /// General polytope. q must be non-negative so that delta = 0 is admissible.
  FlexibilitySet(Eigen::MatrixXd T, Eigen::VectorXd q, std::optional<double> alpha = std::nullopt);

  /// |delta_i| <= alpha * d_flex_i plus balance.
  static FlexibilitySet box_with_balance(double alpha, std::span<const double> d_flex);

  [[nodiscard]] int dimension() const { return static_cast<int>(T_.cols()); }
  [[nodiscard]] const Eigen::MatrixXd& T() const { return T_; }
  [[nodiscard]] const Eigen::VectorXd& q() const { return q_; }
  [[nodiscard]] std::optional<double> alpha() const { return alpha_; }
  /// Per-bus caps when the set was built as a box with balance.
  [[nodiscard]] const std::optional<std::vector<double>>& box_bounds() const { return box_; }

  [[nodiscard]] bool contains(std::span<const double> delta, double tol = kMembershipTolerance) const;

  /// [min, max] of each coordinate over the set.
  [[nodiscard]] std::vector<std::pair<double, double>> coordinate_ranges() const;
  /// Dimension of the set after removing pinned coordinates and the balance row.
  [[nodiscard]] int free_dimension() const;

  /// Brute-force vertex enumeration; intended for small oracles (dimension <= 8).
  [[nodiscard]] std::vector<ShiftVector> vertices() const;

  /// Largest t in [0, max_step] with delta + t * direction inside the set.
  [[nodiscard]] double max_step(std::span<const double> delta, std::span<const double> direction,
                                double max_step) const;

 private:
  Eigen::MatrixXd T_;
  Eigen::VectorXd q_;
  std::optional<double> alpha_;
  std::optional<std::vector<double>> box_;
};

/// Calls `visit` for every lattice point (spacing `step`, anchored at zero) inside the set,
/// in lexicographic order of the free coordinates. Throws FlexibilityError when the free
/// dimension exceeds `max_free_dimension`.
void for_each_grid_point(const FlexibilitySet& set, double step,
                         const std::function<void(const ShiftVector&)>& visit,
                         int max_free_dimension = 3);

std::vector<ShiftVector> grid_points(const FlexibilitySet& set, double step, int max_free_dimension = 3);

/// Parses {"alpha": a} (box with balance over d_flex) or {"T": [[...]], "q": [...]}.
FlexibilitySet parse_flexibility(const nlohmann::json& fragment, std::span<const double> d_flex);

}  // namespace loadshift
