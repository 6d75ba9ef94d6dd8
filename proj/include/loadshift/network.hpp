// Transmission network, loads and generator fleet.
#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace loadshift {

/// MW per bus, in network bus order.
using ShiftVector = std::vector<double>;

/// Raised when network or load data violates a structural invariant.
class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Line {
  std::string from;
  std::string to;
  double susceptance = 1.0;
  double capacity_mw = 0.0;
  std::string id;
};

struct Generator {
  std::string id;
  std::string bus;
  double cost_usd_per_mwh = 0.0;
  double pmax_mw = 0.0;
};

/// Validated, immutable network. Bus order is the construction order and
/// fixes the layout of every per-bus vector in the library.
class Network {
 public:
  Network(std::vector<std::string> buses, std::vector<Line> lines,
          std::vector<Generator> generators, std::string reference_bus);

  [[nodiscard]] int num_buses() const { return static_cast<int>(buses_.size()); }
  [[nodiscard]] int num_lines() const { return static_cast<int>(lines_.size()); }
  [[nodiscard]] int num_generators() const { return static_cast<int>(generators_.size()); }

  [[nodiscard]] const std::vector<std::string>& buses() const { return buses_; }
  [[nodiscard]] const std::vector<Line>& lines() const { return lines_; }
  [[nodiscard]] const std::vector<Generator>& generators() const { return generators_; }
  [[nodiscard]] const std::string& reference_bus() const { return buses_[reference_index_]; }
  [[nodiscard]] int reference_index() const { return reference_index_; }

  /// Throws NetworkError for unknown ids.
  [[nodiscard]] int bus_index(const std::string& id) const;
  [[nodiscard]] bool has_bus(const std::string& id) const { return index_.contains(id); }

  [[nodiscard]] int line_from(int line) const { return line_from_[line]; }
  [[nodiscard]] int line_to(int line) const { return line_to_[line]; }
  [[nodiscard]] int generator_bus(int gen) const { return gen_bus_[gen]; }

  [[nodiscard]] std::vector<double> generator_costs() const;
  [[nodiscard]] std::vector<double> generator_capacities() const;
  [[nodiscard]] std::vector<double> line_capacities() const;

  /// Copy with every generator capacity multiplied by `factor`.
  [[nodiscard]] Network with_scaled_capacities(double factor) const;
  /// Copy with the given generator capacities (same order as generators()).
  [[nodiscard]] Network with_capacities(std::span<const double> pmax_mw) const;

 private:
  std::vector<std::string> buses_;
  std::vector<Line> lines_;
  std::vector<Generator> generators_;
  int reference_index_ = 0;
  std::unordered_map<std::string, int> index_;
  std::vector<int> line_from_;
  std::vector<int> line_to_;
  std::vector<int> gen_bus_;
};

struct LoadProfile {
  std::vector<double> base_mw;
  std::vector<double> flex_mw;

  [[nodiscard]] std::vector<double> nominal() const;
  [[nodiscard]] double total() const;
  /// Throws NetworkError on negative entries or a length other than `buses`.
  void validate(int buses) const;
};

struct Incidence {
  /// m x n, +1 at the from bus and -1 at the to bus of each line.
  Eigen::MatrixXd matrix;
  /// Diagonal of B, one susceptance per line.
  Eigen::VectorXd susceptance;
};

Incidence build_incidence(const Network& network);

/// n x k zero-one matrix; column j has a single 1 at the bus of generator j.
Eigen::MatrixXd generator_map(const Network& network);

/// USD/MWh from fuel price (USD/MMBTU) and heat rate (BTU/kWh).
double marginal_cost_from_heat_rate(double fuel_price, double heat_rate);

struct NetworkCase {
  Network network;
  LoadProfile load;
};

/// Parses the network JSON document; reports the offending field and index.
NetworkCase parse_network(const nlohmann::json& doc);
NetworkCase load_network_file(const std::filesystem::path& path);
nlohmann::json network_to_json(const Network& network, const LoadProfile& load);

}  // namespace loadshift
