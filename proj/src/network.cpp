#include "loadshift/network.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

namespace loadshift {

namespace {

std::string at(const char* what, std::size_t index) {
  return std::string(what) + "[" + std::to_string(index) + "]";
}

}  // namespace

Network::Network(std::vector<std::string> buses, std::vector<Line> lines,
                 std::vector<Generator> generators, std::string reference_bus)
    : buses_(std::move(buses)), lines_(std::move(lines)), generators_(std::move(generators)) {
  if (buses_.empty()) throw NetworkError("network has no buses");
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (!index_.emplace(buses_[i], static_cast<int>(i)).second) {
      throw NetworkError(at("buses", i) + ": duplicate bus id '" + buses_[i] + "'");
    }
  }
  auto lookup = [&](const std::string& id, const std::string& where) {
    auto it = index_.find(id);
    if (it == index_.end()) throw NetworkError(where + ": unknown bus '" + id + "'");
    return it->second;
  };
  for (std::size_t l = 0; l < lines_.size(); ++l) {
    const auto& line = lines_[l];
    line_from_.push_back(lookup(line.from, at("lines", l) + ".from"));
    line_to_.push_back(lookup(line.to, at("lines", l) + ".to"));
    if (line_from_.back() == line_to_.back()) {
      throw NetworkError(at("lines", l) + ": self loop at bus '" + line.from + "'");
    }
    if (!(line.capacity_mw >= 0.0)) {
      throw NetworkError(at("lines", l) + ".capacity_mw: capacity must be non-negative");
    }
    if (!(line.susceptance > 0.0) || !std::isfinite(line.susceptance)) {
      throw NetworkError(at("lines", l) + ".susceptance: must be positive");
    }
  }
  for (std::size_t g = 0; g < generators_.size(); ++g) {
    const auto& gen = generators_[g];
    gen_bus_.push_back(lookup(gen.bus, at("generators", g) + ".bus"));
    if (!(gen.pmax_mw >= 0.0)) {
      throw NetworkError(at("generators", g) + ".pmax_mw: capacity must be non-negative");
    }
    if (!std::isfinite(gen.cost_usd_per_mwh)) {
      throw NetworkError(at("generators", g) + ".cost_usd_per_mwh: must be finite");
    }
  }
  reference_index_ = lookup(reference_bus, "reference_bus");
}

int Network::bus_index(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw NetworkError("unknown bus '" + id + "'");
  return it->second;
}

std::vector<double> Network::generator_costs() const {
  std::vector<double> c;
  c.reserve(generators_.size());
  for (const auto& g : generators_) c.push_back(g.cost_usd_per_mwh);
  return c;
}

std::vector<double> Network::generator_capacities() const {
  std::vector<double> c;
  c.reserve(generators_.size());
  for (const auto& g : generators_) c.push_back(g.pmax_mw);
  return c;
}

std::vector<double> Network::line_capacities() const {
  std::vector<double> c;
  c.reserve(lines_.size());
  for (const auto& l : lines_) c.push_back(l.capacity_mw);
  return c;
}

Network Network::with_scaled_capacities(double factor) const {
  if (!(factor >= 0.0) || !std::isfinite(factor)) {
    throw NetworkError("capacity scale must be finite and non-negative");
  }
  auto gens = generators_;
  for (auto& g : gens) g.pmax_mw *= factor;
  return Network(buses_, lines_, std::move(gens), reference_bus());
}

Network Network::with_capacities(std::span<const double> pmax_mw) const {
  if (pmax_mw.size() != generators_.size()) {
    throw NetworkError("capacity vector length does not match generator count");
  }
  auto gens = generators_;
  for (std::size_t g = 0; g < gens.size(); ++g) gens[g].pmax_mw = pmax_mw[g];
  return Network(buses_, lines_, std::move(gens), reference_bus());
}

std::vector<double> LoadProfile::nominal() const {
  std::vector<double> d(base_mw.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = base_mw[i] + flex_mw[i];
  return d;
}

double LoadProfile::total() const {
  return std::accumulate(base_mw.begin(), base_mw.end(), 0.0) +
         std::accumulate(flex_mw.begin(), flex_mw.end(), 0.0);
}

void LoadProfile::validate(int buses) const {
  if (static_cast<int>(base_mw.size()) != buses || static_cast<int>(flex_mw.size()) != buses) {
    throw NetworkError("load profile length does not match bus count");
  }
  for (std::size_t i = 0; i < base_mw.size(); ++i) {
    if (!(base_mw[i] >= 0.0) || !std::isfinite(base_mw[i])) {
      throw NetworkError(at("loads.base_mw", i) + ": must be finite and non-negative");
    }
    if (!(flex_mw[i] >= 0.0) || !std::isfinite(flex_mw[i])) {
      throw NetworkError(at("loads.flex_mw", i) + ": must be finite and non-negative");
    }
  }
}

Incidence build_incidence(const Network& network) {
  const int m = network.num_lines();
  const int n = network.num_buses();
  Incidence inc{Eigen::MatrixXd::Zero(m, n), Eigen::VectorXd(m)};
  for (int l = 0; l < m; ++l) {
    inc.matrix(l, network.line_from(l)) = 1.0;
    inc.matrix(l, network.line_to(l)) = -1.0;
    inc.susceptance[l] = network.lines()[l].susceptance;
  }
  return inc;
}

Eigen::MatrixXd generator_map(const Network& network) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(network.num_buses(), network.num_generators());
  for (int j = 0; j < network.num_generators(); ++j) g(network.generator_bus(j), j) = 1.0;
  return g;
}

double marginal_cost_from_heat_rate(double fuel_price, double heat_rate) {
  if (!(fuel_price >= 0.0) || !(heat_rate >= 0.0)) {
    throw std::invalid_argument("fuel price and heat rate must be non-negative");
  }
  // USD/MMBTU * 1e-6 MMBTU/BTU * 1e3 kWh/MWh * BTU/kWh
  return fuel_price * heat_rate / 1000.0;
}

namespace {

double number_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw NetworkError(where + "." + key + ": missing field");
  const auto& v = obj.at(key);
  if (!v.is_number()) throw NetworkError(where + "." + key + ": expected a number");
  return v.get<double>();
}

std::string string_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw NetworkError(where + "." + key + ": missing field");
  const auto& v = obj.at(key);
  if (!v.is_string()) throw NetworkError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

const nlohmann::json& array_field(const nlohmann::json& doc, const char* key, bool required) {
  static const nlohmann::json empty = nlohmann::json::array();
  if (!doc.contains(key)) {
    if (required) throw NetworkError(std::string(key) + ": missing field");
    return empty;
  }
  const auto& v = doc.at(key);
  if (!v.is_array()) throw NetworkError(std::string(key) + ": expected an array");
  return v;
}

}  // namespace

NetworkCase parse_network(const nlohmann::json& doc) {
  if (!doc.is_object()) throw NetworkError("network document must be a JSON object");
  std::vector<std::string> buses;
  const auto& jbuses = array_field(doc, "buses", true);
  for (std::size_t i = 0; i < jbuses.size(); ++i) {
    buses.push_back(string_field(jbuses[i], "id", at("buses", i)));
  }
  std::vector<Line> lines;
  const auto& jlines = array_field(doc, "lines", false);
  for (std::size_t l = 0; l < jlines.size(); ++l) {
    const auto& jl = jlines[l];
    const std::string where = at("lines", l);
    Line line;
    line.from = string_field(jl, "from", where);
    line.to = string_field(jl, "to", where);
    line.capacity_mw = number_field(jl, "capacity_mw", where);
    if (jl.contains("susceptance") && !jl.at("susceptance").is_null()) {
      line.susceptance = number_field(jl, "susceptance", where);
    }
    line.id = jl.contains("id") ? string_field(jl, "id", where) : line.from + "-" + line.to;
    lines.push_back(std::move(line));
  }
  std::vector<Generator> gens;
  const auto& jgens = array_field(doc, "generators", false);
  for (std::size_t g = 0; g < jgens.size(); ++g) {
    const auto& jg = jgens[g];
    const std::string where = at("generators", g);
    gens.push_back(Generator{string_field(jg, "id", where), string_field(jg, "bus", where),
                             number_field(jg, "cost_usd_per_mwh", where),
                             number_field(jg, "pmax_mw", where)});
  }
  std::string ref = doc.contains("reference_bus") ? string_field(doc, "reference_bus", "document")
                                                  : (buses.empty() ? std::string{} : buses.front());
  Network network(std::move(buses), std::move(lines), std::move(gens), std::move(ref));

  LoadProfile load;
  load.base_mw.assign(network.num_buses(), 0.0);
  load.flex_mw.assign(network.num_buses(), 0.0);
  const auto& jloads = array_field(doc, "loads", false);
  for (std::size_t i = 0; i < jloads.size(); ++i) {
    const auto& jl = jloads[i];
    const std::string where = at("loads", i);
    const std::string bus = string_field(jl, "bus", where);
    if (!network.has_bus(bus)) throw NetworkError(where + ".bus: unknown bus '" + bus + "'");
    const double base = jl.contains("base_mw") ? number_field(jl, "base_mw", where) : 0.0;
    const double flex = jl.contains("flex_mw") ? number_field(jl, "flex_mw", where) : 0.0;
    if (!(base >= 0.0)) throw NetworkError(where + ".base_mw: must be non-negative");
    if (!(flex >= 0.0)) throw NetworkError(where + ".flex_mw: must be non-negative");
    const int b = network.bus_index(bus);
    load.base_mw[b] += base;
    load.flex_mw[b] += flex;
  }
  load.validate(network.num_buses());
  return NetworkCase{std::move(network), std::move(load)};
}

NetworkCase load_network_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NetworkError("cannot open network file '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw NetworkError("parse error in '" + path.string() + "': " + e.what());
  }
  return parse_network(doc);
}

nlohmann::json network_to_json(const Network& network, const LoadProfile& load) {
  nlohmann::json doc;
  doc["buses"] = nlohmann::json::array();
  for (const auto& b : network.buses()) doc["buses"].push_back({{"id", b}});
  doc["lines"] = nlohmann::json::array();
  for (const auto& l : network.lines()) {
    doc["lines"].push_back({{"id", l.id},
                            {"from", l.from},
                            {"to", l.to},
                            {"susceptance", l.susceptance},
                            {"capacity_mw", l.capacity_mw}});
  }
  doc["generators"] = nlohmann::json::array();
  for (const auto& g : network.generators()) {
    doc["generators"].push_back({{"id", g.id},
                                 {"bus", g.bus},
                                 {"cost_usd_per_mwh", g.cost_usd_per_mwh},
                                 {"pmax_mw", g.pmax_mw}});
  }
  doc["loads"] = nlohmann::json::array();
  for (int i = 0; i < network.num_buses(); ++i) {
    doc["loads"].push_back(
        {{"bus", network.buses()[i]}, {"base_mw", load.base_mw[i]}, {"flex_mw", load.flex_mw[i]}});
  }
  doc["reference_bus"] = network.reference_bus();
  return doc;
}

}  // namespace loadshift
