#pragma once

// Document ingestion (JSON configs) and artifact emission (CSV, JSON
// reports). CSV numerics carry 17 significant digits; reports serialize
// with sorted keys so identical inputs produce identical bytes.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nlrepr/american.hpp"
#include "nlrepr/common.hpp"
#include "nlrepr/expectation.hpp"
#include "nlrepr/fspec.hpp"
#include "nlrepr/representation.hpp"
#include "nlrepr/tree.hpp"

namespace nlrepr::io {

using nlohmann::json;

inline json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

inline double require_number(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number())
    throw ConfigError(std::string("missing numeric field '") + key + "'");
  return j.at(key).get<double>();
}

inline int require_int(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer())
    throw ConfigError(std::string("missing integer field '") + key + "'");
  return j.at(key).get<int>();
}

inline std::string require_string(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string())
    throw ConfigError(std::string("missing string field '") + key + "'");
  return j.at(key).get<std::string>();
}

// ---------------------------------------------------------------------------
// Trees

inline std::shared_ptr<const Tree> parse_tree(const json& spec) {
  if (!spec.is_object()) throw ConfigError("tree spec must be an object");
  std::string kind = require_string(spec, "kind");
  int horizon = require_int(spec, "horizon");
  if (kind == "binomial") {
    double p = require_number(spec, "p");
    double sigma = spec.value("sigma", 1.0);
    double dt = spec.value("dt", 1.0);
    return build_binomial(horizon, p, sigma, dt);
  }
  if (kind == "chain") {
    double dt = spec.value("dt", 1.0);
    return build_chain(horizon, dt);
  }
  if (kind == "explicit") {
    std::vector<double> dt;
    if (spec.contains("dt") && spec.at("dt").is_array())
      dt = spec.at("dt").get<std::vector<double>>();
    else
      dt.assign(static_cast<std::size_t>(horizon), spec.value("dt", 1.0));
    if (!spec.contains("nodes") || !spec.at("nodes").is_array())
      throw ConfigError("explicit tree needs a nodes array");
    std::vector<NodeSpec> specs;
    std::map<std::int64_t, std::size_t> index;
    for (const auto& nj : spec.at("nodes")) {
      NodeSpec ns;
      ns.id = static_cast<std::int64_t>(require_int(nj, "id"));
      ns.time = require_int(nj, "time");
      ns.parent = nj.contains("parent") && !nj.at("parent").is_null()
                      ? static_cast<std::int64_t>(nj.at("parent").get<long long>())
                      : -1;
      ns.prob = nj.value("p", 1.0);
      if (nj.contains("e")) ns.incr = nj.at("e").get<std::vector<double>>();
      index.emplace(ns.id, specs.size());
      specs.push_back(std::move(ns));
    }
    // Edge data may also come as a separate list of (parent, child, p, e).
    if (spec.contains("edges")) {
      for (const auto& ej : spec.at("edges")) {
        std::int64_t child = static_cast<std::int64_t>(require_int(ej, "child"));
        auto it = index.find(child);
        if (it == index.end()) throw ConfigError("edge references unknown child node");
        NodeSpec& ns = specs[it->second];
        if (ej.contains("parent"))
          ns.parent = static_cast<std::int64_t>(ej.at("parent").get<long long>());
        if (ej.contains("p")) ns.prob = ej.at("p").get<double>();
        if (ej.contains("e")) ns.incr = ej.at("e").get<std::vector<double>>();
      }
    }
    return Tree::from_specs(horizon, std::move(dt), specs);
  }
  throw ConfigError("unknown tree kind '" + kind + "' (binomial|chain|explicit)");
}

// ---------------------------------------------------------------------------
// CSV processes

inline void write_process_csv(const std::filesystem::path& path, const Tree& tree,
                              const AdaptedProcess& values, int max_time) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "node_id,time,parent,value\n";
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    if (tree.time(n) > max_time) continue;
    std::int64_t parent = tree.parent(n) == kNoNode ? -1 : tree.user_id(tree.parent(n));
    out << tree.user_id(n) << ',' << tree.time(n) << ',' << parent << ','
        << format_sig17(values[n]) << '\n';
  }
}

inline AdaptedProcess read_process_csv(const std::filesystem::path& path, const Tree& tree) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  AdaptedProcess out(static_cast<std::size_t>(tree.node_count()), kNegInf);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id_s, time_s, parent_s, value_s;
    std::getline(ss, id_s, ',');
    std::getline(ss, time_s, ',');
    std::getline(ss, parent_s, ',');
    std::getline(ss, value_s, ',');
    if (first) {
      first = false;
      if (id_s == "node_id") continue;
    }
    try {
      std::int64_t id = std::stoll(id_s);
      auto node = tree.node_for_user_id(id);
      if (!node) throw ConfigError("process row references unknown node " + id_s);
      out[*node] = std::stod(value_s);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("malformed process row: " + line);
    }
  }
  return out;
}

/// Inline array (values in ascending user-id order) or {"csv": path}.
inline AdaptedProcess parse_process(const json& spec, const Tree& tree,
                                    const std::filesystem::path& base_dir) {
  if (spec.is_array()) {
    auto v = spec.get<std::vector<double>>();
    if (v.size() != static_cast<std::size_t>(tree.node_count()))
      throw ConfigError("inline process has " + std::to_string(v.size()) + " values, tree has " +
                        std::to_string(tree.node_count()) + " nodes");
    AdaptedProcess out(static_cast<std::size_t>(tree.node_count()));
    // Inline arrays are ordered by user id.
    std::vector<std::pair<std::int64_t, NodeId>> order;
    for (NodeId n = 0; n < tree.node_count(); ++n) order.emplace_back(tree.user_id(n), n);
    std::sort(order.begin(), order.end());
    for (std::size_t i = 0; i < order.size(); ++i) out[order[i].second] = v[i];
    return out;
  }
  if (spec.is_object() && spec.contains("csv"))
    return read_process_csv(base_dir / spec.at("csv").get<std::string>(), tree);
  throw ConfigError("process must be an inline array or {\"csv\": path}");
}

// ---------------------------------------------------------------------------
// Operators

inline DriverSpec parse_driver(const json& spec) {
  DriverSpec d;
  std::string form = require_string(spec, "form");
  if (form == "zero")
    d.form = DriverForm::Zero;
  else if (form == "linear_z")
    d.form = DriverForm::LinearZ;
  else if (form == "abs_z")
    d.form = DriverForm::AbsZ;
  else if (form == "neg_abs_z")
    d.form = DriverForm::NegAbsZ;
  else if (form == "piecewise_linear_z")
    d.form = DriverForm::PiecewiseLinearZ;
  else
    throw ConfigError("unknown driver form '" + form + "'");
  d.kappa = spec.value("kappa", 0.0);
  d.lambda = spec.value("lambda", 0.0);
  if (spec.contains("breaks")) d.breaks = spec.at("breaks").get<std::vector<double>>();
  if (spec.contains("slopes")) d.slopes = spec.at("slopes").get<std::vector<double>>();
  double bound = std::max(d.z_slope_bound(), std::abs(d.lambda));
  d.lipschitz = spec.value("lipschitz", bound);
  return d;
}

inline OperatorSpec parse_operator(const json& spec, const Tree& tree,
                                   const std::filesystem::path& base_dir) {
  if (!spec.is_object()) throw ConfigError("operator spec must be an object");
  std::string variant = require_string(spec, "variant");
  OperatorSpec op;
  if (variant == "linear") {
    op.variant = OperatorVariant::Linear;
    return op;
  }
  if (!spec.contains("driver")) throw ConfigError("driver variants need a driver object");
  op.driver = parse_driver(spec.at("driver"));
  if (variant == "z_driver") {
    op.variant = OperatorVariant::ZDriver;
    if (op.driver.lambda != 0.0) throw ConfigError("z_driver must not carry a lambda term");
    return op;
  }
  if (variant == "yz_driver") {
    op.variant = OperatorVariant::YZDriver;
    return op;
  }
  if (variant == "alpha_maxmin") {
    op.variant = OperatorVariant::AlphaMaxmin;
    if (spec.contains("alt_driver")) op.alt_driver = parse_driver(spec.at("alt_driver"));
    if (!spec.contains("alpha")) throw ConfigError("alpha_maxmin needs an alpha field");
    const auto& aj = spec.at("alpha");
    if (aj.is_number()) {
      op.alpha = constant_process(tree, aj.get<double>());
    } else {
      op.alpha = parse_process(aj, tree, base_dir);
    }
    return op;
  }
  throw ConfigError("unknown operator variant '" + variant + "'");
}

// ---------------------------------------------------------------------------
// f specifications

inline std::vector<double> coeff_list(const json& j) {
  if (j.is_number()) return {j.get<double>()};
  return j.get<std::vector<double>>();
}

inline FSpec parse_fspec(const json& spec) {
  if (!spec.is_object()) throw ConfigError("f spec must be an object");
  std::string family = require_string(spec, "family");
  if (family == "identity") return FSpec::identity();
  if (family == "affine") {
    std::string dir = spec.value("direction", "decreasing");
    if (dir != "decreasing" && dir != "increasing")
      throw ConfigError("f direction must be decreasing or increasing");
    return FSpec::affine(spec.contains("a") ? coeff_list(spec.at("a")) : std::vector<double>{0.0},
                         spec.contains("b") ? coeff_list(spec.at("b")) : std::vector<double>{1.0},
                         dir == "decreasing" ? MonotoneDirection::Decreasing
                                             : MonotoneDirection::Increasing);
  }
  if (family == "scaled") {
    if (!spec.contains("c")) throw ConfigError("scaled f needs coefficients c");
    return FSpec::scaled(coeff_list(spec.at("c")));
  }
  if (family == "piecewise") {
    if (!spec.contains("breaks") || !spec.contains("slopes"))
      throw ConfigError("piecewise f needs breaks and slopes");
    return FSpec::piecewise(spec.at("breaks").get<std::vector<double>>(),
                            spec.at("slopes").get<std::vector<double>>(), spec.value("offset", 0.0));
  }
  throw ConfigError("unknown f family '" + family + "'");
}

inline RepresentationVariant parse_variant(const json& config) {
  std::string v = config.value("variant", "plain");
  if (v == "plain") return RepresentationVariant::Plain;
  if (v == "terminal") return RepresentationVariant::Terminal;
  throw ConfigError("variant must be plain or terminal");
}

// ---------------------------------------------------------------------------
// Markets and strikes

struct ParsedMarket {
  std::shared_ptr<const Tree> tree;
  MarketSpec market;
};

/// Either {"crr": {...}} (tree implied) or {"r":..., "prices":...} on an
/// explicitly given tree.
inline ParsedMarket parse_market(const json& spec, std::shared_ptr<const Tree> tree,
                                 const std::filesystem::path& base_dir) {
  if (!spec.is_object()) throw ConfigError("market spec must be an object");
  ParsedMarket out;
  if (spec.contains("crr")) {
    const auto& cj = spec.at("crr");
    CrrParams crr;
    crr.s0 = require_number(cj, "s0");
    crr.up = require_number(cj, "u");
    crr.down = require_number(cj, "d");
    crr.rate = require_number(cj, "r");
    crr.steps = require_int(cj, "horizon");
    auto [t, m] = unfold_crr(crr);
    out.tree = std::move(t);
    out.market = std::move(m);
    return out;
  }
  if (!tree) throw ConfigError("market needs a tree or a crr block");
  out.tree = std::move(tree);
  out.market.rate = require_number(spec, "r");
  if (!spec.contains("prices")) throw ConfigError("market needs prices");
  out.market.prices = parse_process(spec.at("prices"), *out.tree, base_dir);
  return out;
}

/// {"from":a,"to":b,"count":n}, {"grid":[...]} or the string "a:b:n".
inline std::vector<double> parse_strikes(const json& spec) {
  auto linspace = [](double a, double b, int n) {
    if (n < 1) throw ConfigError("strike count must be positive");
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      g[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / (n - 1);
    return g;
  };
  if (spec.is_string()) {
    std::string s = spec.get<std::string>();
    auto c1 = s.find(':');
    auto c2 = s.find(':', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw ConfigError("strike range must look like a:b:n");
    try {
      return linspace(std::stod(s.substr(0, c1)), std::stod(s.substr(c1 + 1, c2 - c1 - 1)),
                      std::stoi(s.substr(c2 + 1)));
    } catch (const std::exception&) {
      throw ConfigError("strike range must look like a:b:n");
    }
  }
  if (spec.is_object() && spec.contains("grid")) return spec.at("grid").get<std::vector<double>>();
  if (spec.is_object())
    return linspace(require_number(spec, "from"), require_number(spec, "to"),
                    require_int(spec, "count"));
  throw ConfigError("strikes must be a grid, a range object or a:b:n");
}

// ---------------------------------------------------------------------------
// Rules and reports

inline json rule_to_json(const Tree& tree, const StoppingRule& rule) {
  json j;
  j["extended"] = rule.extended();
  std::vector<std::int64_t> stops;
  for (NodeId n : rule.stops()) stops.push_back(tree.user_id(n));
  std::sort(stops.begin(), stops.end());
  j["stops"] = stops;
  auto times = stop_times_per_leaf(tree, rule);
  int earliest = kNever;
  for (int t : times) earliest = std::min(earliest, t);
  j["earliest_time"] = earliest == kNever ? json("inf") : json(earliest);
  return j;
}

inline void write_tree_csv(const std::filesystem::path& path, const Tree& tree) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "node_id,time,parent,value\n";
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    std::int64_t parent = tree.parent(n) == kNoNode ? -1 : tree.user_id(tree.parent(n));
    out << tree.user_id(n) << ',' << tree.time(n) << ',' << parent << ','
        << format_sig17(tree.edge_prob(n)) << '\n';
  }
}

inline void write_increments_csv(const std::filesystem::path& path, const Tree& tree, int component) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "node_id,time,parent,value\n";
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    std::int64_t parent = tree.parent(n) == kNoNode ? -1 : tree.user_id(tree.parent(n));
    double v = n == 0 ? 0.0 : tree.increment(n)[static_cast<std::size_t>(component)];
    out << tree.user_id(n) << ',' << tree.time(n) << ',' << parent << ',' << format_sig17(v) << '\n';
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace nlrepr::io
