#pragma once

// Finite filtered probability space as a non-recombining rooted tree.
// Nodes are stored in DFS pre-order, so every subtree is a contiguous index
// range and every subtree's leaves are a contiguous ordinal range. All
// structures are immutable after construction.

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "nlrepr/common.hpp"

namespace nlrepr {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

/// Raw node record for explicit construction; `parent < 0` marks the root.
struct NodeSpec {
  std::int64_t id = 0;
  int time = 0;
  std::int64_t parent = -1;
  double prob = 1.0;
  std::vector<double> incr;
};

class Tree {
 public:
  struct Node {
    int time = 0;
    NodeId parent = kNoNode;
    std::int64_t user_id = 0;
    double prob = 1.0;  // probability of the edge parent -> this
    std::vector<NodeId> children;
    NodeId subtree_end = 0;  // nodes [id, subtree_end) form the subtree
    int leaf_begin = 0, leaf_end = 0;
  };

  static std::shared_ptr<const Tree> from_specs(int horizon, std::vector<double> dt,
                                                const std::vector<NodeSpec>& specs);

  int horizon() const { return horizon_; }
  int dim() const { return dim_; }
  double dt(int u) const { return dt_[static_cast<std::size_t>(u)]; }
  const std::vector<double>& dt_steps() const { return dt_; }

  NodeId node_count() const { return static_cast<NodeId>(nodes_.size()); }
  int leaf_count() const { return static_cast<int>(leaves_.size()); }

  int time(NodeId n) const { return nodes_[static_cast<std::size_t>(n)].time; }
  NodeId parent(NodeId n) const { return nodes_[static_cast<std::size_t>(n)].parent; }
  std::int64_t user_id(NodeId n) const { return nodes_[static_cast<std::size_t>(n)].user_id; }
  double edge_prob(NodeId n) const { return nodes_[static_cast<std::size_t>(n)].prob; }
  std::span<const NodeId> children(NodeId n) const {
    const auto& c = nodes_[static_cast<std::size_t>(n)].children;
    return {c.data(), c.size()};
  }
  bool is_leaf(NodeId n) const { return nodes_[static_cast<std::size_t>(n)].children.empty(); }
  std::span<const double> increment(NodeId n) const {
    return {incr_.data() + static_cast<std::size_t>(n) * dim_, static_cast<std::size_t>(dim_)};
  }
  NodeId subtree_end(NodeId n) const { return nodes_[static_cast<std::size_t>(n)].subtree_end; }
  /// Leaf ordinals [begin, end) under node n.
  std::pair<int, int> leaf_range(NodeId n) const {
    const Node& node = nodes_[static_cast<std::size_t>(n)];
    return {node.leaf_begin, node.leaf_end};
  }
  std::span<const NodeId> leaves() const { return {leaves_.data(), leaves_.size()}; }
  NodeId leaf_node(int ordinal) const { return leaves_[static_cast<std::size_t>(ordinal)]; }
  int leaf_ordinal(NodeId n) const { return nodes_[static_cast<std::size_t>(n)].leaf_begin; }
  std::span<const NodeId> nodes_at_time(int t) const {
    const auto& v = by_time_[static_cast<std::size_t>(t)];
    return {v.data(), v.size()};
  }
  /// Ancestor of n at time t (n itself when time(n) == t).
  NodeId ancestor_at(NodeId n, int t) const {
    while (time(n) > t) n = parent(n);
    return n;
  }
  std::optional<NodeId> node_for_user_id(std::int64_t id) const {
    auto it = user_index_.find(id);
    if (it == user_index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  Tree() = default;
  int horizon_ = 0;
  int dim_ = 1;
  std::vector<double> dt_;
  std::vector<Node> nodes_;
  std::vector<double> incr_;  // node * dim
  std::vector<NodeId> leaves_;
  std::vector<std::vector<NodeId>> by_time_;
  std::map<std::int64_t, NodeId> user_index_;
};

inline std::shared_ptr<const Tree> Tree::from_specs(int horizon, std::vector<double> dt,
                                                    const std::vector<NodeSpec>& specs) {
  if (horizon < 1) throw ConfigError("tree horizon must be at least 1");
  if (static_cast<int>(dt.size()) != horizon) throw ConfigError("dt must list one step size per time step");
  for (double s : dt)
    if (!(s > 0)) throw ConfigError("step sizes must be positive");
  if (specs.empty()) throw ValidationError("tree has no nodes");

  std::map<std::int64_t, std::size_t> by_id;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (!by_id.emplace(specs[i].id, i).second)
      throw ValidationError("duplicate node id " + std::to_string(specs[i].id));
  }

  std::size_t root_idx = specs.size();
  std::map<std::int64_t, std::vector<std::size_t>> kids;  // parent id -> spec indices, input order
  int dim = -1;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const NodeSpec& s = specs[i];
    if (s.parent < 0) {
      if (root_idx != specs.size()) throw ValidationError("more than one root node");
      if (s.time != 0) throw ValidationError("root must sit at time 0");
      root_idx = i;
    } else {
      if (!by_id.count(s.parent))
        throw ValidationError("node " + std::to_string(s.id) + " references unknown parent");
      kids[s.parent].push_back(i);
      if (!s.incr.empty()) {
        if (dim < 0) dim = static_cast<int>(s.incr.size());
        if (dim != static_cast<int>(s.incr.size()))
          throw ValidationError("inconsistent increment dimension");
      }
    }
  }
  if (root_idx == specs.size()) throw ValidationError("tree has no root");
  if (dim < 0) dim = 1;

  auto tree = std::shared_ptr<Tree>(new Tree());
  Tree& t = *tree;
  t.horizon_ = horizon;
  t.dim_ = dim;
  t.dt_ = std::move(dt);
  t.nodes_.reserve(specs.size());
  t.incr_.assign(specs.size() * static_cast<std::size_t>(dim), 0.0);

  // DFS pre-order over spec indices; children in input order.
  std::vector<std::pair<std::size_t, NodeId>> stack;  // (spec index, internal parent)
  stack.emplace_back(root_idx, kNoNode);
  while (!stack.empty()) {
    auto [si, parent] = stack.back();
    stack.pop_back();
    const NodeSpec& s = specs[si];
    NodeId id = static_cast<NodeId>(t.nodes_.size());
    if (id >= static_cast<NodeId>(specs.size())) throw ValidationError("tree contains a cycle");
    Node node;
    node.time = s.time;
    node.parent = parent;
    node.user_id = s.id;
    node.prob = parent == kNoNode ? 1.0 : s.prob;
    if (parent != kNoNode) {
      if (s.time != t.nodes_[static_cast<std::size_t>(parent)].time + 1)
        throw ValidationError("node " + std::to_string(s.id) + " is not one step below its parent");
      if (!(node.prob > 0.0) || !(node.prob <= 1.0))
        throw ValidationError("edge probability out of (0,1] at node " + std::to_string(s.id));
      for (int j = 0; j < dim; ++j)
        t.incr_[static_cast<std::size_t>(id) * dim + j] =
            s.incr.empty() ? 0.0 : s.incr[static_cast<std::size_t>(j)];
      t.nodes_[static_cast<std::size_t>(parent)].children.push_back(id);
    }
    if (s.time > horizon) throw ValidationError("node beyond the horizon");
    t.nodes_.push_back(std::move(node));
    auto it = kids.find(s.id);
    if (it != kids.end()) {
      for (auto rit = it->second.rbegin(); rit != it->second.rend(); ++rit)
        stack.emplace_back(*rit, id);
    }
  }
  if (t.nodes_.size() != specs.size())
    throw ValidationError("tree is not connected: unreachable nodes present");

  // Leaf / interior shape, probability and centering checks.
  for (NodeId n = 0; n < t.node_count(); ++n) {
    Node& node = t.nodes_[static_cast<std::size_t>(n)];
    if (node.children.empty()) {
      if (node.time != horizon)
        throw ValidationError("leaf " + std::to_string(node.user_id) + " does not sit at the horizon");
    } else {
      double sum = 0.0;
      for (NodeId c : node.children) sum += t.nodes_[static_cast<std::size_t>(c)].prob;
      if (std::abs(sum - 1.0) > kProbTol)
        throw ValidationError("edge probabilities at node " + std::to_string(node.user_id) +
                              " sum to " + format_sig17(sum));
      for (NodeId c : node.children) t.nodes_[static_cast<std::size_t>(c)].prob /= sum;
      for (int j = 0; j < dim; ++j) {
        double center = 0.0;
        for (NodeId c : node.children)
          center += t.nodes_[static_cast<std::size_t>(c)].prob *
                    t.incr_[static_cast<std::size_t>(c) * dim + j];
        if (std::abs(center) > kCenterTol)
          throw ValidationError("increments at node " + std::to_string(node.user_id) +
                                " are not centered: " + format_sig17(center));
      }
    }
  }

  // Derived indexes: subtree ranges, leaf ordinals, time slices.
  t.by_time_.assign(static_cast<std::size_t>(horizon) + 1, {});
  for (NodeId n = 0; n < t.node_count(); ++n)
    t.by_time_[static_cast<std::size_t>(t.time(n))].push_back(n);
  for (NodeId n = t.node_count() - 1; n >= 0; --n) {
    Node& node = t.nodes_[static_cast<std::size_t>(n)];
    node.subtree_end = n + 1;
    for (NodeId c : node.children) node.subtree_end = t.nodes_[static_cast<std::size_t>(c)].subtree_end;
  }
  for (NodeId n = 0; n < t.node_count(); ++n) {
    Node& node = t.nodes_[static_cast<std::size_t>(n)];
    if (node.children.empty()) {
      node.leaf_begin = static_cast<int>(t.leaves_.size());
      t.leaves_.push_back(n);
      node.leaf_end = node.leaf_begin + 1;
    }
  }
  for (NodeId n = t.node_count() - 1; n >= 0; --n) {
    Node& node = t.nodes_[static_cast<std::size_t>(n)];
    if (!node.children.empty()) {
      node.leaf_begin = t.nodes_[static_cast<std::size_t>(node.children.front())].leaf_begin;
      node.leaf_end = t.nodes_[static_cast<std::size_t>(node.children.back())].leaf_end;
    }
  }
  for (NodeId n = 0; n < t.node_count(); ++n) t.user_index_.emplace(t.user_id(n), n);
  return tree;
}

/// Non-recombining binary tree with centered one-dimensional increments:
/// e_up = sigma*sqrt(dt*p*(1-p))/p, e_down the matching negative value, so
/// that p*e_up + (1-p)*e_down = 0 and p*e_up^2 + (1-p)*e_down^2 = sigma^2*dt.
inline std::shared_ptr<const Tree> build_binomial(int steps, double p, double sigma, double dt) {
  if (steps < 1) throw ConfigError("binomial tree needs at least one step");
  if (steps > kMaxBinaryDepth) throw ConfigError("binary depth guard: N <= 20");
  if (!(p > 0.0) || !(p < 1.0)) throw ConfigError("up-probability must lie in (0,1)");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  const double e_common = sigma * std::sqrt(dt * p * (1.0 - p));
  const double e_up = e_common / p;
  const double e_down = -e_common / (1.0 - p);

  std::vector<NodeSpec> specs;
  specs.reserve((std::size_t(1) << (steps + 1)) - 1);
  // Pre-order ids; child 0 is the up move.
  struct Frame {
    std::int64_t parent;
    int time;
    bool up;
  };
  std::vector<Frame> stack{{-1, 0, false}};
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    std::int64_t id = static_cast<std::int64_t>(specs.size());
    NodeSpec s;
    s.id = id;
    s.time = f.time;
    s.parent = f.parent;
    if (f.parent >= 0) {
      s.prob = f.up ? p : 1.0 - p;
      s.incr = {f.up ? e_up : e_down};
    }
    specs.push_back(std::move(s));
    if (f.time < steps) {
      stack.push_back({id, f.time + 1, false});
      stack.push_back({id, f.time + 1, true});
    }
  }
  return Tree::from_specs(steps, std::vector<double>(static_cast<std::size_t>(steps), dt), specs);
}

/// Deterministic chain: one child per node, p = 1, zero increments.
inline std::shared_ptr<const Tree> build_chain(int steps, double dt) {
  if (steps < 1) throw ConfigError("chain needs at least one step");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  std::vector<NodeSpec> specs;
  for (int u = 0; u <= steps; ++u) {
    NodeSpec s;
    s.id = u;
    s.time = u;
    s.parent = u == 0 ? -1 : u - 1;
    s.prob = 1.0;
    s.incr = {0.0};
    specs.push_back(std::move(s));
  }
  return Tree::from_specs(steps, std::vector<double>(static_cast<std::size_t>(steps), dt), specs);
}

/// One real value per node.
struct AdaptedProcess {
  std::vector<double> values;
  AdaptedProcess() = default;
  explicit AdaptedProcess(std::size_t n, double fill = 0.0) : values(n, fill) {}
  double& operator[](NodeId n) { return values[static_cast<std::size_t>(n)]; }
  double operator[](NodeId n) const { return values[static_cast<std::size_t>(n)]; }
  std::size_t size() const { return values.size(); }
};

/// One real value per leaf, indexed by leaf ordinal.
struct TerminalVariable {
  std::vector<double> values;
  TerminalVariable() = default;
  explicit TerminalVariable(std::size_t n, double fill = 0.0) : values(n, fill) {}
  double& operator[](int ordinal) { return values[static_cast<std::size_t>(ordinal)]; }
  double operator[](int ordinal) const { return values[static_cast<std::size_t>(ordinal)]; }
  std::size_t size() const { return values.size(); }
};

inline AdaptedProcess constant_process(const Tree& tree, double v) {
  return AdaptedProcess(static_cast<std::size_t>(tree.node_count()), v);
}

inline TerminalVariable constant_terminal(const Tree& tree, double v) {
  return TerminalVariable(static_cast<std::size_t>(tree.leaf_count()), v);
}

inline void require_bound(const Tree& tree, const AdaptedProcess& p, const char* what) {
  if (p.size() != static_cast<std::size_t>(tree.node_count()))
    throw ValidationError(std::string(what) + ": process not defined on every node");
}

inline void require_bound(const Tree& tree, const TerminalVariable& x, const char* what) {
  if (x.size() != static_cast<std::size_t>(tree.leaf_count()))
    throw ValidationError(std::string(what) + ": terminal variable not defined on every leaf");
}

namespace detail {

/// First STOP node on the root-to-leaf path, kNoNode when the path never stops.
inline std::vector<NodeId> stop_nodes_per_leaf_impl(const Tree& tree, std::span<const NodeId> stops) {
  std::vector<char> is_stop(static_cast<std::size_t>(tree.node_count()), 0);
  for (NodeId s : stops) is_stop[static_cast<std::size_t>(s)] = 1;
  std::vector<NodeId> carry(static_cast<std::size_t>(tree.node_count()), kNoNode);
  std::vector<NodeId> out(static_cast<std::size_t>(tree.leaf_count()), kNoNode);
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    NodeId inherited = n == 0 ? kNoNode : carry[static_cast<std::size_t>(tree.parent(n))];
    carry[static_cast<std::size_t>(n)] =
        inherited != kNoNode ? inherited : (is_stop[static_cast<std::size_t>(n)] ? n : kNoNode);
    if (tree.is_leaf(n)) out[static_cast<std::size_t>(tree.leaf_ordinal(n))] = carry[static_cast<std::size_t>(n)];
  }
  return out;
}

}  // namespace detail

/// Adapted stop/continue decision stored as its minimal STOP antichain.
/// Extended rules may leave paths unstopped (tau = +infinity).
class StoppingRule {
 public:
  StoppingRule(const Tree& tree, std::vector<NodeId> stops, bool extended) : extended_(extended) {
    std::sort(stops.begin(), stops.end());
    stops_ = std::move(stops);
    validate(tree);
  }

  static StoppingRule constant_time(const Tree& tree, int t) {
    if (t < 0 || t > tree.horizon()) throw ConfigError("constant stopping time out of range");
    auto span = tree.nodes_at_time(t);
    return unchecked(std::vector<NodeId>(span.begin(), span.end()), false);
  }

  bool extended() const { return extended_; }
  const std::vector<NodeId>& stops() const { return stops_; }

  /// Trusted construction for enumerators that build valid antichains.
  static StoppingRule unchecked(std::vector<NodeId> stops, bool extended) {
    StoppingRule r;
    r.stops_ = std::move(stops);
    std::sort(r.stops_.begin(), r.stops_.end());
    r.extended_ = extended;
    return r;
  }

 private:
  StoppingRule() = default;

  void validate(const Tree& tree) const {
    for (NodeId s : stops_)
      if (s < 0 || s >= tree.node_count()) throw ValidationError("stopping rule references unknown node");
    // Antichain: no STOP strictly below another STOP.
    std::vector<char> is_stop(static_cast<std::size_t>(tree.node_count()), 0);
    for (NodeId s : stops_) {
      if (is_stop[static_cast<std::size_t>(s)]) throw ValidationError("duplicate STOP node");
      is_stop[static_cast<std::size_t>(s)] = 1;
    }
    for (NodeId s : stops_) {
      for (NodeId a = tree.parent(s); a != kNoNode; a = tree.parent(a))
        if (is_stop[static_cast<std::size_t>(a)])
          throw ValidationError("STOP node is a descendant of another STOP node");
    }
    if (!extended_) {
      auto per_leaf = detail::stop_nodes_per_leaf_impl(
          tree, {stops_.data(), stops_.size()});
      for (NodeId m : per_leaf)
        if (m == kNoNode) throw ValidationError("non-extended rule leaves a path unstopped");
    }
  }

  std::vector<NodeId> stops_;
  bool extended_ = false;
};

inline std::vector<NodeId> stop_nodes_per_leaf(const Tree& tree, const StoppingRule& tau) {
  return detail::stop_nodes_per_leaf_impl(tree, {tau.stops().data(), tau.stops().size()});
}

inline std::vector<int> stop_times_per_leaf(const Tree& tree, const StoppingRule& tau) {
  auto nodes = stop_nodes_per_leaf(tree, tau);
  std::vector<int> out(nodes.size(), kNever);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i] != kNoNode) out[i] = tree.time(nodes[i]);
  return out;
}

/// tau AND the horizon: unstopped paths stop at their leaf; result is non-extended.
inline StoppingRule cap_at_horizon(const Tree& tree, const StoppingRule& tau) {
  auto per_leaf = stop_nodes_per_leaf(tree, tau);
  std::vector<NodeId> stops(tau.stops().begin(), tau.stops().end());
  for (int ord = 0; ord < tree.leaf_count(); ++ord)
    if (per_leaf[static_cast<std::size_t>(ord)] == kNoNode) stops.push_back(tree.leaf_node(ord));
  return StoppingRule::unchecked(std::move(stops), false);
}

/// Running maximum of L along the path from the time-`start` ancestor.
/// Nodes before `start` carry the minus-infinity sentinel.
inline AdaptedProcess path_running_max(const Tree& tree, const AdaptedProcess& l, int start) {
  require_bound(tree, l, "path_running_max");
  if (start < 0 || start > tree.horizon()) throw ConfigError("running max start out of range");
  AdaptedProcess out(static_cast<std::size_t>(tree.node_count()), kNegInf);
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    int t = tree.time(n);
    if (t < start) continue;
    if (t == start)
      out[n] = l[n];
    else
      out[n] = std::max(out[tree.parent(n)], l[n]);
  }
  return out;
}

/// First time L reaches (>=) or strictly exceeds (>) `level` along each path.
/// With cap_at_n the rule stops at the horizon when the level is never hit,
/// otherwise the rule is extended and such paths have tau = +infinity.
inline StoppingRule first_hitting(const Tree& tree, const AdaptedProcess& l, double level, bool strict,
                                  bool cap_at_n) {
  require_bound(tree, l, "first_hitting");
  std::vector<NodeId> stops;
  std::vector<char> stopped_above(static_cast<std::size_t>(tree.node_count()), 0);
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    bool above = n == 0 ? false : stopped_above[static_cast<std::size_t>(tree.parent(n))] != 0;
    if (above) {
      stopped_above[static_cast<std::size_t>(n)] = 1;
      continue;
    }
    bool hit = strict ? (l[n] > level) : (l[n] >= level);
    if (hit || (cap_at_n && tree.is_leaf(n))) {
      stops.push_back(n);
      stopped_above[static_cast<std::size_t>(n)] = 1;
    }
  }
  return StoppingRule::unchecked(std::move(stops), !cap_at_n);
}

/// X at the path's stopping node, optionally discounted by per-time factors;
/// default_value on never-stopped paths (extended rules only).
inline TerminalVariable stopped_terminal(const Tree& tree, const AdaptedProcess& x, const StoppingRule& tau,
                                         const std::vector<double>* discount = nullptr,
                                         std::optional<double> default_value = std::nullopt) {
  require_bound(tree, x, "stopped_terminal");
  if (discount && discount->size() != static_cast<std::size_t>(tree.horizon()) + 1)
    throw ConfigError("discount factors must cover every time 0..N");
  if (default_value.has_value() && !tau.extended())
    throw ConfigError("default value requested for a non-extended rule");
  if (!default_value.has_value() && tau.extended())
    throw ConfigError("extended rule requires a default value for tau = +infinity");
  auto per_leaf = stop_nodes_per_leaf(tree, tau);
  TerminalVariable out(static_cast<std::size_t>(tree.leaf_count()));
  for (int ord = 0; ord < tree.leaf_count(); ++ord) {
    NodeId m = per_leaf[static_cast<std::size_t>(ord)];
    if (m == kNoNode) {
      out[ord] = *default_value;
    } else {
      double v = x[m];
      if (discount) v *= (*discount)[static_cast<std::size_t>(tree.time(m))];
      out[ord] = v;
    }
  }
  return out;
}

namespace detail {

inline std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t cap = kMaxEnumRules + 1;
  std::uint64_t s = a + b;
  return s > cap || s < a ? cap : s;
}

inline std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t cap = kMaxEnumRules + 1;
  if (a == 0 || b == 0) return 0;
  if (a > cap / b) return cap;
  return std::min(cap, a * b);
}

/// Rule count for subtree(n); may_stop marks whether STOP at n itself is allowed.
inline std::uint64_t count_rules_rec(const Tree& tree, NodeId n, bool may_stop,
                                     const std::vector<char>* sigma_stop, bool extended) {
  if (tree.is_leaf(n)) return extended ? 2 : 1;
  bool passed_below = may_stop || (sigma_stop && (*sigma_stop)[static_cast<std::size_t>(n)] != 0);
  std::uint64_t prod = 1;
  for (NodeId c : tree.children(n))
    prod = sat_mul(prod, count_rules_rec(tree, c, passed_below, sigma_stop, extended));
  return may_stop ? sat_add(prod, 1) : prod;
}

inline void cross_append(std::vector<std::vector<NodeId>>& acc, const std::vector<std::vector<NodeId>>& next) {
  std::vector<std::vector<NodeId>> out;
  out.reserve(acc.size() * next.size());
  for (const auto& a : acc)
    for (const auto& b : next) {
      std::vector<NodeId> merged;
      merged.reserve(a.size() + b.size());
      merged.insert(merged.end(), a.begin(), a.end());
      merged.insert(merged.end(), b.begin(), b.end());
      out.push_back(std::move(merged));
    }
  acc = std::move(out);
}

inline std::vector<std::vector<NodeId>> enum_rules_rec(const Tree& tree, NodeId n, bool may_stop,
                                                       const std::vector<char>* sigma_stop, bool extended) {
  if (tree.is_leaf(n)) {
    std::vector<std::vector<NodeId>> out{{n}};
    if (extended) out.push_back({});
    return out;
  }
  bool passed_below = may_stop || (sigma_stop && (*sigma_stop)[static_cast<std::size_t>(n)] != 0);
  std::vector<std::vector<NodeId>> out;
  if (may_stop) out.push_back({n});
  std::vector<std::vector<NodeId>> acc{{}};
  for (NodeId c : tree.children(n))
    cross_append(acc, enum_rules_rec(tree, c, passed_below, sigma_stop, extended));
  out.insert(out.end(), std::make_move_iterator(acc.begin()), std::make_move_iterator(acc.end()));
  return out;
}

}  // namespace detail

/// Number of non-extended stopping rules; obeys S(leaf) = 1,
/// S(node) = 1 + prod_c S(child). Saturates just above the enumeration guard.
inline std::uint64_t count_rules(const Tree& tree, const StoppingRule* after = nullptr) {
  if (!after) return detail::count_rules_rec(tree, 0, true, nullptr, false);
  std::vector<char> sigma(static_cast<std::size_t>(tree.node_count()), 0);
  for (NodeId s : after->stops()) sigma[static_cast<std::size_t>(s)] = 1;
  return detail::count_rules_rec(tree, 0, false, &sigma, false);
}

/// All non-extended stopping rules; with `after` = sigma, only rules with
/// tau > sigma on every path where sigma < N (and tau = N where sigma = N).
inline std::vector<StoppingRule> enumerate_rules(const Tree& tree, const StoppingRule* after = nullptr) {
  if (tree.leaf_count() > kMaxEnumLeaves)
    throw GuardError("enumeration guard: leaf count exceeds 2^12");
  if (after && after->extended()) throw ConfigError("enumerate_rules: sigma must be non-extended");
  if (count_rules(tree, after) > kMaxEnumRules)
    throw GuardError("enumeration guard: rule count exceeds 10^7");
  std::vector<std::vector<NodeId>> sets;
  if (!after) {
    sets = detail::enum_rules_rec(tree, 0, true, nullptr, false);
  } else {
    std::vector<char> sigma(static_cast<std::size_t>(tree.node_count()), 0);
    for (NodeId s : after->stops()) sigma[static_cast<std::size_t>(s)] = 1;
    sets = detail::enum_rules_rec(tree, 0, false, &sigma, false);
  }
  std::vector<StoppingRule> out;
  out.reserve(sets.size());
  for (auto& s : sets) out.push_back(StoppingRule::unchecked(std::move(s), false));
  return out;
}

/// All rules valued in {0..N, +infinity}: leaves may also choose "never".
inline std::vector<StoppingRule> enumerate_extended_rules(const Tree& tree) {
  if (tree.leaf_count() > kMaxEnumLeaves)
    throw GuardError("enumeration guard: leaf count exceeds 2^12");
  if (detail::count_rules_rec(tree, 0, true, nullptr, true) > kMaxEnumRules)
    throw GuardError("enumeration guard: rule count exceeds 10^7");
  auto sets = detail::enum_rules_rec(tree, 0, true, nullptr, true);
  std::vector<StoppingRule> out;
  out.reserve(sets.size());
  for (auto& s : sets) out.push_back(StoppingRule::unchecked(std::move(s), true));
  return out;
}

/// Stop sets covering subtree(root_node) with every stop strictly below it;
/// exactly the restrictions to that subtree of rules in T_sigma when sigma
/// stops at root_node.
inline std::vector<std::vector<NodeId>> enumerate_stop_sets_after(const Tree& tree, NodeId root_node) {
  auto [lo, hi] = tree.leaf_range(root_node);
  if (hi - lo > kMaxEnumLeaves) throw GuardError("enumeration guard: leaf count exceeds 2^12");
  std::uint64_t count = 1;
  for (NodeId c : tree.children(root_node))
    count = detail::sat_mul(count, detail::count_rules_rec(tree, c, true, nullptr, false));
  if (count > kMaxEnumRules) throw GuardError("enumeration guard: rule count exceeds 10^7");
  std::vector<std::vector<NodeId>> acc{{}};
  for (NodeId c : tree.children(root_node))
    detail::cross_append(acc, detail::enum_rules_rec(tree, c, true, nullptr, false));
  return acc;
}

}  // namespace nlrepr
