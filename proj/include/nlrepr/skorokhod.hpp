#pragma once

// Obstacle problem of Skorokhod type: find (Y, eta) with eta nondecreasing,
//   Y_t = E_t[ sum_{u=t}^{N-1} f(u, eta_u) + X_N ],
// Y on the correct side of the obstacle X, and Y touching X at every point
// of increase of eta (time 0 counts as one, eta_{-1} = -infinity). The
// solution takes eta as the running maximum of the representation solution L.

#include <string>
#include <utility>
#include <vector>

#include "nlrepr/common.hpp"
#include "nlrepr/expectation.hpp"
#include "nlrepr/representation.hpp"
#include "nlrepr/stopping.hpp"
#include "nlrepr/tree.hpp"

namespace nlrepr {

enum class Orientation { Dominates, DominatedBy };

inline constexpr double kIncreaseThreshold = 1e-12;

struct ObstacleSolution {
  AdaptedProcess l;    // representation solution, times 0..N-1
  AdaptedProcess eta;  // running max of l from time 0
  AdaptedProcess y;    // controlled process, times 0..N
  Orientation orientation = Orientation::Dominates;
  FSpec f = FSpec::identity();
  CertifiedOperator op;
};

namespace detail {

/// Y_t = E_t[ sum_{u=t}^{N-1} f(u, eta_u) + X_N ] at every node.
inline AdaptedProcess controlled_process(const CertifiedOperator& op, const AdaptedProcess& x,
                                         const FSpec& f, const AdaptedProcess& eta, int threads = 1) {
  const Tree& tree = op.tree();
  const int hor = tree.horizon();
  // Per-node prefix sums of f(u, eta_u) from the root; the terminal sum for
  // node n and a leaf below it is prefix[leaf] - prefix[parent(n)].
  std::vector<double> prefix(static_cast<std::size_t>(tree.node_count()), 0.0);
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    double own = tree.time(n) <= hor - 1 ? f.eval(tree.time(n), eta[n]) : 0.0;
    prefix[static_cast<std::size_t>(n)] = (n == 0 ? 0.0 : prefix[static_cast<std::size_t>(tree.parent(n))]) + own;
  }
  AdaptedProcess y(static_cast<std::size_t>(tree.node_count()));
  auto leaves = tree.leaves();
  std::vector<double> leaf_prefix(leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i)
    leaf_prefix[i] = prefix[static_cast<std::size_t>(leaves[i])];
  parallel_for(static_cast<std::size_t>(tree.node_count()), threads, [&](std::size_t i) {
    NodeId n = static_cast<NodeId>(i);
    if (tree.is_leaf(n)) {
      y[n] = x[n];
      return;
    }
    double base = n == 0 ? 0.0 : prefix[static_cast<std::size_t>(tree.parent(n))];
    auto [lo, hi] = tree.leaf_range(n);
    TerminalVariable term(static_cast<std::size_t>(tree.leaf_count()));
    for (int ord = lo; ord < hi; ++ord)
      term[ord] = leaf_prefix[static_cast<std::size_t>(ord)] - base + x[tree.leaf_node(ord)];
    std::vector<double> scratch;
    y[n] = op.condexp_at(n, term, scratch);
  });
  return y;
}

inline bool is_increase_point(const Tree& tree, const AdaptedProcess& eta, NodeId n) {
  if (tree.time(n) == 0) return true;  // eta_{-1} = -infinity
  return eta[n] > eta[tree.parent(n)] + kIncreaseThreshold;
}

}  // namespace detail

/// Solve the obstacle problem. f must be the identity (Y dominates X) or a
/// decreasing family (Y dominated by X); the pipeline is the same with the
/// monotone mode flipped.
inline ObstacleSolution solve_obstacle(const CertifiedOperator& op, const AdaptedProcess& x,
                                       const FSpec& f, const Tolerances& tol = {}, int threads = 1) {
  require_tower(op, "solve_obstacle");
  const bool identity = f.family() == FFamily::Identity;
  if (!identity && f.direction() != MonotoneDirection::Decreasing)
    throw ConfigError("solve_obstacle takes the identity f or a decreasing family");
  auto problem = make_problem(op, x, f, RepresentationVariant::Terminal);
  auto solved = solve(problem, tol, threads);
  AdaptedProcess eta = path_running_max(op.tree(), solved.l, 0);
  AdaptedProcess y = detail::controlled_process(op, x, f, eta, threads);
  return ObstacleSolution{std::move(solved.l), std::move(eta), std::move(y),
                          identity ? Orientation::Dominates : Orientation::DominatedBy, f, op};
}

struct ObstacleReport {
  bool eta_is_running_max = true;
  bool domination_ok = true;
  double worst_domination = 0.0;
  std::int64_t worst_domination_node = -1;
  bool terminal_ok = true;
  double worst_terminal = 0.0;
  bool flat_off_ok = true;
  double worst_flat_off = 0.0;
  std::int64_t worst_flat_off_node = -1;
  bool representation_ok = true;  // Y equals its defining expectation
  double worst_representation = 0.0;
  std::int64_t worst_representation_node = -1;
  bool all_ok() const {
    return eta_is_running_max && domination_ok && terminal_ok && flat_off_ok && representation_ok;
  }
};

/// Re-derives every defining property of the solution against the obstacle.
inline ObstacleReport verify_obstacle(const ObstacleSolution& sol, const AdaptedProcess& x,
                                      double tol = 1e-9) {
  const Tree& tree = sol.op.tree();
  require_bound(tree, x, "verify_obstacle");
  ObstacleReport report;

  AdaptedProcess recomputed = path_running_max(tree, sol.l, 0);
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    if (tree.time(n) > tree.horizon() - 1) continue;
    if (recomputed[n] != sol.eta[n]) report.eta_is_running_max = false;
  }

  const double sign = sol.orientation == Orientation::Dominates ? 1.0 : -1.0;
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    double slack = sign * (sol.y[n] - x[n]);
    if (slack < -report.worst_domination) {
      report.worst_domination = -slack;
      report.worst_domination_node = tree.user_id(n);
    }
    if (tree.is_leaf(n))
      report.worst_terminal = std::max(report.worst_terminal, std::abs(sol.y[n] - x[n]));
    bool increase = tree.time(n) <= tree.horizon() - 1 && detail::is_increase_point(tree, sol.eta, n);
    if (increase) {
      double gap = std::abs(sol.y[n] - x[n]);
      if (gap > report.worst_flat_off) {
        report.worst_flat_off = gap;
        report.worst_flat_off_node = tree.user_id(n);
      }
    }
  }
  report.domination_ok = report.worst_domination <= tol;
  report.terminal_ok = report.worst_terminal <= tol;
  report.flat_off_ok = report.worst_flat_off <= tol;

  AdaptedProcess y_check = detail::controlled_process(sol.op, x, sol.f, sol.eta);
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    double gap = std::abs(y_check[n] - sol.y[n]);
    if (gap > report.worst_representation) {
      report.worst_representation = gap;
      report.worst_representation_node = tree.user_id(n);
    }
  }
  report.representation_ok = report.worst_representation <= tol;
  return report;
}

enum class FalsifyStatus { Consistent, Falsified, Inconclusive };

struct FalsifyVerdict {
  FalsifyStatus status = FalsifyStatus::Inconclusive;
  std::string failed_property;  // "domination" or "flat_off"
  std::int64_t witness_node = -1;
  double violation = 0.0;
  double epsilon = 0.0;
  std::vector<std::int64_t> sigma_eps_stops;  // proof construction, capped at N
  std::vector<std::int64_t> tau_eps_stops;
  std::string detail;
};

/// Uniqueness probe for the identity obstacle problem: given a nondecreasing
/// candidate zeta, build its controlled process and test the defining
/// properties. Any zeta away from eta must lose domination or flat-off; the
/// verdict carries the proof's (sigma_eps, tau_eps) construction as witness.
inline FalsifyVerdict falsify_alternative(const CertifiedOperator& op, const AdaptedProcess& x,
                                          const AdaptedProcess& zeta, const Tolerances& tol = {}) {
  require_tower(op, "falsify_alternative");
  const Tree& tree = op.tree();
  require_bound(tree, x, "falsify_alternative");
  require_bound(tree, zeta, "falsify_alternative");
  const int hor = tree.horizon();
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    if (tree.time(n) > hor - 1 || tree.time(n) == 0) continue;
    if (zeta[n] < zeta[tree.parent(n)] - 1e-15)
      throw ValidationError("zeta must be pathwise nondecreasing");
  }

  FSpec f = FSpec::identity();
  auto solved = solve(make_problem(op, x, f, RepresentationVariant::Terminal), tol);
  AdaptedProcess eta = path_running_max(tree, solved.l, 0);

  double diff = 0.0;
  double excess_eta = 0.0;  // max of eta - zeta
  double excess_zeta = 0.0;
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    if (tree.time(n) > hor - 1) continue;
    diff = std::max(diff, std::abs(eta[n] - zeta[n]));
    excess_eta = std::max(excess_eta, eta[n] - zeta[n]);
    excess_zeta = std::max(excess_zeta, zeta[n] - eta[n]);
  }
  FalsifyVerdict verdict;
  if (diff <= 1e-6) {
    verdict.status = FalsifyStatus::Consistent;
    verdict.detail = "zeta matches eta within 1e-6";
    return verdict;
  }

  // Proof construction: with eta above zeta use sigma_eps on eta's side,
  // otherwise swap the roles.
  const bool eta_above = excess_eta >= excess_zeta;
  const AdaptedProcess& hi_proc = eta_above ? eta : zeta;
  const AdaptedProcess& lo_proc = eta_above ? zeta : eta;
  verdict.epsilon = 0.5 * (eta_above ? excess_eta : excess_zeta);
  {
    std::vector<NodeId> sigma_stops, tau_stops;
    std::vector<char> state(static_cast<std::size_t>(tree.node_count()), 0);  // 0 scan, 1 after sigma, 2 done
    for (NodeId n = 0; n < tree.node_count(); ++n) {
      char s = n == 0 ? 0 : state[static_cast<std::size_t>(tree.parent(n))];
      if (s == 0) {
        bool hit = tree.time(n) <= hor - 1 && hi_proc[n] > lo_proc[n] + verdict.epsilon;
        if (hit || tree.is_leaf(n)) {
          sigma_stops.push_back(n);
          s = hit ? 1 : 2;
          if (!hit) tau_stops.push_back(n);
        }
      } else if (s == 1) {
        bool hit = lo_proc[n] >= hi_proc[n];
        if ((hit && tree.time(n) <= hor - 1) || tree.is_leaf(n)) {
          tau_stops.push_back(n);
          s = 2;
        }
      }
      state[static_cast<std::size_t>(n)] = s;
    }
    for (NodeId s : sigma_stops) verdict.sigma_eps_stops.push_back(tree.user_id(s));
    for (NodeId s : tau_stops) verdict.tau_eps_stops.push_back(tree.user_id(s));
  }

  AdaptedProcess z = detail::controlled_process(op, x, f, zeta);
  double worst_dom = 0.0, worst_flat = 0.0;
  std::int64_t dom_node = -1, flat_node = -1;
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    double slack = z[n] - x[n];
    if (-slack > worst_dom) {
      worst_dom = -slack;
      dom_node = tree.user_id(n);
    }
    bool increase = tree.time(n) <= hor - 1 && detail::is_increase_point(tree, zeta, n);
    if (increase && std::abs(slack) > worst_flat) {
      worst_flat = std::abs(slack);
      flat_node = tree.user_id(n);
    }
  }
  if (worst_dom > tol.residual) {
    verdict.status = FalsifyStatus::Falsified;
    verdict.failed_property = "domination";
    verdict.witness_node = dom_node;
    verdict.violation = worst_dom;
    verdict.detail = "the zeta-controlled process falls below the obstacle";
    return verdict;
  }
  if (worst_flat > tol.residual) {
    verdict.status = FalsifyStatus::Falsified;
    verdict.failed_property = "flat_off";
    verdict.witness_node = flat_node;
    verdict.violation = worst_flat;
    verdict.detail = "zeta increases without the controlled process touching the obstacle";
    return verdict;
  }
  verdict.status = FalsifyStatus::Inconclusive;
  verdict.detail = "no defining property failed beyond tolerance";
  return verdict;
}

}  // namespace nlrepr
