#pragma once

// Optimal stopping by level crossing: solve the terminal-variant
// representation with f = identity, stop when L reaches / exceeds zero.
// Snell envelope and exhaustive enumeration serve as oracles.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nlrepr/common.hpp"
#include "nlrepr/expectation.hpp"
#include "nlrepr/representation.hpp"
#include "nlrepr/tree.hpp"

namespace nlrepr {

struct StoppingSolution {
  AdaptedProcess l;  // terminal-variant representation of X with f(u, l) = l
  StoppingRule tau_lower;
  StoppingRule tau_upper;
  double value = 0.0;  // sup_tau E_0[X_tau]
};

inline void require_tower(const CertifiedOperator& op, const char* what) {
  if (!op.tower()) throw ConfigError(std::string(what) + " needs a tower (time-consistent) operator");
}

/// E_0[X_tau] with X_tau read off as a leaf variable.
inline double expected_stopped(const CertifiedOperator& op, const AdaptedProcess& x,
                               const StoppingRule& tau) {
  return op.expect0(stopped_terminal(op.tree(), x, tau));
}

/// Level-crossing solution: tau_lower / tau_upper are the passage times of L
/// at level zero (non-strict / strict), both optimal.
inline StoppingSolution solve_stopping(const CertifiedOperator& op, const AdaptedProcess& x,
                                       const Tolerances& tol = {}, int threads = 1) {
  require_tower(op, "solve_stopping");
  auto problem = make_problem(op, x, FSpec::identity(), RepresentationVariant::Terminal);
  auto solved = solve(problem, tol, threads);
  StoppingRule tau_lower = first_hitting(op.tree(), solved.l, 0.0, false, true);
  StoppingRule tau_upper = first_hitting(op.tree(), solved.l, 0.0, true, true);
  double value = expected_stopped(op, x, tau_upper);
  return StoppingSolution{std::move(solved.l), std::move(tau_lower), std::move(tau_upper), value};
}

struct SnellResult {
  AdaptedProcess u;
  StoppingRule tau_earliest;
};

/// Classical envelope recursion U_t = max(X_t, E_t[U_{t+1}]); the earliest
/// optimal rule stops at the first U = X.
inline SnellResult snell(const CertifiedOperator& op, const AdaptedProcess& x) {
  require_tower(op, "snell");
  const Tree& tree = op.tree();
  require_bound(tree, x, "snell");
  AdaptedProcess u(static_cast<std::size_t>(tree.node_count()));
  std::vector<double> kid;
  for (NodeId n = tree.node_count() - 1; n >= 0; --n) {
    if (tree.is_leaf(n)) {
      u[n] = x[n];
      continue;
    }
    auto ch = tree.children(n);
    kid.resize(ch.size());
    for (std::size_t i = 0; i < ch.size(); ++i) kid[i] = u[ch[i]];
    double cont = op.one_step(n, {kid.data(), kid.size()});
    u[n] = std::max(x[n], cont);
  }
  // U_t == X_t is exact where the max picked X_t.
  std::vector<NodeId> stops;
  std::vector<char> stopped_above(static_cast<std::size_t>(tree.node_count()), 0);
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    bool above = n == 0 ? false : stopped_above[static_cast<std::size_t>(tree.parent(n))] != 0;
    if (above) {
      stopped_above[static_cast<std::size_t>(n)] = 1;
      continue;
    }
    if (u[n] == x[n]) {
      stops.push_back(n);
      stopped_above[static_cast<std::size_t>(n)] = 1;
    }
  }
  return SnellResult{std::move(u), StoppingRule::unchecked(std::move(stops), false)};
}

struct CriterionReport {
  std::vector<char> leaf_pass;  // per leaf ordinal
  bool all = true;
};

/// Pathwise check of the optimality criterion: tau_lower <= tau <= tau_upper
/// and, where tau < N, the running max of L up to tau equals L at tau.
inline CriterionReport check_criterion(const Tree& tree, const AdaptedProcess& l,
                                       const StoppingRule& tau) {
  require_bound(tree, l, "check_criterion");
  if (tau.extended()) throw ConfigError("check_criterion expects a non-extended rule");
  StoppingRule tau_lower = first_hitting(tree, l, 0.0, false, true);
  StoppingRule tau_upper = first_hitting(tree, l, 0.0, true, true);
  auto t_lo = stop_times_per_leaf(tree, tau_lower);
  auto t_hi = stop_times_per_leaf(tree, tau_upper);
  auto t_star = stop_times_per_leaf(tree, tau);
  auto node_star = stop_nodes_per_leaf(tree, tau);

  CriterionReport report;
  report.leaf_pass.assign(static_cast<std::size_t>(tree.leaf_count()), 1);
  for (int ord = 0; ord < tree.leaf_count(); ++ord) {
    bool ok = t_lo[static_cast<std::size_t>(ord)] <= t_star[static_cast<std::size_t>(ord)] &&
              t_star[static_cast<std::size_t>(ord)] <= t_hi[static_cast<std::size_t>(ord)];
    if (ok && t_star[static_cast<std::size_t>(ord)] < tree.horizon()) {
      NodeId stop = node_star[static_cast<std::size_t>(ord)];
      double running = kNegInf;
      for (NodeId a = stop; a != kNoNode; a = tree.parent(a)) running = std::max(running, l[a]);
      ok = running == l[stop];
    }
    if (!ok) {
      report.leaf_pass[static_cast<std::size_t>(ord)] = 0;
      report.all = false;
    }
  }
  return report;
}

struct BruteForceResult {
  double value = 0.0;
  std::vector<StoppingRule> argmax;  // every rule within ties of the max
  std::uint64_t rules = 0;
};

/// Max of E_0[X_tau] over every enumerated stopping rule.
inline BruteForceResult brute_force_value(const CertifiedOperator& op, const AdaptedProcess& x,
                                          int threads = 1) {
  const Tree& tree = op.tree();
  require_bound(tree, x, "brute_force_value");
  auto rules = enumerate_rules(tree);
  std::vector<double> scores(rules.size());
  parallel_for(rules.size(), threads, [&](std::size_t i) {
    scores[i] = expected_stopped(op, x, rules[i]);
  });
  BruteForceResult out;
  out.rules = rules.size();
  double best = scores[0];
  for (double s : scores) best = std::max(best, s);
  out.value = best;
  const double tie = 1e-12 * (1.0 + std::abs(best));
  for (std::size_t i = 0; i < rules.size(); ++i)
    if (scores[i] >= best - tie) out.argmax.push_back(rules[i]);
  return out;
}

}  // namespace nlrepr
