#pragma once

// The stochastic representation problem: find adapted L with
//   X_t = E_t[ sum_{u=t}^{N} f(u, max_{t<=v<=u} L_v) ]          (plain)
//   X_t = E_t[ sum_{u=t}^{N-1} f(u, max_{t<=v<=u} L_v) + X_N ]  (terminal)
// solved by backward induction. At each node the unknown L value is the root
// of Phi(xi) = E_t[ f(t,xi) + sum_{u>t} f(u, xi v future-max) ](node) - X_node,
// which is strictly monotone in xi in the direction of f, so a doubling
// bracket plus bisection is unconditionally safe (Phi has kinks at the
// future running-max levels, so no derivative-based method is used).

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlrepr/common.hpp"
#include "nlrepr/expectation.hpp"
#include "nlrepr/fspec.hpp"
#include "nlrepr/tree.hpp"

namespace nlrepr {

enum class RepresentationVariant { Plain, Terminal };

struct RepresentationProblem {
  std::shared_ptr<const Tree> tree;
  CertifiedOperator op;
  AdaptedProcess x;
  FSpec f = FSpec::identity();
  RepresentationVariant variant = RepresentationVariant::Plain;
};

inline RepresentationProblem make_problem(CertifiedOperator op, AdaptedProcess x, FSpec f,
                                          RepresentationVariant variant) {
  RepresentationProblem p{op.tree_ptr(), std::move(op), std::move(x), std::move(f), variant};
  return p;
}

inline void validate_problem(const RepresentationProblem& p) {
  if (!p.tree) throw ConfigError("representation problem has no tree");
  if (p.op.tree_ptr().get() != p.tree.get())
    throw ConfigError("operator and problem are bound to different trees");
  require_bound(*p.tree, p.x, "representation target");
  for (double v : p.x.values)
    if (!std::isfinite(v)) throw ValidationError("target process X must be finite");
  p.f.validate_horizon(p.tree->horizon());
}

struct RootStats {
  int expansions = 0;
  int iterations = 0;
  double width = 0.0;
  bool fast_path = false;
};

namespace detail {

/// Bracket by doubling from the guess (start width 1), then bisect until
/// |Phi| <= tol.root and the bracket is within tol.bracket_rel*(1+|xi|).
/// A guess already solving Phi to two orders below tol.root is accepted as
/// is, which keeps closed-form roots (constants, exact inverses) exact.
template <class Phi>
double find_monotone_root(Phi&& phi, double guess, bool increasing, const Tolerances& tol,
                          double fast_scale, RootStats* stats = nullptr) {
  RootStats local;
  RootStats& st = stats ? *stats : local;
  const double sgn = increasing ? 1.0 : -1.0;
  double p0 = phi(guess);
  if (std::abs(p0) <= 0.01 * tol.root * fast_scale) {
    st.fast_path = true;
    return guess;
  }
  double lo, hi, plo, phi_hi;
  if (sgn * p0 < 0.0) {
    lo = guess;
    plo = p0;
    double w = 1.0;
    hi = guess + w;
    phi_hi = phi(hi);
    while (sgn * phi_hi < 0.0) {
      lo = hi;
      plo = phi_hi;
      w *= 2.0;
      hi = guess + w;
      ++st.expansions;
      if (std::abs(hi) > 1e300)
        throw SolveError("root bracket expanded beyond 1e300; f is not surjective in floating point");
      phi_hi = phi(hi);
    }
  } else {
    hi = guess;
    phi_hi = p0;
    double w = 1.0;
    lo = guess - w;
    plo = phi(lo);
    while (sgn * plo > 0.0) {
      hi = lo;
      phi_hi = plo;
      w *= 2.0;
      lo = guess - w;
      ++st.expansions;
      if (std::abs(lo) > 1e300)
        throw SolveError("root bracket expanded beyond 1e300; f is not surjective in floating point");
      plo = phi(lo);
    }
  }
  if (plo == 0.0) return lo;
  if (phi_hi == 0.0) return hi;
  for (int it = 0; it < 4000; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) {
      st.width = hi - lo;
      return mid;  // bracket at ulp resolution
    }
    double pm = phi(mid);
    ++st.iterations;
    if (pm == 0.0 ||
        (std::abs(pm) <= tol.root && (hi - lo) <= tol.bracket_rel * (1.0 + std::abs(mid)))) {
      st.width = hi - lo;
      return mid;
    }
    if (sgn * pm < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  throw SolveError("bisection failed to meet the root tolerances");
}

/// Future running maxima below `node`: for each leaf under it and each
/// u in (t, N], the max of L over times t+1..u along the path.
struct FutureMax {
  int leaf_lo = 0, leaf_hi = 0;
  int t = 0, span = 0;  // span = N - t entries per leaf
  std::vector<double> m;
  double at(int ordinal, int u) const {
    return m[static_cast<std::size_t>(ordinal - leaf_lo) * span + (u - t - 1)];
  }
};

inline FutureMax future_max_below(const Tree& tree, const AdaptedProcess& l, NodeId node) {
  FutureMax fm;
  fm.t = tree.time(node);
  fm.span = tree.horizon() - fm.t;
  auto [lo, hi] = tree.leaf_range(node);
  fm.leaf_lo = lo;
  fm.leaf_hi = hi;
  fm.m.assign(static_cast<std::size_t>(hi - lo) * fm.span, kNegInf);
  if (fm.span == 0) return fm;
  // Walk the subtree; row entries fill as the path deepens and are shared
  // by all leaves under the current node via the per-level running value.
  std::vector<double> run(static_cast<std::size_t>(fm.span), kNegInf);
  struct Frame {
    NodeId node;
    std::size_t next_child;
  };
  std::vector<Frame> stack{{node, 0}};
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_child >= tree.children(f.node).size()) {
      if (tree.is_leaf(f.node)) {
        int ord = tree.leaf_ordinal(f.node);
        for (int k = 0; k < fm.span; ++k)
          fm.m[static_cast<std::size_t>(ord - lo) * fm.span + k] = run[static_cast<std::size_t>(k)];
      }
      stack.pop_back();
      continue;
    }
    NodeId c = tree.children(f.node)[f.next_child++];
    int depth = tree.time(c) - fm.t - 1;  // index into run
    double prev = depth == 0 ? kNegInf : run[static_cast<std::size_t>(depth - 1)];
    run[static_cast<std::size_t>(depth)] = std::max(prev, l[c]);
    // Deeper entries refresh as the walk descends; stale tail values beyond
    // the current depth are never read because leaves sit at full depth.
    stack.push_back({c, 0});
  }
  return fm;
}

}  // namespace detail

struct SolveNodeStat {
  std::int64_t node = 0;
  int expansions = 0;
  int iterations = 0;
  double width = 0.0;
};

struct SolveStats {
  long long phi_evaluations = 0;
  std::vector<SolveNodeStat> nodes;
};

struct SolveResult {
  AdaptedProcess l;
  SolveStats stats;
};

/// Backward-induction solve. Within a time level the per-node root-finds are
/// independent; `threads` only changes the schedule, never the values.
inline SolveResult solve(const RepresentationProblem& p, const Tolerances& tol = {}, int threads = 1) {
  validate_problem(p);
  const Tree& tree = *p.tree;
  const int hor = tree.horizon();
  const bool plain = p.variant == RepresentationVariant::Plain;
  const bool increasing = p.f.direction() == MonotoneDirection::Increasing;
  const int last_sum_time = plain ? hor : hor - 1;

  SolveResult result;
  result.l = AdaptedProcess(static_cast<std::size_t>(tree.node_count()), kNegInf);
  AdaptedProcess& l = result.l;
  std::vector<SolveNodeStat> stats(static_cast<std::size_t>(tree.node_count()));
  std::vector<long long> evals(static_cast<std::size_t>(tree.node_count()), 0);

  if (plain) {
    auto leaves = tree.leaves();
    parallel_for(leaves.size(), threads, [&](std::size_t i) {
      NodeId leaf = leaves[i];
      long long count = 0;
      auto phi = [&](double xi) {
        ++count;
        return p.f.eval(hor, xi) - p.x[leaf];
      };
      RootStats rs;
      l[leaf] = detail::find_monotone_root(phi, p.f.inverse(hor, p.x[leaf]), increasing, tol,
                                           1.0 + std::abs(p.x[leaf]), &rs);
      stats[static_cast<std::size_t>(leaf)] = {tree.user_id(leaf), rs.expansions, rs.iterations, rs.width};
      evals[static_cast<std::size_t>(leaf)] = count;
    });
  }

  for (int t = hor - 1; t >= 0; --t) {
    auto level = tree.nodes_at_time(t);
    parallel_for(level.size(), threads, [&](std::size_t i) {
      NodeId n = level[i];
      auto fm = detail::future_max_below(tree, l, n);
      auto [lo, hi] = tree.leaf_range(n);
      TerminalVariable term(static_cast<std::size_t>(tree.leaf_count()));
      std::vector<double> scratch;
      long long count = 0;
      auto phi = [&](double xi) {
        ++count;
        const double f_now = p.f.eval(t, xi);
        for (int ord = lo; ord < hi; ++ord) {
          double s = f_now;
          for (int u = t + 1; u <= last_sum_time; ++u) s += p.f.eval(u, std::max(xi, fm.at(ord, u)));
          if (!plain) s += p.x[tree.leaf_node(ord)];
          term[ord] = s;
        }
        return p.op.condexp_at(n, term, scratch) - p.x[n];
      };
      double guess = 0.0;
      if (!tree.children(n).empty()) {
        double child = l[tree.children(n)[0]];
        if (std::isfinite(child)) guess = child;
      }
      RootStats rs;
      l[n] = detail::find_monotone_root(phi, guess, increasing, tol, 1.0 + std::abs(p.x[n]), &rs);
      stats[static_cast<std::size_t>(n)] = {tree.user_id(n), rs.expansions, rs.iterations, rs.width};
      evals[static_cast<std::size_t>(n)] = count;
    });
  }

  for (NodeId n = 0; n < tree.node_count(); ++n) {
    if (plain || tree.time(n) < hor) result.stats.nodes.push_back(stats[static_cast<std::size_t>(n)]);
    result.stats.phi_evaluations += evals[static_cast<std::size_t>(n)];
  }
  return result;
}

namespace detail {

/// |X_n - E_t[sum f(u, running max of L from t)]| at one node; running max
/// includes L at the node itself.
inline double node_defect(const RepresentationProblem& p, const AdaptedProcess& l, NodeId n,
                          TerminalVariable& term, std::vector<double>& scratch) {
  const Tree& tree = *p.tree;
  const int hor = tree.horizon();
  const bool plain = p.variant == RepresentationVariant::Plain;
  const int last_sum_time = plain ? hor : hor - 1;
  const int t = tree.time(n);
  if (!std::isfinite(l[n]))
    throw ValidationError("L must be finite where the representation sums run");
  auto [lo, hi] = tree.leaf_range(n);
  auto fm = future_max_below(tree, l, n);
  for (int ord = lo; ord < hi; ++ord) {
    double s = p.f.eval(t, l[n]);
    for (int u = t + 1; u <= last_sum_time; ++u) s += p.f.eval(u, std::max(l[n], fm.at(ord, u)));
    if (!plain) s += p.x[tree.leaf_node(ord)];
    term[ord] = s;
  }
  return std::abs(p.op.condexp_at(n, term, scratch) - p.x[n]);
}

}  // namespace detail

/// Defining-equation defect at a single node.
inline double residual_at(const RepresentationProblem& p, const AdaptedProcess& l, NodeId n) {
  validate_problem(p);
  require_bound(*p.tree, l, "representation residual");
  TerminalVariable term(static_cast<std::size_t>(p.tree->leaf_count()));
  std::vector<double> scratch;
  return detail::node_defect(p, l, n, term, scratch);
}

/// Max over nodes of |X_n - E_t[sum f(u, running max of L from t)]|, each
/// expectation evaluated from scratch per node. This path shares nothing
/// with the solver's Phi construction except the operator itself.
inline double residual(const RepresentationProblem& p, const AdaptedProcess& l, int threads = 1) {
  validate_problem(p);
  const Tree& tree = *p.tree;
  require_bound(tree, l, "representation residual");
  const int t_max = p.variant == RepresentationVariant::Plain ? tree.horizon() : tree.horizon() - 1;

  std::vector<double> defect(static_cast<std::size_t>(tree.node_count()), 0.0);
  parallel_for(static_cast<std::size_t>(tree.node_count()), threads, [&](std::size_t i) {
    NodeId n = static_cast<NodeId>(i);
    if (tree.time(n) > t_max) return;
    TerminalVariable term(static_cast<std::size_t>(tree.leaf_count()));
    std::vector<double> scratch;
    defect[i] = detail::node_defect(p, l, n, term, scratch);
  });
  double worst = 0.0;
  for (double d : defect) worst = std::max(worst, d);
  return worst;
}

/// Phi sampled at `points` unit-spaced values centered on `center`, with the
/// future of L taken from the solved process. Monotonicity probe.
inline std::vector<double> representation_phi_probe(const RepresentationProblem& p,
                                                    const AdaptedProcess& l, NodeId node, int points,
                                                    double center) {
  validate_problem(p);
  const Tree& tree = *p.tree;
  require_bound(tree, l, "phi probe");
  const int hor = tree.horizon();
  const bool plain = p.variant == RepresentationVariant::Plain;
  const int last_sum_time = plain ? hor : hor - 1;
  const int t = tree.time(node);
  if (!plain && t > hor - 1) throw ConfigError("phi probe outside the terminal-variant range");
  auto fm = detail::future_max_below(tree, l, node);
  auto [lo, hi] = tree.leaf_range(node);
  TerminalVariable term(static_cast<std::size_t>(tree.leaf_count()));
  std::vector<double> scratch;
  std::vector<double> out(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    double xi = center + (i - points / 2);
    for (int ord = lo; ord < hi; ++ord) {
      double s = p.f.eval(t, xi);
      for (int u = t + 1; u <= last_sum_time; ++u) s += p.f.eval(u, std::max(xi, fm.at(ord, u)));
      if (!plain) s += p.x[tree.leaf_node(ord)];
      term[ord] = s;
    }
    out[static_cast<std::size_t>(i)] = p.op.condexp_at(node, term, scratch) - p.x[node];
  }
  return out;
}

namespace detail {

/// Root of X_sigma - E_sigma[ sum_{u=sigma}^{tau-1} f(u, l) + X_tau ] at a
/// single node; stop_nodes maps leaf ordinals under the node to their tau.
inline double solve_l_core(const RepresentationProblem& p, NodeId node,
                           std::span<const NodeId> stop_nodes, const Tolerances& tol) {
  const Tree& tree = *p.tree;
  const int ts = tree.time(node);
  auto [lo, hi] = tree.leaf_range(node);
  int max_steps = 0;
  for (int ord = lo; ord < hi; ++ord) {
    NodeId m = stop_nodes[static_cast<std::size_t>(ord - lo)];
    if (m == kNoNode) throw ConfigError("tau must stop on every path through sigma_node");
    int tstop = tree.time(m);
    if (tstop <= ts)
      throw ConfigError("tau is not in T_sigma relative to sigma_node: tau <= sigma on some path");
    max_steps = std::max(max_steps, tstop - ts);
  }
  TerminalVariable term(static_cast<std::size_t>(tree.leaf_count()));
  std::vector<double> scratch;
  std::vector<double> prefix(static_cast<std::size_t>(max_steps) + 1, 0.0);
  const bool increasing = p.f.direction() == MonotoneDirection::Increasing;
  auto phi = [&](double v) {
    for (int c = 1; c <= max_steps; ++c)
      prefix[static_cast<std::size_t>(c)] = prefix[static_cast<std::size_t>(c - 1)] + p.f.eval(ts + c - 1, v);
    for (int ord = lo; ord < hi; ++ord) {
      NodeId m = stop_nodes[static_cast<std::size_t>(ord - lo)];
      term[ord] = prefix[static_cast<std::size_t>(tree.time(m) - ts)] + p.x[m];
    }
    return p.op.condexp_at(node, term, scratch) - p.x[node];
  };
  return find_monotone_root(phi, 0.0, increasing, tol, 1.0 + std::abs(p.x[node]));
}

/// First stop at-or-below each leaf of subtree(node), stops strictly below node.
inline std::vector<NodeId> local_stop_nodes(const Tree& tree, NodeId node,
                                            std::span<const NodeId> stop_set,
                                            std::vector<NodeId>& carry) {
  auto [lo, hi] = tree.leaf_range(node);
  const NodeId end = tree.subtree_end(node);
  carry.assign(static_cast<std::size_t>(end - node), kNoNode);
  std::vector<char> is_stop_local(static_cast<std::size_t>(end - node), 0);
  for (NodeId s : stop_set) is_stop_local[static_cast<std::size_t>(s - node)] = 1;
  std::vector<NodeId> out(static_cast<std::size_t>(hi - lo), kNoNode);
  for (NodeId m = node + 1; m < end; ++m) {
    NodeId inherited = tree.parent(m) == node ? kNoNode : carry[static_cast<std::size_t>(tree.parent(m) - node)];
    carry[static_cast<std::size_t>(m - node)] =
        inherited != kNoNode ? inherited : (is_stop_local[static_cast<std::size_t>(m - node)] ? m : kNoNode);
    if (tree.is_leaf(m))
      out[static_cast<std::size_t>(tree.leaf_ordinal(m) - lo)] = carry[static_cast<std::size_t>(m - node)];
  }
  return out;
}

}  // namespace detail

/// The unique F_sigma-measurable l with
/// X_sigma = E_sigma[ sum_{u=sigma}^{tau-1} f(u, l) + X_tau ] at sigma_node.
inline double solve_l(const RepresentationProblem& p, NodeId sigma_node, const StoppingRule& tau,
                      const Tolerances& tol = {}) {
  validate_problem(p);
  const Tree& tree = *p.tree;
  if (sigma_node < 0 || sigma_node >= tree.node_count()) throw ConfigError("unknown sigma node");
  if (tree.time(sigma_node) >= tree.horizon())
    throw ConfigError("sigma must take values in 0..N-1");
  if (tau.extended()) throw ConfigError("tau must be a non-extended rule");
  auto global = stop_nodes_per_leaf(tree, tau);
  auto [lo, hi] = tree.leaf_range(sigma_node);
  std::vector<NodeId> local(static_cast<std::size_t>(hi - lo));
  for (int ord = lo; ord < hi; ++ord) local[static_cast<std::size_t>(ord - lo)] = global[static_cast<std::size_t>(ord)];
  return detail::solve_l_core(p, sigma_node, {local.data(), local.size()}, tol);
}

struct SigmaNodeCharacterization {
  std::int64_t node = 0;
  double l_value = 0.0;   // L at the sigma node
  double min_l = 0.0;     // min over enumerated tau of l_{sigma,tau}
  double gap = 0.0;       // |min_l - L|
  double max_lower_violation = 0.0;  // max over tau of L - l_{sigma,tau}
  std::vector<std::int64_t> argmin_stops;
  std::uint64_t rules = 0;
};

struct CharacterizationReport {
  std::vector<SigmaNodeCharacterization> entries;
  double max_gap = 0.0;
  double max_lower_violation = 0.0;
};

/// Enumerates T_sigma per sigma node, solves every l_{sigma,tau} and compares
/// the pointwise minimum against L_sigma.
inline CharacterizationReport essinf_characterization(const RepresentationProblem& p,
                                                      const AdaptedProcess& l,
                                                      const StoppingRule& sigma,
                                                      const Tolerances& tol = {}) {
  validate_problem(p);
  if (!p.op.tower()) throw ConfigError("the characterization needs the tower property");
  const Tree& tree = *p.tree;
  require_bound(tree, l, "essinf characterization");
  if (sigma.extended()) throw ConfigError("sigma must be non-extended");
  for (NodeId s : sigma.stops())
    if (tree.time(s) >= tree.horizon()) throw ConfigError("sigma must take values in 0..N-1");

  CharacterizationReport report;
  std::vector<NodeId> carry;
  for (NodeId n : sigma.stops()) {
    auto sets = enumerate_stop_sets_after(tree, n);
    SigmaNodeCharacterization entry;
    entry.node = tree.user_id(n);
    entry.l_value = l[n];
    entry.rules = sets.size();
    bool first = true;
    for (const auto& set : sets) {
      auto stop_nodes = detail::local_stop_nodes(tree, n, {set.data(), set.size()}, carry);
      double lv = detail::solve_l_core(p, n, {stop_nodes.data(), stop_nodes.size()}, tol);
      entry.max_lower_violation = std::max(entry.max_lower_violation, l[n] - lv);
      if (first || lv < entry.min_l) {
        entry.min_l = lv;
        entry.argmin_stops.clear();
        for (NodeId s : set) entry.argmin_stops.push_back(tree.user_id(s));
        first = false;
      }
    }
    entry.gap = std::abs(entry.min_l - entry.l_value);
    report.max_gap = std::max(report.max_gap, entry.gap);
    report.max_lower_violation = std::max(report.max_lower_violation, entry.max_lower_violation);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

/// tau*_t: pathwise the first s in {t+1,...,N-1} with L_s > L_t, else N.
inline StoppingRule tau_star(const Tree& tree, const AdaptedProcess& l, int t) {
  require_bound(tree, l, "tau_star");
  if (t < 0 || t > tree.horizon() - 1) throw ConfigError("tau_star time out of range");
  std::vector<NodeId> stops;
  for (NodeId anchor : tree.nodes_at_time(t)) {
    const double level = l[anchor];
    std::vector<NodeId> stack(tree.children(anchor).begin(), tree.children(anchor).end());
    while (!stack.empty()) {
      NodeId m = stack.back();
      stack.pop_back();
      if (tree.is_leaf(m)) {
        stops.push_back(m);
        continue;
      }
      if (tree.time(m) <= tree.horizon() - 1 && l[m] > level) {
        stops.push_back(m);
        continue;
      }
      for (NodeId c : tree.children(m)) stack.push_back(c);
    }
  }
  return StoppingRule::unchecked(std::move(stops), false);
}

}  // namespace nlrepr
