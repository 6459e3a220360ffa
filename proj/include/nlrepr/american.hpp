#pragma once

// Universal strike-independent exercise signal for American puts. The signal
// K solves a plain representation problem in increasing mode for M = -K:
//   -(1+r)^{-t} P_t = E_t[ sum_{u=t}^{N-1} r(1+r)^{-u-1} max_{t..u} M_v
//                          + (1+r)^{-N} max_{t..N} M_v ],
// i.e. a scaled f with c_u = r(1+r)^{-u-1} for u < N and c_N = (1+r)^{-N}.
// Level passages of K at a strike k generate the optimal exercise times.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlrepr/common.hpp"
#include "nlrepr/expectation.hpp"
#include "nlrepr/representation.hpp"
#include "nlrepr/stopping.hpp"
#include "nlrepr/tree.hpp"

namespace nlrepr {

struct MarketSpec {
  AdaptedProcess prices;
  double rate = 0.0;  // per-period risk-free rate, positive
};

inline void validate_market(const Tree& tree, const MarketSpec& market) {
  require_bound(tree, market.prices, "market prices");
  if (!(market.rate > 0.0)) throw ConfigError("risk-free rate must be positive");
  for (double p : market.prices.values)
    if (!(p > 0.0)) throw ValidationError("asset prices must be positive");
}

inline std::vector<double> discount_factors(const Tree& tree, double rate) {
  std::vector<double> d(static_cast<std::size_t>(tree.horizon()) + 1);
  for (int t = 0; t <= tree.horizon(); ++t) d[static_cast<std::size_t>(t)] = std::pow(1.0 + rate, -t);
  return d;
}

struct CrrParams {
  double s0 = 100.0;
  double up = 1.1;
  double down = 0.9;
  double rate = 0.05;
  int steps = 4;
};

/// Unfolds a recombining CRR market onto the non-recombining tree with the
/// risk-neutral up probability; child 0 is the up move.
inline std::pair<std::shared_ptr<const Tree>, MarketSpec> unfold_crr(const CrrParams& crr) {
  if (!(crr.s0 > 0.0)) throw ConfigError("spot must be positive");
  if (!(crr.down > 0.0) || !(crr.up > crr.down)) throw ConfigError("need 0 < down < up");
  if (!(crr.rate > 0.0)) throw ConfigError("risk-free rate must be positive");
  double q = (1.0 + crr.rate - crr.down) / (crr.up - crr.down);
  if (!(q > 0.0) || !(q < 1.0)) throw ConfigError("market admits arbitrage: need down < 1+r < up");
  auto tree = build_binomial(crr.steps, q, 1.0, 1.0);
  MarketSpec market;
  market.rate = crr.rate;
  market.prices = AdaptedProcess(static_cast<std::size_t>(tree->node_count()));
  market.prices[0] = crr.s0;
  for (NodeId n = 1; n < tree->node_count(); ++n) {
    // First child of each parent is the up move.
    bool up = tree->children(tree->parent(n))[0] == n;
    market.prices[n] = market.prices[tree->parent(n)] * (up ? crr.up : crr.down);
  }
  return {std::move(tree), std::move(market)};
}

inline FSpec boundary_fspec(double rate, int horizon) {
  std::vector<double> c(static_cast<std::size_t>(horizon) + 1);
  for (int u = 0; u < horizon; ++u)
    c[static_cast<std::size_t>(u)] = rate * std::pow(1.0 + rate, -u - 1);
  c[static_cast<std::size_t>(horizon)] = std::pow(1.0 + rate, -horizon);
  return FSpec::scaled(std::move(c));
}

inline RepresentationProblem boundary_problem(const CertifiedOperator& op, const MarketSpec& market) {
  const Tree& tree = op.tree();
  validate_market(tree, market);
  auto disc = discount_factors(tree, market.rate);
  AdaptedProcess x(static_cast<std::size_t>(tree.node_count()));
  for (NodeId n = 0; n < tree.node_count(); ++n)
    x[n] = -disc[static_cast<std::size_t>(tree.time(n))] * market.prices[n];
  return make_problem(op, std::move(x), boundary_fspec(market.rate, tree.horizon()),
                      RepresentationVariant::Plain);
}

/// The universal signal K; its terminal values equal the prices.
inline AdaptedProcess solve_boundary(const CertifiedOperator& op, const MarketSpec& market,
                                     const Tolerances& tol = {}, int threads = 1,
                                     SolveStats* stats = nullptr) {
  require_tower(op, "solve_boundary");
  auto problem = boundary_problem(op, market);
  auto solved = solve(problem, tol, threads);
  if (stats) *stats = std::move(solved.stats);
  AdaptedProcess k = std::move(solved.l);
  for (double& v : k.values) v = -v;
  return k;
}

/// Max defect of the defining identity over all nodes (constant-time rules
/// suffice: the identity is nodewise).
inline double boundary_residual(const CertifiedOperator& op, const MarketSpec& market,
                                const AdaptedProcess& k, int threads = 1) {
  auto problem = boundary_problem(op, market);
  AdaptedProcess m = k;
  for (double& v : m.values) v = -v;
  return residual(problem, m, threads);
}

/// tau_lower^k = first K <= k, tau_upper^k = first K < k; both extended.
inline std::pair<StoppingRule, StoppingRule> exercise_times(const Tree& tree, const AdaptedProcess& k,
                                                            double strike) {
  if (!(strike >= 0.0)) throw ConfigError("strike must be nonnegative");
  AdaptedProcess minus_k = k;
  for (double& v : minus_k.values) v = -v;
  StoppingRule lower = first_hitting(tree, minus_k, -strike, false, false);
  StoppingRule upper = first_hitting(tree, minus_k, -strike, true, false);
  return {std::move(lower), std::move(upper)};
}

enum class PutPayoffMode { Indicator, PositivePart };

/// E_0 of the exercised put: (1+r)^{-tau} (k - P_tau) on {tau <= N} and 0 at
/// +infinity (Indicator), or (1+r)^{-tau^N} (k - P_{tau^N})^+ with the rule
/// capped at the horizon (PositivePart).
inline double put_value(const CertifiedOperator& op, const MarketSpec& market, double strike,
                        const StoppingRule& tau, PutPayoffMode mode) {
  const Tree& tree = op.tree();
  validate_market(tree, market);
  auto disc = discount_factors(tree, market.rate);
  AdaptedProcess payoff(static_cast<std::size_t>(tree.node_count()));
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    double intrinsic = strike - market.prices[n];
    payoff[n] = mode == PutPayoffMode::PositivePart ? std::max(intrinsic, 0.0) : intrinsic;
  }
  if (mode == PutPayoffMode::PositivePart) {
    StoppingRule capped = tau.extended() ? cap_at_horizon(tree, tau) : tau;
    return op.expect0(stopped_terminal(tree, payoff, capped, &disc));
  }
  if (tau.extended()) return op.expect0(stopped_terminal(tree, payoff, tau, &disc, 0.0));
  return op.expect0(stopped_terminal(tree, payoff, tau, &disc));
}

/// Pathwise criterion for an extended rule: tau_lower^k <= tau <= tau_upper^k
/// and min_{0<=v<=tau} K_v = K_tau wherever tau <= N.
inline bool check_put_criterion(const Tree& tree, const AdaptedProcess& k, double strike,
                                const StoppingRule& tau) {
  auto [lower, upper] = exercise_times(tree, k, strike);
  auto t_lo = stop_times_per_leaf(tree, lower);
  auto t_hi = stop_times_per_leaf(tree, upper);
  auto t_star = stop_times_per_leaf(tree, tau);
  auto node_star = stop_nodes_per_leaf(tree, tau);
  for (int ord = 0; ord < tree.leaf_count(); ++ord) {
    long long lo = t_lo[static_cast<std::size_t>(ord)], hi = t_hi[static_cast<std::size_t>(ord)];
    long long st = t_star[static_cast<std::size_t>(ord)];
    if (!(lo <= st && st <= hi)) return false;
    if (st <= tree.horizon()) {
      NodeId stop = node_star[static_cast<std::size_t>(ord)];
      double running = k[stop];
      for (NodeId a = stop; a != kNoNode; a = tree.parent(a)) running = std::min(running, k[a]);
      if (running != k[stop]) return false;
    }
  }
  return true;
}

struct StrikeRow {
  double strike = 0.0;
  int tau_lower_min = kNever;  // earliest exercise over paths; kNever = +infinity
  int tau_upper_min = kNever;
  bool criterion_lower = false;
  bool criterion_upper = false;
  bool signal_at_or_below_strike = true;  // K_tau <= k on {tau <= N}
  double value_indicator = 0.0;
  double value_positive_part = 0.0;
  double snell_value = 0.0;
  double gap = 0.0;  // |value_positive_part - snell_value|
};

struct SweepResult {
  AdaptedProcess k;
  std::vector<StrikeRow> rows;
  double boundary_residual_value = 0.0;
  bool dominance_ok = true;  // K >= P nodewise
  double worst_dominance = 0.0;
  int boundary_solves = 0;
};

inline std::vector<double> default_strike_grid(const MarketSpec& market, const AdaptedProcess& k,
                                               int count = 20) {
  double lo = market.prices.values[0], hi = k.values[0];
  for (double p : market.prices.values) lo = std::min(lo, p);
  for (double v : k.values) hi = std::max(hi, v);
  lo *= 0.5;
  hi *= 1.5;
  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    grid[static_cast<std::size_t>(i)] =
        count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (count - 1);
  return grid;
}

/// Sweep against an already-solved signal K; never re-solves the boundary.
inline SweepResult strike_sweep_with(const CertifiedOperator& op, const MarketSpec& market,
                                     AdaptedProcess k, std::span<const double> strikes,
                                     const Tolerances& tol = {}, int threads = 1) {
  if (strikes.empty()) throw ConfigError("strike grid must be nonempty");
  const Tree& tree = op.tree();
  SweepResult out;
  out.k = std::move(k);
  out.boundary_solves = 0;
  out.boundary_residual_value = boundary_residual(op, market, out.k, threads);
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    double slack = out.k[n] - market.prices[n];
    if (-slack > out.worst_dominance) out.worst_dominance = -slack;
  }
  out.dominance_ok = out.worst_dominance <= tol.residual;

  auto disc = discount_factors(tree, market.rate);
  out.rows.resize(strikes.size());
  parallel_for(strikes.size(), threads, [&](std::size_t i) {
    double strike = strikes[i];
    StrikeRow row;
    row.strike = strike;
    auto [lower, upper] = exercise_times(tree, out.k, strike);
    auto t_lo = stop_times_per_leaf(tree, lower);
    auto t_hi = stop_times_per_leaf(tree, upper);
    for (int v : t_lo) row.tau_lower_min = std::min(row.tau_lower_min, v);
    for (int v : t_hi) row.tau_upper_min = std::min(row.tau_upper_min, v);
    row.criterion_lower = check_put_criterion(tree, out.k, strike, lower);
    row.criterion_upper = check_put_criterion(tree, out.k, strike, upper);
    auto stops = stop_nodes_per_leaf(tree, upper);
    for (NodeId m : stops)
      if (m != kNoNode && out.k[m] > strike) row.signal_at_or_below_strike = false;
    row.value_indicator = put_value(op, market, strike, upper, PutPayoffMode::Indicator);
    row.value_positive_part = put_value(op, market, strike, upper, PutPayoffMode::PositivePart);
    AdaptedProcess payoff(static_cast<std::size_t>(tree.node_count()));
    for (NodeId n = 0; n < tree.node_count(); ++n)
      payoff[n] = disc[static_cast<std::size_t>(tree.time(n))] *
                  std::max(strike - market.prices[n], 0.0);
    row.snell_value = snell(op, payoff).u[0];
    row.gap = std::abs(row.value_positive_part - row.snell_value);
    out.rows[i] = std::move(row);
  });
  return out;
}

/// One boundary solve serves every strike; per strike the sweep reports both
/// exercise rules, the criterion check, both value definitions and the Snell
/// oracle of the discounted positive-part payoff.
inline SweepResult strike_sweep(const CertifiedOperator& op, const MarketSpec& market,
                                std::span<const double> strikes, const Tolerances& tol = {},
                                int threads = 1) {
  auto out = strike_sweep_with(op, market, solve_boundary(op, market, tol, threads), strikes, tol,
                               threads);
  out.boundary_solves = 1;
  return out;
}

}  // namespace nlrepr
