#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "nlrepr/stopping.hpp"
#include "oracles.hpp"

using namespace nlrepr;
using Catch::Approx;

TEST_CASE("deterministic decreasing reward stops immediately") {
  auto tree = build_chain(3, 1.0);
  auto op = certify(linear_operator(), tree);
  AdaptedProcess x(4);
  x[0] = 5.0;
  x[1] = 4.0;
  x[2] = 2.5;
  x[3] = 1.0;
  auto sol = solve_stopping(op, x);
  REQUIRE(sol.value == Approx(5.0).margin(1e-10));
  auto t_lo = stop_times_per_leaf(*tree, sol.tau_lower);
  REQUIRE(t_lo[0] == 0);
}

TEST_CASE("constant reward: L vanishes, every rule is optimal") {
  auto tree = build_binomial(3, 0.4, 1.0, 1.0);
  auto op = certify(z_driver_operator(abs_z_driver(0.15)), tree);
  AdaptedProcess x = constant_process(*tree, 2.5);
  auto sol = solve_stopping(op, x);
  REQUIRE(sol.value == Approx(2.5).margin(1e-10));
  for (NodeId n = 0; n < tree->node_count(); ++n)
    if (tree->time(n) <= tree->horizon() - 1) REQUIRE(sol.l[n] == 0.0);
  auto t_lo = stop_times_per_leaf(*tree, sol.tau_lower);
  auto t_hi = stop_times_per_leaf(*tree, sol.tau_upper);
  for (std::size_t k = 0; k < t_lo.size(); ++k) {
    REQUIRE(t_lo[k] == 0);
    REQUIRE(t_hi[k] == tree->horizon());
  }
  for (const auto& rule : enumerate_rules(*tree))
    REQUIRE(expected_stopped(op, x, rule) == Approx(2.5).margin(1e-10));
}

TEST_CASE("snell envelope") {
  SECTION("decreasing deterministic reward: U = X, stop at zero") {
    auto tree = build_chain(2, 1.0);
    auto op = certify(linear_operator(), tree);
    AdaptedProcess x(3);
    x[0] = 3.0;
    x[1] = 2.0;
    x[2] = 1.0;
    auto env = snell(op, x);
    for (NodeId n = 0; n < tree->node_count(); ++n) REQUIRE(env.u[n] == x[n]);
    REQUIRE(stop_times_per_leaf(*tree, env.tau_earliest)[0] == 0);
  }

  SECTION("constant reward") {
    auto tree = build_binomial(2, 0.5, 1.0, 1.0);
    auto op = certify(linear_operator(), tree);
    auto env = snell(op, constant_process(*tree, 1.5));
    for (NodeId n = 0; n < tree->node_count(); ++n) REQUIRE(env.u[n] == 1.5);
  }

  SECTION("hand-computed put payoff on a two-step tree") {
    // S = 4 -> (8, 2) -> (16, 4, 4, 1), payoff (5 - S)^+, p = 1/2, no discount:
    // U_2 = (0, 1, 1, 4); U_1 = (max(0, 1/2), max(3, 5/2)) = (1/2, 3);
    // U_0 = max(1, 7/4) = 7/4.
    auto tree = build_binomial(2, 0.5, 1.0, 1.0);
    auto op = certify(linear_operator(), tree);
    AdaptedProcess s(7), x(7);
    s[0] = 4.0;
    NodeId up = tree->children(0)[0], down = tree->children(0)[1];
    s[up] = 8.0;
    s[down] = 2.0;
    s[tree->children(up)[0]] = 16.0;
    s[tree->children(up)[1]] = 4.0;
    s[tree->children(down)[0]] = 4.0;
    s[tree->children(down)[1]] = 1.0;
    for (NodeId n = 0; n < 7; ++n) x[n] = std::max(5.0 - s[n], 0.0);
    auto env = snell(op, x);
    REQUIRE(env.u[0] == Approx(1.75).margin(1e-14));
    REQUIRE(env.u[up] == Approx(0.5).margin(1e-14));
    REQUIRE(env.u[down] == Approx(3.0).margin(1e-14));
    // Earliest optimal rule: continue at the root and up node, stop down.
    const auto& stops = env.tau_earliest.stops();
    REQUIRE(std::find(stops.begin(), stops.end(), down) != stops.end());
    REQUIRE(std::find(stops.begin(), stops.end(), NodeId(0)) == stops.end());
  }

  SECTION("envelope dominates the reward and every stopped value") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 6; ++i) {
      auto tree = oracles::random_tree(rng, 4, 6);
      auto op = oracles::random_operator(tree, oracles::OpKind::AbsZ, rng);
      auto x = oracles::random_process(*tree, rng);
      auto env = snell(op, x);
      for (NodeId n = 0; n < tree->node_count(); ++n) REQUIRE(env.u[n] >= x[n]);
      for (const auto& rule : enumerate_rules(*tree))
        REQUIRE(env.u[0] >= expected_stopped(op, x, rule) - 1e-12);
    }
  }
}

TEST_CASE("level-crossing solution agrees with all oracles") {
  std::mt19937_64 rng(7);
  const oracles::OpKind kinds[] = {oracles::OpKind::Linear, oracles::OpKind::AbsZ,
                                   oracles::OpKind::NegAbsZ};
  for (int i = 0; i < 16; ++i) {
    auto tree = (i % 2 == 0) ? build_binomial(2 + i % 3, 0.3 + 0.1 * (i % 4), 1.0, 1.0)
                             : build_chain(2 + i % 6, 1.0);
    auto op = oracles::random_operator(tree, kinds[i % 3], rng);
    auto x = oracles::random_process(*tree, rng);
    auto sol = solve_stopping(op, x);
    double v_lower = expected_stopped(op, x, sol.tau_lower);
    auto env = snell(op, x);
    auto brute = brute_force_value(op, x);
    REQUIRE(std::abs(v_lower - sol.value) <= 1e-9);
    REQUIRE(std::abs(env.u[0] - sol.value) <= 1e-9);
    REQUIRE(std::abs(brute.value - sol.value) <= 1e-9);
  }
}

TEST_CASE("optimality criterion") {
  std::mt19937_64 rng(11);
  auto tree = build_binomial(3, 0.45, 1.0, 1.0);
  auto op = certify(z_driver_operator(abs_z_driver(0.2)), tree);
  auto x = oracles::random_process(*tree, rng);
  auto sol = solve_stopping(op, x);
  auto brute = brute_force_value(op, x);

  SECTION("tau_upper and tau_lower pass") {
    REQUIRE(check_criterion(*tree, sol.l, sol.tau_upper).all);
    REQUIRE(check_criterion(*tree, sol.l, sol.tau_lower).all);
  }

  SECTION("stopping at the root fails when L_0 < 0") {
    AdaptedProcess l(static_cast<std::size_t>(tree->node_count()), 1.0);
    l[0] = -1.0;
    auto at_zero = StoppingRule::constant_time(*tree, 0);
    REQUIRE_FALSE(check_criterion(*tree, l, at_zero).all);
  }

  SECTION("every criterion-passing rule attains the optimum") {
    int passing = 0;
    for (const auto& rule : enumerate_rules(*tree)) {
      if (check_criterion(*tree, sol.l, rule).all) {
        ++passing;
        REQUIRE(std::abs(expected_stopped(op, x, rule) - brute.value) <= 1e-9);
      }
    }
    REQUIRE(passing >= 1);
  }
}

TEST_CASE("non-tower operators are refused") {
  std::mt19937_64 rng(13);
  auto tree = build_binomial(2, 0.5, 1.0, 1.0);
  auto x = oracles::random_process(*tree, rng);
  auto alpha = oracles::random_operator(tree, oracles::OpKind::AlphaMaxmin, rng);
  REQUIRE_THROWS_AS(solve_stopping(alpha, x), ConfigError);
  REQUIRE_THROWS_AS(snell(alpha, x), ConfigError);
  auto yz = certify(yz_driver_operator(abs_z_driver(0.1), 0.2), tree);
  REQUIRE_THROWS_AS(solve_stopping(yz, x), ConfigError);
}

TEST_CASE("brute force keeps ties") {
  auto tree = build_chain(2, 1.0);
  auto op = certify(linear_operator(), tree);
  auto brute = brute_force_value(op, constant_process(*tree, 1.0));
  REQUIRE(brute.rules == 3);
  REQUIRE(brute.argmax.size() == 3);  // every rule optimal for a constant
  REQUIRE(brute.value == Approx(1.0).margin(1e-12));
}
