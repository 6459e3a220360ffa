#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "nlrepr/american.hpp"
#include "oracles.hpp"

using namespace nlrepr;
using Catch::Approx;

TEST_CASE("constant prices give K identically equal to the price") {
  // Telescoping: sum_{u=t}^{N-1} r(1+r)^{-u-1} + (1+r)^{-N} = (1+r)^{-t}.
  auto tree = build_binomial(4, 0.5, 1.0, 1.0);
  auto op = certify(z_driver_operator(abs_z_driver(0.2)), tree);
  MarketSpec market{constant_process(*tree, 1.0), 0.07};
  auto k = solve_boundary(op, market);
  for (NodeId n = 0; n < tree->node_count(); ++n) REQUIRE(std::abs(k[n] - 1.0) <= 1e-12);
  REQUIRE(boundary_residual(op, market, k) <= 1e-12);
}

TEST_CASE("one-period chain boundary in closed form") {
  // Falling price: (1+r) P_0 = r K_0 + P_1 when K_0 > P_1, so
  // K_0 = ((1+r) P_0 - P_1)/r. With P = (1, 0.9), r = 0.1: K_0 = 2.
  auto tree = build_chain(1, 1.0);
  auto op = certify(linear_operator(), tree);
  AdaptedProcess p(2);
  p[0] = 1.0;
  p[1] = 0.9;
  MarketSpec market{p, 0.1};
  auto k = solve_boundary(op, market);
  REQUIRE(k[1] == Approx(0.9).margin(1e-12));
  REQUIRE(k[0] == Approx(2.0).margin(1e-9));
  REQUIRE(boundary_residual(op, market, k) <= 1e-9);

  // Rising price pins the boundary to the spot.
  p[1] = 1.2;
  MarketSpec rising{p, 0.1};
  auto k2 = solve_boundary(op, rising);
  REQUIRE(k2[0] == Approx(1.0).margin(1e-9));
}

TEST_CASE("deterministic decreasing prices: dominance and residual") {
  auto tree = build_chain(5, 1.0);
  auto op = certify(linear_operator(), tree);
  AdaptedProcess p(6);
  for (int t = 0; t <= 5; ++t) p[t] = 2.0 - 0.2 * t;
  MarketSpec market{p, 0.05};
  auto k = solve_boundary(op, market);
  REQUIRE(boundary_residual(op, market, k) <= 1e-9);
  for (NodeId n = 0; n < tree->node_count(); ++n) REQUIRE(k[n] >= p[n] - 1e-9);
}

TEST_CASE("exercise times") {
  auto tree = build_binomial(3, 0.5, 1.0, 1.0);
  auto op = certify(linear_operator(), tree);
  CrrParams crr;
  crr.steps = 3;
  auto [mtree, market] = unfold_crr(crr);
  auto mop = certify(linear_operator(), mtree);
  auto k = solve_boundary(mop, market);
  double k_max = k[0], k_min = k[0];
  for (double v : k.values) {
    k_max = std::max(k_max, v);
    k_min = std::min(k_min, v);
  }

  SECTION("strike above every signal value exercises immediately") {
    auto [lower, upper] = exercise_times(*mtree, k, k_max + 1.0);
    REQUIRE(stop_times_per_leaf(*mtree, lower)[0] == 0);
  }

  SECTION("strike below every signal value never exercises") {
    auto [lower, upper] = exercise_times(*mtree, k, std::max(0.0, k_min - 1.0));
    for (int t : stop_times_per_leaf(*mtree, lower)) REQUIRE(t == kNever);
    for (int t : stop_times_per_leaf(*mtree, upper)) REQUIRE(t == kNever);
  }

  SECTION("tie semantics at a constant boundary") {
    auto flat_tree = build_binomial(2, 0.5, 1.0, 1.0);
    auto flat_op = certify(linear_operator(), flat_tree);
    MarketSpec flat{constant_process(*flat_tree, 1.0), 0.05};
    auto flat_k = solve_boundary(flat_op, flat);
    auto [lower, upper] = exercise_times(*flat_tree, flat_k, 1.0);
    for (int t : stop_times_per_leaf(*flat_tree, lower)) REQUIRE(t == 0);
    for (int t : stop_times_per_leaf(*flat_tree, upper)) REQUIRE(t == kNever);
  }

  SECTION("negative strikes are rejected") {
    REQUIRE_THROWS_AS(exercise_times(*mtree, k, -1.0), ConfigError);
  }
}

TEST_CASE("put values at fixed rules") {
  CrrParams crr;
  crr.steps = 2;
  auto [tree, market] = unfold_crr(crr);
  auto op = certify(linear_operator(), tree);
  double strike = 100.0;

  SECTION("exercise now pays the spot intrinsic") {
    auto now = StoppingRule::constant_time(*tree, 0);
    REQUIRE(put_value(op, market, strike, now, PutPayoffMode::Indicator) ==
            Approx(strike - crr.s0).margin(1e-12));
    REQUIRE(put_value(op, market, strike, now, PutPayoffMode::PositivePart) ==
            Approx(std::max(strike - crr.s0, 0.0)).margin(1e-12));
  }

  SECTION("never exercising pays nothing under the indicator payoff") {
    StoppingRule never = StoppingRule::unchecked({}, true);
    REQUIRE(put_value(op, market, strike, never, PutPayoffMode::Indicator) == 0.0);
  }
}

TEST_CASE("sweep against the classical lattice oracle, g = 0") {
  CrrParams crr;
  crr.s0 = 100.0;
  crr.up = 1.15;
  crr.down = 0.85;
  crr.rate = 0.04;
  crr.steps = 4;
  auto [tree, market] = unfold_crr(crr);
  auto op = certify(linear_operator(), tree);

  std::vector<double> strikes;
  for (int i = 0; i < 20; ++i) strikes.push_back(55.0 + 9.0 * i);
  auto sweep = strike_sweep(op, market, strikes);

  REQUIRE(sweep.boundary_solves == 1);
  REQUIRE(sweep.boundary_residual_value <= 1e-9);
  REQUIRE(sweep.dominance_ok);
  for (const auto& row : sweep.rows) {
    double classical =
        oracles::crr_american_put(crr.s0, crr.up, crr.down, crr.rate, crr.steps, row.strike);
    REQUIRE(row.value_positive_part == Approx(classical).margin(1e-10));
    REQUIRE(row.snell_value == Approx(classical).margin(1e-10));
    REQUIRE(row.criterion_lower);
    REQUIRE(row.criterion_upper);
    REQUIRE(row.signal_at_or_below_strike);
  }

  SECTION("the swept boundary matches a direct solve bitwise") {
    auto k = solve_boundary(op, market);
    for (NodeId n = 0; n < tree->node_count(); ++n) REQUIRE(k[n] == sweep.k[n]);
  }

  SECTION("K = P is not a solution on a stochastic tree") {
    double diff = 0.0;
    for (NodeId n = 0; n < tree->node_count(); ++n)
      diff = std::max(diff, std::abs(sweep.k[n] - market.prices[n]));
    REQUIRE(diff > 1e-3);
    REQUIRE(boundary_residual(op, market, market.prices) > 1e-3);
  }
}

TEST_CASE("sweep against the non-linear snell oracle") {
  CrrParams crr;
  crr.s0 = 100.0;
  crr.up = 1.2;
  crr.down = 0.85;
  crr.rate = 0.05;
  crr.steps = 4;
  auto [tree, market] = unfold_crr(crr);
  auto op = certify(z_driver_operator(abs_z_driver(0.05)), tree);
  auto grid = default_strike_grid(market, solve_boundary(op, market));
  auto sweep = strike_sweep(op, market, grid);
  for (const auto& row : sweep.rows) {
    REQUIRE(row.gap <= 1e-8);
    REQUIRE(row.criterion_lower);
    REQUIRE(row.criterion_upper);
  }
}

TEST_CASE("criterion-satisfying extended rules attain the snell value") {
  CrrParams crr;
  crr.s0 = 1.0;
  crr.up = 1.25;
  crr.down = 0.8;
  crr.rate = 0.06;
  crr.steps = 3;
  auto [tree, market] = unfold_crr(crr);
  auto op = certify(z_driver_operator(neg_abs_z_driver(0.04)), tree);
  auto k = solve_boundary(op, market);
  auto disc = discount_factors(*tree, market.rate);
  auto rules = enumerate_extended_rules(*tree);
  for (double strike : {0.7, 0.95, 1.1, 1.4}) {
    AdaptedProcess payoff(static_cast<std::size_t>(tree->node_count()));
    for (NodeId n = 0; n < tree->node_count(); ++n)
      payoff[n] =
          disc[static_cast<std::size_t>(tree->time(n))] * std::max(strike - market.prices[n], 0.0);
    double snell_value = snell(op, payoff).u[0];
    int qualifying = 0;
    for (const auto& rule : rules) {
      if (!check_put_criterion(*tree, k, strike, rule)) continue;
      ++qualifying;
      double v = put_value(op, market, strike, rule, PutPayoffMode::PositivePart);
      REQUIRE(v == Approx(snell_value).margin(1e-8));
      // Inside the money at exercise: K at the stop never exceeds the strike.
      for (NodeId m : stop_nodes_per_leaf(*tree, rule))
        if (m != kNoNode) REQUIRE(k[m] <= strike + 1e-9);
    }
    REQUIRE(qualifying >= 1);
  }
}

TEST_CASE("constant prices: in-the-money strikes exercise immediately") {
  auto tree = build_binomial(3, 0.5, 1.0, 1.0);
  auto op = certify(linear_operator(), tree);
  MarketSpec market{constant_process(*tree, 1.0), 0.08};
  double strikes[] = {1.3, 2.0};
  auto sweep = strike_sweep(op, market, strikes);
  for (const auto& row : sweep.rows) {
    REQUIRE(row.tau_lower_min == 0);
    REQUIRE(row.value_positive_part == Approx(row.strike - 1.0).margin(1e-12));
    REQUIRE(row.snell_value == Approx(row.strike - 1.0).margin(1e-12));
  }
}

TEST_CASE("market validation") {
  auto tree = build_chain(2, 1.0);
  auto op = certify(linear_operator(), tree);
  MarketSpec bad_rate{constant_process(*tree, 1.0), 0.0};
  REQUIRE_THROWS_AS(solve_boundary(op, bad_rate), ConfigError);
  AdaptedProcess neg(static_cast<std::size_t>(tree->node_count()), -1.0);
  MarketSpec bad_price{neg, 0.1};
  REQUIRE_THROWS_AS(solve_boundary(op, bad_price), ValidationError);
  CrrParams arb;
  arb.up = 1.02;
  arb.down = 0.99;
  arb.rate = 0.05;  // 1 + r > up
  REQUIRE_THROWS_AS(unfold_crr(arb), ConfigError);
  std::mt19937_64 rng(3);
  auto alpha_op =
      certify(alpha_maxmin_operator(abs_z_driver(0.1), constant_process(*tree, 0.5)), tree);
  MarketSpec ok{constant_process(*tree, 1.0), 0.1};
  REQUIRE_THROWS_AS(solve_boundary(alpha_op, ok), ConfigError);
}
