#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "nlrepr/skorokhod.hpp"
#include "oracles.hpp"

using namespace nlrepr;
using Catch::Approx;

namespace {

AdaptedProcess random_nondecreasing(const Tree& tree, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AdaptedProcess zeta(static_cast<std::size_t>(tree.node_count()), 0.0);
  for (NodeId n = 0; n < tree.node_count(); ++n) {
    if (tree.time(n) > tree.horizon() - 1) continue;
    zeta[n] = tree.time(n) == 0 ? 2.0 * u(rng) - 1.0 : zeta[tree.parent(n)] + u(rng);
  }
  return zeta;
}

}  // namespace

TEST_CASE("constant obstacle") {
  auto tree = build_binomial(2, 0.5, 1.0, 1.0);
  auto op = certify(z_driver_operator(abs_z_driver(0.2)), tree);
  auto x = constant_process(*tree, 4.0);
  auto sol = solve_obstacle(op, x, FSpec::identity());
  for (NodeId n = 0; n < tree->node_count(); ++n) {
    if (tree->time(n) <= tree->horizon() - 1) {
      REQUIRE(sol.l[n] == 0.0);
      REQUIRE(sol.eta[n] == 0.0);
    }
    REQUIRE(sol.y[n] == Approx(4.0).margin(1e-12));
  }
  auto report = verify_obstacle(sol, x);
  REQUIRE(report.all_ok());
  REQUIRE(sol.y[0] == Approx(x[0]).margin(1e-12));  // time 0 is an increase point
}

TEST_CASE("one-step chain solves by hand") {
  auto tree = build_chain(1, 1.0);
  auto op = certify(linear_operator(), tree);
  AdaptedProcess x(2);
  x[0] = 3.0;
  x[1] = 1.0;
  auto sol = solve_obstacle(op, x, FSpec::identity());
  // 3 = L_0 + X_1 so L_0 = 2; eta_0 = 2; Y = X.
  REQUIRE(sol.l[0] == Approx(2.0).margin(1e-11));
  REQUIRE(sol.eta[0] == Approx(2.0).margin(1e-11));
  REQUIRE(sol.y[0] == Approx(3.0).margin(1e-10));
  REQUIRE(sol.y[1] == Approx(1.0).margin(1e-12));
  REQUIRE(verify_obstacle(sol, x).all_ok());
}

TEST_CASE("random obstacles: domination, flat-off, running max identity") {
  std::mt19937_64 rng(5);
  const oracles::OpKind kinds[] = {oracles::OpKind::Linear, oracles::OpKind::AbsZ,
                                   oracles::OpKind::NegAbsZ};
  for (int i = 0; i < 12; ++i) {
    auto tree = (i % 2 == 0) ? build_binomial(3, 0.35 + 0.1 * (i % 3), 1.0, 1.0)
                             : build_chain(2 + i % 5, 0.5);
    auto op = oracles::random_operator(tree, kinds[i % 3], rng);
    auto x = oracles::random_process(*tree, rng);
    auto sol = solve_obstacle(op, x, FSpec::identity());
    auto report = verify_obstacle(sol, x);
    REQUIRE(report.eta_is_running_max);
    REQUIRE(report.domination_ok);
    REQUIRE(report.terminal_ok);
    REQUIRE(report.flat_off_ok);
    REQUIRE(report.representation_ok);
  }
}

TEST_CASE("shifting eta breaks a defining property") {
  std::mt19937_64 rng(7);
  auto tree = build_binomial(3, 0.5, 1.0, 1.0);
  auto op = certify(linear_operator(), tree);
  auto x = oracles::random_process(*tree, rng);
  auto sol = solve_obstacle(op, x, FSpec::identity());

  ObstacleSolution tampered = sol;
  for (NodeId n = 0; n < tree->node_count(); ++n)
    if (tree->time(n) <= tree->horizon() - 1) tampered.eta[n] += 1.0;
  tampered.y = detail::controlled_process(op, x, FSpec::identity(), tampered.eta);
  auto report = verify_obstacle(tampered, x);
  REQUIRE_FALSE(report.all_ok());
  // eta + 1 is no longer the running max of L, and flat-off fails at time 0.
  REQUIRE_FALSE(report.eta_is_running_max);
  REQUIRE(report.worst_flat_off > 1e-6);
}

TEST_CASE("perturbing Y off an increase point flags the representation check") {
  std::mt19937_64 rng(9);
  auto tree = build_binomial(2, 0.5, 1.0, 1.0);
  auto op = certify(linear_operator(), tree);
  auto x = oracles::random_process(*tree, rng);
  auto sol = solve_obstacle(op, x, FSpec::identity());
  // Find an interior node that is not a point of increase.
  NodeId target = kNoNode;
  for (NodeId n = 1; n < tree->node_count(); ++n) {
    if (tree->time(n) > tree->horizon() - 1) continue;
    if (sol.eta[n] <= sol.eta[tree->parent(n)] + 1e-12) {
      target = n;
      break;
    }
  }
  if (target != kNoNode) {
    ObstacleSolution tampered = sol;
    tampered.y[target] += 0.5;
    auto report = verify_obstacle(tampered, x);
    REQUIRE_FALSE(report.representation_ok);
    REQUIRE(report.worst_representation == Approx(0.5).margin(1e-9));
    REQUIRE(report.flat_off_ok);  // the tampered node is not an increase point
  }
}

TEST_CASE("falsification of alternative increasing processes") {
  std::mt19937_64 rng(11);
  auto tree = build_binomial(3, 0.45, 1.0, 1.0);
  auto op = certify(z_driver_operator(abs_z_driver(0.15)), tree);
  auto x = oracles::random_process(*tree, rng);
  auto sol = solve_obstacle(op, x, FSpec::identity());

  SECTION("eta itself is consistent") {
    auto verdict = falsify_alternative(op, x, sol.eta);
    REQUIRE(verdict.status == FalsifyStatus::Consistent);
  }

  SECTION("a constant shift up is falsified") {
    AdaptedProcess zeta = sol.eta;
    for (NodeId n = 0; n < tree->node_count(); ++n)
      if (tree->time(n) <= tree->horizon() - 1) zeta[n] += 0.5;
    auto verdict = falsify_alternative(op, x, zeta);
    REQUIRE(verdict.status == FalsifyStatus::Falsified);
    REQUIRE((verdict.failed_property == "domination" || verdict.failed_property == "flat_off"));
    REQUIRE(verdict.violation > 1e-6);
    REQUIRE_FALSE(verdict.sigma_eps_stops.empty());
  }

  SECTION("a constant below the whole of eta is falsified") {
    double floor = sol.eta[0];
    for (NodeId n = 0; n < tree->node_count(); ++n)
      if (tree->time(n) <= tree->horizon() - 1) floor = std::min(floor, sol.eta[n]);
    auto verdict = falsify_alternative(op, x, constant_process(*tree, floor - 1.0));
    REQUIRE(verdict.status == FalsifyStatus::Falsified);
  }

  SECTION("random nondecreasing alternatives are falsified") {
    int falsified = 0;
    for (int i = 0; i < 25; ++i) {
      auto zeta = random_nondecreasing(*tree, rng);
      double diff = 0.0;
      for (NodeId n = 0; n < tree->node_count(); ++n)
        if (tree->time(n) <= tree->horizon() - 1)
          diff = std::max(diff, std::abs(zeta[n] - sol.eta[n]));
      auto verdict = falsify_alternative(op, x, zeta);
      if (diff > 1e-6) {
        REQUIRE(verdict.status == FalsifyStatus::Falsified);
        ++falsified;
      }
    }
    REQUIRE(falsified >= 20);
  }

  SECTION("a decreasing zeta is rejected outright") {
    AdaptedProcess zeta = sol.eta;
    NodeId child = tree->children(0)[0];
    zeta[child] = zeta[0] - 1.0;
    REQUIRE_THROWS_AS(falsify_alternative(op, x, zeta), ValidationError);
  }
}

TEST_CASE("decreasing f flips the domination orientation") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 6; ++i) {
    auto tree = oracles::random_tree(rng, 4, 5);
    auto op = oracles::random_operator(tree, oracles::OpKind::AbsZ, rng);
    auto x = oracles::random_process(*tree, rng);
    auto f = FSpec::affine(0.3, 1.2, MonotoneDirection::Decreasing);
    auto sol = solve_obstacle(op, x, f);
    REQUIRE(sol.orientation == Orientation::DominatedBy);
    auto report = verify_obstacle(sol, x);
    REQUIRE(report.all_ok());
    for (NodeId n = 0; n < tree->node_count(); ++n) REQUIRE(sol.y[n] <= x[n] + 1e-9);
  }
}

TEST_CASE("increasing non-identity f and non-tower operators are rejected") {
  auto tree = build_chain(2, 1.0);
  auto op = certify(linear_operator(), tree);
  auto x = constant_process(*tree, 1.0);
  REQUIRE_THROWS_AS(solve_obstacle(op, x, FSpec::affine(0.0, 1.0, MonotoneDirection::Increasing)),
                    ConfigError);
  auto alpha_op =
      certify(alpha_maxmin_operator(abs_z_driver(0.0), constant_process(*tree, 0.5)), tree);
  REQUIRE_THROWS_AS(solve_obstacle(alpha_op, x, FSpec::identity()), ConfigError);
}

TEST_CASE("sandwiched touching rules attain the brute-force optimum") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 6; ++i) {
    auto tree = (i % 2 == 0) ? build_binomial(3, 0.5, 1.0, 1.0) : build_chain(3, 1.0);
    auto op = oracles::random_operator(
        tree, i % 2 == 0 ? oracles::OpKind::AbsZ : oracles::OpKind::Linear, rng);
    auto x = oracles::random_process(*tree, rng);
    auto sol = solve_obstacle(op, x, FSpec::identity());
    auto brute = brute_force_value(op, x);
    auto t_lo = stop_times_per_leaf(*tree, first_hitting(*tree, sol.eta, 0.0, false, true));
    auto t_hi = stop_times_per_leaf(*tree, first_hitting(*tree, sol.eta, 0.0, true, true));
    int used = 0;
    for (const auto& rule : enumerate_rules(*tree)) {
      auto times = stop_times_per_leaf(*tree, rule);
      auto nodes = stop_nodes_per_leaf(*tree, rule);
      bool sandwiched = true, touching = true;
      for (std::size_t k = 0; k < times.size(); ++k) {
        if (!(t_lo[k] <= times[k] && times[k] <= t_hi[k])) sandwiched = false;
        if (std::abs(sol.y[nodes[k]] - x[nodes[k]]) > 1e-9) touching = false;
      }
      if (sandwiched && touching) {
        ++used;
        REQUIRE(std::abs(expected_stopped(op, x, rule) - brute.value) <= 1e-9);
      }
    }
    REQUIRE(used >= 1);  // tau_upper always qualifies
  }
}
