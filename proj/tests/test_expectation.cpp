#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "nlrepr/expectation.hpp"
#include "oracles.hpp"

using namespace nlrepr;
using Catch::Approx;

namespace {

TerminalVariable two_leaf(const Tree& tree, double up, double down) {
  TerminalVariable xi(static_cast<std::size_t>(tree.leaf_count()));
  xi[0] = up;
  xi[1] = down;
  return xi;
}

}  // namespace

TEST_CASE("operator certification") {
  SECTION("linear certifies on any tree") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 5; ++i) {
      auto tree = oracles::random_tree(rng);
      REQUIRE_NOTHROW(certify(linear_operator(), tree));
    }
  }

  SECTION("symmetric binomial abs-z margins") {
    auto tree = build_binomial(1, 0.5, 1.0, 1.0);
    auto op = certify(z_driver_operator(abs_z_driver(0.2)), tree);
    const auto& cert = op.certificate(0);
    REQUIRE(cert.weights[0] == Approx(0.5).margin(1e-14));
    REQUIRE(cert.weights[1] == Approx(-0.5).margin(1e-14));
    REQUIRE(op.min_margin() == Approx(0.4).margin(1e-12));
  }

  SECTION("oversized kappa is rejected with the offending node") {
    auto tree = build_binomial(1, 0.5, 1.0, 1.0);
    try {
      certify(z_driver_operator(abs_z_driver(1.5)), tree);
      FAIL("expected OperatorConditionError");
    } catch (const OperatorConditionError& e) {
      REQUIRE(e.node == 0);
      REQUIRE(e.margin == Approx(0.5 - 0.75).margin(1e-12));
    }
  }

  SECTION("yz contraction condition") {
    auto tree = build_binomial(2, 0.5, 1.0, 1.0);
    REQUIRE_THROWS_AS(certify(yz_driver_operator(abs_z_driver(0.1), 0.6), tree),
                      OperatorConditionError);
    REQUIRE_NOTHROW(certify(yz_driver_operator(abs_z_driver(0.1), 0.3), tree));
  }

  SECTION("alpha must live in [0,1]") {
    auto tree = build_binomial(1, 0.5, 1.0, 1.0);
    AdaptedProcess alpha(static_cast<std::size_t>(tree->node_count()), 1.5);
    REQUIRE_THROWS_AS(certify(alpha_maxmin_operator(abs_z_driver(0.1), alpha), tree),
                      ValidationError);
  }

  SECTION("chain weights vanish, so z-drivers reduce to linear") {
    auto tree = build_chain(5, 1.0);
    auto zop = certify(z_driver_operator(abs_z_driver(3.0)), tree);
    auto lop = certify(linear_operator(), tree);
    for (NodeId n = 0; n < tree->node_count(); ++n) {
      if (tree->is_leaf(n)) continue;
      REQUIRE(zop.certificate(n).abs_wsum[0] == 0.0);
    }
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 5; ++i) {
      TerminalVariable xi(1);
      xi[0] = u(rng);
      REQUIRE(std::abs(zop.expect0(xi) - lop.expect0(xi)) <= 1e-14);
    }
  }
}

TEST_CASE("one step recursion") {
  auto tree = build_binomial(1, 0.5, 1.0, 1.0);

  SECTION("equal children pass through every certified driver") {
    std::vector<CertifiedOperator> ops;
    ops.push_back(certify(linear_operator(), tree));
    ops.push_back(certify(z_driver_operator(abs_z_driver(0.2)), tree));
    ops.push_back(certify(yz_driver_operator(abs_z_driver(0.1), 0.0), tree));
    double kids[2] = {1.7, 1.7};
    for (const auto& op : ops) REQUIRE(op.one_step(0, kids) == Approx(1.7).margin(1e-14));
  }

  SECTION("abs-z one step: mean plus kappa |z| dt") {
    auto op = certify(z_driver_operator(abs_z_driver(0.2)), tree);
    double kids[2] = {2.0, 0.0};
    REQUIRE(op.one_step(0, kids) == Approx(1.2).margin(1e-14));
  }

  SECTION("linear with p = 0.25") {
    auto skew = build_binomial(1, 0.25, 1.0, 1.0);
    auto op = certify(linear_operator(), skew);
    double kids[2] = {2.0, 0.0};
    REQUIRE(op.one_step(0, kids) == Approx(0.5).margin(1e-14));
  }

  SECTION("yz fixed point matches closed form for a linear driver") {
    // g(y, z) = lambda*y + kappa*z has fixed point (mean + kappa*z*dt)/(1 - lambda*dt).
    double lambda = 0.25, kappa = 0.1;
    auto op = certify(yz_driver_operator(linear_z_driver(kappa), lambda), tree);
    double kids[2] = {2.0, 0.5};
    double mean = 0.5 * 2.0 + 0.5 * 0.5;
    double z = 0.5 * 2.0 - 0.5 * 0.5;
    double expected = (mean + kappa * z) / (1.0 - lambda);
    REQUIRE(op.one_step(0, kids) == Approx(expected).margin(1e-12));
  }

  SECTION("alpha-maxmin refuses the one-step interface") {
    AdaptedProcess alpha(static_cast<std::size_t>(tree->node_count()), 0.5);
    auto op = certify(alpha_maxmin_operator(abs_z_driver(0.1), alpha), tree);
    double kids[2] = {1.0, 0.0};
    REQUIRE_THROWS_AS(op.one_step(0, kids), ConfigError);
  }

  SECTION("certified slope lower bound holds under bumps") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 10; ++i) {
      auto t = oracles::random_tree(rng, 5, 5);
      auto kind = static_cast<oracles::OpKind>(rng() % 4);
      if (kind == oracles::OpKind::AlphaMaxmin) kind = oracles::OpKind::AbsZ;
      auto op = oracles::random_operator(t, kind, rng);
      for (NodeId n = 0; n < t->node_count(); ++n) {
        if (t->is_leaf(n)) continue;
        auto ch = t->children(n);
        std::vector<double> kids(ch.size());
        for (auto& v : kids) v = u(rng);
        double base = op.one_step(n, {kids.data(), kids.size()});
        for (std::size_t c = 0; c < ch.size(); ++c) {
          kids[c] += 1e-6;
          double bumped = op.one_step(n, {kids.data(), kids.size()});
          kids[c] -= 1e-6;
          double slope = (bumped - base) / 1e-6;
          REQUIRE(slope >= op.guaranteed_slope(n) - 1e-6);
        }
      }
    }
  }
}

TEST_CASE("conditional expectation") {
  SECTION("constants are preserved") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 8; ++i) {
      auto tree = oracles::random_tree(rng, 6, 6);
      for (auto kind : {oracles::OpKind::Linear, oracles::OpKind::AbsZ, oracles::OpKind::NegAbsZ,
                        oracles::OpKind::AlphaMaxmin}) {
        auto op = oracles::random_operator(tree, kind, rng);
        double c = 3.25;
        auto xi = constant_terminal(*tree, c);
        for (int t = 0; t <= tree->horizon(); ++t)
          for (double v : op.condexp(t, xi)) REQUIRE(v == Approx(c).margin(1e-12));
      }
    }
  }

  SECTION("zero is preserved by yz drivers") {
    auto tree = build_binomial(3, 0.5, 1.0, 1.0);
    auto op = certify(yz_driver_operator(abs_z_driver(0.1), 0.2), tree);
    auto xi = constant_terminal(*tree, 0.0);
    REQUIRE(op.expect0(xi) == 0.0);
    // Nonzero constants shift under the y term.
    auto one = constant_terminal(*tree, 1.0);
    REQUIRE(std::abs(op.expect0(one) - 1.0) > 1e-6);
  }

  SECTION("one-period linear and abs-z examples") {
    auto tree = build_binomial(1, 0.5, 1.0, 1.0);
    auto xi = two_leaf(*tree, 4.0, 0.0);
    REQUIRE(certify(linear_operator(), tree).expect0(xi) == Approx(2.0).margin(1e-14));
    auto op = certify(z_driver_operator(abs_z_driver(0.2)), tree);
    // By hand: mean 2, z = (4 - 0)/(e_up - e_down) = 2, value 2 + 0.2*2*1.
    REQUIRE(op.expect0(xi) == Approx(2.4).margin(1e-14));
  }

  SECTION("zero-form driver coincides with linear everywhere") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    auto tree = build_binomial(4, 0.3, 1.0, 0.5);
    DriverSpec zero;
    zero.form = DriverForm::Zero;
    auto zop = certify(z_driver_operator(zero), tree);
    auto lop = certify(linear_operator(), tree);
    for (int i = 0; i < 10; ++i) {
      TerminalVariable xi(static_cast<std::size_t>(tree->leaf_count()));
      for (auto& v : xi.values) v = u(rng);
      for (int t = 0; t <= tree->horizon(); ++t) {
        auto a = zop.condexp(t, xi);
        auto b = lop.condexp(t, xi);
        for (std::size_t k = 0; k < a.size(); ++k) REQUIRE(std::abs(a[k] - b[k]) <= 1e-14);
      }
    }
  }

  SECTION("alpha-maxmin mixes the two driver passes at the evaluation node") {
    auto tree = build_binomial(2, 0.5, 1.0, 1.0);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    AdaptedProcess alpha(static_cast<std::size_t>(tree->node_count()));
    for (auto& a : alpha.values) a = unit(rng);
    auto mix = certify(alpha_maxmin_operator(abs_z_driver(0.2), alpha), tree);
    auto up = certify(z_driver_operator(abs_z_driver(0.2)), tree);
    auto down = certify(z_driver_operator(neg_abs_z_driver(0.2)), tree);
    TerminalVariable xi(static_cast<std::size_t>(tree->leaf_count()));
    for (auto& v : xi.values) v = 4.0 * unit(rng) - 2.0;
    for (NodeId n = 0; n < tree->node_count(); ++n) {
      double want = alpha[n] * up.condexp_at(n, xi) + (1.0 - alpha[n]) * down.condexp_at(n, xi);
      REQUIRE(mix.condexp_at(n, xi) == Approx(want).margin(1e-14));
    }
  }

  SECTION("piecewise drivers evaluate and certify") {
    auto tree = build_binomial(2, 0.5, 1.0, 1.0);
    DriverSpec d;
    d.form = DriverForm::PiecewiseLinearZ;
    d.breaks = {-0.5, 0.5};
    d.slopes = {0.1, -0.2, 0.15};
    d.lipschitz = 0.2;
    REQUIRE(d.eval_z_scalar(0.0) == 0.0);
    REQUIRE(d.eval_z_scalar(0.5) == Approx(-0.1).margin(1e-15));
    REQUIRE(d.eval_z_scalar(1.5) == Approx(-0.1 + 0.15).margin(1e-15));
    REQUIRE(d.eval_z_scalar(-0.5) == Approx(0.1).margin(1e-15));
    REQUIRE(d.eval_z_scalar(-1.5) == Approx(0.1 - 0.1).margin(1e-15));
    auto op = certify(z_driver_operator(d), tree);
    auto xi = constant_terminal(*tree, 2.0);
    REQUIRE(op.expect0(xi) == Approx(2.0).margin(1e-12));
  }
}

TEST_CASE("axiom suite") {
  SECTION("linear passes every axiom") {
    auto tree = build_binomial(3, 0.5, 1.0, 1.0);
    auto report = axiom_suite(certify(linear_operator(), tree), 100, 42);
    REQUIRE(report.all_passed());
    for (const auto& c : report.checks) REQUIRE(c.passed);
  }

  SECTION("certified z-drivers pass the asserted axioms") {
    std::mt19937_64 rng(9);
    auto tree = build_binomial(4, 0.35, 1.2, 0.5);
    for (auto kind : {oracles::OpKind::AbsZ, oracles::OpKind::NegAbsZ, oracles::OpKind::Yz}) {
      auto report = axiom_suite(oracles::random_operator(tree, kind, rng), 100, 77);
      REQUIRE(report.all_passed());
    }
  }

  SECTION("a y-dependent driver is not time consistent in the lifted sense") {
    auto tree = build_binomial(3, 0.5, 1.0, 1.0);
    auto op = certify(yz_driver_operator(abs_z_driver(0.1), 0.25), tree);
    REQUIRE_FALSE(op.tower());
    auto report = axiom_suite(op, 50, 3);
    REQUIRE(report.all_passed());  // tower is report-only for this variant
    for (const auto& c : report.checks) {
      if (c.axiom == "tower_property") {
        REQUIRE_FALSE(c.applicable);
        REQUIRE_FALSE(c.passed);  // and it does fail empirically
      }
      if (c.axiom == "constant_preservation") REQUIRE_FALSE(c.applicable);
    }
    REQUIRE(certify(yz_driver_operator(abs_z_driver(0.1), 0.0), tree).tower());
  }

  SECTION("alpha-maxmin: tower flagged not applicable, locality and monotonicity pass") {
    auto tree = build_binomial(3, 0.5, 1.0, 1.0);
    AdaptedProcess alpha(static_cast<std::size_t>(tree->node_count()), 0.5);
    auto op = certify(alpha_maxmin_operator(abs_z_driver(0.2), alpha), tree);
    auto report = axiom_suite(op, 200, 11);
    REQUIRE(report.all_passed());
    for (const auto& c : report.checks) {
      if (c.axiom == "tower_property") REQUIRE_FALSE(c.applicable);
      if (c.axiom == "strict_monotonicity") {
        REQUIRE(c.applicable);
        REQUIRE(c.passed);
      }
      if (c.axiom == "zero_one_law") {
        REQUIRE(c.applicable);
        REQUIRE(c.passed);
      }
    }
  }

  SECTION("an uncertified driver yields a strict-monotonicity witness") {
    auto tree = build_binomial(1, 0.5, 1.0, 1.0);
    auto op = certify_unchecked(z_driver_operator(abs_z_driver(1.5)), tree);
    REQUIRE(op.bypassed());
    auto report = axiom_suite(op, 200, 13);
    bool mono_failed = false;
    for (const auto& c : report.checks)
      if (c.axiom == "strict_monotonicity" && !c.passed && !c.witness.empty()) mono_failed = true;
    REQUIRE(mono_failed);
  }

  SECTION("tower and translation hold tightly for z-drivers") {
    std::mt19937_64 rng(10);
    auto tree = oracles::random_tree(rng, 6, 6);
    auto op = oracles::random_operator(tree, oracles::OpKind::AbsZ, rng);
    auto report = axiom_suite(op, 300, 99);
    for (const auto& c : report.checks) {
      if (c.axiom == "tower_property" || c.axiom == "translation_invariance") {
        REQUIRE(c.applicable);
        REQUIRE(c.passed);
      }
    }
  }
}
