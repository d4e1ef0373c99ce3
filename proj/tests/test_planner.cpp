#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "refprice/planner.hpp"

using namespace refprice;
using refprice::testing::random_context;
using refprice::testing::random_plan;
using refprice::testing::random_spec;
using refprice::testing::random_vector;

namespace {

QuadraticProgram make_qp(Eigen::MatrixXd M, Eigen::VectorXd a, double p_max = 1.0) {
  QuadraticProgram qp;
  qp.M = std::move(M);
  qp.a = std::move(a);
  qp.p_max = p_max;
  return qp;
}

// Concave Plain instance: beta strongly negative relative to the phi blocks.
ParamVector concave_theta(std::mt19937_64& rng, const ModelSpec& spec) {
  for (;;) {
    ParamVector theta = random_vector(rng, spec.param_dim());
    theta(0) = std::abs(theta(0)) + 1.0;
    theta(1) = -1.0 - std::abs(theta(1));
    if (is_nsd(build_quadratic(theta, spec).M)) return theta;
  }
}

}  // namespace

TEST(BuildQuadratic, PlainHandExample) {
  const ModelSpec spec = ModelSpec::plain(3, 1, 1, 1);
  const auto qp = build_quadratic(Eigen::Vector3d(1, -1, 0.5), spec);
  Eigen::Matrix3d expected;
  expected << -1, 0.25, 0, 0.25, -1, 0.25, 0, 0.25, -1;
  EXPECT_EQ(qp.M, Eigen::MatrixXd(expected));
  EXPECT_EQ(qp.a, Eigen::VectorXd(Eigen::Vector3d::Ones()));
}

TEST(BuildQuadratic, MemorylessIsDiagonal) {
  const auto qp = build_quadratic(Eigen::Vector2d(2, -3), ModelSpec::plain(4, 0, 1, 1));
  EXPECT_EQ(qp.M, Eigen::MatrixXd(-3 * Eigen::MatrixXd::Identity(4, 4)));
  EXPECT_EQ(qp.a, Eigen::VectorXd::Constant(4, 2));
}

TEST(BuildQuadratic, MultiproductSingleProductMatchesPlain) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const ModelSpec plain = random_spec(rng, Variant::Plain);
    const ModelSpec multi = ModelSpec::multiproduct(plain.H, plain.n, 1, plain.p_max, plain.sigma2);
    const ParamVector theta = random_vector(rng, plain.param_dim());
    EXPECT_EQ(build_quadratic(theta, plain).M, build_quadratic(theta, multi).M);
  }
}

TEST(BuildQuadratic, SymmetricAndBanded) {
  std::mt19937_64 rng(2);
  for (Variant v : {Variant::Plain, Variant::Covariate, Variant::Multiproduct}) {
    for (int trial = 0; trial < 100; ++trial) {
      const ModelSpec spec = random_spec(rng, v);
      const auto qp = build_quadratic(random_vector(rng, spec.param_dim()), spec, random_context(rng, spec));
      EXPECT_LT((qp.M - qp.M.transpose()).cwiseAbs().maxCoeff(), 1e-12);
      const int q = spec.products();
      for (int i = 0; i < qp.dim(); ++i)
        for (int j = 0; j < qp.dim(); ++j)
          if (std::abs(i / q - j / q) > spec.n) EXPECT_EQ(qp.M(i, j), 0.0);
    }
  }
}

TEST(BuildQuadratic, QuadraticFormEqualsEpisodeValue) {
  std::mt19937_64 rng(3);
  for (Variant v : {Variant::Plain, Variant::Covariate, Variant::Multiproduct}) {
    for (int trial = 0; trial < 1000; ++trial) {
      const ModelSpec spec = random_spec(rng, v);
      const ParamVector theta = random_vector(rng, spec.param_dim(), 2.0);
      const Context z = random_context(rng, spec);
      const PricePlan plan = random_plan(rng, spec);
      const auto qp = build_quadratic(theta, spec, z);
      ASSERT_NEAR(qp.objective(plan.flat()), episode_value(theta, plan, z, spec), 1e-10) << to_string(v);
    }
  }
}

TEST(IsNsd, Examples) {
  EXPECT_TRUE(is_nsd(-Eigen::MatrixXd::Identity(3, 3)));
  Eigen::Matrix2d off;
  off << 0, 1, 1, 0;
  EXPECT_FALSE(is_nsd(off));
  EXPECT_TRUE(is_nsd(Eigen::MatrixXd::Zero(2, 2)));
}

TEST(SolveBoxQp, ScalarVertex) {
  const auto r = solve_box_qp(make_qp(Eigen::MatrixXd::Constant(1, 1, -4), Eigen::VectorXd::Constant(1, 7.5)));
  EXPECT_NEAR(r.plan.at(1)(0), 0.9375, 1e-9);
  EXPECT_NEAR(r.value, 3.515625, 1e-12);
  EXPECT_TRUE(r.concave);
}

TEST(SolveBoxQp, InteriorPeakAtOrigin) {
  const auto r = solve_box_qp(make_qp(-Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2)));
  EXPECT_EQ(r.plan.flat(), Eigen::VectorXd::Zero(2));
  EXPECT_DOUBLE_EQ(r.value, 0.0);
}

TEST(SolveBoxQp, PlainExampleAgainstGrid) {
  const ModelSpec spec = ModelSpec::plain(3, 1, 1, 1);
  const auto qp = build_quadratic(Eigen::Vector3d(1, -1, 0.5), spec);
  const auto r = solve_box_qp(qp);
  const auto g = grid_oracle(qp, 201);
  EXPECT_TRUE(r.concave);
  EXPECT_NEAR(r.value, g.value, 1e-2);
  EXPECT_GE(r.value, g.value - 1e-8);
  // Interior KKT point: 2 M x + a = 0.
  EXPECT_LT((2.0 * qp.M * r.plan.flat() + qp.a).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SolveBoxQp, DominatesGridOnConcaveInstances) {
  std::mt19937_64 rng(4);
  for (int D = 1; D <= 3; ++D) {
    for (int trial = 0; trial < 5; ++trial) {
      const ModelSpec spec = ModelSpec::plain(D, std::min(2, D - 1), 1.0, 1.0);
      const auto qp = build_quadratic(concave_theta(rng, spec), spec);
      EXPECT_GE(solve_box_qp(qp).value, grid_oracle(qp, 201).value - 1e-6);
    }
  }
  for (int D = 4; D <= 6; ++D) {
    for (int trial = 0; trial < 3; ++trial) {
      const ModelSpec spec = ModelSpec::plain(D, 2, 1.0, 1.0);
      const auto qp = build_quadratic(concave_theta(rng, spec), spec);
      EXPECT_GE(solve_box_qp(qp).value, grid_oracle(qp, 21).value - 1e-2);
    }
  }
}

TEST(SolveBoxQp, PlansStayInBox) {
  std::mt19937_64 rng(5);
  for (Variant v : {Variant::Plain, Variant::Covariate, Variant::Multiproduct}) {
    for (int trial = 0; trial < 100; ++trial) {
      const ModelSpec spec = random_spec(rng, v);
      const auto r = plan_report(random_vector(rng, spec.param_dim(), 3.0), spec, random_context(rng, spec));
      EXPECT_EQ(r.plan.horizon(), spec.H);
      EXPECT_EQ(r.plan.products(), spec.products());
      EXPECT_TRUE((r.plan.prices.array() >= 0.0).all());
      EXPECT_TRUE((r.plan.prices.array() <= spec.p_max).all());
    }
  }
}

TEST(SolveBoxQp, ScalingLeavesArgmaxUnchanged) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelSpec spec = ModelSpec::plain(5, 2, 1.0, 1.0);
    auto qp = build_quadratic(concave_theta(rng, spec), spec);
    const auto base = solve_box_qp(qp);
    const double c = std::uniform_real_distribution<double>(0.1, 10.0)(rng);
    qp.M *= c;
    qp.a *= c;
    const auto scaled = solve_box_qp(qp);
    EXPECT_LT((scaled.plan.flat() - base.plan.flat()).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(scaled.value, c * base.value, 1e-6 * std::max(1.0, std::abs(c * base.value)));
  }
}

TEST(SolveBoxQp, IndefiniteIsFlaggedAndBestEffort) {
  Eigen::Matrix2d M;
  M << 1, 0, 0, -1;
  const auto qp = make_qp(M, Eigen::Vector2d(0, 1));
  const auto r = solve_box_qp(qp);
  EXPECT_FALSE(r.concave);
  EXPECT_GT(r.restarts_used, 2);
  // Global max: x1 = 1 (convex direction to the corner), x2 = 0.5.
  EXPECT_NEAR(r.value, 1.25, 1e-9);
  EXPECT_NEAR(r.value, grid_oracle(qp, 201).value, 1e-9);
}

TEST(SolveBoxQp, ReportValueMatchesEpisodeValue) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const ModelSpec spec = random_spec(rng, Variant::Multiproduct);
    const ParamVector theta = random_vector(rng, spec.param_dim());
    const auto r = plan_report(theta, spec);
    EXPECT_NEAR(r.value, episode_value(theta, r.plan, std::nullopt, spec), 1e-8);
  }
}

TEST(GridOracle, Examples) {
  const auto r = grid_oracle(make_qp(-Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Ones(1)), 101);
  EXPECT_DOUBLE_EQ(r.plan.at(1)(0), 0.5);
  EXPECT_DOUBLE_EQ(r.value, 0.25);
  const auto corner = grid_oracle(make_qp(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Ones(2), 2.0), 11);
  EXPECT_EQ(corner.plan.flat(), Eigen::VectorXd::Constant(2, 2.0));
}

TEST(GridOracle, TiesBreakLexicographically) {
  // Flat objective: every point ties; the origin is lexicographically first.
  const auto r = grid_oracle(make_qp(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2)), 5);
  EXPECT_EQ(r.plan.flat(), Eigen::VectorXd::Zero(2));
}

TEST(GridOracle, EnumerationGuard) {
  EXPECT_THROW(grid_oracle(make_qp(-Eigen::MatrixXd::Identity(5, 5), Eigen::VectorXd::Zero(5)), 101), InvalidInput);
  EXPECT_THROW(grid_oracle(make_qp(-Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1)), 1), InvalidInput);
}

TEST(Plan, CompositionExamples) {
  EXPECT_NEAR(plan(Eigen::Vector2d(7.5, -4), ModelSpec::plain(1, 0, 1, 1)).at(1)(0), 0.9375, 1e-9);
  const auto p = plan(Eigen::Vector2d(1, -1), ModelSpec::plain(2, 0, 1, 1));
  EXPECT_LT((p.flat() - Eigen::Vector2d(0.5, 0.5)).cwiseAbs().maxCoeff(), 1e-9);
}
