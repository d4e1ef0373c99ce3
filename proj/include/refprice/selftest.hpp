#pragma once

// Fast invariant suite behind `refprice selftest`.

#include <Eigen/Core>
#include <Eigen/LU>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "refprice/harness.hpp"
#include "refprice/planner.hpp"
#include "refprice/posterior.hpp"
#include "refprice/random.hpp"

namespace refprice {

struct SelftestOptions {
  std::uint64_t seed = 20240601;
  /// Perturbs the quadratic-form matrix before checking it (mutation test).
  bool corrupt_quadratic = false;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

namespace detail {

inline std::string format_sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline Eigen::VectorXd normal_vector(Rng& rng, Eigen::Index n, double sd = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = sd * standard_normal(rng);
  return v;
}

inline ModelSpec random_small_spec(Rng& rng, Variant v) {
  const int H = 1 + static_cast<int>(rng() % 6);
  const int n = std::min(static_cast<int>(rng() % 4), H - 1);
  const int k = 1 + static_cast<int>(rng() % 3);
  switch (v) {
    case Variant::Covariate: return ModelSpec::covariate(H, n, k, 1.5, 2.0);
    case Variant::Multiproduct: return ModelSpec::multiproduct(H, n, k, 1.5, 2.0);
    case Variant::Plain: break;
  }
  return ModelSpec::plain(H, n, 1.5, 2.0);
}

inline QuadraticProgram selftest_quadratic(const ParamVector& theta, const ModelSpec& spec, const Context& z,
                                           const SelftestOptions& o) {
  QuadraticProgram qp = build_quadratic(theta, spec, z);
  if (o.corrupt_quadratic) qp.M(0, qp.dim() - 1) += 0.125;
  return qp;
}

inline CheckResult check_conjugacy(const SelftestOptions& o) {
  Rng rng = make_rng(o.seed, {1});
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + static_cast<int>(rng() % 6);
    const int n = static_cast<int>(rng() % 20);
    Eigen::MatrixXd A(d, d);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = standard_normal(rng);
    const Eigen::MatrixXd sigma0 = A * A.transpose() / d + 0.5 * Eigen::MatrixXd::Identity(d, d);
    const Eigen::VectorXd mu0 = normal_vector(rng, d);
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = standard_normal(rng);
    const Eigen::VectorXd w = normal_vector(rng, n);
    const double s2 = 1.5;

    const auto prior = GaussianBelief::from_moments(mu0, sigma0);
    const auto batch = prior.updated(X, w, s2);
    auto seq = prior;
    for (int i = 0; i < n; ++i) seq = seq.updated(X.row(i), w.segment(i, 1), s2);

    const Eigen::MatrixXd prec0 = sigma0.fullPivLu().inverse();
    const Eigen::MatrixXd sigma = (prec0 + X.transpose() * X / s2).fullPivLu().inverse();
    const Eigen::VectorXd mu = sigma * (prec0 * mu0 + X.transpose() * w / s2);
    for (const GaussianBelief* b : {&batch, static_cast<const GaussianBelief*>(&seq)}) {
      worst = std::max(worst, (b->mean() - mu).cwiseAbs().maxCoeff());
      worst = std::max(worst, (b->covariance() - sigma).cwiseAbs().maxCoeff());
    }
  }
  return CheckResult{"conjugacy", worst < 1e-8, "max abs error " + format_sci(worst)};
}

inline CheckResult check_quadratic_form(const SelftestOptions& o) {
  Rng rng = make_rng(o.seed, {2});
  double worst = 0.0;
  for (Variant v : {Variant::Plain, Variant::Covariate, Variant::Multiproduct}) {
    for (int trial = 0; trial < 300; ++trial) {
      const ModelSpec spec = random_small_spec(rng, v);
      const ParamVector theta = normal_vector(rng, spec.param_dim(), 2.0);
      const Context z = v == Variant::Covariate ? Context(normal_vector(rng, spec.m)) : std::nullopt;
      Eigen::MatrixXd prices(spec.products(), spec.H);
      for (Eigen::Index i = 0; i < prices.size(); ++i) prices.data()[i] = uniform(rng, 0.0, spec.p_max);
      const PricePlan plan(prices);
      const auto qp = selftest_quadratic(theta, spec, z, o);
      worst = std::max(worst, std::abs(qp.objective(plan.flat()) - episode_value(theta, plan, z, spec)));
    }
  }
  return CheckResult{"quadratic-form", worst < 1e-10, "max abs error " + format_sci(worst)};
}

inline CheckResult check_grid(const SelftestOptions& o) {
  Rng rng = make_rng(o.seed, {3});
  const ModelSpec spec = ModelSpec::plain(3, 2, 1.0, 1.0);
  double worst = 0.0;
  for (int found = 0; found < 5;) {
    ParamVector theta = normal_vector(rng, spec.param_dim());
    theta(0) = std::abs(theta(0)) + 0.5;
    theta(1) = -1.0 - std::abs(theta(1));
    const auto qp = selftest_quadratic(theta, spec, std::nullopt, o);
    if (!is_nsd(qp.M)) continue;
    ++found;
    const double solver = episode_value(theta, solve_box_qp(qp).plan, std::nullopt, spec);
    const double grid = episode_value(theta, grid_oracle(qp, 101).plan, std::nullopt, spec);
    worst = std::max(worst, grid - solver);
  }
  return CheckResult{"grid-spot-check", worst <= 1e-2, "max grid advantage " + format_sci(worst)};
}

inline CheckResult check_bound(const SelftestOptions&) {
  BoundInputs in;
  in.K = 10;
  in.H = 2;
  in.d_max = 5;
  in.log_N = std::log(100.0);
  const double b = regret_bound(in).beta_K;
  return CheckResult{"bound", std::abs(b - 89.1061) < 1e-3, "beta_K " + format_sci(b)};
}

}  // namespace detail

inline std::vector<CheckResult> run_selftest(const SelftestOptions& o = {}) {
  using Check = std::function<CheckResult(const SelftestOptions&)>;
  const std::vector<std::pair<std::string, Check>> checks = {{"conjugacy", detail::check_conjugacy},
                                                             {"quadratic-form", detail::check_quadratic_form},
                                                             {"grid-spot-check", detail::check_grid},
                                                             {"bound", detail::check_bound}};
  std::vector<CheckResult> out;
  for (const auto& [name, check] : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = check(o);
    } catch (const std::exception& e) {
      r.name = name;
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace refprice
