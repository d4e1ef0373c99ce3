#pragma once

// Test-only reference computations, written independently of the library paths they check.

#include <Eigen/Core>
#include <Eigen/LU>

#include <random>
#include <vector>

#include "refprice/model.hpp"
#include "refprice/strategies.hpp"

namespace refprice::testing {

/// Closed-form Gaussian linear-regression posterior via explicit inverses:
/// Sigma' = (Sigma0^-1 + X'X / s2)^-1, mu' = Sigma' (Sigma0^-1 mu0 + X'w / s2).
struct DenseRidge {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

inline DenseRidge dense_ridge(const Eigen::VectorXd& mu0, const Eigen::MatrixXd& sigma0, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& w, double s2) {
  const Eigen::MatrixXd prec0 = sigma0.fullPivLu().inverse();
  const Eigen::MatrixXd prec = prec0 + X.transpose() * X / s2;
  DenseRidge out;
  out.sigma = prec.fullPivLu().inverse();
  out.mu = out.sigma * (prec0 * mu0 + X.transpose() * w / s2);
  return out;
}

/// Episode revenue of a scalar-price Plain plan by direct index arithmetic on theta.
inline double plain_episode_value(const Eigen::VectorXd& theta, const std::vector<double>& p, int n) {
  const double alpha = theta(0), beta = theta(1);
  double total = 0.0;
  for (int h = 1; h <= static_cast<int>(p.size()); ++h) {
    double d = alpha + beta * p[h - 1];
    const int j = std::min(h - 1, n);
    // phi_j starts at 2 + j(j-1)/2; its c-th coefficient multiplies price at period h-j+c.
    const int off = 2 + j * (j - 1) / 2;
    for (int c = 0; c < j; ++c) d += theta(off + c) * p[h - j + c - 1];
    total += p[h - 1] * d;
  }
  return total;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double sd = 1.0) {
  std::normal_distribution<double> N(0.0, sd);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = N(rng);
  return v;
}

inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index n) {
  Eigen::MatrixXd A(n, n);
  std::normal_distribution<double> N(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) A(i, j) = N(rng);
  return A * A.transpose() / static_cast<double>(n) + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

/// Random plan in the box for any variant.
inline PricePlan random_plan(std::mt19937_64& rng, const ModelSpec& spec) {
  std::uniform_real_distribution<double> U(0.0, spec.p_max);
  Eigen::MatrixXd m(spec.products(), spec.H);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = U(rng);
  return PricePlan(std::move(m));
}

inline Context random_context(std::mt19937_64& rng, const ModelSpec& spec) {
  if (spec.variant != Variant::Covariate) return std::nullopt;
  return random_vector(rng, spec.m);
}

/// Random model spec of the given variant with small dimensions.
inline ModelSpec random_spec(std::mt19937_64& rng, Variant v) {
  std::uniform_int_distribution<int> Hd(1, 7), nd(0, 4), qd(1, 3), md(1, 3);
  const int H = Hd(rng);
  const int n = std::min(nd(rng), std::max(H - 1, 0));
  switch (v) {
    case Variant::Plain: return ModelSpec::plain(H, n, 1.5, 2.0);
    case Variant::Covariate: return ModelSpec::covariate(H, n, md(rng), 1.5, 2.0);
    case Variant::Multiproduct: return ModelSpec::multiproduct(H, n, qd(rng), 1.5, 2.0);
  }
  return ModelSpec{};
}

struct SyncReplay {
  std::vector<PricePlan> plans;
  std::vector<double> revenue;
  GaussianBelief belief;
};

// Sequential TP episodes with one plan draw per episode and a belief update
// after every period.
inline SyncReplay replay_sequential(const ParamVector& theta, GaussianBelief belief, const ModelSpec& spec,
                                    const std::vector<int>& horizons, Rng& noise, Rng& rng) {
  SyncReplay out{{}, {}, belief};
  for (int H : horizons) {
    const ModelSpec ek = spec.with_horizon(H);
    const TpDraw d = tp_plan_episode(out.belief, ek, std::nullopt, rng);
    State s;
    double rev = 0;
    for (int h = 1; h <= H; ++h) {
      const Eigen::VectorXd p = d.plan.at(h);
      const Eigen::VectorXd dm = expected_demand(theta, p, s, std::nullopt, h, ek);
      const Eigen::VectorXd xi = Eigen::VectorXd::Constant(1, standard_normal(noise));
      const DemandDraw draw = demand_from_noise(dm, xi, spec.sigma2);
      rev += p.dot(dm);
      out.belief = out.belief.updated(featurize(p, s, std::nullopt, h, ek), draw.w, spec.sigma2);
      s = advance_state(s, p, ek);
    }
    out.plans.push_back(d.plan);
    out.revenue.push_back(rev);
  }
  return out;
}

}  // namespace refprice::testing
