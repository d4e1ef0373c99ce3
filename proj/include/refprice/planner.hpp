#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "refprice/error.hpp"
#include "refprice/model.hpp"
#include "refprice/random.hpp"

namespace refprice {

/// maximize x'Mx + a'x over [0, p_max]^D, with x = [P_1; ...; P_H].
struct QuadraticProgram {
  Eigen::MatrixXd M;
  Eigen::VectorXd a;
  double p_max = 1.0;
  int products = 1;

  int dim() const { return static_cast<int>(a.size()); }
  double objective(const Eigen::VectorXd& x) const { return x.dot(M * x) + a.dot(x); }
};

struct SolveReport {
  PricePlan plan;
  double value = -std::numeric_limits<double>::infinity();
  bool concave = false;
  int restarts_used = 0;
  int iterations = 0;
};

struct SolverOptions {
  int max_iterations = 10000;
  double tolerance = 1e-9;
  int starts = 16;
  double nsd_tolerance = 1e-10;
  /// Seeds the random starts of the indefinite path.
  std::uint64_t seed = 0x5eed;
  /// Attempt an exact solve on the current free set every this many iterations (0 disables).
  int polish_every = 10;
};

/// Build (M, a) so that p'Mp + a'p equals episode_value(theta, p) for every plan p.
inline QuadraticProgram build_quadratic(const ParamVector& theta, const ModelSpec& spec, const Context& z = std::nullopt) {
  const EffectiveDemand e = effective_demand(theta, z, spec);
  const int q = spec.products();
  const int D = q * spec.H;
  QuadraticProgram qp;
  qp.p_max = spec.p_max;
  qp.products = q;
  qp.M = Eigen::MatrixXd::Zero(D, D);
  qp.a = e.alpha.replicate(spec.H, 1);

  const Eigen::MatrixXd diag = 0.5 * (e.beta + e.beta.transpose());
  for (int h = 1; h <= spec.H; ++h) {
    const int row = (h - 1) * q;
    qp.M.block(row, row, q, q) = diag;
    const int j = state_length(h, spec);
    if (j == 0) continue;
    const Eigen::MatrixXd& phi = e.phi[static_cast<std::size_t>(j - 1)];
    // Period h demand sees prices of periods h-j .. h-1.
    for (int r = 0; r < j; ++r) {
      const int col = (h - j + r - 1) * q;
      const auto block = phi.block(0, r * q, q, q);
      qp.M.block(row, col, q, q) += 0.5 * block;
      qp.M.block(col, row, q, q) += 0.5 * block.transpose();
    }
  }
  return qp;
}

inline double max_eigenvalue(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

/// True iff the largest eigenvalue of symmetric M is <= tol.
inline bool is_nsd(const Eigen::MatrixXd& M, double tol = 1e-10) { return max_eigenvalue(M) <= tol; }

namespace detail {

inline Eigen::VectorXd clamp_box(const Eigen::VectorXd& x, double p_max) { return x.cwiseMax(0.0).cwiseMin(p_max); }

inline PricePlan to_plan(const Eigen::VectorXd& x, int q) {
  return PricePlan(Eigen::Map<const Eigen::MatrixXd>(x.data(), q, x.size() / q));
}

struct LocalResult {
  Eigen::VectorXd x;
  double value;
  int iterations;
};

// Exact maximizer on the current free set with bound variables held fixed.
// Accepted only when the reduced problem is strictly concave and the result stays in the box.
inline bool polish(const QuadraticProgram& qp, Eigen::VectorXd& x, double& value) {
  const int D = qp.dim();
  const double edge = 1e-12 * qp.p_max;
  std::vector<int> free_idx;
  for (int i = 0; i < D; ++i) {
    if (x(i) > edge && x(i) < qp.p_max - edge) free_idx.push_back(i);
  }
  if (free_idx.empty()) return false;
  const int f = static_cast<int>(free_idx.size());
  Eigen::MatrixXd Mff(f, f);
  Eigen::VectorXd rhs(f);
  for (int r = 0; r < f; ++r) {
    const int i = free_idx[static_cast<std::size_t>(r)];
    double s = qp.a(i);
    for (int c = 0; c < D; ++c) s += 2.0 * qp.M(i, c) * x(c);
    for (int c = 0; c < f; ++c) {
      const int k = free_idx[static_cast<std::size_t>(c)];
      Mff(r, c) = -qp.M(i, k);
      s -= 2.0 * qp.M(i, k) * x(k);
    }
    rhs(r) = s;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(Mff);
  if (llt.info() != Eigen::Success) return false;
  // 2 M_ff x_f + (a_f + 2 M_fb x_b) = 0
  const Eigen::VectorXd xf = 0.5 * llt.solve(rhs);
  Eigen::VectorXd cand = x;
  for (int r = 0; r < f; ++r) {
    const double v = xf(r);
    if (!(v >= 0.0 && v <= qp.p_max)) return false;
    cand(free_idx[static_cast<std::size_t>(r)]) = v;
  }
  const double cv = qp.objective(cand);
  if (!(cv >= value)) return false;
  x = std::move(cand);
  value = cv;
  return true;
}

inline double pg_residual(const QuadraticProgram& qp, const Eigen::VectorXd& x) {
  const Eigen::VectorXd g = 2.0 * qp.M * x + qp.a;
  return (clamp_box(x + g, qp.p_max) - x).lpNorm<Eigen::Infinity>();
}

inline LocalResult projected_gradient(const QuadraticProgram& qp, Eigen::VectorXd x, double step,
                                      const SolverOptions& opts) {
  x = clamp_box(x, qp.p_max);
  double value = qp.objective(x);
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    if (pg_residual(qp, x) < opts.tolerance) break;
    const Eigen::VectorXd g = 2.0 * qp.M * x + qp.a;
    x = clamp_box(x + step * g, qp.p_max);
    value = qp.objective(x);
    if (opts.polish_every > 0 && (it + 1) % opts.polish_every == 0) polish(qp, x, value);
  }
  return LocalResult{std::move(x), value, it};
}

}  // namespace detail

/// Box-constrained QP maximization. Concave M goes through projected gradient
/// ascent from two starts; indefinite M through multistart projected gradient,
/// returning the best local maximizer found.
inline SolveReport solve_box_qp(const QuadraticProgram& qp, const SolverOptions& opts = {}) {
  const int D = qp.dim();
  detail::require(qp.M.rows() == D && qp.M.cols() == D, "quadratic program shape mismatch");
  detail::require(D % qp.products == 0, "dimension must be a multiple of the product count");

  SolveReport report;
  if (D == 0) {
    report.plan = PricePlan(Eigen::MatrixXd(qp.products, 0));
    report.value = 0.0;
    report.concave = true;
    return report;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(qp.M, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  const double norm = es.eigenvalues().cwiseAbs().maxCoeff();
  report.concave = lmax <= opts.nsd_tolerance;
  const double step = 1.0 / (2.0 * (norm + 1e-12));

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(detail::clamp_box(-0.5 * qp.M.completeOrthogonalDecomposition().solve(qp.a), qp.p_max));
  starts.push_back(Eigen::VectorXd::Constant(D, 0.5 * qp.p_max));
  if (!report.concave) {
    Rng rng(opts.seed);
    std::bernoulli_distribution coin(0.5);
    for (int s = static_cast<int>(starts.size()); s < opts.starts; ++s) {
      Eigen::VectorXd x(D);
      if (s % 2 == 0) {
        for (int i = 0; i < D; ++i) x(i) = coin(rng) ? qp.p_max : 0.0;
      } else {
        for (int i = 0; i < D; ++i) x(i) = uniform(rng, 0.0, qp.p_max);
      }
      starts.push_back(std::move(x));
    }
  }

  Eigen::VectorXd best;
  for (const auto& x0 : starts) {
    detail::LocalResult r = detail::projected_gradient(qp, x0, step, opts);
    report.iterations += r.iterations;
    ++report.restarts_used;
    if (best.size() == 0 || r.value > report.value) {
      report.value = r.value;
      best = std::move(r.x);
    }
  }
  report.plan = detail::to_plan(best, qp.products);
  return report;
}

/// Exhaustive search over a uniform grid (both endpoints included). Ties go
/// to the lexicographically smallest grid point.
inline SolveReport grid_oracle(const QuadraticProgram& qp, int points_per_dim) {
  const int D = qp.dim();
  if (points_per_dim < 2) throw InvalidInput("grid oracle needs at least 2 points per dimension");
  if (static_cast<double>(D) * std::log(static_cast<double>(points_per_dim)) > std::log(1e8) + 1e-9)
    throw InvalidInput("grid oracle enumeration exceeds 1e8 points");

  const double spacing = qp.p_max / (points_per_dim - 1);
  const auto eval = [&qp, D](const Eigen::VectorXd& v) {
    double total = 0.0;
    for (int i = 0; i < D; ++i) {
      double row = qp.a(i);
      for (int j = 0; j < D; ++j) row += qp.M(i, j) * v(j);
      total += v(i) * row;
    }
    return total;
  };
  std::vector<int> idx(static_cast<std::size_t>(D), 0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(D);
  Eigen::VectorXd best = x;
  double best_value = eval(x);
  while (true) {
    int pos = D - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == points_per_dim - 1) {
      idx[static_cast<std::size_t>(pos)] = 0;
      x(pos) = 0.0;
      --pos;
    }
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    x(pos) = idx[static_cast<std::size_t>(pos)] == points_per_dim - 1 ? qp.p_max : idx[static_cast<std::size_t>(pos)] * spacing;
    const double v = eval(x);
    if (v > best_value) {
      best_value = v;
      best = x;
    }
  }
  SolveReport report;
  report.plan = detail::to_plan(best, qp.products);
  report.value = best_value;
  report.concave = is_nsd(qp.M);
  report.restarts_used = 0;
  report.iterations = 0;
  return report;
}

/// Optimal plan for theta: build_quadratic then solve_box_qp.
inline SolveReport plan_report(const ParamVector& theta, const ModelSpec& spec, const Context& z = std::nullopt,
                               const SolverOptions& opts = {}) {
  return solve_box_qp(build_quadratic(theta, spec, z), opts);
}

inline PricePlan plan(const ParamVector& theta, const ModelSpec& spec, const Context& z = std::nullopt,
                      const SolverOptions& opts = {}) {
  return plan_report(theta, spec, z, opts).plan;
}

}  // namespace refprice
