#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <utility>

#include "refprice/error.hpp"
#include "refprice/model.hpp"
#include "refprice/random.hpp"

namespace refprice {

/// Gaussian belief over theta kept in information form (Lambda = Sigma^-1,
/// b = Lambda mu). Mean, covariance and a sampling factor are materialized
/// whenever the information form changes, so a belief is an immutable value.
class GaussianBelief {
 public:
  GaussianBelief() = default;

  static GaussianBelief from_moments(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
    detail::require(sigma.rows() == sigma.cols() && sigma.rows() == mu.size(), "prior mean/covariance shape mismatch");
    Eigen::MatrixXd sym = 0.5 * (sigma + sigma.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(sym);
    if (llt.info() != Eigen::Success) throw InvalidInput("prior covariance is not positive definite");
    Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(mu.size(), mu.size()));
    precision = 0.5 * (precision + precision.transpose());
    Eigen::VectorXd info = precision * mu;
    return GaussianBelief(std::move(precision), std::move(info));
  }

  static GaussianBelief from_information(Eigen::MatrixXd precision, Eigen::VectorXd info) {
    detail::require(precision.rows() == precision.cols() && precision.rows() == info.size(),
                    "precision/information shape mismatch");
    return GaussianBelief(std::move(precision), std::move(info));
  }

  int dim() const { return static_cast<int>(info_.size()); }
  const Eigen::MatrixXd& precision() const { return precision_; }
  const Eigen::VectorXd& information() const { return info_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  /// Lower Cholesky factor of the covariance (possibly of a jittered copy).
  const Eigen::MatrixXd& covariance_factor() const { return factor_; }
  /// Diagonal jitter that was needed to factor the covariance (0 if none).
  double jitter() const { return jitter_; }

  /// Conjugate update with design rows X (N x dim) and targets w (N):
  /// Lambda += X'X / sigma2, b += X'w / sigma2.
  GaussianBelief updated(const Eigen::MatrixXd& rows, const Eigen::VectorXd& targets, double sigma2) const {
    detail::require(rows.rows() == targets.size(), "row and target counts differ");
    if (rows.rows() == 0) return *this;
    detail::require(rows.cols() == dim(), "feature row length does not match belief dimension");
    detail::require(sigma2 > 0.0, "sigma2 must be positive");
    Eigen::MatrixXd precision = precision_;
    precision.selfadjointView<Eigen::Lower>().rankUpdate(rows.transpose(), 1.0 / sigma2);
    precision.triangularView<Eigen::StrictlyUpper>() = precision.transpose();
    Eigen::VectorXd info = info_ + rows.transpose() * targets / sigma2;
    return GaussianBelief(std::move(precision), std::move(info));
  }

  /// mu + L xi for a caller-supplied standard normal vector xi.
  ParamVector sample_from(const Eigen::VectorXd& xi) const {
    detail::require(xi.size() == dim(), "noise vector length does not match belief dimension");
    return mean_ + factor_.triangularView<Eigen::Lower>() * xi;
  }

  ParamVector sample(Rng& rng) const {
    Eigen::VectorXd xi(dim());
    for (int i = 0; i < dim(); ++i) xi(i) = standard_normal(rng);
    return sample_from(xi);
  }

 private:
  GaussianBelief(Eigen::MatrixXd precision, Eigen::VectorXd info)
      : precision_(std::move(precision)), info_(std::move(info)) {
    materialize();
  }

  void materialize() {
    const Eigen::Index d = info_.size();
    Eigen::LLT<Eigen::MatrixXd> llt(precision_);
    if (llt.info() != Eigen::Success) throw NumericalError("posterior precision is not positive definite");
    mean_ = llt.solve(info_);
    covariance_ = llt.solve(Eigen::MatrixXd::Identity(d, d));
    covariance_ = 0.5 * (covariance_ + covariance_.transpose());

    Eigen::LLT<Eigen::MatrixXd> chol(covariance_);
    jitter_ = 0.0;
    for (double eps : {1e-10, 1e-8}) {
      if (chol.info() == Eigen::Success) break;
      jitter_ = eps;
      chol.compute(covariance_ + eps * Eigen::MatrixXd::Identity(d, d));
    }
    if (chol.info() != Eigen::Success) throw NumericalError("posterior covariance could not be factored");
    factor_ = chol.matrixL();
  }

  Eigen::MatrixXd precision_;
  Eigen::VectorXd info_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd factor_;
  double jitter_ = 0.0;
};

inline GaussianBelief posterior_update(const GaussianBelief& belief, const Eigen::MatrixXd& rows,
                                       const Eigen::VectorXd& targets, double sigma2) {
  return belief.updated(rows, targets, sigma2);
}

inline ParamVector posterior_sample(const GaussianBelief& belief, Rng& rng) { return belief.sample(rng); }

inline ParamVector posterior_mean(const GaussianBelief& belief) { return belief.mean(); }

/// Independent Gaussian prior from per-block means and variances.
struct BlockPrior {
  double alpha_mean = 0.0, alpha_var = 1.0;
  double beta_mean = 0.0, beta_var = 1.0;
  double phi_mean = 0.0, phi_var = 1.0;

  std::pair<Eigen::VectorXd, Eigen::MatrixXd> moments(const ModelSpec& spec) const {
    const int d = spec.param_dim();
    Eigen::VectorXd mu(d);
    Eigen::VectorXd var(d);
    const int a = spec.alpha_size();
    const int b = spec.beta_size();
    mu.head(a).setConstant(alpha_mean);
    var.head(a).setConstant(alpha_var);
    if (spec.variant == Variant::Multiproduct) {
      // Own-price effects on the diagonal of beta, cross effects centered at zero.
      Eigen::MatrixXd bm = Eigen::MatrixXd::Zero(spec.q, spec.q);
      bm.diagonal().setConstant(beta_mean);
      mu.segment(a, b) = bm.reshaped();
    } else {
      mu.segment(a, b).setConstant(beta_mean);
    }
    var.segment(a, b).setConstant(beta_var);
    mu.tail(d - a - b).setConstant(phi_mean);
    var.tail(d - a - b).setConstant(phi_var);
    return {mu, var.asDiagonal()};
  }

  GaussianBelief belief(const ModelSpec& spec) const {
    auto [mu, sigma] = moments(spec);
    return GaussianBelief::from_moments(mu, sigma);
  }

  ParamVector draw(const ModelSpec& spec, Rng& rng) const {
    auto [mu, sigma] = moments(spec);
    ParamVector theta(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i) theta(i) = mu(i) + std::sqrt(sigma(i, i)) * standard_normal(rng);
    return theta;
  }
};

}  // namespace refprice
