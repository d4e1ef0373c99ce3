#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "refprice/error.hpp"
#include "refprice/random.hpp"

namespace refprice {

enum class Variant { Plain, Covariate, Multiproduct };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::Plain: return "plain";
    case Variant::Covariate: return "covariate";
    case Variant::Multiproduct: return "multiproduct";
  }
  return "?";
}

/// Flat parameter encoding theta = (alpha, beta, phi_1 ... phi_n).
/// Matrix-valued blocks are stored column-stacked.
using ParamVector = Eigen::VectorXd;

/// Optional per-episode context vector z (Covariate variant only).
using Context = std::optional<Eigen::VectorXd>;

/// Demand-model variant plus dimensions.
///
///   Plain        theta = [alpha, beta, phi_1', ..., phi_n'],           phi_i in R^i
///   Covariate    theta = [alpha, beta' (m), vec(phi_1)', ...],         phi_i in R^{m x i}
///   Multiproduct theta = [alpha' (q), vec(beta)' (q x q), vec(phi_1)', ...], phi_i in R^{q x qi}
struct ModelSpec {
  Variant variant = Variant::Plain;
  int H = 1;
  int n = 0;
  int q = 1;
  int m = 1;
  double p_max = 1.0;
  double sigma2 = 1.0;

  static ModelSpec plain(int H, int n, double p_max, double sigma2) {
    return ModelSpec{Variant::Plain, H, n, 1, 1, p_max, sigma2};
  }
  static ModelSpec covariate(int H, int n, int m, double p_max, double sigma2) {
    return ModelSpec{Variant::Covariate, H, n, 1, m, p_max, sigma2};
  }
  static ModelSpec multiproduct(int H, int n, int q, double p_max, double sigma2) {
    return ModelSpec{Variant::Multiproduct, H, n, q, 1, p_max, sigma2};
  }

  /// Products priced per period (length of one price entry).
  int products() const { return variant == Variant::Multiproduct ? q : 1; }

  int alpha_size() const { return products(); }
  int beta_size() const { return variant == Variant::Covariate ? m : q * q; }
  /// phi_i holds phi_unit() * i coefficients.
  int phi_unit() const { return variant == Variant::Covariate ? m : q * q; }
  int phi_rows() const { return variant == Variant::Covariate ? m : products(); }
  int phi_cols(int i) const { return variant == Variant::Multiproduct ? q * i : i; }

  int beta_offset() const { return alpha_size(); }
  /// Offset of phi_i (1-based i) in the flat vector.
  int phi_offset(int i) const { return alpha_size() + beta_size() + phi_unit() * (i - 1) * i / 2; }

  int param_dim() const { return alpha_size() + beta_size() + phi_unit() * n * (n + 1) / 2; }

  /// Same variant with memory switched off; the memoryless learner's model.
  ModelSpec memoryless() const {
    ModelSpec s = *this;
    s.n = 0;
    return s;
  }

  ModelSpec with_horizon(int horizon) const {
    ModelSpec s = *this;
    s.H = horizon;
    return s;
  }

  void validate() const {
    if (H < 1) throw InvalidInput("H must be >= 1");
    if (n < 0) throw InvalidInput("n must be >= 0");
    if (q < 1) throw InvalidInput("q must be >= 1");
    if (m < 1) throw InvalidInput("m must be >= 1");
    if (variant != Variant::Multiproduct && q != 1) throw InvalidInput("q must be 1 unless variant is multiproduct");
    if (variant != Variant::Covariate && m != 1) throw InvalidInput("m must be 1 unless variant is covariate");
    if (!(p_max > 0.0) || !std::isfinite(p_max)) throw InvalidInput("p_max must be positive");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw InvalidInput("sigma2 must be positive");
  }

  bool operator==(const ModelSpec&) const = default;
};

/// Unpacked view of theta with matrix-shaped blocks.
struct DemandParams {
  Eigen::VectorXd alpha;            // q (1 for Plain/Covariate)
  Eigen::MatrixXd beta;             // 1x1, m x 1, or q x q
  std::vector<Eigen::MatrixXd> phi; // phi[i-1]: phi_rows x phi_cols(i)
};

inline void check_theta(const ParamVector& theta, const ModelSpec& spec) {
  detail::require(theta.size() == spec.param_dim(),
                  "parameter vector length " + std::to_string(theta.size()) + " does not match model dimension " +
                      std::to_string(spec.param_dim()));
}

inline DemandParams unpack(const ParamVector& theta, const ModelSpec& spec) {
  check_theta(theta, spec);
  DemandParams out;
  out.alpha = theta.head(spec.alpha_size());
  if (spec.variant == Variant::Covariate) {
    out.beta = theta.segment(spec.beta_offset(), spec.m);
  } else {
    out.beta = Eigen::Map<const Eigen::MatrixXd>(theta.data() + spec.beta_offset(), spec.q, spec.q);
  }
  for (int i = 1; i <= spec.n; ++i) {
    out.phi.emplace_back(
        Eigen::Map<const Eigen::MatrixXd>(theta.data() + spec.phi_offset(i), spec.phi_rows(), spec.phi_cols(i)));
  }
  return out;
}

inline ParamVector pack(const DemandParams& p, const ModelSpec& spec) {
  ParamVector theta(spec.param_dim());
  detail::require(p.alpha.size() == spec.alpha_size(), "alpha block has wrong size");
  detail::require(p.beta.size() == spec.beta_size(), "beta block has wrong size");
  detail::require(static_cast<int>(p.phi.size()) == spec.n, "expected n phi blocks");
  theta.head(spec.alpha_size()) = p.alpha;
  theta.segment(spec.beta_offset(), spec.beta_size()) = p.beta.reshaped();
  for (int i = 1; i <= spec.n; ++i) {
    const auto& block = p.phi[static_cast<std::size_t>(i - 1)];
    detail::require(block.rows() == spec.phi_rows() && block.cols() == spec.phi_cols(i), "phi block has wrong shape");
    theta.segment(spec.phi_offset(i), spec.phi_unit() * i) = block.reshaped();
  }
  return theta;
}

/// Price history within an episode: at most n entries, oldest first.
class State {
 public:
  State() = default;
  explicit State(std::vector<Eigen::VectorXd> entries) : entries_(std::move(entries)) {}

  int size() const { return static_cast<int>(entries_.size()); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Eigen::VectorXd>& entries() const { return entries_; }

  /// Entries stacked oldest first into one vector of length q * size().
  Eigen::VectorXd stacked() const {
    if (entries_.empty()) return Eigen::VectorXd();
    const Eigen::Index q = entries_.front().size();
    Eigen::VectorXd s(q * size());
    for (int i = 0; i < size(); ++i) s.segment(q * i, q) = entries_[static_cast<std::size_t>(i)];
    return s;
  }

  bool operator==(const State& other) const {
    if (size() != other.size()) return false;
    for (int i = 0; i < size(); ++i) {
      if (entries_[static_cast<std::size_t>(i)] != other.entries_[static_cast<std::size_t>(i)]) return false;
    }
    return true;
  }

 private:
  std::vector<Eigen::VectorXd> entries_;
};

/// One price entry per period: column h-1 of a q x H matrix.
struct PricePlan {
  Eigen::MatrixXd prices;

  PricePlan() = default;
  explicit PricePlan(Eigen::MatrixXd p) : prices(std::move(p)) {}

  static PricePlan scalar(const std::vector<double>& p) {
    Eigen::MatrixXd m(1, static_cast<Eigen::Index>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = p[i];
    return PricePlan(std::move(m));
  }

  int horizon() const { return static_cast<int>(prices.cols()); }
  int products() const { return static_cast<int>(prices.rows()); }
  /// Price entry for 1-based period h.
  Eigen::VectorXd at(int h) const { return prices.col(h - 1); }
  /// Column-stacked qH vector (period-major).
  Eigen::VectorXd flat() const { return prices.reshaped(); }
};

inline Eigen::VectorXd price_entry(double p) { return Eigen::VectorXd::Constant(1, p); }

inline bool in_box(const Eigen::VectorXd& price, double p_max) {
  return (price.array() >= 0.0).all() && (price.array() <= p_max).all();
}

inline void check_plan(const PricePlan& plan, const ModelSpec& spec) {
  detail::require(plan.horizon() == spec.H, "plan length must equal H");
  detail::require(plan.products() == spec.products(), "plan entry size must equal q");
  if (!((plan.prices.array() >= 0.0).all() && (plan.prices.array() <= spec.p_max).all()))
    throw InvalidInput("plan price outside [0, p_max]");
}

/// Expected state length at 1-based period h.
inline int state_length(int h, const ModelSpec& spec) { return std::min(spec.n, h - 1); }

/// State for the next period: append price, drop the oldest entry past n.
inline State advance_state(const State& state, const Eigen::VectorXd& price, const ModelSpec& spec) {
  if (price.size() != spec.products()) throw ContractViolation("price entry size must equal q");
  if (!in_box(price, spec.p_max)) throw InvalidInput("price outside [0, p_max]");
  if (spec.n == 0) return State();
  std::vector<Eigen::VectorXd> next;
  next.reserve(static_cast<std::size_t>(spec.n));
  const auto& cur = state.entries();
  const std::size_t keep = std::min<std::size_t>(cur.size(), static_cast<std::size_t>(spec.n - 1));
  next.insert(next.end(), cur.end() - static_cast<std::ptrdiff_t>(keep), cur.end());
  next.push_back(price);
  return State(std::move(next));
}

namespace detail {

inline void check_inputs(const Eigen::VectorXd& price, const State& state, const Context& z, int h,
                         const ModelSpec& spec) {
  require(h >= 1, "period index must be >= 1");
  require(price.size() == spec.products(), "price entry size must equal q");
  require(state.size() == state_length(h, spec),
          "state length " + std::to_string(state.size()) + " does not match period " + std::to_string(h));
  for (const auto& e : state.entries()) require(e.size() == spec.products(), "state entry size must equal q");
  if (spec.variant == Variant::Covariate) {
    require(z.has_value() && z->size() == spec.m, "covariate variant requires an m-dimensional context");
  } else {
    require(!z.has_value(), "context is only valid for the covariate variant");
  }
}

}  // namespace detail

/// Coefficients after folding in the context: every variant becomes
/// D = alpha + B P + Phi_j S with B q x q and Phi_j q x qj.
struct EffectiveDemand {
  Eigen::VectorXd alpha;
  Eigen::MatrixXd beta;
  std::vector<Eigen::MatrixXd> phi;
};

inline EffectiveDemand effective_demand(const ParamVector& theta, const Context& z, const ModelSpec& spec) {
  DemandParams p = unpack(theta, spec);
  if (spec.variant != Variant::Covariate) return EffectiveDemand{std::move(p.alpha), std::move(p.beta), std::move(p.phi)};
  detail::require(z.has_value() && z->size() == spec.m, "covariate variant requires an m-dimensional context");
  EffectiveDemand e;
  e.alpha = p.alpha;
  e.beta = Eigen::MatrixXd::Constant(1, 1, z->dot(p.beta.col(0)));
  for (const auto& block : p.phi) e.phi.emplace_back(z->transpose() * block);
  return e;
}

/// Expected (log-scale) demand at 1-based period h. Returns a q-vector.
inline Eigen::VectorXd expected_demand(const ParamVector& theta, const Eigen::VectorXd& price, const State& state,
                                       const Context& z, int h, const ModelSpec& spec) {
  detail::check_inputs(price, state, z, h, spec);
  const EffectiveDemand e = effective_demand(theta, z, spec);
  Eigen::VectorXd d = e.alpha + e.beta * price;
  if (!state.empty()) d += e.phi[static_cast<std::size_t>(state.size() - 1)] * state.stacked();
  return d;
}

/// Design rows x such that expected_demand == x * theta. Returns q x param_dim.
inline Eigen::MatrixXd featurize(const Eigen::VectorXd& price, const State& state, const Context& z, int h,
                                 const ModelSpec& spec) {
  detail::check_inputs(price, state, z, h, spec);
  const int q = spec.products();
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(q, spec.param_dim());
  const Eigen::VectorXd s = state.stacked();
  const int j = state.size();

  switch (spec.variant) {
    case Variant::Covariate: {
      x(0, 0) = 1.0;
      x.block(0, spec.beta_offset(), 1, spec.m) = price(0) * z->transpose();
      if (j > 0) {
        for (int c = 0; c < j; ++c) x.block(0, spec.phi_offset(j) + c * spec.m, 1, spec.m) = s(c) * z->transpose();
      }
      break;
    }
    case Variant::Plain:
    case Variant::Multiproduct: {
      // [I_q, P' (x) I_q, 0, S' (x) I_q, 0]
      x.leftCols(q).setIdentity();
      for (int c = 0; c < q; ++c) x.block(0, spec.beta_offset() + c * q, q, q).diagonal().setConstant(price(c));
      if (j > 0) {
        for (int c = 0; c < q * j; ++c) x.block(0, spec.phi_offset(j) + c * q, q, q).diagonal().setConstant(s(c));
      }
      break;
    }
  }
  return x;
}

/// Realized demand draw: w = d + sigma * xi, y = exp(w - sigma2 / 2).
struct DemandDraw {
  Eigen::VectorXd y;
  Eigen::VectorXd w;
};

inline DemandDraw demand_from_noise(const Eigen::VectorXd& d, const Eigen::VectorXd& xi, double sigma2) {
  detail::require(d.size() == xi.size(), "noise and demand sizes differ");
  DemandDraw out;
  out.w = d + std::sqrt(sigma2) * xi;
  out.y = (out.w.array() - 0.5 * sigma2).exp().matrix();
  return out;
}

inline DemandDraw sample_demand(Rng& rng, const Eigen::VectorXd& d, double sigma2) {
  Eigen::VectorXd xi(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) xi(i) = standard_normal(rng);
  return demand_from_noise(d, xi, sigma2);
}

/// Expected revenue sum_h P_h' D_h of a full plan under theta.
inline double episode_value(const ParamVector& theta, const PricePlan& plan, const Context& z, const ModelSpec& spec) {
  check_plan(plan, spec);
  State s;
  double value = 0.0;
  for (int h = 1; h <= spec.H; ++h) {
    const Eigen::VectorXd p = plan.at(h);
    value += p.dot(expected_demand(theta, p, s, z, h, spec));
    s = advance_state(s, p, spec);
  }
  return value;
}

}  // namespace refprice
