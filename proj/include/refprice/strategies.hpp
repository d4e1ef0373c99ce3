#pragma once

#include <Eigen/Core>

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "refprice/error.hpp"
#include "refprice/model.hpp"
#include "refprice/planner.hpp"
#include "refprice/posterior.hpp"
#include "refprice/random.hpp"

namespace refprice {

enum class StrategyKind { TP, MemorylessTS, WeakTS, CertaintyEquivalence, EpsGreedy };

/// Config-file names: TP, memoryless-ts, weak-ts, ce, eps-greedy.
inline const char* config_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::TP: return "TP";
    case StrategyKind::MemorylessTS: return "memoryless-ts";
    case StrategyKind::WeakTS: return "weak-ts";
    case StrategyKind::CertaintyEquivalence: return "ce";
    case StrategyKind::EpsGreedy: return "eps-greedy";
  }
  return "?";
}

inline std::optional<StrategyKind> parse_strategy_kind(const std::string& s) {
  for (StrategyKind k : {StrategyKind::TP, StrategyKind::MemorylessTS, StrategyKind::WeakTS,
                         StrategyKind::CertaintyEquivalence, StrategyKind::EpsGreedy}) {
    if (s == config_name(k)) return k;
  }
  return std::nullopt;
}

struct StrategyConfig {
  StrategyKind kind = StrategyKind::TP;
  std::string label;
  double epsilon = 0.0;
  int nsd_resample_limit = 100;

  std::string name() const { return label.empty() ? std::string(config_name(kind)) : label; }

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidInput("epsilon must lie in [0, 1]");
    if (nsd_resample_limit < 1) throw InvalidInput("nsd_resample_limit must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Building blocks, one per strategy rule.

struct TpDraw {
  PricePlan plan;
  ParamVector theta;
  int attempts = 0;
  bool exhausted = false;
  bool concave = false;
};

/// Sample theta from the belief until M is NSD (at most `limit` draws), then plan.
/// On exhaustion the last sample is planned through the indefinite path.
inline TpDraw tp_plan_episode(const GaussianBelief& belief, const ModelSpec& spec, const Context& z, Rng& rng,
                              int limit = 100, const SolverOptions& opts = {}) {
  TpDraw out;
  QuadraticProgram qp;
  for (out.attempts = 1; out.attempts <= limit; ++out.attempts) {
    out.theta = belief.sample(rng);
    qp = build_quadratic(out.theta, spec, z);
    if (is_nsd(qp.M, opts.nsd_tolerance)) break;
  }
  if (out.attempts > limit) {
    out.attempts = limit;
    out.exhausted = true;
  }
  SolveReport r = solve_box_qp(qp, opts);
  out.plan = std::move(r.plan);
  out.concave = r.concave;
  return out;
}

/// argmax over [0, p_max] of c p + b p^2.
inline double myopic_scalar_price(double c, double b, double p_max) {
  if (b < 0.0) return std::clamp(-c / (2.0 * b), 0.0, p_max);
  return c * p_max + b * p_max * p_max > 0.0 ? p_max : 0.0;
}

/// argmax over the box of P'(c + B P).
inline Eigen::VectorXd myopic_price(const Eigen::VectorXd& c, const Eigen::MatrixXd& B, double p_max,
                                    const SolverOptions& opts = {}) {
  if (c.size() == 1) return price_entry(myopic_scalar_price(c(0), B(0, 0), p_max));
  QuadraticProgram qp;
  qp.M = 0.5 * (B + B.transpose());
  qp.a = c;
  qp.p_max = p_max;
  qp.products = static_cast<int>(c.size());
  return solve_box_qp(qp, opts).plan.at(1);
}

/// One posterior draw over the memoryless model [alpha, beta], then the
/// single-period revenue maximizer.
inline Eigen::VectorXd memoryless_ts_price(const GaussianBelief& belief, const ModelSpec& spec, const Context& z,
                                           Rng& rng, const SolverOptions& opts = {}) {
  const ModelSpec learner = spec.memoryless();
  detail::require(belief.dim() == learner.param_dim(), "memoryless belief has wrong dimension");
  const EffectiveDemand e = effective_demand(belief.sample(rng), z, learner);
  return myopic_price(e.alpha, e.beta, spec.p_max, opts);
}

/// One posterior draw over the full model per period; greedy in the
/// immediate revenue p (c + beta p), c = alpha + phi_j' s.
inline Eigen::VectorXd weak_ts_price(const GaussianBelief& belief, const ModelSpec& spec, const State& state,
                                     const Context& z, int h, Rng& rng, const SolverOptions& opts = {}) {
  detail::require(state.size() == state_length(h, spec), "state length does not match period");
  const EffectiveDemand e = effective_demand(belief.sample(rng), z, spec);
  Eigen::VectorXd c = e.alpha;
  if (!state.empty()) c += e.phi[static_cast<std::size_t>(state.size() - 1)] * state.stacked();
  return myopic_price(c, e.beta, spec.p_max, opts);
}

/// Plan under the posterior mean.
inline SolveReport ce_plan_episode(const GaussianBelief& belief, const ModelSpec& spec, const Context& z,
                                   const SolverOptions& opts = {}) {
  return plan_report(posterior_mean(belief), spec, z, opts);
}

/// With probability epsilon a uniform price, otherwise the retained plan's period-h entry.
inline Eigen::VectorXd eps_greedy_price(const PricePlan& retained, int h, double epsilon, double p_max, Rng& rng) {
  if (uniform(rng, 0.0, 1.0) < epsilon) {
    Eigen::VectorXd p(retained.products());
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = uniform(rng, 0.0, p_max);
    return p;
  }
  return retained.at(h);
}

// ---------------------------------------------------------------------------
// Strategy objects driven by the harness.

/// Counters surfaced in run metadata.
struct StrategyStats {
  long nsd_exhaustions = 0;
  long episodes = 0;
  long random_prices = 0;
};

class Strategy {
 public:
  Strategy(StrategyConfig cfg, ModelSpec spec, GaussianBelief belief, SolverOptions opts = {})
      : cfg_(std::move(cfg)), spec_(std::move(spec)), belief_(std::move(belief)), opts_(opts) {
    cfg_.validate();
    const ModelSpec learner = learner_spec();
    detail::require(belief_.dim() == learner.param_dim(), "prior dimension does not match the learner's model");
  }
  virtual ~Strategy() = default;

  Strategy(const Strategy&) = default;
  Strategy& operator=(const Strategy&) = default;

  const StrategyConfig& config() const { return cfg_; }
  const ModelSpec& spec() const { return spec_; }
  const GaussianBelief& belief() const { return belief_; }
  const StrategyStats& stats() const { return stats_; }

  /// Model the learner fits: the environment's, except for the memoryless learner.
  ModelSpec learner_spec() const {
    return cfg_.kind == StrategyKind::MemorylessTS ? spec_.memoryless() : spec_;
  }

  /// Whether the posterior absorbs each period immediately (vs. one batch per episode).
  virtual bool updates_per_period() const = 0;

  virtual void begin_episode(const Context& z, Rng& rng) {
    z_ = z;
    ++stats_.episodes;
    rows_.clear();
    targets_.clear();
    (void)rng;
  }

  virtual Eigen::VectorXd price(int h, const State& state, Rng& rng) = 0;

  /// Record the period's outcome. `state` is the state the price was set in.
  void observe(int h, const Eigen::VectorXd& price, const State& state, const Eigen::VectorXd& w) {
    const ModelSpec learner = learner_spec();
    const State seen = learner.n == 0 ? State() : state;
    Eigen::MatrixXd x = featurize(price, seen, z_, h, learner);
    if (updates_per_period()) {
      belief_ = belief_.updated(x, w, spec_.sigma2);
    } else {
      rows_.push_back(std::move(x));
      targets_.push_back(w);
    }
  }

  void end_episode() {
    if (updates_per_period() || rows_.empty()) return;
    Eigen::Index total = 0;
    for (const auto& r : rows_) total += r.rows();
    Eigen::MatrixXd X(total, belief_.dim());
    Eigen::VectorXd w(total);
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      X.middleRows(at, rows_[i].rows()) = rows_[i];
      w.segment(at, targets_[i].size()) = targets_[i];
      at += rows_[i].rows();
    }
    belief_ = belief_.updated(X, w, spec_.sigma2);
    rows_.clear();
    targets_.clear();
  }

 protected:
  StrategyConfig cfg_;
  ModelSpec spec_;
  GaussianBelief belief_;
  SolverOptions opts_;
  StrategyStats stats_;
  Context z_;

 private:
  std::vector<Eigen::MatrixXd> rows_;
  std::vector<Eigen::VectorXd> targets_;
};

class ThompsonPricing final : public Strategy {
 public:
  using Strategy::Strategy;
  bool updates_per_period() const override { return false; }

  void begin_episode(const Context& z, Rng& rng) override {
    Strategy::begin_episode(z, rng);
    TpDraw d = tp_plan_episode(belief_, spec_, z, rng, cfg_.nsd_resample_limit, opts_);
    if (d.exhausted) ++stats_.nsd_exhaustions;
    plan_ = std::move(d.plan);
  }

  Eigen::VectorXd price(int h, const State&, Rng&) override { return plan_.at(h); }
  const PricePlan& current_plan() const { return plan_; }

 private:
  PricePlan plan_;
};

class CertaintyEquivalence final : public Strategy {
 public:
  using Strategy::Strategy;
  bool updates_per_period() const override { return false; }

  void begin_episode(const Context& z, Rng& rng) override {
    Strategy::begin_episode(z, rng);
    plan_ = ce_plan_episode(belief_, spec_, z, opts_).plan;
  }

  Eigen::VectorXd price(int h, const State&, Rng&) override { return plan_.at(h); }
  const PricePlan& current_plan() const { return plan_; }

 private:
  PricePlan plan_;
};

class EpsGreedy final : public Strategy {
 public:
  using Strategy::Strategy;
  bool updates_per_period() const override { return true; }

  void begin_episode(const Context& z, Rng& rng) override {
    Strategy::begin_episode(z, rng);
    plan_ = ce_plan_episode(belief_, spec_, z, opts_).plan;
  }

  Eigen::VectorXd price(int h, const State&, Rng& rng) override {
    Eigen::VectorXd p = eps_greedy_price(plan_, h, cfg_.epsilon, spec_.p_max, rng);
    if (p != plan_.at(h)) ++stats_.random_prices;
    return p;
  }
  const PricePlan& current_plan() const { return plan_; }

 private:
  PricePlan plan_;
};

class MemorylessTS final : public Strategy {
 public:
  using Strategy::Strategy;
  bool updates_per_period() const override { return true; }

  Eigen::VectorXd price(int, const State&, Rng& rng) override {
    return memoryless_ts_price(belief_, spec_, z_, rng, opts_);
  }
};

class WeakTS final : public Strategy {
 public:
  using Strategy::Strategy;
  bool updates_per_period() const override { return true; }

  Eigen::VectorXd price(int h, const State& state, Rng& rng) override {
    return weak_ts_price(belief_, spec_, state, z_, h, rng, opts_);
  }
};

/// Construct a strategy whose belief starts at `prior` (moments over the learner's model).
inline std::unique_ptr<Strategy> make_strategy(const StrategyConfig& cfg, const ModelSpec& spec, GaussianBelief prior,
                                               const SolverOptions& opts = {}) {
  switch (cfg.kind) {
    case StrategyKind::TP: return std::make_unique<ThompsonPricing>(cfg, spec, std::move(prior), opts);
    case StrategyKind::MemorylessTS: return std::make_unique<MemorylessTS>(cfg, spec, std::move(prior), opts);
    case StrategyKind::WeakTS: return std::make_unique<WeakTS>(cfg, spec, std::move(prior), opts);
    case StrategyKind::CertaintyEquivalence:
      return std::make_unique<CertaintyEquivalence>(cfg, spec, std::move(prior), opts);
    case StrategyKind::EpsGreedy: return std::make_unique<EpsGreedy>(cfg, spec, std::move(prior), opts);
  }
  throw InvalidInput("unknown strategy kind");
}

inline std::unique_ptr<Strategy> make_strategy(const StrategyConfig& cfg, const ModelSpec& spec,
                                               const BlockPrior& prior, const SolverOptions& opts = {}) {
  const ModelSpec learner = cfg.kind == StrategyKind::MemorylessTS ? spec.memoryless() : spec;
  return make_strategy(cfg, spec, prior.belief(learner), opts);
}

}  // namespace refprice
