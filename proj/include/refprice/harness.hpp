#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "refprice/error.hpp"
#include "refprice/model.hpp"
#include "refprice/planner.hpp"
#include "refprice/posterior.hpp"
#include "refprice/random.hpp"
#include "refprice/strategies.hpp"

namespace refprice {

struct Observation {
  int episode = 0;
  int period = 0;
  Eigen::VectorXd price;
  State state;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
  Context z;
};

struct EpisodeResult {
  std::vector<Observation> observations;
  PricePlan played;
  double expected_revenue = 0.0;
  double realized_revenue = 0.0;
};

struct EpisodeOptions {
  int episode = 0;
  /// Multiplies the demand noise; 0 gives the zero-noise test mode.
  double noise_scale = 1.0;
};

/// Play one episode of `strategy` against the true parameter. Noise draws come
/// from `noise` in period order (q per period), so strategies fed identical
/// noise streams see common random numbers.
inline EpisodeResult run_episode(const ParamVector& theta_true, Strategy& strategy, const ModelSpec& spec,
                                 const Context& z, Rng& noise, Rng& rng, const EpisodeOptions& eo = {}) {
  const int q = spec.products();
  EpisodeResult out;
  out.played.prices.resize(q, spec.H);
  out.observations.reserve(static_cast<std::size_t>(spec.H));
  strategy.begin_episode(z, rng);
  State s;
  for (int h = 1; h <= spec.H; ++h) {
    Eigen::VectorXd p = strategy.price(h, s, rng);
    const Eigen::VectorXd d = expected_demand(theta_true, p, s, z, h, spec);
    Eigen::VectorXd xi(q);
    for (int i = 0; i < q; ++i) xi(i) = eo.noise_scale * standard_normal(noise);
    DemandDraw draw = demand_from_noise(d, xi, spec.sigma2);
    out.expected_revenue += p.dot(d);
    out.realized_revenue += p.dot(draw.y);
    strategy.observe(h, p, s, draw.w);
    out.played.prices.col(h - 1) = p;
    State next = advance_state(s, p, spec);
    out.observations.push_back(Observation{eo.episode, h, std::move(p), std::move(s), std::move(draw.y),
                                           std::move(draw.w), z});
    s = std::move(next);
  }
  strategy.end_episode();
  return out;
}

struct OracleValue {
  double value = 0.0;
  bool concave = false;
  PricePlan plan;
};

/// Optimal episode value under theta. For indefinite M the value is the best
/// local maximum found and only a lower bound on the true optimum.
inline OracleValue optimal_value(const ParamVector& theta, const ModelSpec& spec, const Context& z = std::nullopt,
                                 const SolverOptions& opts = {}) {
  SolveReport r = plan_report(theta, spec, z, opts);
  OracleValue out;
  out.value = episode_value(theta, r.plan, z, spec);
  out.concave = r.concave;
  out.plan = std::move(r.plan);
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

struct Launch {
  int t = 1;
  int H = 1;
  Context z;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ModelSpec spec;
  BlockPrior prior;
  std::vector<StrategyConfig> strategies;
  int K = 1;
  int runs = 1;
  std::uint64_t seed = 1;
  /// Covariate variant: contexts cycled over episodes; empty draws z = [1, U(0,1)...].
  std::vector<Eigen::VectorXd> contexts;
  /// Non-empty switches to asynchronous mode (one episode per launch).
  std::vector<Launch> launch_schedule;
  SolverOptions solver;
  /// Starts used for the regret oracle V*.
  int oracle_starts = 64;
  int threads = 1;

  bool is_async() const { return !launch_schedule.empty(); }

  void validate() const {
    spec.validate();
    if (K < 1) throw InvalidInput("K must be >= 1");
    if (runs < 1) throw InvalidInput("runs must be >= 1");
    if (strategies.empty()) throw InvalidInput("at least one strategy is required");
    for (const auto& s : strategies) s.validate();
    if (!(prior.alpha_var > 0 && prior.beta_var > 0 && prior.phi_var > 0))
      throw InvalidInput("prior variances must be positive");
    for (const auto& z : contexts) {
      if (spec.variant != Variant::Covariate) throw InvalidInput("contexts require the covariate variant");
      if (z.size() != spec.m) throw InvalidInput("context length must equal m");
    }
    if (is_async()) {
      if (spec.variant != Variant::Covariate && spec.variant != Variant::Plain)
        throw InvalidInput("asynchronous mode supports the plain and covariate variants");
      for (const auto& s : strategies) {
        if (s.kind != StrategyKind::TP) throw InvalidInput("asynchronous mode runs TP only");
      }
      int last = 0;
      for (const auto& l : launch_schedule) {
        if (l.t < 1) throw InvalidInput("launch time must be >= 1");
        if (l.t < last) throw InvalidInput("launch schedule must be sorted by time");
        last = l.t;
        if (l.H < 1) throw InvalidInput("episode length must be >= 1");
        if (spec.n > l.H) throw InvalidInput("memory n must not exceed any episode length H_k");
        if (spec.variant == Variant::Covariate) {
          if (!l.z || l.z->size() != spec.m) throw InvalidInput("each launch needs an m-dimensional context");
        } else if (l.z) {
          throw InvalidInput("launch context given for a non-covariate model");
        }
      }
    }
  }
};

struct RunMetadata {
  long nsd_exhaustions = 0;
  long episodes = 0;
  long random_prices = 0;
  /// Fraction of runs whose true M was certified NSD.
  double oracle_concave_fraction = 0.0;
  double seconds = 0.0;
};

struct RegretTrace {
  std::string strategy;
  Eigen::VectorXd per_episode_regret;  // mean over runs
  Eigen::VectorXd std_error;
  Eigen::VectorXd cumulative_regret;   // prefix sum of the means
  Eigen::MatrixXd per_run;             // runs x K
  std::vector<bool> run_concave;       // true parameter certified NSD, per run
  RunMetadata metadata;

  int episodes() const { return static_cast<int>(per_episode_regret.size()); }
  int runs() const { return static_cast<int>(per_run.rows()); }
};

/// Mean and standard error across runs of a per-run statistic.
struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

inline Estimate estimate(const Eigen::VectorXd& per_run) {
  Estimate e;
  const double n = static_cast<double>(per_run.size());
  e.mean = per_run.mean();
  if (per_run.size() > 1) {
    const double var = (per_run.array() - e.mean).square().sum() / (n - 1.0);
    e.se = std::sqrt(var / n);
  }
  return e;
}

/// Per-run mean regret over episodes [first, last] (1-based, inclusive).
inline Eigen::VectorXd window_per_run(const RegretTrace& t, int first, int last) {
  detail::require(first >= 1 && last >= first && last <= t.episodes(), "window out of range");
  return t.per_run.middleCols(first - 1, last - first + 1).rowwise().mean();
}

inline Estimate window_mean(const RegretTrace& t, int first, int last) { return estimate(window_per_run(t, first, last)); }

/// Per-run cumulative regret through episode k.
inline Eigen::VectorXd cumulative_per_run(const RegretTrace& t, int k) {
  return t.per_run.leftCols(k).rowwise().sum();
}

namespace detail {

inline Eigen::VectorXd draw_context(const ModelSpec& spec, Rng& rng) {
  Eigen::VectorXd z(spec.m);
  z(0) = 1.0;
  for (int i = 1; i < spec.m; ++i) z(i) = uniform(rng, 0.0, 1.0);
  return z;
}

template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

inline SolverOptions oracle_options(const ExperimentConfig& cfg) {
  SolverOptions o = cfg.solver;
  o.starts = std::max(o.starts, cfg.oracle_starts);
  return o;
}

struct RunOutcome {
  std::vector<Eigen::VectorXd> regret;  // per strategy, K entries
  std::vector<StrategyStats> stats;
  bool concave = false;
  double seconds = 0.0;
};

inline std::vector<RegretTrace> aggregate(const ExperimentConfig& cfg, const std::vector<RunOutcome>& outcomes,
                                          int K) {
  std::vector<RegretTrace> traces;
  const int runs = static_cast<int>(outcomes.size());
  for (std::size_t s = 0; s < cfg.strategies.size(); ++s) {
    RegretTrace t;
    t.strategy = cfg.strategies[s].name();
    t.per_run.resize(runs, K);
    long concave = 0;
    for (int r = 0; r < runs; ++r) {
      const RunOutcome& o = outcomes[static_cast<std::size_t>(r)];
      t.per_run.row(r) = o.regret[s].transpose();
      t.run_concave.push_back(o.concave);
      concave += o.concave ? 1 : 0;
      t.metadata.nsd_exhaustions += o.stats[s].nsd_exhaustions;
      t.metadata.episodes += o.stats[s].episodes;
      t.metadata.random_prices += o.stats[s].random_prices;
      t.metadata.seconds += o.seconds;
    }
    t.metadata.oracle_concave_fraction = static_cast<double>(concave) / runs;
    t.per_episode_regret.resize(K);
    t.std_error.resize(K);
    for (int k = 0; k < K; ++k) {
      const Estimate e = estimate(t.per_run.col(k));
      t.per_episode_regret(k) = e.mean;
      t.std_error(k) = e.se;
    }
    t.cumulative_regret.resize(K);
    double acc = 0.0;
    for (int k = 0; k < K; ++k) t.cumulative_regret(k) = acc += t.per_episode_regret(k);
    traces.push_back(std::move(t));
  }
  return traces;
}

}  // namespace detail

/// Bayesian regret estimate: per run, draw theta_true from the prior and play
/// every strategy for K episodes against it with shared contexts and noise.
inline std::vector<RegretTrace> evaluate_regret(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.is_async()) throw InvalidInput("use run_async for configurations with a launch schedule");
  const ModelSpec& spec = cfg.spec;
  const SolverOptions oracle_opts = detail::oracle_options(cfg);

  std::vector<detail::RunOutcome> outcomes(static_cast<std::size_t>(cfg.runs));
  detail::parallel_for(cfg.runs, cfg.threads, [&](int run) {
    const auto started = std::chrono::steady_clock::now();
    const auto r = static_cast<std::uint64_t>(run);
    Rng env = make_rng(cfg.seed, {r, tag(Stream::Environment)});
    const ParamVector theta_true = cfg.prior.draw(spec, env);

    std::vector<Context> contexts(static_cast<std::size_t>(cfg.K));
    if (spec.variant == Variant::Covariate) {
      Rng ctx = make_rng(cfg.seed, {r, tag(Stream::Context)});
      for (int k = 0; k < cfg.K; ++k) {
        contexts[static_cast<std::size_t>(k)] =
            cfg.contexts.empty() ? detail::draw_context(spec, ctx)
                                 : cfg.contexts[static_cast<std::size_t>(k) % cfg.contexts.size()];
      }
    }

    // V* per distinct context (a single entry without covariates).
    std::vector<double> optimum(static_cast<std::size_t>(cfg.K));
    bool concave = true;
    {
      std::map<std::vector<double>, OracleValue> cache;
      for (int k = 0; k < cfg.K; ++k) {
        const Context& z = contexts[static_cast<std::size_t>(k)];
        std::vector<double> key = z ? std::vector<double>(z->data(), z->data() + z->size()) : std::vector<double>{};
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, optimal_value(theta_true, spec, z, oracle_opts)).first;
        optimum[static_cast<std::size_t>(k)] = it->second.value;
        concave = concave && it->second.concave;
      }
    }

    detail::RunOutcome out;
    out.concave = concave;
    for (std::size_t s = 0; s < cfg.strategies.size(); ++s) {
      auto strategy = make_strategy(cfg.strategies[s], spec, cfg.prior, cfg.solver);
      Rng noise = make_rng(cfg.seed, {r, tag(Stream::Noise)});
      Rng rng = make_rng(cfg.seed, {r, tag(Stream::Strategy), static_cast<std::uint64_t>(s)});
      Eigen::VectorXd regret(cfg.K);
      for (int k = 0; k < cfg.K; ++k) {
        EpisodeOptions eo;
        eo.episode = k + 1;
        const EpisodeResult ep =
            run_episode(theta_true, *strategy, spec, contexts[static_cast<std::size_t>(k)], noise, rng, eo);
        regret(k) = optimum[static_cast<std::size_t>(k)] - ep.expected_revenue;
      }
      out.regret.push_back(std::move(regret));
      out.stats.push_back(strategy->stats());
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    outcomes[static_cast<std::size_t>(run)] = std::move(out);
  });
  return detail::aggregate(cfg, outcomes, cfg.K);
}

// ---------------------------------------------------------------------------
// Asynchronous launches

struct AsyncEpisode {
  Launch launch;
  PricePlan plan;
  std::vector<Observation> observations;
  double expected_revenue = 0.0;
  double optimal = 0.0;
  bool optimal_concave = false;
  bool nsd_exhausted = false;
};

struct AsyncResult {
  std::vector<AsyncEpisode> episodes;
  GaussianBelief belief;
  /// Belief right after each time step t (index t-1).
  std::vector<GaussianBelief> belief_by_time;
};

/// TP with overlapping episodes. At each time t: launch the scheduled
/// episodes (one posterior draw each, from the current shared belief), then
/// advance every active episode by one period in launch order, updating the
/// shared belief after each observation.
inline AsyncResult run_async_once(const ParamVector& theta_true, GaussianBelief belief, const std::vector<Launch>& schedule,
                                  const ModelSpec& spec, Rng& noise, Rng& rng, int nsd_resample_limit = 100,
                                  const SolverOptions& opts = {}, const SolverOptions& oracle_opts = {}) {
  detail::require(belief.dim() == spec.param_dim(), "belief dimension does not match the model");
  struct Active {
    std::size_t index;
    ModelSpec spec;
    State state;
    int h = 1;
  };

  AsyncResult out;
  out.episodes.resize(schedule.size());
  std::vector<Active> active;
  std::size_t next = 0;
  for (int t = 1; next < schedule.size() || !active.empty(); ++t) {
    while (next < schedule.size() && schedule[next].t == t) {
      const Launch& l = schedule[next];
      const ModelSpec ek = spec.with_horizon(l.H);
      AsyncEpisode& e = out.episodes[next];
      e.launch = l;
      TpDraw d = tp_plan_episode(belief, ek, l.z, rng, nsd_resample_limit, opts);
      e.plan = std::move(d.plan);
      e.nsd_exhausted = d.exhausted;
      const OracleValue ov = optimal_value(theta_true, ek, l.z, oracle_opts);
      e.optimal = ov.value;
      e.optimal_concave = ov.concave;
      active.push_back(Active{next, ek, State(), 1});
      ++next;
    }
    detail::require(next >= schedule.size() || schedule[next].t > t, "launch schedule must be sorted by time");

    for (Active& a : active) {
      AsyncEpisode& e = out.episodes[a.index];
      const Eigen::VectorXd p = e.plan.at(a.h);
      const Eigen::VectorXd d = expected_demand(theta_true, p, a.state, e.launch.z, a.h, a.spec);
      Eigen::VectorXd xi(d.size());
      for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = standard_normal(noise);
      DemandDraw draw = demand_from_noise(d, xi, spec.sigma2);
      e.expected_revenue += p.dot(d);
      const Eigen::MatrixXd x = featurize(p, a.state, e.launch.z, a.h, a.spec);
      belief = belief.updated(x, draw.w, spec.sigma2);
      State nextState = advance_state(a.state, p, a.spec);
      e.observations.push_back(Observation{static_cast<int>(a.index) + 1, a.h, p, std::move(a.state),
                                           std::move(draw.y), std::move(draw.w), e.launch.z});
      a.state = std::move(nextState);
      ++a.h;
    }
    active.erase(std::remove_if(active.begin(), active.end(),
                                [](const Active& a) { return a.h > a.spec.H; }),
                 active.end());
    out.belief_by_time.push_back(belief);
  }
  out.belief = std::move(belief);
  return out;
}

/// Monte-Carlo regret of asynchronous TP; one trace entry per scheduled episode.
inline RegretTrace run_async(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!cfg.is_async()) throw InvalidInput("run_async needs a launch schedule");
  if (cfg.strategies.size() != 1) throw InvalidInput("asynchronous mode takes exactly one TP strategy");
  const int K = static_cast<int>(cfg.launch_schedule.size());
  const SolverOptions oracle_opts = detail::oracle_options(cfg);

  std::vector<detail::RunOutcome> outcomes(static_cast<std::size_t>(cfg.runs));
  detail::parallel_for(cfg.runs, cfg.threads, [&](int run) {
    const auto started = std::chrono::steady_clock::now();
    const auto r = static_cast<std::uint64_t>(run);
    Rng env = make_rng(cfg.seed, {r, tag(Stream::Environment)});
    const ParamVector theta_true = cfg.prior.draw(cfg.spec, env);
    Rng noise = make_rng(cfg.seed, {r, tag(Stream::Noise)});
    Rng rng = make_rng(cfg.seed, {r, tag(Stream::Strategy), 0});
    const AsyncResult res = run_async_once(theta_true, cfg.prior.belief(cfg.spec), cfg.launch_schedule, cfg.spec, noise,
                                           rng, cfg.strategies.front().nsd_resample_limit, cfg.solver, oracle_opts);
    detail::RunOutcome out;
    Eigen::VectorXd regret(K);
    StrategyStats st;
    out.concave = true;
    for (int k = 0; k < K; ++k) {
      const AsyncEpisode& e = res.episodes[static_cast<std::size_t>(k)];
      regret(k) = e.optimal - e.expected_revenue;
      out.concave = out.concave && e.optimal_concave;
      st.nsd_exhaustions += e.nsd_exhausted ? 1 : 0;
      ++st.episodes;
    }
    out.regret.push_back(std::move(regret));
    out.stats.push_back(st);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    outcomes[static_cast<std::size_t>(run)] = std::move(out);
  });
  return detail::aggregate(cfg, outcomes, K).front();
}

// ---------------------------------------------------------------------------
// Regret bound

struct BoundInputs {
  double sigma2 = 1.0;
  double d_max = 1.0;
  double p_max = 1.0;
  double K = 1.0;
  double H = 1.0;
  double q = 1.0;
  /// Eluder dimension d_E(F, (KH)^-2).
  double d_E = 1.0;
  /// log N(F, (KH)^-2), log of the covering number.
  double log_N = 0.0;
};

struct BoundResult {
  double beta_K = 0.0;
  double bound = 0.0;
};

/// Posterior-sampling regret bound for q products over K episodes of H periods.
inline BoundResult regret_bound(const BoundInputs& in) {
  if (!(in.sigma2 > 0)) throw InvalidInput("sigma2 must be positive");
  if (!(in.d_max > 0)) throw InvalidInput("d_max must be positive");
  if (!(in.p_max > 0)) throw InvalidInput("p_max must be positive");
  if (!(in.K > 0)) throw InvalidInput("K must be positive");
  if (!(in.H > 0)) throw InvalidInput("H must be positive");
  if (!(in.q > 0)) throw InvalidInput("q must be positive");
  if (!(in.d_E >= 0)) throw InvalidInput("d_E must be non-negative");
  if (!(in.log_N >= 0)) throw InvalidInput("log_N must be non-negative");
  const double KH = in.K * in.H;
  BoundResult r;
  r.beta_K = 8.0 * in.sigma2 * (std::log(KH * KH) + in.log_N) +
             (2.0 / KH) * (8.0 * in.d_max + std::sqrt(8.0 * in.sigma2 * std::log(4.0)));
  r.bound = in.q * in.p_max * (1.0 + in.H * in.d_max * in.d_E + 4.0 * std::sqrt(r.beta_K * in.d_E * KH)) +
            4.0 * in.q * in.p_max * in.d_max / KH;
  return r;
}

}  // namespace refprice
