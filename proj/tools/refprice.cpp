#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "refprice/io.hpp"
#include "refprice/manifest.hpp"
#include "refprice/selftest.hpp"

namespace fs = std::filesystem;
using namespace refprice;

namespace {

int resolve_threads(std::optional<int> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("REFPRICE_THREADS")) {
    const auto v = detail::to_integer(env);
    if (v && *v >= 1) return static_cast<int>(*v);
    std::cerr << "refprice: ignoring invalid REFPRICE_THREADS='" << env << "'\n";
  }
  return 0;
}

struct RunArgs {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<int> threads;
};

int cmd_run(const RunArgs& a) {
  ConfigFile file;
  try {
    file = load_config(a.config);
  } catch (const InvalidInput& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
  const int threads = resolve_threads(a.threads);
  for (auto& cfg : file.experiments) {
    if (a.seed) cfg.seed = *a.seed;
    if (a.runs) cfg.runs = *a.runs;
    if (threads > 0) cfg.threads = threads;
  }

  try {
    RunManifest m;
    m.config_path = a.config;
    m.config_hash = hex64(file.hash);
    m.seed = file.experiments.front().seed;
    m.runs = file.experiments.front().runs;
    m.threads = file.experiments.front().threads;
    m.started = utc_timestamp();
    m.results = run_experiments(file);
    m.finished = utc_timestamp();

    fs::create_directories(a.out);
    {
      std::ofstream csv(fs::path(a.out) / "regret.csv", std::ios::binary);
      write_regret_csv(csv, m.results);
      if (!csv) throw std::runtime_error("failed to write regret.csv");
    }
    std::ofstream manifest(fs::path(a.out) / "manifest.json", std::ios::binary);
    manifest << to_json(m).dump(2) << '\n';
    if (!manifest) throw std::runtime_error("failed to write manifest.json");

    for (const auto& r : m.results) {
      for (const auto& t : r.traces) {
        std::cout << r.name << ' ' << t.strategy << ": cumulative regret " << t.cumulative_regret(t.episodes() - 1)
                  << ", oracle concave fraction " << t.metadata.oracle_concave_fraction << '\n';
      }
    }
    std::cout << "wrote " << (fs::path(a.out) / "regret.csv").string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "refprice: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmd_bound(const BoundInputs& in) {
  try {
    const BoundResult r = regret_bound(in);
    std::cout << "beta_K = " << format_real(r.beta_K) << '\n' << "bound = " << format_real(r.bound) << '\n';
  } catch (const InvalidInput& e) {
    std::cerr << "refprice: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

int cmd_selftest(const SelftestOptions& o) {
  bool ok = true;
  for (const auto& r : run_selftest(o)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ", " << r.seconds << " s)\n";
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic pricing with reference effects: regret experiments"};
  app.set_version_flag("--version", std::string(REFPRICE_VERSION));
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run the experiments in a config file");
  run_cmd->add_option("--config", run.config, "Config file")->required();
  run_cmd->add_option("--out", run.out, "Output directory")->capture_default_str();
  run_cmd->add_option("--seed", run.seed, "Override the master seed");
  run_cmd->add_option("--runs", run.runs, "Override the number of runs")->check(CLI::PositiveNumber);
  run_cmd->add_option("--threads", run.threads, "Worker threads (default: $REFPRICE_THREADS, then config)")
      ->check(CLI::PositiveNumber);

  BoundInputs bound;
  bound.d_E = 1.0;
  auto* bound_cmd = app.add_subcommand("bound", "Evaluate the posterior-sampling regret bound");
  bound_cmd->add_option("--sigma2", bound.sigma2)->capture_default_str();
  bound_cmd->add_option("--d_max", bound.d_max)->capture_default_str();
  bound_cmd->add_option("--p_max", bound.p_max)->capture_default_str();
  bound_cmd->add_option("-K,--K", bound.K)->capture_default_str();
  bound_cmd->add_option("-H,--H", bound.H)->capture_default_str();
  bound_cmd->add_option("-q,--q", bound.q)->capture_default_str();
  bound_cmd->add_option("--d_E", bound.d_E, "Eluder dimension")->capture_default_str();
  bound_cmd->add_option("--log_N", bound.log_N, "Log covering number")->capture_default_str();

  SelftestOptions st;
  auto* st_cmd = app.add_subcommand("selftest", "Run the fast invariant suite");
  st_cmd->add_flag("--inject-fault", st.corrupt_quadratic, "Corrupt the quadratic form (should fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*run_cmd) return cmd_run(run);
  if (*bound_cmd) return cmd_bound(bound);
  if (*st_cmd) return cmd_selftest(st);
  return 2;
}
