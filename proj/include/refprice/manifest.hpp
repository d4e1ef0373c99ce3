#pragma once

// Run manifest written next to regret.csv. Requires nlohmann/json (vendor/json.hpp).

#include <chrono>
#include <ctime>
#include <string>
#include <vector>

#include "json.hpp"
#include "refprice/io.hpp"

namespace refprice {

#ifndef REFPRICE_VERSION
#define REFPRICE_VERSION "0.0.0"
#endif

struct RunManifest {
  std::string config_path;
  std::string config_hash;
  std::uint64_t seed = 0;
  int runs = 0;
  int threads = 1;
  std::string version = REFPRICE_VERSION;
  std::string started;
  std::string finished;
  std::vector<ExperimentResult> results;
};

inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::ordered_json to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["config"] = m.config_path;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["runs"] = m.runs;
  j["threads"] = m.threads;
  j["version"] = m.version;
  j["started"] = m.started;
  j["finished"] = m.finished;
  auto& experiments = j["experiments"] = nlohmann::ordered_json::array();
  for (const auto& r : m.results) {
    nlohmann::ordered_json e;
    e["name"] = r.name;
    auto& strategies = e["strategies"] = nlohmann::ordered_json::array();
    for (const auto& t : r.traces) {
      strategies.push_back({{"strategy", t.strategy},
                            {"episodes", t.metadata.episodes},
                            {"nsd_exhaustions", t.metadata.nsd_exhaustions},
                            {"random_prices", t.metadata.random_prices},
                            {"oracle_concave_fraction", t.metadata.oracle_concave_fraction},
                            {"seconds", t.metadata.seconds}});
    }
    experiments.push_back(std::move(e));
  }
  return j;
}

}  // namespace refprice
