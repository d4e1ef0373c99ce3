#pragma once

// Experiment config files and regret CSV output.
//
// Config grammar (one entry per line, '#' starts a comment):
//   key = value                  global key
//   [strategy LABEL]             starts a strategy section
// Repeatable global keys: context, launch. sweep.n expands one experiment per value.

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "refprice/error.hpp"
#include "refprice/harness.hpp"

namespace refprice {

/// Config problem anchored to a source line (0 when no single line applies).
class ConfigError : public InvalidInput {
 public:
  ConfigError(const std::string& path, int line, const std::string& key, const std::string& msg)
      : InvalidInput(format(path, line, key, msg)), line_(line), key_(key) {}

  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  static std::string format(const std::string& path, int line, const std::string& key, const std::string& msg) {
    std::string out = path;
    if (line > 0) out += ":" + std::to_string(line);
    out += ": ";
    if (!key.empty()) out += key + ": ";
    return out + msg;
  }

  int line_;
  std::string key_;
};

struct ConfigFile {
  std::string path;
  std::vector<ExperimentConfig> experiments;
  std::string canonical;
  std::uint64_t hash = 0;
};

namespace detail {

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

struct ConfigSection {
  std::string label;  // empty for the global section
  int line = 0;
  std::vector<ConfigEntry> entries;
};

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == ',') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::optional<double> to_double(std::string_view s) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<long long> to_integer(std::string_view s) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Numbers in shortest round-trip decimal (no exponent); other tokens verbatim.
inline std::string canonical_token(const std::string& tok) {
  const auto v = to_double(tok);
  if (!v || !std::isfinite(*v)) return tok;
  char buf[512];
  const auto r = std::to_chars(buf, buf + sizeof buf, *v, std::chars_format::fixed);
  return std::string(buf, r.ptr);
}

inline std::string canonical_value(const std::string& key, const std::string& value) {
  const auto toks = split_tokens(value);
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += key.starts_with("sweep.") ? "," : " ";
    out += canonical_token(toks[i]);
  }
  return out;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::vector<ConfigSection> lex_config(std::string_view text, const std::string& path) {
  std::vector<ConfigSection> sections(1);
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(path, line_no, "", "unterminated section header");
      const std::string_view inner = trim(line.substr(1, line.size() - 2));
      if (!inner.starts_with("strategy")) throw ConfigError(path, line_no, "", "unknown section '" + std::string(inner) + "'");
      const std::string_view label = trim(inner.substr(8));
      if (label.empty()) throw ConfigError(path, line_no, "", "strategy section needs a label");
      for (const auto& s : sections)
        if (s.label == label) throw ConfigError(path, line_no, "", "duplicate strategy '" + std::string(label) + "'");
      sections.push_back(ConfigSection{std::string(label), line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(path, line_no, "", "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(path, line_no, "", "missing key");
    if (value.empty()) throw ConfigError(path, line_no, key, "missing value");
    auto& entries = sections.back().entries;
    const bool repeatable = sections.size() == 1 && (key == "context" || key == "launch");
    if (!repeatable) {
      for (const auto& e : entries)
        if (e.key == key)
          throw ConfigError(path, line_no, key, "duplicate key (first set on line " + std::to_string(e.line) + ")");
    }
    entries.push_back(ConfigEntry{key, value, line_no});
  }
  return sections;
}

inline std::string canonicalize(const std::vector<ConfigSection>& sections) {
  std::string out;
  for (const auto& s : sections) {
    if (!s.label.empty()) out += "[strategy " + s.label + "]\n";
    std::vector<ConfigEntry> sorted = s.entries;
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
    for (const auto& e : sorted) out += e.key + "=" + canonical_value(e.key, e.value) + "\n";
  }
  return out;
}

class EntryReader {
 public:
  EntryReader(const std::string& path, const ConfigEntry& e) : path_(path), e_(e) {}

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_, e_.line, e_.key, msg); }

  long long integer(long long min) const {
    const auto v = to_integer(e_.value);
    if (!v) fail("expected an integer, got '" + e_.value + "'");
    if (*v < min) fail("must be >= " + std::to_string(min));
    return *v;
  }

  double real() const {
    const auto v = to_double(e_.value);
    if (!v || !std::isfinite(*v)) fail("expected a number, got '" + e_.value + "'");
    return *v;
  }

  double positive() const {
    const double v = real();
    if (!(v > 0)) fail("must be positive");
    return v;
  }

  std::vector<double> reals() const {
    std::vector<double> out;
    for (const auto& t : split_tokens(e_.value)) {
      const auto v = to_double(t);
      if (!v || !std::isfinite(*v)) fail("expected numbers, got '" + t + "'");
      out.push_back(*v);
    }
    return out;
  }

  std::vector<long long> integers(long long min) const {
    std::vector<long long> out;
    for (const auto& t : split_tokens(e_.value)) {
      const auto v = to_integer(t);
      if (!v) fail("expected integers, got '" + t + "'");
      if (*v < min) fail("values must be >= " + std::to_string(min));
      out.push_back(*v);
    }
    return out;
  }

 private:
  const std::string& path_;
  const ConfigEntry& e_;
};

inline Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline ConfigFile parse_config(std::string_view text, const std::string& path = "<config>") {
  using detail::EntryReader;
  const auto sections = detail::lex_config(text, path);

  ExperimentConfig cfg;
  std::vector<long long> sweep_n;
  int sweep_line = 0;
  std::map<std::string, int> seen;
  std::vector<std::pair<std::vector<double>, int>> launch_lines;
  std::vector<int> context_lines;

  for (const auto& e : sections.front().entries) {
    const EntryReader r(path, e);
    seen.emplace(e.key, e.line);
    const std::string& k = e.key;
    if (k == "name") {
      cfg.name = e.value;
    } else if (k == "variant") {
      if (e.value == "plain") cfg.spec.variant = Variant::Plain;
      else if (e.value == "covariate") cfg.spec.variant = Variant::Covariate;
      else if (e.value == "multiproduct") cfg.spec.variant = Variant::Multiproduct;
      else r.fail("expected plain, covariate or multiproduct");
    } else if (k == "H") {
      cfg.spec.H = static_cast<int>(r.integer(1));
    } else if (k == "n") {
      cfg.spec.n = static_cast<int>(r.integer(0));
    } else if (k == "q") {
      cfg.spec.q = static_cast<int>(r.integer(1));
    } else if (k == "m") {
      cfg.spec.m = static_cast<int>(r.integer(1));
    } else if (k == "p_max") {
      cfg.spec.p_max = r.positive();
    } else if (k == "sigma2") {
      cfg.spec.sigma2 = r.positive();
    } else if (k == "K") {
      cfg.K = static_cast<int>(r.integer(1));
    } else if (k == "runs") {
      cfg.runs = static_cast<int>(r.integer(1));
    } else if (k == "seed") {
      cfg.seed = static_cast<std::uint64_t>(r.integer(0));
    } else if (k == "threads") {
      cfg.threads = static_cast<int>(r.integer(1));
    } else if (k == "prior.alpha_mean") {
      cfg.prior.alpha_mean = r.real();
    } else if (k == "prior.alpha_var") {
      cfg.prior.alpha_var = r.positive();
    } else if (k == "prior.beta_mean") {
      cfg.prior.beta_mean = r.real();
    } else if (k == "prior.beta_var") {
      cfg.prior.beta_var = r.positive();
    } else if (k == "prior.phi_mean") {
      cfg.prior.phi_mean = r.real();
    } else if (k == "prior.phi_var") {
      cfg.prior.phi_var = r.positive();
    } else if (k == "solver.starts") {
      cfg.solver.starts = static_cast<int>(r.integer(2));
    } else if (k == "solver.max_iterations") {
      cfg.solver.max_iterations = static_cast<int>(r.integer(1));
    } else if (k == "solver.tolerance") {
      cfg.solver.tolerance = r.positive();
    } else if (k == "oracle_starts") {
      cfg.oracle_starts = static_cast<int>(r.integer(2));
    } else if (k == "context") {
      cfg.contexts.push_back(detail::to_vector(r.reals()));
      context_lines.push_back(e.line);
    } else if (k == "launch") {
      const auto v = r.reals();
      if (v.size() < 2) r.fail("expected 't H [z...]'");
      if (v[0] != std::floor(v[0]) || v[0] < 1) r.fail("launch time must be an integer >= 1");
      if (v[1] != std::floor(v[1]) || v[1] < 1) r.fail("episode length must be an integer >= 1");
      launch_lines.emplace_back(v, e.line);
    } else if (k == "sweep.n") {
      sweep_n = r.integers(0);
      if (sweep_n.empty()) r.fail("empty sweep");
      sweep_line = e.line;
    } else {
      r.fail("unknown key");
    }
  }
  for (const char* required : {"H", "n", "p_max", "sigma2", "K", "runs"}) {
    if (!seen.count(required) && !(std::string(required) == "n" && sweep_line))
      throw ConfigError(path, 0, required, "missing required key");
  }

  for (std::size_t i = 1; i < sections.size(); ++i) {
    const auto& sec = sections[i];
    StrategyConfig sc;
    sc.label = sec.label;
    bool kind_set = false;
    for (const auto& e : sec.entries) {
      const EntryReader r(path, e);
      if (e.key == "kind") {
        const auto kind = parse_strategy_kind(e.value);
        if (!kind) r.fail("unknown strategy kind '" + e.value + "' (TP, memoryless-ts, weak-ts, ce, eps-greedy)");
        sc.kind = *kind;
        kind_set = true;
      } else if (e.key == "epsilon") {
        sc.epsilon = r.real();
        if (sc.epsilon < 0 || sc.epsilon > 1) r.fail("must lie in [0, 1]");
      } else if (e.key == "nsd_resample_limit") {
        sc.nsd_resample_limit = static_cast<int>(r.integer(1));
      } else {
        r.fail("unknown strategy key");
      }
    }
    if (!kind_set) {
      const auto kind = parse_strategy_kind(sec.label);
      if (!kind) throw ConfigError(path, sec.line, "kind", "missing strategy kind");
      sc.kind = *kind;
    }
    cfg.strategies.push_back(sc);
  }
  if (cfg.strategies.empty()) throw ConfigError(path, 0, "", "no [strategy ...] sections");

  const auto anchor = [&](const std::string& key) {
    const auto it = seen.find(key);
    return it == seen.end() ? 0 : it->second;
  };
  if (cfg.spec.variant != Variant::Multiproduct && cfg.spec.q != 1)
    throw ConfigError(path, anchor("q"), "q", "must be 1 unless variant = multiproduct");
  if (cfg.spec.variant != Variant::Covariate && cfg.spec.m != 1)
    throw ConfigError(path, anchor("m"), "m", "must be 1 unless variant = covariate");
  for (std::size_t i = 0; i < cfg.contexts.size(); ++i) {
    if (cfg.spec.variant != Variant::Covariate)
      throw ConfigError(path, context_lines[i], "context", "contexts require variant = covariate");
    if (cfg.contexts[i].size() != cfg.spec.m) throw ConfigError(path, context_lines[i], "context", "length must equal m");
  }
  for (const auto& [v, line] : launch_lines) {
    Launch l{static_cast<int>(v[0]), static_cast<int>(v[1]), std::nullopt};
    if (v.size() > 2) l.z = detail::to_vector(std::vector<double>(v.begin() + 2, v.end()));
    if (!cfg.launch_schedule.empty() && l.t < cfg.launch_schedule.back().t)
      throw ConfigError(path, line, "launch", "launch times must be non-decreasing");
    cfg.launch_schedule.push_back(l);
  }

  std::vector<ExperimentConfig> experiments;
  if (sweep_n.empty()) {
    experiments.push_back(cfg);
  } else {
    for (long long n : sweep_n) {
      ExperimentConfig e = cfg;
      e.spec.n = static_cast<int>(n);
      e.name = cfg.name + "/n=" + std::to_string(n);
      experiments.push_back(std::move(e));
    }
  }
  for (const auto& e : experiments) {
    if (e.is_async()) {
      for (std::size_t i = 0; i < e.launch_schedule.size(); ++i) {
        if (e.spec.n > e.launch_schedule[i].H)
          throw ConfigError(path, launch_lines[i].second, "launch", "episode length must be >= n");
      }
    }
    try {
      e.validate();
    } catch (const InvalidInput& err) {
      throw ConfigError(path, 0, "", err.what());
    }
  }

  ConfigFile out;
  out.path = path;
  out.experiments = std::move(experiments);
  out.canonical = detail::canonicalize(sections);
  out.hash = detail::fnv1a64(out.canonical);
  return out;
}

inline ConfigFile load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, 0, "", "cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// CSV

struct ExperimentResult {
  std::string name;
  std::vector<RegretTrace> traces;
};

inline constexpr const char* kRegretCsvHeader = "experiment,strategy,episode,mean_regret,stderr,cum_regret";

/// 17 significant digits, enough to round-trip any double.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_regret_csv(std::ostream& os, const std::vector<ExperimentResult>& results) {
  os << kRegretCsvHeader << '\n';
  for (const auto& r : results) {
    for (const auto& t : r.traces) {
      for (int k = 0; k < t.episodes(); ++k) {
        os << r.name << ',' << t.strategy << ',' << (k + 1) << ',' << format_real(t.per_episode_regret(k)) << ','
           << format_real(t.std_error(k)) << ',' << format_real(t.cumulative_regret(k)) << '\n';
      }
    }
  }
}

inline std::string regret_csv(const std::vector<ExperimentResult>& results) {
  std::ostringstream os;
  write_regret_csv(os, results);
  return os.str();
}

/// Runs every experiment in the file, synchronous or asynchronous.
inline std::vector<ExperimentResult> run_experiments(const ConfigFile& file) {
  std::vector<ExperimentResult> out;
  for (const auto& cfg : file.experiments) {
    ExperimentResult r;
    r.name = cfg.name;
    if (cfg.is_async()) r.traces.push_back(run_async(cfg));
    else r.traces = evaluate_regret(cfg);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace refprice
