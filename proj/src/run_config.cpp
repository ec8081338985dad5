#include "effdid/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace effdid {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long to_ll(const std::string& v, const std::string& key) {
  long long x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size())
    throw Error("CONFIG", "key '" + key + "' expects an integer, got '" + v + "'");
  return x;
}

double to_d(const std::string& v, const std::string& key) {
  double x = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size())
    throw Error("CONFIG", "key '" + key + "' expects a number, got '" + v + "'");
  return x;
}

bool to_b(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error("CONFIG", "key '" + key + "' expects a boolean, got '" + v + "'");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& v, const std::string& key, F conv) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(conv(item, key));
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"input", [](RunConfig& c, const std::string&, const std::string& v) { c.input_path = v; }},
      {"out", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_ll(v, k)); }},
      {"threads", [](RunConfig& c, const std::string& k, const std::string& v) { c.threads = static_cast<int>(to_ll(v, k)); }},
      {"covariates", [](RunConfig& c, const std::string& k, const std::string& v) { c.covariates = static_cast<int>(to_ll(v, k)); }},
      {"treatment-col", [](RunConfig& c, const std::string&, const std::string& v) { c.treatment_col = v; }},
      {"estimand", [](RunConfig& c, const std::string&, const std::string& v) { c.estimand = v; }},
      {"att.g", [](RunConfig& c, const std::string& k, const std::string& v) { c.att_g = static_cast<int>(to_ll(v, k)); }},
      {"att.t", [](RunConfig& c, const std::string& k, const std::string& v) { c.att_t = static_cast<int>(to_ll(v, k)); }},
      {"es.e", [](RunConfig& c, const std::string& k, const std::string& v) { c.es_e = static_cast<int>(to_ll(v, k)); }},
      {"estimator", [](RunConfig& c, const std::string&, const std::string& v) { c.estimator = v; }},
      {"regime", [](RunConfig& c, const std::string&, const std::string& v) { c.regime = v; }},
      {"mode", [](RunConfig& c, const std::string&, const std::string& v) { c.mode = v; }},
      {"min-cell", [](RunConfig& c, const std::string& k, const std::string& v) { c.min_cell = to_ll(v, k); }},
      {"nuisance.basis", [](RunConfig& c, const std::string&, const std::string& v) { c.basis = v; }},
      {"nuisance.kgrid", [](RunConfig& c, const std::string& k, const std::string& v) { c.k_grid = to_list<int>(v, k, [](const std::string& s, const std::string& kk) { return static_cast<int>(to_ll(s, kk)); }); }},
      {"nuisance.cn", [](RunConfig& c, const std::string&, const std::string& v) { c.cn = v; }},
      {"nuisance.bandwidth", [](RunConfig& c, const std::string& k, const std::string& v) { c.bandwidth = to_list<double>(v, k, to_d); }},
      {"nuisance.ratio-floor", [](RunConfig& c, const std::string& k, const std::string& v) { c.ratio_floor = to_d(v, k); }},
      {"nuisance.m-terms", [](RunConfig& c, const std::string& k, const std::string& v) { c.m_terms = static_cast<int>(to_ll(v, k)); }},
      {"bootstrap.enabled", [](RunConfig& c, const std::string& k, const std::string& v) { c.bootstrap_enabled = to_b(v, k); }},
      {"bootstrap.reps", [](RunConfig& c, const std::string& k, const std::string& v) { c.bootstrap_reps = static_cast<int>(to_ll(v, k)); }},
      {"bootstrap.scheme", [](RunConfig& c, const std::string&, const std::string& v) { c.bootstrap_scheme = v; }},
      {"bootstrap.multiplier", [](RunConfig& c, const std::string&, const std::string& v) { c.bootstrap_multiplier = v; }},
      {"bootstrap.refit", [](RunConfig& c, const std::string& k, const std::string& v) { c.bootstrap_refit = to_b(v, k); }},
      {"ci.percentile", [](RunConfig& c, const std::string& k, const std::string& v) { c.percentile_ci = to_b(v, k); }},
      {"test.kind", [](RunConfig& c, const std::string&, const std::string& v) { c.test_kind = v; }},
      {"test.alpha", [](RunConfig& c, const std::string& k, const std::string& v) { c.alpha = to_d(v, k); }},
      {"test.degenerate", [](RunConfig& c, const std::string& k, const std::string& v) { c.test_degenerate = to_b(v, k); }},
      {"placebo.g", [](RunConfig& c, const std::string& k, const std::string& v) { c.placebo_g = static_cast<int>(to_ll(v, k)); }},
      {"placebo.t", [](RunConfig& c, const std::string& k, const std::string& v) { c.placebo_t = static_cast<int>(to_ll(v, k)); }},
      {"placebo.baseline", [](RunConfig& c, const std::string& k, const std::string& v) { c.placebo_baseline = static_cast<int>(to_ll(v, k)); }},
      {"placebo.comparison", [](RunConfig& c, const std::string&, const std::string& v) { c.placebo_comparison = v; }},
      {"sim.dgp", [](RunConfig& c, const std::string&, const std::string& v) { c.dgp = v; }},
      {"sim.n", [](RunConfig& c, const std::string& k, const std::string& v) { c.sim_n = static_cast<int>(to_ll(v, k)); }},
      {"sim.reps", [](RunConfig& c, const std::string& k, const std::string& v) { c.sim_reps = static_cast<int>(to_ll(v, k)); }},
      {"sim.rho", [](RunConfig& c, const std::string& k, const std::string& v) { c.rho = to_d(v, k); }},
      {"sim.sigma", [](RunConfig& c, const std::string& k, const std::string& v) { c.sim_sigma = to_d(v, k); }},
      {"sim.sd-innov", [](RunConfig& c, const std::string& k, const std::string& v) { c.sim_sd_innov = to_d(v, k); }},
      {"sim.sd-unit-fe", [](RunConfig& c, const std::string& k, const std::string& v) { c.sim_sd_unit_fe = to_d(v, k); }},
      {"sim.sd-time-fe", [](RunConfig& c, const std::string& k, const std::string& v) { c.sim_sd_time_fe = to_d(v, k); }},
      {"sim.estimators", [](RunConfig& c, const std::string&, const std::string& v) { c.sim_estimators = v; }},
      {"sim.residual-pool", [](RunConfig& c, const std::string&, const std::string& v) { c.sim_residual_pool = v; }},
      {"sim.outcome-model", [](RunConfig& c, const std::string&, const std::string& v) { c.sd_outcome_model = v; }},
      {"sim.assignment", [](RunConfig& c, const std::string&, const std::string& v) { c.sd_assignment = v; }},
      {"weights-csv", [](RunConfig& c, const std::string& k, const std::string& v) { c.weights_csv = to_b(v, k); }},
  };
  return table;
}

} // namespace

void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw Error("CONFIG", "unknown config key '" + key + "'");
  it->second(cfg, key, value);
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("CONFIG", "cannot open config file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("CONFIG", path + ":" + std::to_string(lineno) + ": expected key = value");
    apply_config_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string canonical_config(const RunConfig& c) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
  };
  // The output directory and thread count do not affect any computed value,
  // so they stay out of the canonical form: rerunning into a different
  // directory yields byte-identical artifacts.
  std::ostringstream os;
  os << "command=" << c.command << '\n'
     << "input=" << c.input_path << '\n'
     << "seed=" << c.seed << '\n'
     << "covariates=" << c.covariates << '\n'
     << "treatment-col=" << c.treatment_col << '\n'
     << "estimand=" << c.estimand << '\n'
     << "att.g=" << c.att_g << '\n'
     << "att.t=" << c.att_t << '\n'
     << "es.e=" << c.es_e << '\n'
     << "estimator=" << c.estimator << '\n'
     << "regime=" << c.regime << '\n'
     << "mode=" << c.mode << '\n'
     << "min-cell=" << c.min_cell << '\n';
  os << "nuisance.basis=" << c.basis << '\n';
  os << "nuisance.kgrid=";
  for (std::size_t i = 0; i < c.k_grid.size(); ++i)
    os << (i ? "," : "") << c.k_grid[i];
  os << '\n' << "nuisance.cn=" << c.cn << '\n';
  os << "nuisance.bandwidth=";
  for (std::size_t i = 0; i < c.bandwidth.size(); ++i)
    os << (i ? "," : "") << num(c.bandwidth[i]);
  os << '\n'
     << "nuisance.ratio-floor=" << num(c.ratio_floor) << '\n'
     << "nuisance.m-terms=" << c.m_terms << '\n'
     << "bootstrap.enabled=" << (c.bootstrap_enabled ? "true" : "false") << '\n'
     << "bootstrap.reps=" << c.bootstrap_reps << '\n'
     << "bootstrap.scheme=" << c.bootstrap_scheme << '\n'
     << "bootstrap.multiplier=" << c.bootstrap_multiplier << '\n'
     << "bootstrap.refit=" << (c.bootstrap_refit ? "true" : "false") << '\n'
     << "ci.percentile=" << (c.percentile_ci ? "true" : "false") << '\n'
     << "test.kind=" << c.test_kind << '\n'
     << "test.alpha=" << num(c.alpha) << '\n'
     << "test.degenerate=" << (c.test_degenerate ? "true" : "false") << '\n'
     << "placebo.g=" << c.placebo_g << '\n'
     << "placebo.t=" << c.placebo_t << '\n'
     << "placebo.baseline=" << c.placebo_baseline << '\n'
     << "placebo.comparison=" << c.placebo_comparison << '\n'
     << "sim.dgp=" << c.dgp << '\n'
     << "sim.n=" << c.sim_n << '\n'
     << "sim.reps=" << c.sim_reps << '\n'
     << "sim.rho=" << num(c.rho) << '\n'
     << "sim.sigma=" << num(c.sim_sigma) << '\n'
     << "sim.sd-innov=" << num(c.sim_sd_innov) << '\n'
     << "sim.sd-unit-fe=" << num(c.sim_sd_unit_fe) << '\n'
     << "sim.sd-time-fe=" << num(c.sim_sd_time_fe) << '\n'
     << "sim.estimators=" << c.sim_estimators << '\n'
     << "sim.residual-pool=" << c.sim_residual_pool << '\n'
     << "sim.outcome-model=" << c.sd_outcome_model << '\n'
     << "sim.assignment=" << c.sd_assignment << '\n'
     << "weights-csv=" << (c.weights_csv ? "true" : "false") << '\n';
  return os.str();
}

std::string config_digest(const RunConfig& cfg) {
  const std::string s = canonical_config(cfg);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

} // namespace effdid
