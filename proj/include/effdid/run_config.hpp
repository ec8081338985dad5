#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "effdid/errors.hpp"

namespace effdid {

// Fully resolved CLI run configuration. Every estimator-reachable option has
// a documented default; unknown config keys are fatal. Flags override file
// values.
struct RunConfig {
  std::string command; // estimate | simulate | test | weights

  // input / output
  std::string input_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int threads = 0; // 0 = available parallelism
  int covariates = 0;
  std::string treatment_col; // nonempty enables IV mode

  // estimand selection
  std::string estimand;      // att | es | es-avg | latt
  int att_g = 0, att_t = 0;
  int es_e = 0;
  std::string estimator = "efficient";
  std::string regime = "pt-all"; // pt-all | pt-post
  std::string mode = "uncond";   // uncond | cond
  long long min_cell = 2;

  // nuisance
  std::string basis = "poly";       // sieve family; raw polynomials only
  std::vector<int> k_grid;          // empty -> 1..floor(n^(1/3))
  std::string cn = "aic";           // aic | bic
  std::vector<double> bandwidth;    // empty -> silverman
  double ratio_floor = 1e-6;
  int m_terms = 0;

  // inference
  bool bootstrap_enabled = false;
  int bootstrap_reps = 300;
  std::string bootstrap_scheme = "cluster";     // cluster | multiplier
  std::string bootstrap_multiplier = "normal";  // normal | rademacher
  bool bootstrap_refit = true;
  bool percentile_ci = false;

  // tests
  std::string test_kind = "hausman"; // hausman | holm | placebo
  double alpha = 0.05;
  int placebo_g = 0, placebo_t = 0, placebo_baseline = 0;
  std::string placebo_comparison = "inf";
  bool test_degenerate = false;

  // simulation
  std::string dgp = "staggered"; // staggered | single-date
  int sim_n = 0;                 // 0 = DGP default
  int sim_reps = 200;
  double rho = 0.0;
  double sim_sigma = 0.309;
  double sim_sd_innov = 0.2;
  double sim_sd_unit_fe = 0.2;
  double sim_sd_time_fe = 0.05;
  std::string sim_estimators = "edid,cs-sa,cs-dcdh,bjs-g-w";
  std::string sim_residual_pool; // file of innovations, one per line
  std::string sd_outcome_model = "baseline"; // baseline|no-corr|no-m|no-f|only-noise
  std::string sd_assignment = "logistic";    // logistic | random

  bool weights_csv = false;
};

// Parses "key = value" lines ('#' comments); throws CONFIG on unknown keys.
void apply_config_file(RunConfig& cfg, const std::string& path);

// Applies one key/value pair (shared by the file parser and flag overrides).
void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value);

// Canonical serialization of every effective setting; input to the digest
// and embedded in artifacts for reproducibility.
std::string canonical_config(const RunConfig& cfg);

// FNV-1a 64-bit digest of the canonical serialization, as 16 hex chars.
std::string config_digest(const RunConfig& cfg);

} // namespace effdid
