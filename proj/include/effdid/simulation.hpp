#pragma once

#include <array>
#include <cstdint>

#include "effdid/estimators.hpp"

namespace effdid {

// Single-treatment-date design: interactive fixed effects plus AR(2) errors,
// logistic or random assignment, heterogeneous mean-zero effects. True
// ATT(g,t) is zero for every t (placebo design).
struct SingleDateDgp {
  int n = 50;
  int T = 7;            // four pre-treatment, three post-treatment periods
  int treat_period = 5;
  bool with_m = true;   // interactive factor component
  bool with_f = true;   // additive unit/time fixed effects
  bool serial_corr = true;
  double ar1 = 0.5, ar2 = 0.2;
  double innov_sd = 1.0;
  enum class Assignment { logistic, random } assignment = Assignment::logistic;
  double random_treat_prob = 0.5;
  double phi_eta = 1.0;
  std::array<double, 4> phi_factor = {0.5, -0.5, 0.5, -0.5};
  double tau_sd = 1.0;
  int min_treated = 2;
  double fallback_frac = 0.2; // share treated when the minimum is violated
  std::uint64_t factor_seed = 771244901; // latent factors frozen across draws
};

// Staggered adoption design with three treatment dates, linear-in-event-time
// effects scaled by sigma, and AR(1) errors generated recursively from
// eps_0 = 0 (explosive |rho| > 1 settings use the same mechanical rule).
// The last cohort is relabeled never-treated and its first period dropped.
struct StaggeredDgp {
  int n = 400;
  int T = 11;
  std::vector<int> dates = {5, 8, 11};
  std::vector<double> slopes = {0.5, 0.3, 0.1};
  double sigma = 0.309;
  double rho = 0.0;
  double sd_unit_fe = 0.2;
  double sd_time_fe = 0.05;
  double sd_innov = 0.2;
  std::vector<double> residual_pool; // optional empirical innovation pool
  long long min_cell = 2;
};

struct StaggeredTruth {
  std::map<std::pair<int, int>, double> att; // post-relabel targets
  std::map<int, double> es;
  double es_avg = 0.0;
};

struct SingleDatePanel {
  PanelDataset data;
  double truth_es_avg = 0.0; // zero by construction
  bool used_fallback = false;
};

struct StaggeredPanel {
  PanelDataset data; // already relabeled, T-1 periods
  StaggeredTruth truth;
};

SingleDatePanel gen_single_date(const SingleDateDgp& dgp, std::uint64_t seed);
StaggeredPanel gen_staggered(const StaggeredDgp& dgp, std::uint64_t seed);

// Population truth implied by the staggered configuration (equal cohort
// probabilities), computed without generating data.
StaggeredTruth staggered_truth(const StaggeredDgp& dgp);

enum class EstimatorKind { edid, twfe, dtwfe, cs_never, cs_notyet, imputation };

std::string estimator_name(EstimatorKind k);

struct McConfig {
  int replications = 200;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> rep_seeds; // explicit per-replication seeds; empty
                                        // -> derived from seed
  std::vector<EstimatorKind> estimators = {
      EstimatorKind::edid, EstimatorKind::cs_never, EstimatorKind::cs_notyet,
      EstimatorKind::imputation};
  int threads = 1;
  double level = 0.95;
};

struct McRow {
  EstimatorKind estimator;
  double bias = 0.0;
  double rmse = 0.0;
  double rel_rmse = 1.0;     // benchmark = edid
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double ci_length = std::numeric_limits<double>::quiet_NaN();
  double rel_ci_length = std::numeric_limits<double>::quiet_NaN();
  int failures = 0;
  bool flagged = false; // more than 5% failed replications
};

struct McReport {
  std::string dgp_label;
  std::string estimand = "es_avg";
  double truth = 0.0;
  int replications = 0;
  std::uint64_t seed = 0;
  std::vector<McRow> rows;
};

// Bias/RMSE/coverage/CI-length comparison of the configured estimators for
// ES_avg; deterministic given the seed.
McReport run_monte_carlo(const StaggeredDgp& dgp, const McConfig& cfg);
McReport run_monte_carlo(const SingleDateDgp& dgp, const McConfig& cfg);

// Mean efficiency weights of all targets on one generated panel, for the
// heatmap export.
std::vector<WeightRow> heatmap_weights(const PanelDataset& ds,
                                       const EstimatorConfig& cfg = {});

} // namespace effdid
