#pragma once

#include <cstdint>
#include <functional>

#include "effdid/estimators.hpp"

namespace effdid {

// sqrt(mean(eif^2) / n).
double analytic_se(const Eigen::VectorXd& eif);

// Asymptotic relative efficiency: (se_other / se_bench)^2.
double are(double se_bench, double se_other);

struct BootstrapConfig {
  enum class Scheme { nonparametric_cluster, multiplier };
  enum class MultiplierLaw { normal, rademacher };

  Scheme scheme = Scheme::nonparametric_cluster;
  int replications = 300;
  std::uint64_t seed = 0;
  bool refit_nuisances = true; // cluster scheme re-runs the full pipeline
  MultiplierLaw multiplier = MultiplierLaw::normal;
  long long min_cell = 2;      // resample must retain every cohort this large
  int threads = 1;
  double max_redraw_frac = 0.10;
};

// Statistic recomputed on each resampled panel (full pipeline re-run).
using StatFn = std::function<Eigen::VectorXd(const PanelDataset&)>;

struct BootstrapResult {
  Eigen::MatrixXd draws;   // B x K
  Eigen::VectorXd se;      // K, sd over replications
  Eigen::VectorXd ci_lo_normal, ci_hi_normal; // Gaussian critical values
  Eigen::VectorXd ci_lo_pct, ci_hi_pct;       // percentile
  long redraws = 0;
  bool redraw_warning = false;
};

// Nonparametric clustered bootstrap: resamples n units with replacement
// (whole rows) and re-runs fn. Replications that lose a required cohort are
// redrawn; deterministic given the seed.
BootstrapResult cluster_bootstrap(const PanelDataset& ds, const StatFn& fn,
                                  const Eigen::VectorXd& point,
                                  const BootstrapConfig& cfg);

// Multiplier bootstrap on the influence representation: draw_k = point +
// mean_i(xi_i * eif(i,k)) with unit-level multipliers.
BootstrapResult multiplier_bootstrap(const Eigen::MatrixXd& eifs,
                                     const Eigen::VectorXd& point,
                                     const BootstrapConfig& cfg);

// Clustered bootstrap with frozen nuisances (refit_nuisances = false):
// resamples the per-unit influence contributions instead of re-running the
// pipeline.
BootstrapResult cluster_bootstrap_frozen(const Eigen::MatrixXd& eifs,
                                         const Eigen::VectorXd& point,
                                         const BootstrapConfig& cfg);

// Sup-t simultaneous bands over the components of a bootstrapped vector:
// the critical value is the 95% quantile of max_k |draw_k - point_k| / se_k.
struct SimultaneousBands {
  double critical_value = 0.0;
  Eigen::VectorXd lo, hi;
};

SimultaneousBands simultaneous_bands(const BootstrapResult& boot,
                                     const Eigen::VectorXd& point,
                                     const Eigen::VectorXd& se,
                                     double level = 0.95);

struct TestResult {
  double stat = 0.0;
  int df = 0;
  double pvalue = 1.0;
  bool repaired = false; // covariance difference was rank-deficient
};

// Hausman-type overidentification statistic comparing two event-study
// vectors via the outer product of their per-unit EIF differences (PSD by
// construction). Exposed separately so degenerate inputs can be exercised.
TestResult hausman_statistic(const Eigen::VectorXd& es_eff,
                             const Eigen::VectorXd& es_justid,
                             const Eigen::MatrixXd& eif_eff,
                             const Eigen::MatrixXd& eif_justid);

// Efficient (PT-all) vs just-identified (PT-post) event-study comparison;
// chi-squared with |E| degrees of freedom under PT-all.
TestResult hausman_test(const PanelDataset& ds, const EstimatorConfig& cfg = {});

// Pure Holm step-down over a vector of p-values; returns the rejection mask
// in input order. Thresholds alpha/L, alpha/(L-1), ... stop at the first
// non-rejection.
std::vector<bool> holm_reject(const std::vector<double>& pvalues, double alpha);

struct IncrementalRestriction {
  int comp_g = 0;
  int base_t = 0;
  TestResult test;
  bool rejected = false;
};

struct HolmSelection {
  std::vector<IncrementalRestriction> restrictions; // enumeration order
  std::vector<std::pair<int, int>> surviving;       // (g', t') kept
};

// Incremental Sargan selection: each overidentifying restriction (g', t'),
// t' in 2..g'-1, augments the just-identified model one at a time; the
// augmented event-study vector is compared to the baseline by the Hausman
// statistic and the Holm procedure controls the family-wise error rate.
HolmSelection holm_incremental_selection(const PanelDataset& ds, double alpha,
                                         const EstimatorConfig& cfg = {});

struct PlaceboConfig {
  int comparison_g = kNever; // comparison cohort
  int baseline_t = 0;        // 0 -> g-1, or t-1 when t == g-1
};

// Pre-trend placebo: the estimation pipeline applied at t < g with a fixed
// comparison group and baseline; approximately zero under PT-all.
Estimate placebo_pretrends(const PanelDataset& ds, int g, int t,
                           const PlaceboConfig& pcfg = {},
                           const EstimatorConfig& cfg = {});

double chi_squared_pvalue(double stat, int df);

} // namespace effdid
