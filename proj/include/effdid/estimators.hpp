#pragma once

#include <map>
#include <optional>
#include <string>

#include "effdid/eif.hpp"

namespace effdid {

inline constexpr double kZ975 = 1.959963984540054;

struct EstimatorConfig {
  PtRegime regime = PtRegime::pt_all;
  NuisanceConfig nuisance;
  CovVariant cov_variant = CovVariant::model_star;
  EntryFilter entry_filter;
  long long min_cell = 2;
};

// Point estimate with its influence representation. se_analytic is
// sqrt(mean(eif^2)/n) whenever an influence representation exists; the
// confidence interval uses Gaussian critical values with the bootstrap SE
// when present, the analytic SE otherwise.
struct Estimate {
  std::string estimand;
  std::string estimator;
  double point = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd eif;
  std::optional<double> se_analytic;
  std::optional<double> se_bootstrap;
  std::optional<double> ci_lo;
  std::optional<double> ci_hi;
  std::vector<WeightRow> weights;
  long n = 0;
  std::string regime_label;
  std::string mode_label;

  std::optional<double> se() const {
    return se_bootstrap ? se_bootstrap : se_analytic;
  }
};

// Recomputes se_analytic from the influence representation and refreshes the
// Gaussian CI from the preferred standard error.
void finalize_estimate(Estimate& est);

// All efficient ATT/ES objects for one dataset and configuration; shares a
// single nuisance fit across targets.
struct EfficientRun {
  CohortIndex idx;
  std::vector<int> horizons;
  std::map<std::pair<int, int>, AttAssembly> att; // keyed by (g,t)
  std::map<int, EsAssembly> es;
  double es_avg = 0.0;
  Eigen::VectorXd es_avg_eif;
};

EfficientRun run_efficient(const PanelDataset& ds, const EstimatorConfig& cfg);

Estimate estimate_att_efficient(const PanelDataset& ds, int g, int t,
                                const EstimatorConfig& cfg = {});
Estimate estimate_es(const PanelDataset& ds, int e, const EstimatorConfig& cfg = {});
Estimate estimate_es_avg(const PanelDataset& ds, const EstimatorConfig& cfg = {});

// --- comparison estimators ---------------------------------------------

// Static TWFE: within (two-way demeaned) least squares of Y on the treatment
// indicator, cluster-by-unit influence representation.
Estimate estimate_twfe_static(const PanelDataset& ds);

// Event-study TWFE with event-time dummies excluding -1; returns beta_e.
Estimate estimate_twfe_dynamic(const PanelDataset& ds, int e);

// Average of the post-treatment dynamic TWFE coefficients with the joint
// cluster covariance.
Estimate estimate_twfe_dynamic_avg(const PanelDataset& ds);

enum class CsComparison { never, not_yet };

// Doubly-robust contrast of Y_t - Y_base between cohort g and a single
// comparison cohort (kNever for the never-treated). Building block for the
// CS plug-ins and the pre-trend placebo.
Estimate two_group_contrast(const PanelDataset& ds, int g, int t, int base_t,
                            int comp_g, const EstimatorConfig& cfg = {});

// Callaway/Sant'Anna-style plug-in for the (g, g-1, comparison) pair. The
// not-yet variant pools never-treated units with cohorts g' > t at equal
// unit weight.
Estimate estimate_cs(const PanelDataset& ds, int g, int t, CsComparison cmp,
                     const EstimatorConfig& cfg = {});
Estimate estimate_cs_es(const PanelDataset& ds, int e, CsComparison cmp,
                        const EstimatorConfig& cfg = {});
Estimate estimate_cs_es_avg(const PanelDataset& ds, CsComparison cmp,
                            const EstimatorConfig& cfg = {});

// Imputation estimator: unit+time fixed effects fit on untreated cells only,
// treated-cell counterfactuals imputed, effects averaged over target cells.
// No analytic influence representation; bootstrap SEs on request.
Estimate estimate_imputation_att(const PanelDataset& ds, int g, int t);
Estimate estimate_imputation_es(const PanelDataset& ds, int e);
Estimate estimate_imputation_es_avg(const PanelDataset& ds);

// --- instrumented DiD ----------------------------------------------------

struct LattEstimate {
  double numerator = 0.0;
  double denominator = 0.0;
  double ratio = 0.0;
  double se = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
  Eigen::VectorXd eif;
  Eigen::VectorXd w_numerator;
  Eigen::VectorXd w_denominator;
  long n = 0;
};

// Efficient LATT(g,t) for a single instrument-exposure date with
// unconditional covariance weighting. Throws WEAK_FIRST_STAGE when the
// denominator falls below the tolerance.
LattEstimate estimate_latt(const PanelDataset& ds, int g, int t,
                           double denom_tolerance = 1e-6);

} // namespace effdid
