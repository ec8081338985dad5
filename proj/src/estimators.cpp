#include "effdid/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "effdid/numerics.hpp"

namespace effdid {

namespace {

void require_valid(const PanelDataset& ds, long long min_cell, bool efficient) {
  ValidationOptions opts;
  opts.min_cell_size = min_cell;
  opts.efficient_mode = efficient;
  const auto rep = validate(ds, opts);
  if (!rep.ok())
    throw Error("VALIDATION", rep.errors.front().code + ": " + rep.errors.front().message);
}

double analytic_se_of(const Eigen::VectorXd& eif) {
  if (eif.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(eif.size());
  return std::sqrt(eif.squaredNorm() / n / n);
}

std::string att_label(int g, int t) {
  return "att(" + std::to_string(g) + "," + std::to_string(t) + ")";
}

// Treatment indicator implied by the cohort labels (non-IV mode).
inline double d_it(const PanelDataset& ds, int i, int t) {
  return (!is_never(ds.cohort[i]) && t >= ds.cohort[i]) ? 1.0 : 0.0;
}

} // namespace

void finalize_estimate(Estimate& est) {
  if (est.eif.size() > 0) est.se_analytic = analytic_se_of(est.eif);
  const auto se = est.se();
  if (se && std::isfinite(*se)) {
    est.ci_lo = est.point - kZ975 * *se;
    est.ci_hi = est.point + kZ975 * *se;
  }
}

EfficientRun run_efficient(const PanelDataset& ds, const EstimatorConfig& cfg) {
  require_valid(ds, cfg.min_cell, true);
  EfficientRun run;
  run.idx = cohort_index(ds);
  if (!run.idx.has_never)
    throw Error("NO_NEVER_COHORT", "apply relabel_terminal_cohort first");
  run.horizons = run.idx.event_horizons();

  std::vector<IfIndex> targets;
  for (int e : run.horizons)
    for (int g : run.idx.treated_at_horizon(e))
      targets.push_back(if_index(g, g + e, cfg.regime, run.idx, cfg.entry_filter));

  const NuisanceFit fits = NuisanceFit::fit(ds, run.idx, targets, cfg.nuisance);
  for (const auto& tgt : targets)
    run.att.emplace(std::make_pair(tgt.g, tgt.t),
                    assemble_att(ds, run.idx, fits, tgt, cfg.cov_variant));

  const double ne = static_cast<double>(run.horizons.size());
  run.es_avg_eif = Eigen::VectorXd::Zero(ds.n());
  for (int e : run.horizons) {
    std::map<int, const AttAssembly*> atts;
    for (int g : run.idx.treated_at_horizon(e)) atts[g] = &run.att.at({g, g + e});
    EsAssembly es = assemble_es(ds, run.idx, e, atts);
    run.es_avg += es.es / ne;
    run.es_avg_eif += es.eif / ne;
    run.es.emplace(e, std::move(es));
  }
  return run;
}

Estimate estimate_att_efficient(const PanelDataset& ds, int g, int t,
                                const EstimatorConfig& cfg) {
  require_valid(ds, cfg.min_cell, true);
  const CohortIndex idx = cohort_index(ds);
  if (!idx.has_never)
    throw Error("NO_NEVER_COHORT", "apply relabel_terminal_cohort first");
  const IfIndex index = if_index(g, t, cfg.regime, idx, cfg.entry_filter);
  const NuisanceFit fits = NuisanceFit::fit(ds, idx, {index}, cfg.nuisance);
  const AttAssembly a = assemble_att(ds, idx, fits, index, cfg.cov_variant);

  Estimate est;
  est.estimand = att_label(g, t);
  est.estimator = "efficient";
  est.point = a.att;
  est.eif = a.eif;
  est.weights = weight_table(a);
  est.n = ds.n();
  est.regime_label = cfg.regime == PtRegime::pt_all ? "pt-all" : "pt-post";
  est.mode_label =
      cfg.nuisance.mode == NuisanceMode::conditional ? "cond" : "uncond";
  finalize_estimate(est);
  return est;
}

Estimate estimate_es(const PanelDataset& ds, int e, const EstimatorConfig& cfg) {
  const EfficientRun run = run_efficient(ds, cfg);
  auto it = run.es.find(e);
  if (it == run.es.end())
    throw Error("NO_COHORT_AT_HORIZON", "no event-study value at e=" + std::to_string(e));
  Estimate est;
  est.estimand = "es(" + std::to_string(e) + ")";
  est.estimator = "efficient";
  est.point = it->second.es;
  est.eif = it->second.eif;
  est.n = ds.n();
  for (const auto& [g, qg] : it->second.q) {
    for (const auto& row : weight_table(run.att.at({g, g + e}))) est.weights.push_back(row);
  }
  est.regime_label = cfg.regime == PtRegime::pt_all ? "pt-all" : "pt-post";
  est.mode_label =
      cfg.nuisance.mode == NuisanceMode::conditional ? "cond" : "uncond";
  finalize_estimate(est);
  return est;
}

Estimate estimate_es_avg(const PanelDataset& ds, const EstimatorConfig& cfg) {
  const EfficientRun run = run_efficient(ds, cfg);
  Estimate est;
  est.estimand = "es_avg";
  est.estimator = "efficient";
  est.point = run.es_avg;
  est.eif = run.es_avg_eif;
  est.n = ds.n();
  for (const auto& [key, a] : run.att)
    for (const auto& row : weight_table(a)) est.weights.push_back(row);
  est.regime_label = cfg.regime == PtRegime::pt_all ? "pt-all" : "pt-post";
  est.mode_label =
      cfg.nuisance.mode == NuisanceMode::conditional ? "cond" : "uncond";
  finalize_estimate(est);
  return est;
}

// --- two-way fixed effects ----------------------------------------------

namespace {

// Two-way within transform; exact for balanced panels.
Eigen::MatrixXd demean_two_way(const Eigen::MatrixXd& m) {
  const Eigen::VectorXd row_mean = m.rowwise().mean();
  const Eigen::RowVectorXd col_mean = m.colwise().mean();
  const double grand = m.mean();
  Eigen::MatrixXd out = m;
  out.colwise() -= row_mean;
  out.rowwise() -= col_mean;
  out.array() += grand;
  return out;
}

struct WithinOls {
  Eigen::VectorXd beta;
  std::vector<Eigen::MatrixXd> x_cols; // demeaned regressors, each n x T
  Eigen::MatrixXd resid;               // n x T
  Eigen::MatrixXd xtx_inv;
};

// OLS of the demeaned outcome on demeaned regressor columns.
WithinOls within_ols(const PanelDataset& ds,
                     const std::vector<Eigen::MatrixXd>& regressors) {
  const int K = static_cast<int>(regressors.size());
  WithinOls fit;
  fit.x_cols.reserve(K);
  for (const auto& r : regressors) fit.x_cols.push_back(demean_two_way(r));
  const Eigen::MatrixXd ydd = demean_two_way(ds.outcomes);

  Eigen::MatrixXd xtx(K, K);
  Eigen::VectorXd xty(K);
  for (int a = 0; a < K; ++a) {
    xty[a] = (fit.x_cols[a].array() * ydd.array()).sum();
    for (int b = a; b < K; ++b) {
      xtx(a, b) = (fit.x_cols[a].array() * fit.x_cols[b].array()).sum();
      xtx(b, a) = xtx(a, b);
    }
  }
  const double scale = xtx.trace() / K;
  if (!(scale > 1e-12))
    throw Error("NO_TREATMENT_VARIATION", "regressors have no within variation");
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 1e-12 * scale)
    throw Error("COLLINEAR_DESIGN", "within regressor matrix is singular");
  fit.beta = ldlt.solve(xty);
  fit.xtx_inv = ldlt.solve(Eigen::MatrixXd::Identity(K, K));
  fit.resid = ydd;
  for (int a = 0; a < K; ++a) fit.resid -= fit.beta[a] * fit.x_cols[a];
  return fit;
}

// Cluster-by-unit influence representation of coefficient combinations:
// IF_i = n * c' (X'X)^{-1} X_i' e_i.
Eigen::VectorXd within_ols_eif(const WithinOls& fit, const Eigen::VectorXd& combo) {
  const int n = static_cast<int>(fit.resid.rows());
  const int K = static_cast<int>(fit.x_cols.size());
  const Eigen::VectorXd c = fit.xtx_inv * combo;
  Eigen::VectorXd eif = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int a = 0; a < K; ++a)
      s += c[a] * fit.x_cols[a].row(i).dot(fit.resid.row(i));
    eif[i] = n * s;
  }
  return eif;
}

} // namespace

Estimate estimate_twfe_static(const PanelDataset& ds) {
  require_valid(ds, 1, false);
  Eigen::MatrixXd d(ds.n(), ds.T());
  for (int i = 0; i < ds.n(); ++i)
    for (int t = 1; t <= ds.T(); ++t) d(i, t - 1) = d_it(ds, i, t);
  const WithinOls fit = within_ols(ds, {d});

  Estimate est;
  est.estimand = "es_avg";
  est.estimator = "twfe";
  est.point = fit.beta[0];
  est.eif = within_ols_eif(fit, Eigen::VectorXd::Ones(1));
  est.n = ds.n();
  finalize_estimate(est);
  return est;
}

namespace {

struct DynamicTwfe {
  std::vector<int> event_times; // excludes -1
  WithinOls fit;
};

DynamicTwfe fit_dynamic_twfe(const PanelDataset& ds) {
  std::set<int> etimes;
  for (int i = 0; i < ds.n(); ++i) {
    if (is_never(ds.cohort[i])) continue;
    for (int t = 1; t <= ds.T(); ++t) {
      const int e = t - ds.cohort[i];
      if (e != -1) etimes.insert(e);
    }
  }
  if (etimes.empty())
    throw Error("NO_TREATMENT_VARIATION", "no treated units");
  DynamicTwfe out;
  out.event_times.assign(etimes.begin(), etimes.end());
  std::vector<Eigen::MatrixXd> dummies;
  for (int e : out.event_times) {
    Eigen::MatrixXd dm = Eigen::MatrixXd::Zero(ds.n(), ds.T());
    for (int i = 0; i < ds.n(); ++i) {
      if (is_never(ds.cohort[i])) continue;
      const int t = ds.cohort[i] + e;
      if (t >= 1 && t <= ds.T()) dm(i, t - 1) = 1.0;
    }
    dummies.push_back(std::move(dm));
  }
  out.fit = within_ols(ds, dummies);
  return out;
}

} // namespace

Estimate estimate_twfe_dynamic(const PanelDataset& ds, int e) {
  require_valid(ds, 1, false);
  if (e == -1)
    throw Error("OMITTED_CATEGORY", "event time -1 is the omitted baseline");
  const DynamicTwfe dt = fit_dynamic_twfe(ds);
  const auto it = std::find(dt.event_times.begin(), dt.event_times.end(), e);
  if (it == dt.event_times.end())
    throw Error("NO_SUCH_EVENT_TIME", "event time " + std::to_string(e) + " not observed");
  const int k = static_cast<int>(it - dt.event_times.begin());
  Eigen::VectorXd combo = Eigen::VectorXd::Zero(dt.event_times.size());
  combo[k] = 1.0;

  Estimate est;
  est.estimand = "es(" + std::to_string(e) + ")";
  est.estimator = "dtwfe";
  est.point = dt.fit.beta[k];
  est.eif = within_ols_eif(dt.fit, combo);
  est.n = ds.n();
  finalize_estimate(est);
  return est;
}

Estimate estimate_twfe_dynamic_avg(const PanelDataset& ds) {
  require_valid(ds, 1, false);
  const DynamicTwfe dt = fit_dynamic_twfe(ds);
  Eigen::VectorXd combo = Eigen::VectorXd::Zero(dt.event_times.size());
  int n_post = 0;
  for (int k = 0; k < static_cast<int>(dt.event_times.size()); ++k)
    if (dt.event_times[k] >= 0) ++n_post;
  if (n_post == 0) throw Error("NO_SUCH_EVENT_TIME", "no post-treatment event times");
  for (int k = 0; k < static_cast<int>(dt.event_times.size()); ++k)
    if (dt.event_times[k] >= 0) combo[k] = 1.0 / n_post;

  Estimate est;
  est.estimand = "es_avg";
  est.estimator = "dtwfe";
  est.point = combo.dot(dt.fit.beta);
  est.eif = within_ols_eif(dt.fit, combo);
  est.n = ds.n();
  finalize_estimate(est);
  return est;
}

// --- CS-style plug-ins ----------------------------------------------------

namespace {

// Doubly-robust two-group contrast of Y_t - Y_base between cohort g and a
// pooled comparison set, with the pooled group treated as one cohort for the
// nuisance fits. Covariate-free mode reduces to the difference in means.
Estimate two_group_dr(const PanelDataset& ds, int g, int t, int base,
                      const std::vector<char>& comp_mask, const std::string& label,
                      const EstimatorConfig& cfg) {
  const int n = ds.n();
  long n_g = 0, n_c = 0;
  for (int i = 0; i < n; ++i) {
    if (ds.cohort[i] == g) ++n_g;
    if (comp_mask[i]) ++n_c;
  }
  if (n_g == 0 || n_c == 0)
    throw Error("EMPTY_COHORT", "empty treated or comparison group");
  const double pi_g = static_cast<double>(n_g) / n;
  const double pi_c = static_cast<double>(n_c) / n;

  const bool cond = cfg.nuisance.mode == NuisanceMode::conditional;
  // Pooled comparison is handled by relabeling the comparison units into a
  // synthetic cohort and reusing the standard fits. Units outside
  // {g, comparison} get unique throwaway labels and carry zero weight below.
  PanelDataset pooled = ds;
  const int pooled_id = kNever;
  for (int i = 0; i < n; ++i)
    pooled.cohort[i] = ds.cohort[i] == g ? g : (comp_mask[i] ? pooled_id : kNever - 1 - i);

  MFunction m_c;
  PropensityRatio r_gc;
  if (cond) {
    m_c = fit_outcome_regression(pooled, pooled_id, t, base, cfg.nuisance.sieve);
    std::vector<int> grid = cfg.nuisance.sieve.k_grid;
    if (grid.empty()) {
      const int kmax =
          std::max(1, static_cast<int>(std::floor(std::cbrt(static_cast<double>(n)))));
      for (int k = 1; k <= kmax; ++k) grid.push_back(k);
    }
    const double cn =
        cfg.nuisance.sieve.use_bic ? std::log(static_cast<double>(n)) : 2.0;
    const int k = select_sieve_dim(pooled, g, pooled_id, grid, cn);
    r_gc = fit_propensity_ratio(pooled, g, pooled_id, cfg.nuisance.sieve, k);
  } else {
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
      if (comp_mask[i]) sum += ds.y(i, t) - ds.y(i, base);
    m_c.g = pooled_id;
    m_c.t = t;
    m_c.t_prime = base;
    m_c.basis = SieveBasis::make(ds.d(), 1);
    m_c.beta = Eigen::VectorXd::Constant(1, sum / n_c);
  }

  Eigen::VectorXd ytilde = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const double dy = ds.y(i, t) - ds.y(i, base);
    const double m_hat = cond ? m_c(ds.covariates.row(i)) : m_c.scalar();
    if (ds.cohort[i] == g) {
      ytilde[i] = (dy - m_hat) / pi_g;
    } else if (comp_mask[i]) {
      const double r = cond ? r_gc(ds.covariates.row(i)) : pi_g / pi_c;
      ytilde[i] = -r * (dy - m_hat) / pi_g;
    }
  }
  const double att = ytilde.mean();

  Estimate est;
  est.estimand = att_label(g, t);
  est.estimator = label;
  est.point = att;
  est.eif.resize(n);
  for (int i = 0; i < n; ++i)
    est.eif[i] = ytilde[i] - (ds.cohort[i] == g ? 1.0 / pi_g : 0.0) * att;
  est.n = n;
  est.mode_label = cond ? "cond" : "uncond";
  finalize_estimate(est);
  return est;
}

std::vector<char> comparison_mask(const PanelDataset& ds, int t, CsComparison cmp) {
  std::vector<char> mask(ds.n(), 0);
  for (int i = 0; i < ds.n(); ++i) {
    if (is_never(ds.cohort[i]))
      mask[i] = 1;
    else if (cmp == CsComparison::not_yet && ds.cohort[i] > t)
      mask[i] = 1;
  }
  return mask;
}

// ATT assembly for the CS plug-in reused by the ES aggregations: returns the
// estimate plus the per-unit EIF needed by the event-study correction terms.
struct CsAtt {
  double att;
  Eigen::VectorXd eif;
};

CsAtt cs_att(const PanelDataset& ds, int g, int t, CsComparison cmp,
             const EstimatorConfig& cfg) {
  const auto mask = comparison_mask(ds, t, cmp);
  Estimate est = two_group_dr(ds, g, t, g - 1, mask,
                              cmp == CsComparison::never ? "cs-never" : "cs-notyet", cfg);
  return {est.point, est.eif};
}

} // namespace

Estimate two_group_contrast(const PanelDataset& ds, int g, int t, int base_t,
                            int comp_g, const EstimatorConfig& cfg) {
  std::vector<char> mask(ds.n(), 0);
  for (int i = 0; i < ds.n(); ++i)
    if (ds.cohort[i] == comp_g) mask[i] = 1;
  return two_group_dr(ds, g, t, base_t, mask, "two-group", cfg);
}

Estimate estimate_cs(const PanelDataset& ds, int g, int t, CsComparison cmp,
                     const EstimatorConfig& cfg) {
  require_valid(ds, cfg.min_cell, false);
  const CohortIndex idx = cohort_index(ds);
  if (std::find(idx.cohorts_treated.begin(), idx.cohorts_treated.end(), g) ==
      idx.cohorts_treated.end())
    throw Error("UNKNOWN_COHORT", "cohort " + std::to_string(g) + " is not treated");
  if (t < g) throw Error("POST_TREATMENT_ONLY", "requires t >= g");
  const auto mask = comparison_mask(ds, t, cmp);
  Estimate est = two_group_dr(ds, g, t, g - 1, mask,
                              cmp == CsComparison::never ? "cs-never" : "cs-notyet", cfg);
  est.regime_label = "pt-post";
  return est;
}

namespace {

Estimate cs_es_impl(const PanelDataset& ds, int e, CsComparison cmp,
                    const EstimatorConfig& cfg, bool average_all) {
  require_valid(ds, cfg.min_cell, false);
  const CohortIndex idx = cohort_index(ds);
  const auto horizons = average_all ? idx.event_horizons() : std::vector<int>{e};

  Eigen::VectorXd eif = Eigen::VectorXd::Zero(ds.n());
  double point = 0.0;
  const double ne = static_cast<double>(horizons.size());
  for (int h : horizons) {
    const auto q = es_cohort_weights(h, idx);
    double pi_sum = 0.0;
    for (const auto& [g, qg] : q) pi_sum += idx.pi(g);
    Eigen::VectorXd pi_corr_sum = Eigen::VectorXd::Zero(ds.n());
    std::map<int, Eigen::VectorXd> pi_eifs;
    for (const auto& [g, qg] : q) {
      pi_eifs[g] = eif_pi(ds, idx, g);
      pi_corr_sum += pi_eifs[g];
    }
    double es_h = 0.0;
    Eigen::VectorXd eif_h = Eigen::VectorXd::Zero(ds.n());
    for (const auto& [g, qg] : q) {
      const CsAtt a = cs_att(ds, g, g + h, cmp, cfg);
      es_h += qg * a.att;
      eif_h += qg * a.eif + (a.att / pi_sum) * (pi_eifs[g] - qg * pi_corr_sum);
    }
    point += es_h / ne;
    eif += eif_h / ne;
  }

  Estimate est;
  est.estimand = average_all ? "es_avg" : "es(" + std::to_string(e) + ")";
  est.estimator = cmp == CsComparison::never ? "cs-never" : "cs-notyet";
  est.point = point;
  est.eif = eif;
  est.n = ds.n();
  est.regime_label = "pt-post";
  est.mode_label =
      cfg.nuisance.mode == NuisanceMode::conditional ? "cond" : "uncond";
  finalize_estimate(est);
  return est;
}

} // namespace

Estimate estimate_cs_es(const PanelDataset& ds, int e, CsComparison cmp,
                        const EstimatorConfig& cfg) {
  return cs_es_impl(ds, e, cmp, cfg, false);
}

Estimate estimate_cs_es_avg(const PanelDataset& ds, CsComparison cmp,
                            const EstimatorConfig& cfg) {
  return cs_es_impl(ds, 0, cmp, cfg, true);
}

// --- imputation -----------------------------------------------------------

namespace {

struct FeFit {
  Eigen::VectorXd eta;   // n
  Eigen::VectorXd alpha; // T (alpha_1 normalized to 0)
};

// Least squares of Y on unit and time effects over untreated cells only.
FeFit fit_untreated_fe(const PanelDataset& ds) {
  const int n = ds.n();
  const int T = ds.T();
  // Parameters: eta_1..eta_n, alpha_2..alpha_T (alpha_1 = 0).
  const int p = n + T - 1;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  std::vector<long> period_cells(T, 0);
  for (int i = 0; i < n; ++i) {
    for (int t = 1; t <= T; ++t) {
      if (d_it(ds, i, t) != 0.0) continue;
      ++period_cells[t - 1];
      const double y = ds.y(i, t);
      a(i, i) += 1.0;
      b[i] += y;
      if (t >= 2) {
        const int j = n + t - 2;
        a(j, j) += 1.0;
        a(i, j) += 1.0;
        a(j, i) += 1.0;
        b[j] += y;
      }
    }
  }
  for (int t = 1; t <= T; ++t)
    if (period_cells[t - 1] == 0)
      throw Error("NO_UNTREATED_CELLS",
                  "period " + std::to_string(t) + " has no untreated observations");
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success)
    throw Error("COLLINEAR_DESIGN", "fixed-effects system is singular");
  const Eigen::VectorXd sol = ldlt.solve(b);
  FeFit fit;
  fit.eta = sol.head(n);
  fit.alpha = Eigen::VectorXd::Zero(T);
  for (int t = 2; t <= T; ++t) fit.alpha[t - 1] = sol[n + t - 2];
  return fit;
}

double imputation_cell_mean(const PanelDataset& ds, const FeFit& fe, int g, int t) {
  double sum = 0.0;
  long cnt = 0;
  for (int i = 0; i < ds.n(); ++i) {
    if (ds.cohort[i] != g) continue;
    sum += ds.y(i, t) - fe.eta[i] - fe.alpha[t - 1];
    ++cnt;
  }
  if (cnt == 0) throw Error("EMPTY_COHORT", "no units in cohort " + std::to_string(g));
  return sum / cnt;
}

} // namespace

Estimate estimate_imputation_att(const PanelDataset& ds, int g, int t) {
  require_valid(ds, 1, false);
  if (t < g) throw Error("POST_TREATMENT_ONLY", "requires t >= g");
  const FeFit fe = fit_untreated_fe(ds);
  Estimate est;
  est.estimand = att_label(g, t);
  est.estimator = "imputation";
  est.point = imputation_cell_mean(ds, fe, g, t);
  est.n = ds.n();
  return est;
}

Estimate estimate_imputation_es(const PanelDataset& ds, int e) {
  require_valid(ds, 1, false);
  const CohortIndex idx = cohort_index(ds);
  const auto q = es_cohort_weights(e, idx);
  const FeFit fe = fit_untreated_fe(ds);
  double point = 0.0;
  for (const auto& [g, qg] : q) point += qg * imputation_cell_mean(ds, fe, g, g + e);
  Estimate est;
  est.estimand = "es(" + std::to_string(e) + ")";
  est.estimator = "imputation";
  est.point = point;
  est.n = ds.n();
  return est;
}

Estimate estimate_imputation_es_avg(const PanelDataset& ds) {
  require_valid(ds, 1, false);
  const CohortIndex idx = cohort_index(ds);
  const FeFit fe = fit_untreated_fe(ds);
  double point = 0.0;
  const auto horizons = idx.event_horizons();
  for (int e : horizons) {
    const auto q = es_cohort_weights(e, idx);
    double es_e = 0.0;
    for (const auto& [g, qg] : q) es_e += qg * imputation_cell_mean(ds, fe, g, g + e);
    point += es_e / static_cast<double>(horizons.size());
  }
  Estimate est;
  est.estimand = "es_avg";
  est.estimator = "imputation";
  est.point = point;
  est.n = ds.n();
  return est;
}

// --- instrumented DiD ------------------------------------------------------

namespace {

struct LattStack {
  // Column j of values: (G_g - r G_inf) * (contrast_j - group-infinity mean),
  // un-normalized by pi. theta[j] = column mean / pi = per-entry estimate.
  Eigen::MatrixXd cols;
  Eigen::VectorXd theta;
};

// contrast(i) must be linear in the data; mean over never-exposed units is
// used as the m-hat adjustment (covariate-free mode).
LattStack build_latt_stack(const PanelDataset& ds, int g,
                           const std::vector<std::function<double(int)>>& contrasts) {
  const int n = ds.n();
  const int J = static_cast<int>(contrasts.size());
  long n_g = 0, n_inf = 0;
  for (int i = 0; i < n; ++i) {
    if (ds.cohort[i] == g) ++n_g;
    if (is_never(ds.cohort[i])) ++n_inf;
  }
  const double pi_g = static_cast<double>(n_g) / n;
  const double r = static_cast<double>(n_g) / static_cast<double>(n_inf);

  LattStack st;
  st.cols.setZero(n, J);
  st.theta.setZero(J);
  for (int j = 0; j < J; ++j) {
    double m_inf = 0.0;
    for (int i = 0; i < n; ++i)
      if (is_never(ds.cohort[i])) m_inf += contrasts[j](i);
    m_inf /= static_cast<double>(n_inf);
    for (int i = 0; i < n; ++i) {
      if (ds.cohort[i] == g)
        st.cols(i, j) = contrasts[j](i) - m_inf;
      else if (is_never(ds.cohort[i]))
        st.cols(i, j) = -r * (contrasts[j](i) - m_inf);
    }
    st.theta[j] = st.cols.col(j).mean() / pi_g;
  }
  return st;
}

// Optimal weights from the sample covariance of the per-entry centered
// influence functions IF_j = col_j - G_g * theta_j.
Eigen::VectorXd latt_weights(const PanelDataset& ds, int g, const LattStack& st) {
  const int n = ds.n();
  const int J = static_cast<int>(st.cols.cols());
  Eigen::MatrixXd ifm = st.cols;
  for (int i = 0; i < n; ++i) {
    if (ds.cohort[i] != g) continue;
    for (int j = 0; j < J; ++j) ifm(i, j) -= st.theta[j];
  }
  const MergeInfo merge = collinearity_merge(st.cols);
  Eigen::MatrixXd v = (ifm.transpose() * ifm) / static_cast<double>(n);
  const int Jm = merge.merged_size();
  Eigen::MatrixXd sub(Jm, Jm);
  for (int a = 0; a < Jm; ++a)
    for (int b = 0; b < Jm; ++b) sub(a, b) = v(merge.groups[a][0], merge.groups[b][0]);
  const auto rep = psd_repair(sub);
  const Eigen::VectorXd wm = min_variance_weights(rep.matrix);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(J);
  for (int a = 0; a < Jm; ++a)
    for (int j : merge.groups[a])
      w[j] = wm[a] / static_cast<double>(merge.groups[a].size());
  return w;
}

} // namespace

LattEstimate estimate_latt(const PanelDataset& ds, int g, int t,
                           double denom_tolerance) {
  if (!ds.iv_mode())
    throw Error("CONFIG", "estimate_latt requires an IV-mode dataset");
  require_valid(ds, 2, true);
  const CohortIndex idx = cohort_index(ds);
  if (!idx.has_never)
    throw Error("NO_NEVER_COHORT", "LATT needs never-exposed units");
  if (idx.cohorts_treated.size() != 1 || idx.cohorts_treated[0] != g)
    throw Error("CONFIG", "LATT supports a single instrument-exposure date");
  if (t < g) throw Error("POST_TREATMENT_ONLY", "requires t >= g");

  // Numerator stack: outcome contrasts for t' in 1..g-1, then mixed
  // treatment-augmented contrasts for t' in 2..g-1. Denominator swaps the
  // roles of Y and D.
  std::vector<std::function<double(int)>> num, den;
  for (int tp = 1; tp <= g - 1; ++tp)
    num.push_back([&ds, t, tp](int i) { return ds.y(i, t) - ds.y(i, tp); });
  for (int tp = 2; tp <= g - 1; ++tp)
    num.push_back([&ds, t, tp](int i) {
      return ds.y(i, t) - ds.y(i, 1) + ds.treat(i, tp) - ds.treat(i, 1);
    });
  for (int tp = 1; tp <= g - 1; ++tp)
    den.push_back([&ds, t, tp](int i) { return ds.treat(i, t) - ds.treat(i, tp); });
  for (int tp = 2; tp <= g - 1; ++tp)
    den.push_back([&ds, t, tp](int i) {
      return ds.treat(i, t) - ds.treat(i, 1) + ds.y(i, tp) - ds.y(i, 1);
    });

  const LattStack num_st = build_latt_stack(ds, g, num);
  const LattStack den_st = build_latt_stack(ds, g, den);
  const Eigen::VectorXd w_num = latt_weights(ds, g, num_st);
  const Eigen::VectorXd w_den = latt_weights(ds, g, den_st);

  LattEstimate out;
  out.n = ds.n();
  out.w_numerator = w_num;
  out.w_denominator = w_den;
  out.numerator = w_num.dot(num_st.theta);
  out.denominator = w_den.dot(den_st.theta);
  if (std::abs(out.denominator) < denom_tolerance)
    throw Error("WEAK_FIRST_STAGE",
                "denominator " + std::to_string(out.denominator) + " below tolerance");
  out.ratio = out.numerator / out.denominator;

  const double pi_g = idx.pi(g);
  out.eif.resize(ds.n());
  for (int i = 0; i < ds.n(); ++i) {
    const double gg = ds.cohort[i] == g ? 1.0 : 0.0;
    const double phi_num = num_st.cols.row(i).dot(w_num) - gg * out.numerator;
    const double phi_den = den_st.cols.row(i).dot(w_den) - gg * out.denominator;
    out.eif[i] = (phi_num - out.ratio * phi_den) / (pi_g * out.denominator);
  }
  out.se = analytic_se_of(out.eif);
  out.ci_lo = out.ratio - kZ975 * out.se;
  out.ci_hi = out.ratio + kZ975 * out.se;
  return out;
}

} // namespace effdid
