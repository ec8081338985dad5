#include "effdid/inference.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "effdid/numerics.hpp"
#include "effdid/rng.hpp"

namespace effdid {

double analytic_se(const Eigen::VectorXd& eif) {
  const double n = static_cast<double>(eif.size());
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(eif.squaredNorm() / n / n);
}

double are(double se_bench, double se_other) {
  const double r = se_other / se_bench;
  return r * r;
}

double chi_squared_pvalue(double stat, int df) {
  if (df <= 0) return 1.0;
  if (stat <= 0.0) return 1.0;
  boost::math::chi_squared dist(static_cast<double>(df));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

namespace {

PanelDataset resample_units(const PanelDataset& ds, const std::vector<int>& pick) {
  PanelDataset out;
  const int n = static_cast<int>(pick.size());
  out.unit_ids.reserve(n);
  out.period_labels = ds.period_labels;
  out.outcomes.resize(n, ds.T());
  out.cohort.resize(n);
  out.covariates.resize(n, ds.d());
  if (ds.treatment) out.treatment = Eigen::MatrixXd(n, ds.T());
  for (int r = 0; r < n; ++r) {
    const int i = pick[r];
    out.unit_ids.push_back(ds.unit_ids[i]);
    out.outcomes.row(r) = ds.outcomes.row(i);
    out.cohort[r] = ds.cohort[i];
    if (ds.d() > 0) out.covariates.row(r) = ds.covariates.row(i);
    if (ds.treatment) out.treatment->row(r) = ds.treatment->row(i);
  }
  return out;
}

bool resample_keeps_cohorts(const PanelDataset& ds, const std::vector<int>& pick,
                            const std::map<int, long long>& required,
                            long long min_cell) {
  std::map<int, long long> counts;
  for (int i : pick) ++counts[ds.cohort[i]];
  for (const auto& [g, c] : required) {
    auto it = counts.find(g);
    if (it == counts.end() || it->second < std::min(min_cell, c)) return false;
  }
  return true;
}

Eigen::VectorXd column_quantile(const Eigen::MatrixXd& draws, double q) {
  const int b = static_cast<int>(draws.rows());
  Eigen::VectorXd out(draws.cols());
  for (int k = 0; k < draws.cols(); ++k) {
    std::vector<double> v(draws.col(k).data(), draws.col(k).data() + b);
    std::sort(v.begin(), v.end());
    const double pos = q * (b - 1);
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, b - 1);
    const double frac = pos - lo;
    out[k] = (1.0 - frac) * v[lo] + frac * v[hi];
  }
  return out;
}

void fill_intervals(BootstrapResult& res, const Eigen::VectorXd& point) {
  const int b = static_cast<int>(res.draws.rows());
  const int k = static_cast<int>(res.draws.cols());
  res.se.resize(k);
  for (int j = 0; j < k; ++j) {
    const double mean = res.draws.col(j).mean();
    double ss = 0.0;
    for (int r = 0; r < b; ++r) {
      const double c = res.draws(r, j) - mean;
      ss += c * c;
    }
    res.se[j] = std::sqrt(ss / std::max(b - 1, 1));
  }
  res.ci_lo_normal = point - kZ975 * res.se;
  res.ci_hi_normal = point + kZ975 * res.se;
  res.ci_lo_pct = column_quantile(res.draws, 0.025);
  res.ci_hi_pct = column_quantile(res.draws, 0.975);
}

} // namespace

BootstrapResult cluster_bootstrap(const PanelDataset& ds, const StatFn& fn,
                                  const Eigen::VectorXd& point,
                                  const BootstrapConfig& cfg) {
  if (cfg.replications < 2)
    throw Error("CONFIG", "bootstrap needs at least 2 replications");
  const int n = ds.n();
  const int b = cfg.replications;
  const int k = static_cast<int>(point.size());

  std::map<int, long long> required;
  for (int g : ds.cohort) ++required[g];

  BootstrapResult res;
  res.draws.resize(b, k);
  std::vector<long> redraw_counts(b, 0);

  parallel_for(static_cast<std::size_t>(b), cfg.threads, [&](std::size_t r) {
    const std::uint64_t rep_seed = derive_seed(cfg.seed, r);
    std::vector<int> pick(n);
    for (long attempt = 0;; ++attempt) {
      if (attempt > 1000)
        throw Error("BOOTSTRAP_DEGENERATE",
                    "cannot draw a resample keeping all cohorts");
      Rng rng(derive_seed(rep_seed, static_cast<std::uint64_t>(attempt)));
      for (int i = 0; i < n; ++i)
        pick[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      if (resample_keeps_cohorts(ds, pick, required, cfg.min_cell)) break;
      ++redraw_counts[r];
    }
    const PanelDataset bs = resample_units(ds, pick);
    const Eigen::VectorXd stat = fn(bs);
    if (stat.size() != k)
      throw Error("INTERNAL", "bootstrap statistic changed dimension");
    res.draws.row(r) = stat.transpose();
  });

  for (long c : redraw_counts) res.redraws += c;
  res.redraw_warning =
      res.redraws > static_cast<long>(cfg.max_redraw_frac * b);
  fill_intervals(res, point);
  return res;
}

BootstrapResult multiplier_bootstrap(const Eigen::MatrixXd& eifs,
                                     const Eigen::VectorXd& point,
                                     const BootstrapConfig& cfg) {
  if (cfg.replications < 2)
    throw Error("CONFIG", "bootstrap needs at least 2 replications");
  const int n = static_cast<int>(eifs.rows());
  const int b = cfg.replications;
  const int k = static_cast<int>(point.size());
  if (eifs.cols() != k) throw Error("INTERNAL", "eif/point dimension mismatch");

  BootstrapResult res;
  res.draws.resize(b, k);
  parallel_for(static_cast<std::size_t>(b), cfg.threads, [&](std::size_t r) {
    Rng rng(derive_seed(cfg.seed, r));
    Eigen::VectorXd xi(n);
    for (int i = 0; i < n; ++i)
      xi[i] = cfg.multiplier == BootstrapConfig::MultiplierLaw::normal
                  ? rng.normal()
                  : rng.rademacher();
    res.draws.row(r) =
        (point + (eifs.transpose() * xi) / static_cast<double>(n)).transpose();
  });
  fill_intervals(res, point);
  return res;
}

BootstrapResult cluster_bootstrap_frozen(const Eigen::MatrixXd& eifs,
                                         const Eigen::VectorXd& point,
                                         const BootstrapConfig& cfg) {
  if (cfg.replications < 2)
    throw Error("CONFIG", "bootstrap needs at least 2 replications");
  const int n = static_cast<int>(eifs.rows());
  const int b = cfg.replications;
  const int k = static_cast<int>(point.size());
  if (eifs.cols() != k) throw Error("INTERNAL", "eif/point dimension mismatch");

  BootstrapResult res;
  res.draws.resize(b, k);
  parallel_for(static_cast<std::size_t>(b), cfg.threads, [&](std::size_t r) {
    Rng rng(derive_seed(cfg.seed, r));
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(k);
    for (int i = 0; i < n; ++i)
      acc += eifs.row(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
    res.draws.row(r) = point.transpose() + acc / static_cast<double>(n);
  });
  fill_intervals(res, point);
  return res;
}

SimultaneousBands simultaneous_bands(const BootstrapResult& boot,
                                     const Eigen::VectorXd& point,
                                     const Eigen::VectorXd& se, double level) {
  const int b = static_cast<int>(boot.draws.rows());
  std::vector<double> sup(b);
  for (int r = 0; r < b; ++r) {
    double m = 0.0;
    for (int k = 0; k < point.size(); ++k) {
      if (!(se[k] > 0.0)) continue;
      m = std::max(m, std::abs(boot.draws(r, k) - point[k]) / se[k]);
    }
    sup[r] = m;
  }
  std::sort(sup.begin(), sup.end());
  const double pos = level * (b - 1);
  const int lo = static_cast<int>(std::floor(pos));
  const int hi = std::min(lo + 1, b - 1);
  const double frac = pos - lo;
  SimultaneousBands out;
  out.critical_value = (1.0 - frac) * sup[lo] + frac * sup[hi];
  out.lo = point - out.critical_value * se;
  out.hi = point + out.critical_value * se;
  return out;
}

TestResult hausman_statistic(const Eigen::VectorXd& es_eff,
                             const Eigen::VectorXd& es_justid,
                             const Eigen::MatrixXd& eif_eff,
                             const Eigen::MatrixXd& eif_justid) {
  const int k = static_cast<int>(es_eff.size());
  const int n = static_cast<int>(eif_eff.rows());
  const Eigen::VectorXd d = es_eff - es_justid;
  // Covariance of the difference from the per-unit EIF difference outer
  // product; positive semidefinite in finite samples.
  const Eigen::MatrixXd diff = eif_justid - eif_eff;
  const Eigen::MatrixXd m = (diff.transpose() * diff) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues();
  const double emax = ev.cwiseAbs().maxCoeff();
  const double tol = std::max(1e-12 * emax, 1e-300);

  TestResult out;
  int rank = 0;
  double stat = 0.0;
  for (int j = 0; j < k; ++j) {
    if (ev[j] > tol) {
      const double proj = es.eigenvectors().col(j).dot(d);
      stat += proj * proj / ev[j];
      ++rank;
    }
  }
  out.stat = emax > 0.0 ? n * stat : 0.0;
  out.df = rank > 0 ? rank : k;
  out.repaired = rank < k;
  out.pvalue = rank == 0 ? 1.0 : chi_squared_pvalue(out.stat, out.df);
  return out;
}

namespace {

struct EsVectors {
  Eigen::VectorXd es;
  Eigen::MatrixXd eif; // n x |E|
};

EsVectors es_vectors(const PanelDataset& ds, const EfficientRun& run) {
  EsVectors out;
  const int k = static_cast<int>(run.horizons.size());
  out.es.resize(k);
  out.eif.resize(ds.n(), k);
  for (int j = 0; j < k; ++j) {
    const auto& es = run.es.at(run.horizons[j]);
    out.es[j] = es.es;
    out.eif.col(j) = es.eif;
  }
  return out;
}

} // namespace

TestResult hausman_test(const PanelDataset& ds, const EstimatorConfig& cfg) {
  EstimatorConfig eff_cfg = cfg;
  eff_cfg.regime = PtRegime::pt_all;
  EstimatorConfig jid_cfg = cfg;
  jid_cfg.regime = PtRegime::pt_post;
  const EsVectors eff = es_vectors(ds, run_efficient(ds, eff_cfg));
  const EsVectors jid = es_vectors(ds, run_efficient(ds, jid_cfg));
  return hausman_statistic(eff.es, jid.es, eff.eif, jid.eif);
}

std::vector<bool> holm_reject(const std::vector<double>& pvalues, double alpha) {
  const int l = static_cast<int>(pvalues.size());
  std::vector<int> order(l);
  for (int i = 0; i < l; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return pvalues[a] < pvalues[b]; });
  std::vector<bool> rejected(l, false);
  for (int step = 0; step < l; ++step) {
    const double threshold = alpha / static_cast<double>(l - step);
    if (pvalues[order[step]] < threshold)
      rejected[order[step]] = true;
    else
      break;
  }
  return rejected;
}

HolmSelection holm_incremental_selection(const PanelDataset& ds, double alpha,
                                         const EstimatorConfig& cfg) {
  EstimatorConfig jid_cfg = cfg;
  jid_cfg.regime = PtRegime::pt_post;
  const EsVectors baseline = es_vectors(ds, run_efficient(ds, jid_cfg));
  const CohortIndex idx = cohort_index(ds);

  HolmSelection out;
  for (int gp : idx.cohorts_treated) {
    for (int tp = 2; tp <= gp - 1; ++tp) {
      EstimatorConfig aug_cfg = cfg;
      aug_cfg.regime = PtRegime::pt_all;
      // Keep the just-identified (g, g-1) entry of every target plus the
      // candidate restriction.
      aug_cfg.entry_filter = [gp, tp](const IfEntry& e) {
        return (e.own && e.base_t == e.comp_g - 1) ||
               (e.comp_g == gp && e.base_t == tp);
      };
      const EsVectors aug = es_vectors(ds, run_efficient(ds, aug_cfg));
      IncrementalRestriction r;
      r.comp_g = gp;
      r.base_t = tp;
      r.test = hausman_statistic(aug.es, baseline.es, aug.eif, baseline.eif);
      out.restrictions.push_back(r);
    }
  }

  std::vector<double> pvals;
  pvals.reserve(out.restrictions.size());
  for (const auto& r : out.restrictions) pvals.push_back(r.test.pvalue);
  const auto rejected = holm_reject(pvals, alpha);
  for (std::size_t i = 0; i < out.restrictions.size(); ++i) {
    out.restrictions[i].rejected = rejected[i];
    if (!rejected[i])
      out.surviving.push_back({out.restrictions[i].comp_g, out.restrictions[i].base_t});
  }
  return out;
}

Estimate placebo_pretrends(const PanelDataset& ds, int g, int t,
                           const PlaceboConfig& pcfg, const EstimatorConfig& cfg) {
  if (t >= g)
    throw Error("NOT_A_PLACEBO", "placebo requires a pre-treatment period t < g");
  int base = pcfg.baseline_t;
  if (base == 0) base = (t == g - 1) ? t - 1 : g - 1;
  if (base < 1 || base > ds.T() || base == t)
    throw Error("NOT_A_PLACEBO", "invalid baseline period");
  if (pcfg.comparison_g == g)
    throw Error("NOT_A_PLACEBO", "comparison cohort equals the target cohort");
  if (!is_never(pcfg.comparison_g) && pcfg.comparison_g <= std::max(t, base))
    throw Error("NOT_A_PLACEBO", "comparison cohort treated before the placebo window");

  Estimate est = two_group_contrast(ds, g, t, base, pcfg.comparison_g, cfg);
  est.estimand = "placebo_att(" + std::to_string(g) + "," + std::to_string(t) + ")";
  est.estimator = "placebo";
  return est;
}

} // namespace effdid
