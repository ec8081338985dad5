#include "effdid/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "effdid/numerics.hpp"
#include "effdid/rng.hpp"

namespace effdid {

namespace {

PanelDataset empty_panel(int n, int T) {
  PanelDataset ds;
  ds.unit_ids.reserve(n);
  for (int i = 0; i < n; ++i) ds.unit_ids.push_back("u" + std::to_string(i + 1));
  for (int t = 1; t <= T; ++t) ds.period_labels.push_back(t);
  ds.outcomes.setZero(n, T);
  ds.cohort.assign(n, kNever);
  ds.covariates.resize(n, 0);
  return ds;
}

} // namespace

SingleDatePanel gen_single_date(const SingleDateDgp& dgp, std::uint64_t seed) {
  const int n = dgp.n;
  const int T = dgp.T;
  if (n < dgp.min_treated + 1) throw Error("CONFIG", "n too small for the design");

  // Latent factor structure is frozen: it plays the role of the fixed
  // calibration dataset and does not vary across Monte Carlo draws.
  Rng frng(dgp.factor_seed);
  Eigen::MatrixXd gamma(n, 4), upsilon(T, 4);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 4; ++k) gamma(i, k) = frng.normal();
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < 4; ++k) upsilon(t, k) = frng.normal();
  const Eigen::MatrixXd L = gamma * upsilon.transpose();
  const Eigen::VectorXd eta = L.rowwise().mean();
  const double grand = L.mean();
  Eigen::RowVectorXd alpha = L.colwise().mean();
  alpha.array() -= grand;
  Eigen::MatrixXd M = L;
  M.colwise() -= eta;
  M.rowwise() -= alpha;

  Rng rng(seed);
  // Assignment first, then effects, then errors; the order is part of the
  // deterministic contract of the generator.
  std::vector<char> treated(n, 0);
  int n_treated = 0;
  for (int i = 0; i < n; ++i) {
    double p;
    if (dgp.assignment == SingleDateDgp::Assignment::random) {
      p = dgp.random_treat_prob;
    } else {
      double score = dgp.phi_eta * eta[i];
      for (int k = 0; k < 4; ++k) score += dgp.phi_factor[k] * gamma(i, k);
      p = 1.0 / (1.0 + std::exp(-score));
    }
    treated[i] = rng.bernoulli(p) ? 1 : 0;
    n_treated += treated[i];
  }
  bool fallback = false;
  if (n_treated < dgp.min_treated || n - n_treated < dgp.min_treated) {
    // Completely random fallback with a fixed treated share.
    fallback = true;
    const int k = std::max(dgp.min_treated,
                           static_cast<int>(std::lround(dgp.fallback_frac * n)));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i + 1))]);
    std::fill(treated.begin(), treated.end(), 0);
    for (int j = 0; j < k; ++j) treated[order[j]] = 1;
  }

  Eigen::VectorXd tau(n);
  for (int i = 0; i < n; ++i) tau[i] = rng.normal(0.0, dgp.tau_sd);

  SingleDatePanel out;
  out.used_fallback = fallback;
  out.data = empty_panel(n, T);
  for (int i = 0; i < n; ++i) {
    out.data.cohort[i] = treated[i] ? dgp.treat_period : kNever;
    double e1 = 0.0, e2 = 0.0; // AR(2) state
    if (dgp.serial_corr) {
      for (int b = 0; b < 100; ++b) { // burn-in toward stationarity
        const double e = dgp.ar1 * e1 + dgp.ar2 * e2 + rng.normal(0.0, dgp.innov_sd);
        e2 = e1;
        e1 = e;
      }
    }
    for (int t = 1; t <= T; ++t) {
      double eps;
      if (dgp.serial_corr) {
        eps = dgp.ar1 * e1 + dgp.ar2 * e2 + rng.normal(0.0, dgp.innov_sd);
        e2 = e1;
        e1 = eps;
      } else {
        eps = rng.normal(0.0, dgp.innov_sd);
      }
      double y = eps;
      if (dgp.with_f) y += alpha[t - 1] + eta[i];
      if (dgp.with_m) y += M(i, t - 1);
      if (treated[i] && t >= dgp.treat_period) y += tau[i];
      out.data.outcomes(i, t - 1) = y;
    }
  }
  return out;
}

StaggeredTruth staggered_truth(const StaggeredDgp& dgp) {
  StaggeredTruth truth;
  const int t_eff = dgp.T - 1; // last period dropped by the relabeling
  const int g_last = dgp.dates.back();
  std::vector<int> treated_dates(dgp.dates.begin(), dgp.dates.end() - 1);

  auto att = [&](int g, int t) {
    const auto it = std::find(dgp.dates.begin(), dgp.dates.end(), g);
    const double slope = dgp.slopes[it - dgp.dates.begin()];
    return slope * dgp.sigma * static_cast<double>(t - g + 1);
  };
  for (int g : treated_dates)
    for (int t = g; t <= t_eff; ++t) truth.att[{g, t}] = att(g, t);

  (void)g_last;
  const int e_max = t_eff - treated_dates.front();
  double acc = 0.0;
  for (int e = 0; e <= e_max; ++e) {
    double num = 0.0, den = 0.0;
    for (int g : treated_dates) {
      if (g + e > t_eff) continue;
      num += att(g, g + e); // equal cohort probabilities
      den += 1.0;
    }
    truth.es[e] = num / den;
    acc += truth.es[e];
  }
  truth.es_avg = acc / static_cast<double>(e_max + 1);
  return truth;
}

StaggeredPanel gen_staggered(const StaggeredDgp& dgp, std::uint64_t seed) {
  const int n = dgp.n;
  const int T = dgp.T;
  const int k = static_cast<int>(dgp.dates.size());
  if (k < 2 || dgp.slopes.size() != dgp.dates.size())
    throw Error("CONFIG", "staggered design needs matching dates and slopes");

  Rng rng(seed);
  Eigen::VectorXd alpha(T);
  for (int t = 0; t < T; ++t) alpha[t] = rng.normal(0.0, dgp.sd_time_fe);

  std::vector<int> cohort(n);
  for (long attempt = 0;; ++attempt) {
    if (attempt > 1000)
      throw Error("CONFIG", "cannot assign cohorts with the minimum cell size");
    std::map<int, long long> counts;
    for (int i = 0; i < n; ++i) {
      cohort[i] = dgp.dates[rng.below(static_cast<std::uint64_t>(k))];
      ++counts[cohort[i]];
    }
    bool ok = counts.size() == dgp.dates.size();
    if (ok)
      for (const auto& [g, c] : counts) ok = ok && c >= dgp.min_cell;
    if (ok) break;
  }

  auto draw_innov = [&]() {
    if (dgp.residual_pool.empty()) return rng.normal(0.0, dgp.sd_innov);
    return dgp.residual_pool[rng.below(dgp.residual_pool.size())];
  };

  PanelDataset raw = empty_panel(n, T);
  for (int i = 0; i < n; ++i) {
    raw.cohort[i] = cohort[i];
    const auto it = std::find(dgp.dates.begin(), dgp.dates.end(), cohort[i]);
    const double slope = dgp.slopes[it - dgp.dates.begin()];
    const double eta = rng.normal(0.0, dgp.sd_unit_fe);
    double eps = 0.0; // eps_{i,0} = 0 by the mechanical recursion
    for (int t = 1; t <= T; ++t) {
      eps = dgp.rho * eps + draw_innov();
      double y = alpha[t - 1] + eta + eps;
      if (t >= cohort[i])
        y += slope * dgp.sigma * static_cast<double>(t - cohort[i] + 1);
      raw.outcomes(i, t - 1) = y;
    }
  }

  StaggeredPanel out;
  out.data = relabel_terminal_cohort(raw);
  out.truth = staggered_truth(dgp);
  return out;
}

std::string estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::edid: return "edid";
    case EstimatorKind::twfe: return "twfe";
    case EstimatorKind::dtwfe: return "dtwfe";
    case EstimatorKind::cs_never: return "cs-sa";
    case EstimatorKind::cs_notyet: return "cs-dcdh";
    case EstimatorKind::imputation: return "bjs-g-w";
  }
  return "?";
}

namespace {

struct RepOutcome {
  double point = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
};

RepOutcome run_estimator(EstimatorKind kind, const PanelDataset& ds) {
  RepOutcome out;
  try {
    Estimate est;
    switch (kind) {
      case EstimatorKind::edid: est = estimate_es_avg(ds); break;
      case EstimatorKind::twfe: est = estimate_twfe_static(ds); break;
      case EstimatorKind::dtwfe: est = estimate_twfe_dynamic_avg(ds); break;
      case EstimatorKind::cs_never:
        est = estimate_cs_es_avg(ds, CsComparison::never);
        break;
      case EstimatorKind::cs_notyet:
        est = estimate_cs_es_avg(ds, CsComparison::not_yet);
        break;
      case EstimatorKind::imputation: est = estimate_imputation_es_avg(ds); break;
    }
    out.point = est.point;
    if (est.se_analytic) out.se = *est.se_analytic;
    out.ok = std::isfinite(out.point);
  } catch (const Error&) {
    out.ok = false;
  }
  return out;
}

McReport aggregate(const std::string& label, double truth, const McConfig& cfg,
                   const std::vector<std::vector<RepOutcome>>& results) {
  McReport rep;
  rep.dgp_label = label;
  rep.truth = truth;
  rep.replications = cfg.replications;
  rep.seed = cfg.seed;

  const double z = kZ975;
  const int ne = static_cast<int>(cfg.estimators.size());
  std::vector<McRow> rows(ne);
  double bench_rmse = std::numeric_limits<double>::quiet_NaN();
  double bench_len = std::numeric_limits<double>::quiet_NaN();

  for (int j = 0; j < ne; ++j) {
    McRow& row = rows[j];
    row.estimator = cfg.estimators[j];
    double sum = 0.0, sq = 0.0, len = 0.0;
    long used = 0, cover = 0, with_se = 0;
    for (int r = 0; r < cfg.replications; ++r) {
      const RepOutcome& o = results[r][j];
      if (!o.ok) {
        ++row.failures;
        continue;
      }
      ++used;
      sum += o.point - truth;
      sq += (o.point - truth) * (o.point - truth);
      if (std::isfinite(o.se)) {
        ++with_se;
        len += 2.0 * z * o.se;
        if (std::abs(o.point - truth) <= z * o.se) ++cover;
      }
    }
    row.bias = used ? sum / used : std::numeric_limits<double>::quiet_NaN();
    row.rmse = used ? std::sqrt(sq / used) : std::numeric_limits<double>::quiet_NaN();
    if (with_se > 0) {
      row.coverage = static_cast<double>(cover) / with_se;
      row.ci_length = len / with_se;
    }
    row.flagged = row.failures > 0.05 * cfg.replications;
    if (cfg.estimators[j] == EstimatorKind::edid) {
      bench_rmse = row.rmse;
      bench_len = row.ci_length;
    }
  }
  for (auto& row : rows) {
    row.rel_rmse = row.rmse / bench_rmse;
    row.rel_ci_length = row.ci_length / bench_len;
  }
  rep.rows = std::move(rows);
  return rep;
}

template <typename Gen>
McReport run_mc(const std::string& label, double truth, const McConfig& cfg,
                const Gen& gen) {
  if (cfg.replications < 2)
    throw Error("CONFIG", "Monte Carlo needs at least 2 replications");
  if (!cfg.rep_seeds.empty() &&
      cfg.rep_seeds.size() != static_cast<std::size_t>(cfg.replications))
    throw Error("CONFIG", "rep_seeds must match the replication count");
  std::vector<std::vector<RepOutcome>> results(
      cfg.replications, std::vector<RepOutcome>(cfg.estimators.size()));
  parallel_for(static_cast<std::size_t>(cfg.replications), cfg.threads,
               [&](std::size_t r) {
                 const std::uint64_t s = cfg.rep_seeds.empty()
                                             ? derive_seed(cfg.seed, r)
                                             : cfg.rep_seeds[r];
                 const PanelDataset ds = gen(s);
                 for (std::size_t j = 0; j < cfg.estimators.size(); ++j)
                   results[r][j] = run_estimator(cfg.estimators[j], ds);
               });
  return aggregate(label, truth, cfg, results);
}

} // namespace

McReport run_monte_carlo(const StaggeredDgp& dgp, const McConfig& cfg) {
  const StaggeredTruth truth = staggered_truth(dgp);
  char label[64];
  std::snprintf(label, sizeof(label), "staggered(rho=%g,n=%d)", dgp.rho, dgp.n);
  return run_mc(label, truth.es_avg, cfg,
                [&](std::uint64_t s) { return gen_staggered(dgp, s).data; });
}

McReport run_monte_carlo(const SingleDateDgp& dgp, const McConfig& cfg) {
  char label[64];
  std::snprintf(label, sizeof(label), "single-date(n=%d)", dgp.n);
  return run_mc(label, 0.0, cfg,
                [&](std::uint64_t s) { return gen_single_date(dgp, s).data; });
}

std::vector<WeightRow> heatmap_weights(const PanelDataset& ds,
                                       const EstimatorConfig& cfg) {
  const EfficientRun run = run_efficient(ds, cfg);
  std::vector<WeightRow> rows;
  for (const auto& [key, a] : run.att)
    for (const auto& row : weight_table(a)) rows.push_back(row);
  return rows;
}

} // namespace effdid
