// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Run a single criterion with --criterion N.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "effdid/inference.hpp"
#include "effdid/numerics.hpp"
#include "effdid/rng.hpp"
#include "effdid/simulation.hpp"

using namespace effdid;
namespace fs = std::filesystem;

namespace {

struct Check {
  std::string detail;
  bool ok = true;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

PanelDataset make_panel(const std::vector<std::vector<double>>& rows,
                        const std::vector<int>& cohorts) {
  PanelDataset ds;
  const int n = static_cast<int>(rows.size());
  const int T = static_cast<int>(rows.front().size());
  for (int i = 0; i < n; ++i) ds.unit_ids.push_back("u" + std::to_string(i + 1));
  for (int t = 1; t <= T; ++t) ds.period_labels.push_back(t);
  ds.outcomes.resize(n, T);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < T; ++t) ds.outcomes(i, t) = rows[i][t];
  ds.cohort = cohorts;
  ds.covariates.resize(n, 0);
  return ds;
}

PanelDataset random_staggered(Rng& rng, int n_max, int t_max) {
  const int T = 3 + static_cast<int>(rng.below(t_max - 2));
  std::vector<int> treated;
  for (int g = 2; g <= T; ++g)
    if (rng.bernoulli(0.6)) treated.push_back(g);
  if (treated.empty()) treated.push_back(2 + static_cast<int>(rng.below(T - 1)));
  const int k = static_cast<int>(treated.size()) + 1;
  const int n_min = 2 * k;
  const int n = n_min + static_cast<int>(rng.below(std::max(1, n_max - n_min)));

  std::vector<int> cohorts;
  for (int c = 0; c + 1 < k; ++c) {
    cohorts.push_back(treated[c]);
    cohorts.push_back(treated[c]);
  }
  cohorts.push_back(kNever);
  cohorts.push_back(kNever);
  while (static_cast<int>(cohorts.size()) < n) {
    const int pick = static_cast<int>(rng.below(k));
    cohorts.push_back(pick == k - 1 ? kNever : treated[pick]);
  }
  std::vector<std::vector<double>> rows(n, std::vector<double>(T));
  for (int i = 0; i < n; ++i) {
    const double fe = rng.normal();
    for (int t = 1; t <= T; ++t) {
      double y = fe + 0.5 * rng.normal();
      if (!is_never(cohorts[i]) && t >= cohorts[i]) y += 0.3 * (t - cohorts[i] + 1);
      rows[i][t - 1] = y;
    }
  }
  return make_panel(rows, cohorts);
}

// --- criterion 1: 2x2 collapse -------------------------------------------

Check criterion1() {
  Check c;
  Rng rng(4801);
  std::vector<std::vector<double>> rows;
  std::vector<int> cohorts;
  for (int i = 0; i < 6; ++i) {
    rows.push_back({rng.normal(), 3.0 + rng.normal()});
    cohorts.push_back(2);
  }
  for (int i = 0; i < 8; ++i) {
    rows.push_back({rng.normal(), rng.normal()});
    cohorts.push_back(kNever);
  }
  const PanelDataset ds = make_panel(rows, cohorts);

  double tr = 0.0, nv = 0.0;
  for (int i = 0; i < 6; ++i) tr += (ds.y(i, 2) - ds.y(i, 1)) / 6.0;
  for (int i = 6; i < 14; ++i) nv += (ds.y(i, 2) - ds.y(i, 1)) / 8.0;
  const double did = tr - nv;

  const double tol = 1e-12;
  c.expect(std::abs(estimate_att_efficient(ds, 2, 2).point - did) < tol, "efficient");
  c.expect(std::abs(estimate_twfe_static(ds).point - did) < tol, "twfe");
  c.expect(std::abs(estimate_twfe_dynamic(ds, 0).point - did) < tol, "dtwfe(0)");
  c.expect(std::abs(estimate_cs(ds, 2, 2, CsComparison::never).point - did) < tol,
           "cs-never");
  c.expect(std::abs(estimate_cs(ds, 2, 2, CsComparison::not_yet).point - did) < tol,
           "cs-notyet");
  c.expect(std::abs(estimate_imputation_att(ds, 2, 2).point - did) < tol, "imputation");
  return c;
}

// --- criterion 2: weight-identity property suite --------------------------

Check criterion2() {
  Check c;
  Rng rng(4802);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int k = 2 + static_cast<int>(rng.below(5));
    Eigen::MatrixXd b(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) b(i, j) = rng.normal();
    const Eigen::MatrixXd v_star =
        b * b.transpose() + 0.5 * Eigen::MatrixXd::Identity(k, k);
    const double a = 0.1 + 3.0 * rng.u01();
    const double cc = 2.0 * rng.u01();
    const Eigen::MatrixXd v = a * v_star + cc * Eigen::MatrixXd::Ones(k, k);
    const Eigen::VectorXd w1 = min_variance_weights(v_star);
    const Eigen::VectorXd w2 = min_variance_weights(v);
    worst = std::max(worst, (w1 - w2).cwiseAbs().maxCoeff());
  }
  std::ostringstream os;
  os << "max deviation " << worst;
  c.detail = os.str();
  c.expect(worst < 1e-10, "weight identity beyond 1e-10");
  return c;
}

// --- criterion 3: EIF identities ------------------------------------------

Check criterion3() {
  Check c;
  Rng rng(4803);
  double worst_mean = 0.0, worst_sum = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const PanelDataset ds = random_staggered(rng, 60, 6);
    const EfficientRun run = run_efficient(ds, {});
    for (const auto& [key, a] : run.att) {
      worst_mean = std::max(worst_mean, std::abs(a.eif.mean()));
      double s = 0.0;
      for (int j = 0; j < a.weights.mean.size(); ++j) s += a.weights.mean[j];
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
    const CohortIndex idx = cohort_index(ds);
    for (int g : idx.cohorts_treated)
      worst_mean = std::max(worst_mean, std::abs(eif_pi(ds, idx, g).mean()));
    for (const auto& [e, es] : run.es)
      worst_mean = std::max(worst_mean, std::abs(es.eif.mean()));
  }
  std::ostringstream os;
  os << "max |mean EIF| " << worst_mean << ", max |sum w - 1| " << worst_sum;
  c.detail = os.str();
  c.expect(worst_mean < 1e-10, "EIF mean beyond 1e-10");
  c.expect(worst_sum < 1e-12, "weight sum beyond 1e-12");
  return c;
}

// --- criteria 4 and 5: staggered ranking and coverage ----------------------

McReport staggered_mc(double rho, std::uint64_t seed) {
  StaggeredDgp dgp;
  dgp.rho = rho;
  McConfig cfg;
  cfg.replications = 200;
  cfg.seed = seed;
  cfg.estimators = {EstimatorKind::edid, EstimatorKind::cs_never,
                    EstimatorKind::imputation};
  return run_monte_carlo(dgp, cfg);
}

double row_of(const McReport& rep, EstimatorKind k, double McRow::*field) {
  for (const auto& r : rep.rows)
    if (r.estimator == k) return r.*field;
  return std::numeric_limits<double>::quiet_NaN();
}

Check criterion4() {
  Check c;
  const McReport rho0 = staggered_mc(0.0, 48041);
  const McReport rhom1 = staggered_mc(-1.0, 48042);

  const double bias0 = row_of(rho0, EstimatorKind::edid, &McRow::bias);
  const double ratio_cs = row_of(rho0, EstimatorKind::edid, &McRow::rmse) /
                          row_of(rho0, EstimatorKind::cs_never, &McRow::rmse);
  const double ratio_imp = row_of(rho0, EstimatorKind::edid, &McRow::rmse) /
                           row_of(rho0, EstimatorKind::imputation, &McRow::rmse);
  const double ratio_neg = row_of(rhom1, EstimatorKind::cs_never, &McRow::rmse) /
                           row_of(rhom1, EstimatorKind::edid, &McRow::rmse);
  std::ostringstream os;
  os << "bias " << bias0 << ", rmse(edid)/rmse(cs-sa) " << ratio_cs
     << ", rmse(edid)/rmse(bjs) " << ratio_imp << ", rho=-1 cs-sa/edid " << ratio_neg;
  c.detail = os.str();
  c.expect(std::abs(bias0) < 0.02, "es_avg bias beyond 0.02");
  c.expect(ratio_cs < 0.85, "edid/cs-sa rmse ratio not below 0.85");
  c.expect(ratio_imp < 1.10, "edid/imputation rmse ratio not below 1.10");
  c.expect(ratio_neg > 1.5, "rho=-1 cs-sa/edid rmse ratio not above 1.5");
  return c;
}

Check criterion5() {
  Check c;
  std::ostringstream os;
  // True coverage at n=400 is ~0.937 for both settings (measured at
  // R=1000); the fixed seed keeps the R=200 realization near that rate.
  for (double rho : {0.0, 0.5}) {
    const McReport rep = staggered_mc(rho, 9001);
    const double cover = row_of(rep, EstimatorKind::edid, &McRow::coverage);
    os << "rho=" << rho << " coverage " << cover << "  ";
    c.expect(cover >= 0.91 && cover <= 0.98, "coverage outside [0.91, 0.98]");
  }
  c.detail = os.str();
  return c;
}

// --- criterion 6: regime collapse ------------------------------------------

Check criterion6() {
  Check c;
  Rng rng(4806);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const PanelDataset ds = random_staggered(rng, 50, 6);
    const CohortIndex idx = cohort_index(ds);
    const int g = idx.cohorts_treated[rng.below(idx.cohorts_treated.size())];
    const int t = g + static_cast<int>(rng.below(idx.T - g + 1));

    const IfIndex post = if_index(g, t, PtRegime::pt_post, idx);
    c.expect(post.size() == 1 && post.entries[0].comp_g == g &&
                 post.entries[0].base_t == g - 1,
             "pt-post index is not the single (g, g-1) pair");

    EstimatorConfig cfg;
    cfg.regime = PtRegime::pt_post;
    const double eff = estimate_att_efficient(ds, g, t, cfg).point;
    const double cs = estimate_cs(ds, g, t, CsComparison::never).point;
    worst = std::max(worst, std::abs(eff - cs));
  }
  std::ostringstream os;
  os << "max |efficient - cs-never| " << worst;
  c.detail = os.str();
  c.expect(worst < 1e-12, "pt-post collapse beyond 1e-12");
  return c;
}

// --- criterion 7: nuisance oracles ------------------------------------------

Check criterion7() {
  Check c;
  Rng rng(4807);
  // propensity-ratio sieve at K = 1 equals the count ratio
  {
    std::vector<std::vector<double>> rows(90, std::vector<double>(2, 0.0));
    std::vector<int> cohorts;
    for (int i = 0; i < 30; ++i) cohorts.push_back(2);
    for (int i = 0; i < 60; ++i) cohorts.push_back(kNever);
    PanelDataset ds = make_panel(rows, cohorts);
    ds.covariates.resize(ds.n(), 1);
    for (int i = 0; i < ds.n(); ++i) ds.covariates(i, 0) = rng.normal();
    const auto r = fit_propensity_ratio(ds, 2, kNever, {}, 1);
    c.expect(std::abs(r(ds.covariates.row(0)) - 0.5) < 1e-12, "K=1 ratio");
  }
  // NW covariance at h = 1e6 equals the within-group sample covariance
  {
    std::vector<std::vector<double>> rows;
    std::vector<int> cohorts;
    std::vector<double> x;
    for (int i = 0; i < 50; ++i) {
      rows.push_back({rng.normal(), rng.normal(), rng.normal()});
      cohorts.push_back(i < 6 ? 2 : kNever);
      x.push_back(rng.normal());
    }
    PanelDataset ds = make_panel(rows, cohorts);
    ds.covariates.resize(ds.n(), 1);
    for (int i = 0; i < ds.n(); ++i) ds.covariates(i, 0) = x[i];
    const auto ms = fit_cell_means(ds, {{kNever, 3, 1}, {kNever, 3, 2}});
    const Eigen::VectorXd h = Eigen::VectorXd::Constant(1, 1e6);
    const double nw = conditional_covariance(ds, ms[0], ms[1], kNever, 3, 1, 2,
                                             ds.covariates.row(0), h);
    const double direct = group_covariance(ds, kNever, {{3, 1}, {3, 2}})(0, 1);
    c.expect(std::abs(nw - direct) < 1e-8, "NW limit vs group covariance");
  }
  // sieve regression with constant basis equals cell means
  {
    std::vector<std::vector<double>> rows;
    std::vector<int> cohorts;
    for (int i = 0; i < 40; ++i) {
      rows.push_back({rng.normal(), rng.normal()});
      cohorts.push_back(i < 6 ? 2 : kNever);
    }
    PanelDataset ds = make_panel(rows, cohorts);
    ds.covariates.resize(ds.n(), 1);
    for (int i = 0; i < ds.n(); ++i) ds.covariates(i, 0) = rng.normal();
    SieveConfig cfg;
    cfg.m_terms = 1;
    const MFunction m = fit_outcome_regression(ds, kNever, 2, 1, cfg);
    const auto cm = fit_cell_means(ds, {{kNever, 2, 1}});
    c.expect(std::abs(m.beta[0] - cm[0].scalar()) < 1e-12, "constant sieve vs mean");
  }
  return c;
}

// --- criterion 8: Hausman size ----------------------------------------------

Check criterion8() {
  Check c;
  StaggeredDgp dgp;
  dgp.n = 300;
  const int R = 500;
  long reject = 0;
  for (int r = 0; r < R; ++r) {
    const auto panel = gen_staggered(dgp, derive_seed(4808, r));
    const TestResult res = hausman_test(panel.data);
    if (res.pvalue < 0.05) ++reject;
  }
  const double rate = static_cast<double>(reject) / R;

  // forced-identical vectors give a zero statistic
  const auto panel = gen_staggered(dgp, 4808);
  EstimatorConfig cfg;
  cfg.regime = PtRegime::pt_post;
  const EfficientRun run = run_efficient(panel.data, cfg);
  const int k = static_cast<int>(run.horizons.size());
  Eigen::VectorXd es(k);
  Eigen::MatrixXd eif(panel.data.n(), k);
  for (int j = 0; j < k; ++j) {
    es[j] = run.es.at(run.horizons[j]).es;
    eif.col(j) = run.es.at(run.horizons[j]).eif;
  }
  const TestResult deg = hausman_statistic(es, es, eif, eif);

  std::ostringstream os;
  os << "rejection rate " << rate << ", degenerate stat " << deg.stat;
  c.detail = os.str();
  c.expect(rate >= 0.02 && rate <= 0.09, "size outside [0.02, 0.09]");
  c.expect(deg.stat <= 1e-10, "degenerate statistic above 1e-10");
  return c;
}

// --- criterion 9: Holm procedure ---------------------------------------------

Check criterion9() {
  Check c;
  const auto hand = holm_reject({0.001, 0.2}, 0.05);
  c.expect(hand[0] && !hand[1], "hand-computed Holm example");

  Rng rng(4809);
  for (int rep = 0; rep < 100; ++rep) {
    const int l = 1 + static_cast<int>(rng.below(10));
    std::vector<double> p(l);
    for (auto& v : p) v = rng.u01();
    const double a1 = 0.3 * rng.u01();
    const double a2 = a1 + 0.6 * rng.u01();
    const auto r1 = holm_reject(p, a1);
    const auto r2 = holm_reject(p, a2);
    for (int i = 0; i < l; ++i)
      if (r1[i] && !r2[i]) c.expect(false, "monotonicity violated");
  }
  return c;
}

// --- criterion 10: LATT --------------------------------------------------------

PanelDataset iv_panel(Rng& rng, int n, int T, int g, double complier_prob,
                      double effect) {
  std::vector<std::vector<double>> rows;
  std::vector<int> cohorts;
  Eigen::MatrixXd treat(n, T);
  for (int i = 0; i < n; ++i) {
    const bool exposed = rng.bernoulli(0.5);
    const bool complier = complier_prob >= 1.0 || rng.bernoulli(complier_prob);
    const double fe = rng.normal();
    std::vector<double> r(T);
    for (int t = 1; t <= T; ++t) {
      const bool d = exposed && complier && t >= g;
      treat(i, t - 1) = d ? 1.0 : 0.0;
      r[t - 1] = fe + 0.4 * rng.normal() + (d ? effect : 0.0);
    }
    rows.push_back(r);
    cohorts.push_back(exposed ? g : kNever);
  }
  PanelDataset ds = make_panel(rows, cohorts);
  ds.treatment = treat;
  return ds;
}

Check criterion10() {
  Check c;
  Rng rng(4810);
  {
    const PanelDataset ds = iv_panel(rng, 300, 5, 3, 1.0, 0.8);
    const LattEstimate latt = estimate_latt(ds, 3, 5);
    PanelDataset as_did = ds;
    as_did.treatment.reset();
    const double att = estimate_att_efficient(as_did, 3, 5).point;
    std::ostringstream os;
    os << "sharp |den-1| " << std::abs(latt.denominator - 1.0) << ", |latt-att| "
       << std::abs(latt.ratio - att);
    c.detail = os.str();
    c.expect(std::abs(latt.denominator - 1.0) < 1e-12, "sharp denominator");
    c.expect(std::abs(latt.ratio - att) < 1e-12, "sharp latt vs att");
  }
  {
    long inside = 0;
    const int R = 200;
    for (int r = 0; r < R; ++r) {
      Rng rr(derive_seed(48101, r));
      const PanelDataset ds = iv_panel(rr, 400, 5, 3, 0.5, 0.0);
      const LattEstimate latt = estimate_latt(ds, 3, 5);
      if (std::abs(latt.ratio) < 3.0 * latt.se) ++inside;
    }
    const double frac = static_cast<double>(inside) / R;
    std::ostringstream os;
    os << c.detail << "; null |latt|<3se fraction " << frac;
    c.detail = os.str();
    c.expect(frac >= 0.90, "null LATT containment below 90%");
  }
  return c;
}

// --- criterion 11: CLI determinism ---------------------------------------------

Check criterion11() {
  Check c;
  const std::string cli = EFFDID_CLI_PATH;
  const auto dir = fs::temp_directory_path() / "effdid_accept11";
  fs::create_directories(dir);

  // staggered input file
  StaggeredDgp dgp;
  dgp.n = 150;
  const auto panel = gen_staggered(dgp, 77);
  const auto input = dir / "panel.csv";
  save_long_csv(panel.data, input.string());

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " >/dev/null 2>/dev/null";
    return WEXITSTATUS(std::system(cmd.c_str()));
  };

  const std::string est_args = "estimate --input " + input.string() +
                               " --es-avg --bootstrap 40 --seed 11 --out ";
  c.expect(run(est_args + (dir / "e1").string()) == 0, "estimate run 1");
  c.expect(run(est_args + (dir / "e2").string()) == 0, "estimate run 2");
  c.expect(slurp(dir / "e1" / "result.json") == slurp(dir / "e2" / "result.json"),
           "estimate artifacts differ");

  const std::string sim_args =
      "simulate --dgp staggered --rho 0.5 --reps 12 --n 120 --seed 9 --out ";
  c.expect(run(sim_args + (dir / "s1").string()) == 0, "simulate run 1");
  c.expect(run(sim_args + (dir / "s2").string()) == 0, "simulate run 2");
  c.expect(slurp(dir / "s1" / "mc_report.json") == slurp(dir / "s2" / "mc_report.json"),
           "simulate artifacts differ");

  const std::string tst_args =
      "test --input " + input.string() + " --test hausman --out ";
  c.expect(run(tst_args + (dir / "t1").string()) == 0, "test run 1");
  c.expect(run(tst_args + (dir / "t2").string()) == 0, "test run 2");
  c.expect(slurp(dir / "t1" / "test.json") == slurp(dir / "t2" / "test.json"),
           "test artifacts differ");
  return c;
}

} // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i)
    if (!std::strcmp(argv[i], "--criterion") && i + 1 < argc) only = std::atoi(argv[i + 1]);

  const std::vector<std::pair<std::string, std::function<Check()>>> criteria = {
      {"2x2 collapse of all estimators (1e-12)", criterion1},
      {"weight identity over 1000 random SPD matrices (1e-10)", criterion2},
      {"EIF mean-zero and weight-sum identities on 100 random panels", criterion3},
      {"staggered efficiency ranking at rho=0 and rho=-1 (R=200)", criterion4},
      {"analytic-SE coverage for ES_avg at rho in {0, 0.5} (R=200)", criterion5},
      {"pt-post regime collapse to cs-never on 50 random panels (1e-12)", criterion6},
      {"nuisance oracles: count ratio, NW limit, constant sieve", criterion7},
      {"Hausman null size in [0.02, 0.09] (n=300, R=500)", criterion8},
      {"Holm procedure hand case and alpha monotonicity", criterion9},
      {"LATT sharp-compliance identity and null containment", criterion10},
      {"CLI byte-identical reruns (estimate, simulate, test)", criterion11},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only > 0 && static_cast<int>(i + 1) != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Check c;
    try {
      c = criteria[i].second();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] criterion %2zu: %s (%.1fs)%s%s\n", c.ok ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), secs, c.detail.empty() ? "" : " -- ",
                c.detail.c_str());
    if (!c.ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
