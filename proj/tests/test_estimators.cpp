#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "effdid/estimators.hpp"
#include "effdid/rng.hpp"
#include "test_helpers.hpp"

using namespace effdid;

namespace {

// A 2x2 panel with idiosyncratic noise so the seven-way equality is not an
// artifact of degenerate outcomes.
PanelDataset noisy_2x2(Rng& rng, int n_treated = 5, int n_control = 7) {
  std::vector<std::vector<double>> rows;
  std::vector<int> cohorts;
  for (int i = 0; i < n_treated; ++i) {
    rows.push_back({rng.normal(), 3.0 + rng.normal()});
    cohorts.push_back(2);
  }
  for (int i = 0; i < n_control; ++i) {
    rows.push_back({rng.normal(), rng.normal()});
    cohorts.push_back(kNever);
  }
  return test::make_panel(rows, cohorts);
}

double did_of_means(const PanelDataset& ds, int g, int t, int base) {
  double tr = 0.0, nv = 0.0;
  long ntr = 0, nnv = 0;
  for (int i = 0; i < ds.n(); ++i) {
    const double dy = ds.y(i, t) - ds.y(i, base);
    if (ds.cohort[i] == g) {
      tr += dy;
      ++ntr;
    } else if (is_never(ds.cohort[i])) {
      nv += dy;
      ++nnv;
    }
  }
  return tr / ntr - nv / nnv;
}

} // namespace

TEST_CASE("toy panel gives ATT exactly 3") {
  const PanelDataset ds = test::toy_a();
  CHECK(estimate_att_efficient(ds, 2, 2).point == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("all estimators collapse to diff-in-means on a 2x2 panel") {
  Rng rng(131);
  const PanelDataset ds = noisy_2x2(rng);
  const double did = did_of_means(ds, 2, 2, 1);

  CHECK(std::abs(estimate_att_efficient(ds, 2, 2).point - did) < 1e-12);
  CHECK(std::abs(estimate_twfe_static(ds).point - did) < 1e-12);
  CHECK(std::abs(estimate_twfe_dynamic(ds, 0).point - did) < 1e-12);
  CHECK(std::abs(estimate_cs(ds, 2, 2, CsComparison::never).point - did) < 1e-12);
  CHECK(std::abs(estimate_cs(ds, 2, 2, CsComparison::not_yet).point - did) < 1e-12);
  CHECK(std::abs(estimate_imputation_att(ds, 2, 2).point - did) < 1e-12);
  CHECK(std::abs(estimate_es_avg(ds).point - did) < 1e-12);
}

TEST_CASE("es aggregation arithmetic") {
  // effective shares (2/3, 1/3) with per-cohort ATTs (1, 3) give 5/3
  std::vector<std::vector<double>> rows;
  std::vector<int> cohorts;
  Rng rng(137);
  for (int i = 0; i < 8; ++i) cohorts.push_back(2);
  for (int i = 0; i < 4; ++i) cohorts.push_back(3);
  for (int i = 0; i < 6; ++i) cohorts.push_back(kNever);
  for (std::size_t i = 0; i < cohorts.size(); ++i) {
    const int g = cohorts[i];
    std::vector<double> r(4, 0.0);
    for (int t = 1; t <= 4; ++t) {
      r[t - 1] = 0.1 * t; // common trend
      if (!is_never(g) && t >= g) r[t - 1] += (g == 2 ? 1.0 : 3.0);
    }
    rows.push_back(r);
  }
  const PanelDataset ds = test::make_panel(rows, cohorts);
  const Estimate es1 = estimate_es(ds, 1, {});
  CHECK(es1.point == doctest::Approx(8.0 / 12.0 * 1.0 + 4.0 / 12.0 * 3.0).epsilon(1e-12));
  CHECK(std::abs(es1.eif.mean()) < 1e-12);
}

TEST_CASE("es_avg equals the hand average of the es points") {
  Rng rng(139);
  const PanelDataset ds = test::random_staggered(rng);
  const CohortIndex idx = cohort_index(ds);
  double acc = 0.0;
  const auto horizons = idx.event_horizons();
  for (int e : horizons) acc += estimate_es(ds, e, {}).point;
  const double avg = estimate_es_avg(ds).point;
  CHECK(avg == doctest::Approx(acc / horizons.size()).epsilon(1e-12));
}

TEST_CASE("es_avg on a single-target design equals the ATT") {
  Rng rng(149);
  const PanelDataset ds = noisy_2x2(rng);
  CHECK(estimate_es_avg(ds).point ==
        doctest::Approx(estimate_att_efficient(ds, 2, 2).point).epsilon(1e-13));
}

TEST_CASE("twfe matches a full dummy-regression oracle") {
  Rng rng(151);
  const PanelDataset ds = test::random_staggered(rng, 30, 5);
  const int n = ds.n(), T = ds.T();

  // dummy design: intercept-free unit dummies + time dummies (t >= 2) + D
  const int p = n + (T - 1) + 1;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n * T, p);
  Eigen::VectorXd y(n * T);
  int row = 0;
  for (int i = 0; i < n; ++i)
    for (int t = 1; t <= T; ++t, ++row) {
      x(row, i) = 1.0;
      if (t >= 2) x(row, n + t - 2) = 1.0;
      const bool treated = !is_never(ds.cohort[i]) && t >= ds.cohort[i];
      x(row, p - 1) = treated ? 1.0 : 0.0;
      y(row) = ds.y(i, t);
    }
  const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  const Estimate est = estimate_twfe_static(ds);
  CHECK(est.point == doctest::Approx(beta[p - 1]).epsilon(1e-10));
}

TEST_CASE("dynamic twfe matches the dummy oracle and rejects e = -1") {
  Rng rng(157);
  const PanelDataset ds = test::random_staggered(rng, 30, 5);
  CHECK_THROWS_WITH_AS(estimate_twfe_dynamic(ds, -1),
                       doctest::Contains("OMITTED_CATEGORY"), Error);

  // oracle with event-time dummies
  const int n = ds.n(), T = ds.T();
  std::set<int> etimes;
  for (int i = 0; i < n; ++i)
    if (!is_never(ds.cohort[i]))
      for (int t = 1; t <= T; ++t)
        if (t - ds.cohort[i] != -1) etimes.insert(t - ds.cohort[i]);
  const std::vector<int> evec(etimes.begin(), etimes.end());
  const int p = n + (T - 1) + static_cast<int>(evec.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n * T, p);
  Eigen::VectorXd y(n * T);
  int row = 0;
  for (int i = 0; i < n; ++i)
    for (int t = 1; t <= T; ++t, ++row) {
      x(row, i) = 1.0;
      if (t >= 2) x(row, n + t - 2) = 1.0;
      if (!is_never(ds.cohort[i])) {
        const int e = t - ds.cohort[i];
        const auto it = std::find(evec.begin(), evec.end(), e);
        if (it != evec.end())
          x(row, n + T - 1 + (it - evec.begin())) = 1.0;
      }
      y(row) = ds.y(i, t);
    }
  const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  for (std::size_t k = 0; k < evec.size(); ++k) {
    if (evec[k] < 0) continue;
    const Estimate est = estimate_twfe_dynamic(ds, evec[k]);
    CHECK(est.point == doctest::Approx(beta[n + T - 1 + k]).epsilon(1e-9));
  }
}

TEST_CASE("twfe without treatment variation fails") {
  std::vector<std::vector<double>> rows(4, std::vector<double>{1.0, 2.0});
  const PanelDataset ds = test::make_panel(rows, {kNever, kNever, kNever, kNever});
  CHECK_THROWS_WITH_AS(estimate_twfe_static(ds),
                       doctest::Contains("NO_TREATMENT_VARIATION"), Error);
}

TEST_CASE("cs equals the efficient estimator under pt-post") {
  Rng rng(163);
  for (int rep = 0; rep < 10; ++rep) {
    const PanelDataset ds = test::random_staggered(rng);
    const auto idx = cohort_index(ds);
    for (int g : idx.cohorts_treated) {
      EstimatorConfig post;
      post.regime = PtRegime::pt_post;
      const double eff = estimate_att_efficient(ds, g, idx.T, post).point;
      const double cs = estimate_cs(ds, g, idx.T, CsComparison::never).point;
      CHECK(std::abs(eff - cs) < 1e-12);
    }
  }
}

TEST_CASE("cs hand computation on a deterministic staggered toy") {
  // cohorts {2,3}, T = 3; outcomes constructed so every group mean is exact
  const PanelDataset ds = test::make_panel(
      {
          {0.0, 2.0, 3.0}, // g = 2
          {0.0, 4.0, 5.0}, // g = 2
          {1.0, 1.5, 6.0}, // g = 3
          {1.0, 2.5, 8.0}, // g = 3
          {0.0, 1.0, 2.0}, // never
          {0.0, 1.0, 3.0}, // never
      },
      {2, 2, 3, 3, kNever, kNever});

  // ATT(2,2) vs never at baseline 1: (3 - 1) = 2
  CHECK(estimate_cs(ds, 2, 2, CsComparison::never).point ==
        doctest::Approx(3.0 - 1.0).epsilon(1e-13));
  // ATT(3,3) vs never at baseline 2: (5 - 1.5) = 3.5
  CHECK(estimate_cs(ds, 3, 3, CsComparison::never).point ==
        doctest::Approx(5.0 - 1.5).epsilon(1e-13));
  // not-yet comparison for (2,2): never + cohort 3, baseline 1:
  // treated change 3; pooled comparison change mean = (0.5 + 1.5 + 1 + 1)/4
  CHECK(estimate_cs(ds, 2, 2, CsComparison::not_yet).point ==
        doctest::Approx(3.0 - 1.0).epsilon(1e-13));
}

TEST_CASE("imputation handles a staggered panel and rejects gaps") {
  // With unit+time effects only, the imputation fit recovers a panel built
  // from exactly that structure.
  Rng rng(167);
  const int n = 40, T = 5;
  std::vector<std::vector<double>> rows;
  std::vector<int> cohorts;
  std::vector<double> alpha = {0.0, 0.3, -0.2, 0.5, 0.1};
  for (int i = 0; i < n; ++i) {
    const double eta = rng.normal();
    const int g = i % 4 == 0 ? 3 : (i % 4 == 1 ? 4 : kNever);
    std::vector<double> r(T);
    for (int t = 1; t <= T; ++t) {
      r[t - 1] = eta + alpha[t - 1];
      if (!is_never(g) && t >= g) r[t - 1] += 1.7; // constant effect
    }
    rows.push_back(r);
    cohorts.push_back(g);
  }
  const PanelDataset ds = test::make_panel(rows, cohorts);
  CHECK(estimate_imputation_att(ds, 3, 4).point == doctest::Approx(1.7).epsilon(1e-10));
  CHECK(estimate_imputation_es_avg(ds).point == doctest::Approx(1.7).epsilon(1e-10));

  // all units treated by T and no never cohort: the last period has no
  // untreated cells
  std::vector<std::vector<double>> rows2(4, std::vector<double>{0.0, 1.0});
  const PanelDataset bad = test::make_panel(rows2, {2, 2, 2, 2});
  CHECK_THROWS_WITH_AS(estimate_imputation_att(bad, 2, 2),
                       doctest::Contains("NO_UNTREATED_CELLS"), Error);
}

TEST_CASE("scaling the outcomes scales points and standard errors") {
  Rng rng(173);
  const PanelDataset ds = test::random_staggered(rng);
  const int g = cohort_index(ds).cohorts_treated.front();
  const Estimate base = estimate_att_efficient(ds, g, g);
  const Estimate twfe = estimate_twfe_static(ds);

  PanelDataset scaled = ds;
  scaled.outcomes *= 3.0;
  const Estimate b2 = estimate_att_efficient(scaled, g, g);
  const Estimate t2 = estimate_twfe_static(scaled);
  CHECK(b2.point == doctest::Approx(3.0 * base.point).epsilon(1e-10));
  CHECK(*b2.se_analytic == doctest::Approx(3.0 * *base.se_analytic).epsilon(1e-9));
  CHECK(t2.point == doctest::Approx(3.0 * twfe.point).epsilon(1e-10));
  CHECK(*t2.se_analytic == doctest::Approx(3.0 * *twfe.se_analytic).epsilon(1e-9));
}

TEST_CASE("efficient ATT is invariant to unit permutations") {
  Rng rng(179);
  const PanelDataset ds = test::random_staggered(rng);
  const int g = cohort_index(ds).cohorts_treated.front();
  const double base = estimate_att_efficient(ds, g, g).point;

  PanelDataset perm = ds;
  std::vector<int> order(ds.n());
  std::iota(order.begin(), order.end(), 0);
  for (int i = ds.n() - 1; i > 0; --i)
    std::swap(order[i], order[rng.below(i + 1)]);
  for (int i = 0; i < ds.n(); ++i) {
    perm.outcomes.row(i) = ds.outcomes.row(order[i]);
    perm.cohort[i] = ds.cohort[order[i]];
    perm.unit_ids[i] = ds.unit_ids[order[i]];
  }
  CHECK(std::abs(estimate_att_efficient(perm, g, g).point - base) < 1e-12);
}

// --- instrumented DiD -----------------------------------------------------

namespace {

PanelDataset iv_panel(Rng& rng, int n, int T, int g, double complier_prob,
                      double effect) {
  std::vector<std::vector<double>> rows;
  std::vector<int> cohorts;
  PanelDataset ds;
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
  ds = test::make_panel(rows, cohorts);
  ds.treatment = treat;
  return ds;
}

} // namespace

TEST_CASE("latt under sharp compliance equals the efficient ATT") {
  Rng rng(181);
  const PanelDataset ds = iv_panel(rng, 120, 5, 3, 1.0, 0.9);
  const LattEstimate latt = estimate_latt(ds, 3, 5);
  CHECK(std::abs(latt.denominator - 1.0) < 1e-12);

  PanelDataset as_did = ds;
  as_did.treatment.reset();
  const double att = estimate_att_efficient(as_did, 3, 5).point;
  CHECK(std::abs(latt.ratio - att) < 1e-12);
}

TEST_CASE("two-period latt is the Wald-DiD ratio of diff-in-means") {
  Rng rng(191);
  const PanelDataset ds = iv_panel(rng, 150, 2, 2, 0.6, 1.2);
  const LattEstimate latt = estimate_latt(ds, 2, 2);

  // Hand Wald-DiD: outcome DiD over treatment DiD
  double y_tr = 0, y_nv = 0, d_tr = 0, d_nv = 0;
  long ntr = 0, nnv = 0;
  for (int i = 0; i < ds.n(); ++i) {
    const double dy = ds.y(i, 2) - ds.y(i, 1);
    const double dd = ds.treat(i, 2) - ds.treat(i, 1);
    if (ds.cohort[i] == 2) {
      y_tr += dy;
      d_tr += dd;
      ++ntr;
    } else {
      y_nv += dy;
      d_nv += dd;
      ++nnv;
    }
  }
  const double wald = (y_tr / ntr - y_nv / nnv) / (d_tr / ntr - d_nv / nnv);
  CHECK(latt.ratio == doctest::Approx(wald).epsilon(1e-11));
}

TEST_CASE("null-effect latt is near zero with a mid-sized first stage") {
  Rng rng(193);
  const PanelDataset ds = iv_panel(rng, 2000, 5, 3, 0.5, 0.0);
  const LattEstimate latt = estimate_latt(ds, 3, 5);
  CHECK(std::abs(latt.denominator - 0.5) < 0.06);
  CHECK(std::abs(latt.ratio) < 3.0 * latt.se);
}

TEST_CASE("weak first stage is rejected") {
  Rng rng(197);
  PanelDataset ds = iv_panel(rng, 100, 4, 3, 1.0, 0.5);
  ds.treatment->setZero(); // nobody takes the treatment
  CHECK_THROWS_WITH_AS(estimate_latt(ds, 3, 4),
                       doctest::Contains("WEAK_FIRST_STAGE"), Error);
}
