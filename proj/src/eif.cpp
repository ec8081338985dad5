#include "effdid/eif.hpp"

#include <cmath>

#include "effdid/numerics.hpp"

namespace effdid {

GeneratedOutcomePanel generated_outcomes(const PanelDataset& ds,
                                         const CohortIndex& idx,
                                         const NuisanceFit& fits,
                                         const IfIndex& index) {
  const int n = ds.n();
  const int J = index.size();
  const int g = index.g;
  const int t = index.t;
  const double pi_g = idx.pi(g);
  if (!(pi_g > 0.0)) throw Error("EMPTY_COHORT", "pi_g must be positive");

  GeneratedOutcomePanel out;
  out.index = index;
  out.ytilde.setZero(n, J);
  out.own_over_pi.setZero(n);

  for (int i = 0; i < n; ++i) {
    const int gi = ds.cohort[i];
    if (gi == g) out.own_over_pi[i] = 1.0 / pi_g;
    for (int j = 0; j < J; ++j) {
      const int gp = index.entries[j].comp_g;
      const int tp = index.entries[j].base_t;
      double v = 0.0;
      if (gi == g) {
        v += (ds.y(i, t) - ds.y(i, 1) - fits.m(kNever, t, tp, i) -
              fits.m(gp, tp, 1, i)) / pi_g;
      }
      if (is_never(gi)) {
        v -= fits.ratio(g, kNever, i) *
             (ds.y(i, t) - ds.y(i, tp) - fits.m(kNever, t, tp, i)) / pi_g;
      }
      if (gi == gp) {
        v -= fits.ratio(g, gp, i) *
             (ds.y(i, tp) - ds.y(i, 1) - fits.m(gp, tp, 1, i)) / pi_g;
      }
      out.ytilde(i, j) = v;
    }
  }
  return out;
}

MergeInfo collinearity_merge(const Eigen::MatrixXd& ytilde) {
  const int J = static_cast<int>(ytilde.cols());
  const int n = static_cast<int>(ytilde.rows());
  MergeInfo info;
  info.rep.assign(J, -1);

  Eigen::RowVectorXd mean = ytilde.colwise().mean();
  Eigen::MatrixXd centered = ytilde.rowwise() - mean;
  Eigen::VectorXd sd(J);
  for (int j = 0; j < J; ++j) sd[j] = centered.col(j).norm() / std::sqrt(double(n));

  const double scale = ytilde.cwiseAbs().maxCoeff() + 1.0;
  auto collinear = [&](int a, int b) {
    if (sd[a] <= 1e-14 * scale || sd[b] <= 1e-14 * scale) {
      // Degenerate columns: merge only if numerically identical.
      return (ytilde.col(a) - ytilde.col(b)).cwiseAbs().maxCoeff() <=
             1e-12 * scale;
    }
    const double corr =
        centered.col(a).dot(centered.col(b)) / (double(n) * sd[a] * sd[b]);
    return corr > 1.0 - 1e-10;
  };

  for (int j = 0; j < J; ++j) {
    if (info.rep[j] >= 0) continue;
    const int gid = static_cast<int>(info.groups.size());
    info.groups.push_back({j});
    info.rep[j] = gid;
    for (int k = j + 1; k < J; ++k) {
      if (info.rep[k] < 0 && collinear(j, k)) {
        info.groups[gid].push_back(k);
        info.rep[k] = gid;
      }
    }
  }
  return info;
}

OmegaMatrix omega_star(const PanelDataset& ds, const CohortIndex& idx,
                       const NuisanceFit& fits, const IfIndex& index) {
  const int J = index.size();
  const int g = index.g;
  const int t = index.t;
  OmegaMatrix om;
  om.index = index;
  om.variant = CovVariant::model_star;
  om.per_unit = fits.mode() == NuisanceMode::conditional;

  auto entry = [&](int j, int k, int i) {
    const auto& ej = index.entries[j];
    const auto& ek = index.entries[k];
    // s_g * [ Cov_g-term + r_{g,inf} Cov_inf-term - indicator Cov_g cross
    //         terms + indicator r_{g,g'_j} Cov_{g'_j}-term ]
    // which equals the propensity-divided five-term expression.
    double v = fits.cov(g, t, 1, 1, i);
    v += fits.ratio(g, kNever, i) * fits.cov(kNever, t, ej.base_t, ek.base_t, i);
    if (ej.comp_g == g) v -= fits.cov(g, 1, t, ej.base_t, i);
    if (ek.comp_g == g) v -= fits.cov(g, 1, t, ek.base_t, i);
    if (ej.comp_g == ek.comp_g)
      v += fits.ratio(g, ej.comp_g, i) *
           fits.cov(ej.comp_g, 1, ej.base_t, ek.base_t, i);
    return fits.inv_propensity(g, i) * v;
  };

  if (!om.per_unit) {
    om.uncond.setZero(J, J);
    for (int j = 0; j < J; ++j)
      for (int k = j; k < J; ++k) {
        const double v = entry(j, k, 0);
        om.uncond(j, k) = v;
        om.uncond(k, j) = v;
      }
  } else {
    om.per_x.resize(ds.n());
    for (int i = 0; i < ds.n(); ++i) {
      Eigen::MatrixXd m(J, J);
      for (int j = 0; j < J; ++j)
        for (int k = j; k < J; ++k) {
          const double v = entry(j, k, i);
          m(j, k) = v;
          m(k, j) = v;
        }
      om.per_x[i] = std::move(m);
    }
  }
  return om;
}

OmegaMatrix omega_direct(const PanelDataset& ds, const GeneratedOutcomePanel& gen) {
  const int n = ds.n();
  const int J = gen.index.size();
  OmegaMatrix om;
  om.index = gen.index;
  om.variant = CovVariant::direct;
  om.per_unit = false;

  // Influence-function evaluations with per-entry plug-in centering:
  // IF_j = ytilde_j - (G_g/pi) * E_n[ytilde_j].
  Eigen::RowVectorXd att_j = gen.ytilde.colwise().mean();
  Eigen::MatrixXd ifm = gen.ytilde - gen.own_over_pi * att_j;
  Eigen::RowVectorXd mean = ifm.colwise().mean();
  ifm.rowwise() -= mean;
  om.uncond = (ifm.transpose() * ifm) / static_cast<double>(n);
  return om;
}

namespace {

Eigen::VectorXd solve_merged_weights(const Eigen::MatrixXd& omega,
                                     const MergeInfo& merge, bool* repaired) {
  const int Jm = merge.merged_size();
  Eigen::MatrixXd sub(Jm, Jm);
  for (int a = 0; a < Jm; ++a)
    for (int b = 0; b < Jm; ++b)
      sub(a, b) = omega(merge.groups[a][0], merge.groups[b][0]);
  auto rep = psd_repair(sub);
  if (rep.repaired && repaired) *repaired = true;
  const Eigen::VectorXd wm = min_variance_weights(rep.matrix);
  // Expand: pooled weight split equally within each collinear group.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(omega.rows());
  for (int a = 0; a < Jm; ++a) {
    const auto& grp = merge.groups[a];
    for (int j : grp) w[j] = wm[a] / static_cast<double>(grp.size());
  }
  return w;
}

} // namespace

WeightVector optimal_weights(const OmegaMatrix& omega, const MergeInfo& merge) {
  WeightVector wv;
  wv.index = omega.index;
  bool repaired = false;
  if (!omega.per_unit) {
    wv.mean = solve_merged_weights(omega.uncond, merge, &repaired);
  } else {
    const int n = static_cast<int>(omega.per_x.size());
    const int J = omega.index.size();
    wv.per_unit.resize(n, J);
    for (int i = 0; i < n; ++i)
      wv.per_unit.row(i) = solve_merged_weights(omega.per_x[i], merge, &repaired)
                               .transpose();
    wv.mean = wv.per_unit.colwise().mean().transpose();
  }
  wv.repaired = repaired;
  return wv;
}

Eigen::VectorXd eif_att(const GeneratedOutcomePanel& gen, const WeightVector& w,
                        double att_hat) {
  const int n = static_cast<int>(gen.ytilde.rows());
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i)
    out[i] = gen.ytilde.row(i).dot(w.at(i)) - gen.own_over_pi[i] * att_hat;
  return out;
}

Eigen::VectorXd eif_pi(const PanelDataset& ds, const CohortIndex& idx, int g) {
  Eigen::VectorXd out(ds.n());
  const double pi_g = idx.pi(g);
  for (int i = 0; i < ds.n(); ++i)
    out[i] = (ds.cohort[i] == g ? 1.0 : 0.0) - pi_g;
  return out;
}

AttAssembly assemble_att(const PanelDataset& ds, const CohortIndex& idx,
                         const NuisanceFit& fits, const IfIndex& index,
                         CovVariant variant) {
  AttAssembly a;
  a.index = index;
  a.gen = generated_outcomes(ds, idx, fits, index);
  a.merge = collinearity_merge(a.gen.ytilde);
  OmegaMatrix om = variant == CovVariant::model_star
                       ? omega_star(ds, idx, fits, index)
                       : omega_direct(ds, a.gen);
  a.weights = optimal_weights(om, a.merge);
  a.omega_repaired = a.weights.repaired;
  double att = 0.0;
  for (int i = 0; i < ds.n(); ++i)
    att += a.gen.ytilde.row(i).dot(a.weights.at(i));
  a.att = att / static_cast<double>(ds.n());
  a.eif = eif_att(a.gen, a.weights, a.att);
  return a;
}

EsAssembly assemble_es(const PanelDataset& ds, const CohortIndex& idx, int e,
                       const std::map<int, const AttAssembly*>& atts) {
  const auto q = es_cohort_weights(e, idx);
  for (const auto& [g, qg] : q)
    if (!atts.count(g))
      throw Error("MISSING_HORIZON",
                  "no ATT assembly for cohort " + std::to_string(g) +
                      " at horizon " + std::to_string(e));

  EsAssembly out;
  out.e = e;
  out.q = q;
  const int n = ds.n();
  out.eif.setZero(n);

  double pi_sum = 0.0;
  for (const auto& [g, qg] : q) pi_sum += idx.pi(g);

  // Sum over s in G_trt,e of (G_s - pi_s) per unit.
  Eigen::VectorXd pi_corr_sum = Eigen::VectorXd::Zero(n);
  std::map<int, Eigen::VectorXd> pi_eifs;
  for (const auto& [g, qg] : q) {
    pi_eifs[g] = eif_pi(ds, idx, g);
    pi_corr_sum += pi_eifs[g];
  }

  for (const auto& [g, qg] : q) {
    const AttAssembly& a = *atts.at(g);
    out.es += qg * a.att;
    out.eif += qg * a.eif +
               (a.att / pi_sum) * (pi_eifs[g] - qg * pi_corr_sum);
  }
  return out;
}

std::vector<WeightRow> weight_table(const AttAssembly& a) {
  std::vector<WeightRow> rows;
  for (int j = 0; j < a.index.size(); ++j) {
    rows.push_back({a.index.g, a.index.t, a.index.entries[j].comp_g,
                    a.index.entries[j].base_t, a.weights.mean[j]});
  }
  return rows;
}

} // namespace effdid
