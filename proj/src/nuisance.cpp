#include "effdid/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace effdid {

namespace {

std::vector<int> units_in_cohort(const PanelDataset& ds, int g) {
  std::vector<int> out;
  for (int i = 0; i < ds.n(); ++i)
    if (ds.cohort[i] == g) out.push_back(i);
  return out;
}

// Solve (Gram) beta = rhs, ridge-jittering when the factorization is not
// numerically positive definite. lambda = 1e-10 * trace/dim.
Eigen::VectorXd solve_gram(Eigen::MatrixXd gram, const Eigen::VectorXd& rhs,
                           bool* stabilized) {
  const double dim = static_cast<double>(gram.rows());
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  bool bad = ldlt.info() != Eigen::Success || !ldlt.isPositive();
  if (!bad) {
    const double dmin = ldlt.vectorD().minCoeff();
    const double dmax = ldlt.vectorD().maxCoeff();
    bad = !(dmin > 1e-12 * std::max(dmax, 1e-300));
  }
  if (bad) {
    const double lambda = std::max(1e-10 * gram.trace() / dim, 1e-300);
    gram += lambda * Eigen::MatrixXd::Identity(gram.rows(), gram.cols());
    ldlt.compute(gram);
    if (stabilized) *stabilized = true;
  }
  return ldlt.solve(rhs);
}

} // namespace

SieveBasis SieveBasis::make(int d, int k) {
  SieveBasis b;
  b.d_ = d;
  if (d == 0 || k <= 1) {
    b.exponents_.push_back(std::vector<int>(std::max(d, 0), 0));
    return b;
  }
  // Monomials in graded order: total degree 0, 1, 2, ... ; within a degree,
  // lexicographic in the exponent vector. Take the first k.
  int degree = 0;
  while (static_cast<int>(b.exponents_.size()) < k) {
    std::vector<std::vector<int>> level;
    std::vector<int> expo(d, 0);
    // enumerate exponent vectors with sum == degree
    std::function<void(int, int)> rec = [&](int pos, int remaining) {
      if (pos == d - 1) {
        expo[pos] = remaining;
        level.push_back(expo);
        return;
      }
      for (int e = remaining; e >= 0; --e) {
        expo[pos] = e;
        rec(pos + 1, remaining - e);
      }
    };
    rec(0, degree);
    for (auto& e : level) {
      if (static_cast<int>(b.exponents_.size()) >= k) break;
      b.exponents_.push_back(std::move(e));
    }
    ++degree;
  }
  return b;
}

Eigen::VectorXd SieveBasis::eval(const Eigen::RowVectorXd& x) const {
  Eigen::VectorXd out(terms());
  for (int j = 0; j < terms(); ++j) {
    double v = 1.0;
    for (int k = 0; k < d_; ++k)
      for (int e = 0; e < exponents_[j][k]; ++e) v *= x[k];
    out[j] = v;
  }
  return out;
}

std::vector<MFunction> fit_cell_means(
    const PanelDataset& ds, const std::vector<std::tuple<int, int, int>>& pairs) {
  std::vector<MFunction> out;
  out.reserve(pairs.size());
  for (const auto& [g, t, tp] : pairs) {
    const auto units = units_in_cohort(ds, g);
    if (units.empty())
      throw Error("EMPTY_COHORT", "no units in cohort " + std::to_string(g));
    double sum = 0.0;
    for (int i : units) sum += ds.y(i, t) - ds.y(i, tp);
    MFunction m;
    m.g = g;
    m.t = t;
    m.t_prime = tp;
    m.basis = SieveBasis::make(ds.d(), 1);
    m.beta = Eigen::VectorXd::Constant(1, sum / static_cast<double>(units.size()));
    out.push_back(std::move(m));
  }
  return out;
}

MFunction fit_outcome_regression(const PanelDataset& ds, int g, int t, int t_prime,
                                 const SieveConfig& cfg) {
  const auto units = units_in_cohort(ds, g);
  if (units.empty())
    throw Error("EMPTY_COHORT", "no units in cohort " + std::to_string(g));
  const int ng = static_cast<int>(units.size());
  int k = cfg.m_terms;
  if (k <= 0) k = std::max(1, static_cast<int>(std::floor(std::cbrt(static_cast<double>(ng)))));
  k = std::min(k, ng);

  MFunction m;
  m.g = g;
  m.t = t;
  m.t_prime = t_prime;
  m.basis = SieveBasis::make(ds.d(), k);
  const int kk = m.basis.terms();

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(kk, kk);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(kk);
  for (int i : units) {
    const Eigen::VectorXd psi = m.basis.eval(ds.covariates.row(i));
    gram.noalias() += psi * psi.transpose();
    rhs.noalias() += psi * (ds.y(i, t) - ds.y(i, t_prime));
  }
  m.beta = solve_gram(gram, rhs, &m.ridge_stabilized);
  return m;
}

PropensityRatio fit_propensity_ratio(const PanelDataset& ds, int g, int g_comp,
                                     const SieveConfig& cfg, int k) {
  const auto comp_units = units_in_cohort(ds, g_comp);
  if (comp_units.empty())
    throw Error("EMPTY_COHORT", "no units in comparison cohort");
  if (units_in_cohort(ds, g).empty())
    throw Error("EMPTY_COHORT", "no units in cohort " + std::to_string(g));

  PropensityRatio r;
  r.g = g;
  r.g_comp = g_comp;
  r.floor = cfg.ratio_floor;
  r.basis = SieveBasis::make(ds.d(), k);
  r.k_used = r.basis.terms();
  const int kk = r.basis.terms();
  const double n = static_cast<double>(ds.n());

  // First-order condition of E_n[G_g' (psi'b)^2 - 2 G_g psi'b]:
  // E_n[G_g' psi psi'] b = E_n[G_g psi].
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(kk, kk);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(kk);
  for (int i = 0; i < ds.n(); ++i) {
    const bool in_comp = ds.cohort[i] == g_comp;
    const bool in_g = ds.cohort[i] == g;
    if (!in_comp && !in_g) continue;
    const Eigen::VectorXd psi = r.basis.eval(ds.covariates.row(i));
    if (in_comp) gram.noalias() += (psi * psi.transpose()) / n;
    if (in_g) rhs.noalias() += psi / n;
  }
  bool stabilized = false;
  r.beta = solve_gram(gram, rhs, &stabilized);
  for (int i = 0; i < ds.n(); ++i) {
    if (r.basis.eval(ds.covariates.row(i)).dot(r.beta) < r.floor) ++r.floor_hits;
  }
  return r;
}

double propensity_ratio_loss(const PanelDataset& ds, int g, int g_comp,
                             const PropensityRatio& fit) {
  double loss = 0.0;
  for (int i = 0; i < ds.n(); ++i) {
    const bool in_comp = ds.cohort[i] == g_comp;
    const bool in_g = ds.cohort[i] == g;
    if (!in_comp && !in_g) continue;
    const double v = fit.basis.eval(ds.covariates.row(i)).dot(fit.beta);
    if (in_comp) loss += v * v;
    if (in_g) loss -= 2.0 * v;
  }
  return loss / static_cast<double>(ds.n());
}

int select_sieve_dim(const PanelDataset& ds, int g, int g_comp,
                     const std::vector<int>& k_grid, double penalty_cn) {
  if (k_grid.empty()) throw Error("CONFIG", "empty sieve grid");
  const double n = static_cast<double>(ds.n());
  SieveConfig cfg;
  int best_k = k_grid.front();
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> grid = k_grid;
  std::sort(grid.begin(), grid.end());
  for (int k : grid) {
    const auto fit = fit_propensity_ratio(ds, g, g_comp, cfg, k);
    const double ic = 2.0 * propensity_ratio_loss(ds, g, g_comp, fit) +
                      penalty_cn * static_cast<double>(fit.k_used) / n;
    // Ties (up to float noise) resolve toward the smaller K.
    const double tol = 1e-12 * (1.0 + std::abs(best));
    if (ic < best - tol) {
      best = ic;
      best_k = k;
    }
  }
  return best_k;
}

InversePropensity fit_inverse_propensity(const PanelDataset& ds, int g_comp,
                                         const SieveConfig& cfg, int k) {
  const auto comp_units = units_in_cohort(ds, g_comp);
  if (comp_units.empty())
    throw Error("EMPTY_COHORT", "no units in cohort");
  InversePropensity s;
  s.g = g_comp;
  s.basis = SieveBasis::make(ds.d(), k);
  const int kk = s.basis.terms();
  const double n = static_cast<double>(ds.n());

  // FOC of E_n[G_g' (psi'b)^2 - 2 psi'b]: E_n[G_g' psi psi'] b = E_n[psi].
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(kk, kk);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(kk);
  for (int i = 0; i < ds.n(); ++i) {
    const Eigen::VectorXd psi = s.basis.eval(ds.covariates.row(i));
    if (ds.cohort[i] == g_comp) gram.noalias() += (psi * psi.transpose()) / n;
    rhs.noalias() += psi / n;
  }
  bool stabilized = false;
  s.beta = solve_gram(gram, rhs, &stabilized);
  return s;
}

double conditional_covariance(const PanelDataset& ds, const MFunction& m_ta,
                              const MFunction& m_tb, int g_comp, int t, int t_a,
                              int t_b, const Eigen::RowVectorXd& x,
                              const Eigen::VectorXd& h, bool* fell_back) {
  const auto units = units_in_cohort(ds, g_comp);
  if (units.size() < 2)
    throw Error("SMALL_COHORT", "conditional covariance needs >= 2 units");
  for (Eigen::Index j = 0; j < h.size(); ++j)
    if (!(h[j] > 0.0)) throw Error("CONFIG", "bandwidth must be positive");

  double wsum = 0.0, prod = 0.0;
  for (int i : units) {
    double logw = 0.0;
    for (int j = 0; j < ds.d(); ++j) {
      const double z = (ds.covariates(i, j) - x[j]) / h[j];
      logw -= 0.5 * z * z;
    }
    const double w = std::exp(logw);
    const double ea = ds.y(i, t) - ds.y(i, t_a) - m_ta(ds.covariates.row(i));
    const double eb = ds.y(i, t) - ds.y(i, t_b) - m_tb(ds.covariates.row(i));
    wsum += w;
    prod += w * ea * eb;
  }
  if (!(wsum > 1e-300)) {
    if (fell_back) *fell_back = true;
    return group_covariance(ds, g_comp, {{t, t_a}, {t, t_b}})(0, 1);
  }
  if (fell_back) *fell_back = false;
  return prod / wsum;
}

Eigen::MatrixXd group_covariance(const PanelDataset& ds, int g_comp,
                                 const std::vector<std::pair<int, int>>& pairs) {
  const auto units = units_in_cohort(ds, g_comp);
  if (units.size() < 2)
    throw Error("SMALL_COHORT", "covariance needs >= 2 units in cohort");
  const int p = static_cast<int>(pairs.size());
  const int ng = static_cast<int>(units.size());
  Eigen::MatrixXd diffs(ng, p);
  for (int c = 0; c < p; ++c)
    for (int r = 0; r < ng; ++r)
      diffs(r, c) = ds.y(units[r], pairs[c].first) - ds.y(units[r], pairs[c].second);
  const Eigen::RowVectorXd mean = diffs.colwise().mean();
  diffs.rowwise() -= mean;
  // Divisor n_g so the h -> infinity Nadaraya-Watson limit matches exactly.
  return (diffs.transpose() * diffs) / static_cast<double>(ng);
}

Eigen::VectorXd silverman_bandwidth(const PanelDataset& ds, int g) {
  const auto units = units_in_cohort(ds, g);
  const int ng = static_cast<int>(units.size());
  const int d = ds.d();
  Eigen::VectorXd h(d);
  for (int j = 0; j < d; ++j) {
    double mean = 0.0;
    for (int i : units) mean += ds.covariates(i, j);
    mean /= std::max(ng, 1);
    double ss = 0.0;
    for (int i : units) {
      const double c = ds.covariates(i, j) - mean;
      ss += c * c;
    }
    const double sd = ng > 1 ? std::sqrt(ss / (ng - 1)) : 0.0;
    h[j] = sd > 0.0 ? 1.06 * sd * std::pow(static_cast<double>(ng), -1.0 / (4.0 + d))
                    : 1.0;
  }
  return h;
}

// --- NuisanceFit --------------------------------------------------------

namespace {

std::tuple<int, int, int> m_key(int g, int t, int tp) {
  return {g, std::max(t, tp), std::min(t, tp)};
}

std::tuple<int, int, int, int> cov_key(int cohort, int anchor, int ta, int tb) {
  return {cohort, anchor, std::min(ta, tb), std::max(ta, tb)};
}

} // namespace

void NuisanceFit::require_m(int g, int t, int tp) {
  if (t == tp) return;
  const auto key = m_key(g, t, tp);
  if (m_.count(key)) return;
  const auto [kg, kt, ktp] = key;
  if (cfg_.mode == NuisanceMode::unconditional) {
    m_.emplace(key, fit_cell_means(*ds_, {{kg, kt, ktp}}).front());
  } else {
    auto fit = fit_outcome_regression(*ds_, kg, kt, ktp, cfg_.sieve);
    ridge_flag_ = ridge_flag_ || fit.ridge_stabilized;
    m_.emplace(key, std::move(fit));
  }
}

void NuisanceFit::require_cov(int cohort, int anchor, int t_a, int t_b) {
  const auto key = cov_key(cohort, anchor, t_a, t_b);
  if (cfg_.mode == NuisanceMode::unconditional) {
    if (cov_cache_.count(key)) return;
    const auto [c, a, ta, tb] = key;
    cov_cache_[key] = group_covariance(*ds_, c, {{a, ta}, {a, tb}})(0, 1);
  } else {
    if (cov_units_.count(key)) return;
    const auto [c, a, ta, tb] = key;
    require_m(c, a, ta);
    require_m(c, a, tb);
    // m-functions oriented as (anchor, t); build oriented copies for the
    // residual computation when the canonical store is flipped.
    auto oriented = [&](int t2) {
      MFunction mm = m_.at(m_key(c, a, t2));
      if (mm.t != a) {
        std::swap(mm.t, mm.t_prime);
        mm.beta = -mm.beta;
      }
      return mm;
    };
    const MFunction ma = a == ta ? MFunction{c, a, a, SieveBasis::make(ds_->d(), 1),
                                             Eigen::VectorXd::Zero(1), false}
                                 : oriented(ta);
    const MFunction mb = a == tb ? MFunction{c, a, a, SieveBasis::make(ds_->d(), 1),
                                             Eigen::VectorXd::Zero(1), false}
                                 : oriented(tb);
    const Eigen::VectorXd h =
        cfg_.sieve.bandwidth.empty()
            ? bandwidth_.at(c)
            : Eigen::Map<const Eigen::VectorXd>(cfg_.sieve.bandwidth.data(),
                                                static_cast<Eigen::Index>(
                                                    cfg_.sieve.bandwidth.size()));
    Eigen::VectorXd vals(ds_->n());
    for (int i = 0; i < ds_->n(); ++i) {
      bool fb = false;
      vals[i] = conditional_covariance(*ds_, ma, mb, c, a, ta, tb,
                                       ds_->covariates.row(i), h, &fb);
      if (fb) ++nw_fallbacks_;
    }
    cov_units_.emplace(key, std::move(vals));
  }
}

NuisanceFit NuisanceFit::fit(const PanelDataset& ds, const CohortIndex& idx,
                             const std::vector<IfIndex>& targets,
                             const NuisanceConfig& cfg) {
  NuisanceFit f;
  f.ds_ = &ds;
  f.idx_ = &idx;
  f.cfg_ = cfg;
  if (cfg.mode == NuisanceMode::conditional && ds.d() == 0)
    throw Error("CONFIG", "conditional mode requires covariates");

  if (cfg.mode == NuisanceMode::conditional) {
    std::set<int> cohorts{kNever};
    for (const auto& tgt : targets) {
      cohorts.insert(tgt.g);
      for (const auto& e : tgt.entries) cohorts.insert(e.comp_g);
    }
    for (int c : cohorts) f.bandwidth_[c] = silverman_bandwidth(ds, c);

    std::vector<int> grid = cfg.sieve.k_grid;
    if (grid.empty()) {
      const int kmax = std::max(
          1, static_cast<int>(std::floor(std::cbrt(static_cast<double>(ds.n())))));
      for (int k = 1; k <= kmax; ++k) grid.push_back(k);
    }
    const double cn = cfg.sieve.use_bic ? std::log(static_cast<double>(ds.n())) : 2.0;

    std::set<std::pair<int, int>> ratio_pairs;
    std::set<int> s_cohorts;
    for (const auto& tgt : targets) {
      ratio_pairs.insert({tgt.g, kNever});
      s_cohorts.insert(tgt.g);
      for (const auto& e : tgt.entries)
        if (e.comp_g != tgt.g) ratio_pairs.insert({tgt.g, e.comp_g});
    }
    for (const auto& [g, gp] : ratio_pairs) {
      const int k = select_sieve_dim(ds, g, gp, grid, cn);
      f.ratio_.emplace(std::make_pair(g, gp),
                       fit_propensity_ratio(ds, g, gp, cfg.sieve, k));
    }
    for (int g : s_cohorts) {
      // Same information criterion applied to the inverse-propensity loss.
      double best = std::numeric_limits<double>::infinity();
      int best_k = grid.front();
      for (int k : grid) {
        const auto s = fit_inverse_propensity(ds, g, cfg.sieve, k);
        double loss = 0.0;
        for (int i = 0; i < ds.n(); ++i) {
          const double v = s.basis.eval(ds.covariates.row(i)).dot(s.beta);
          if (ds.cohort[i] == g) loss += v * v;
          loss -= 2.0 * v;
        }
        loss /= static_cast<double>(ds.n());
        const double ic = 2.0 * loss + cn * static_cast<double>(s.basis.terms()) /
                                           static_cast<double>(ds.n());
        if (ic < best) {
          best = ic;
          best_k = k;
        }
      }
      f.s_.emplace(g, fit_inverse_propensity(ds, g, cfg.sieve, best_k));
    }
  }

  // Outcome-change regressions and covariance blocks needed by each target.
  for (const auto& tgt : targets) {
    const int g = tgt.g;
    const int t = tgt.t;
    f.require_m(g, t, 1);
    for (const auto& e : tgt.entries) {
      f.require_m(kNever, t, e.base_t);
      f.require_m(e.comp_g, e.base_t, 1);
    }
    f.require_cov(g, t, 1, 1);
    const int nj = tgt.size();
    for (int j = 0; j < nj; ++j) {
      const auto& ej = tgt.entries[j];
      for (int k = j; k < nj; ++k) {
        const auto& ek = tgt.entries[k];
        f.require_cov(kNever, t, ej.base_t, ek.base_t);
        if (ej.comp_g == g) f.require_cov(g, 1, t, ej.base_t);
        if (ek.comp_g == g) f.require_cov(g, 1, t, ek.base_t);
        if (ej.comp_g == ek.comp_g)
          f.require_cov(ej.comp_g, 1, ej.base_t, ek.base_t);
      }
    }
  }
  return f;
}

double NuisanceFit::m(int g, int t, int t_prime, int i) const {
  if (t == t_prime) return 0.0;
  const auto& mf = m_.at(m_key(g, t, t_prime));
  const double v = cfg_.mode == NuisanceMode::unconditional
                       ? mf.scalar()
                       : mf(ds_->covariates.row(i));
  return t > t_prime ? v : -v;
}

double NuisanceFit::ratio(int g, int g_comp, int i) const {
  if (g == g_comp) return 1.0;
  if (cfg_.mode == NuisanceMode::unconditional) {
    return static_cast<double>(idx_->count(g)) / static_cast<double>(idx_->count(g_comp));
  }
  return ratio_.at({g, g_comp})(ds_->covariates.row(i));
}

double NuisanceFit::inv_propensity(int g, int i) const {
  if (cfg_.mode == NuisanceMode::unconditional)
    return 1.0 / idx_->pi(g);
  return s_.at(g)(ds_->covariates.row(i));
}

double NuisanceFit::cov(int cohort, int anchor, int t_a, int t_b, int i) const {
  const auto key = cov_key(cohort, anchor, t_a, t_b);
  if (cfg_.mode == NuisanceMode::unconditional) {
    auto it = cov_cache_.find(key);
    if (it == cov_cache_.end())
      throw Error("INTERNAL", "covariance block was not registered at fit time");
    return it->second;
  }
  return cov_units_.at(key)[i];
}

long NuisanceFit::ratio_floor_hits() const {
  long hits = 0;
  for (const auto& [k, r] : ratio_) hits += r.floor_hits;
  return hits;
}

} // namespace effdid
