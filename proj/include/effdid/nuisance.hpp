#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <tuple>
#include <vector>

#include "effdid/design.hpp"
#include "effdid/panel.hpp"

namespace effdid {

enum class NuisanceMode { unconditional, conditional };

// Polynomial sieve: the first K monomials of the covariates in graded
// (total-degree) order, starting with the constant.
class SieveBasis {
public:
  SieveBasis() = default;
  static SieveBasis make(int d, int k);

  int terms() const { return static_cast<int>(exponents_.size()); }
  int dim() const { return d_; }
  Eigen::VectorXd eval(const Eigen::RowVectorXd& x) const;

private:
  int d_ = 0;
  std::vector<std::vector<int>> exponents_;
};

struct SieveConfig {
  std::vector<int> k_grid;   // ratio-sieve grid; empty -> {1..floor(n^(1/3))}
  bool use_bic = false;      // C_n = 2 (AIC) or log n (BIC)
  int m_terms = 0;           // outcome-regression terms; 0 -> floor(n_g^(1/3))
  double ratio_floor = 1e-6;
  std::vector<double> bandwidth; // per-dimension override; empty -> Silverman
};

struct NuisanceConfig {
  NuisanceMode mode = NuisanceMode::unconditional;
  SieveConfig sieve;
};

// Outcome-change regression m_{g,t,t'}(x) = E[Y_t - Y_t' | G=g, X=x].
// Antisymmetric in (t,t') and zero on the diagonal by construction.
struct MFunction {
  int g = 0;
  int t = 0;
  int t_prime = 0;
  SieveBasis basis;       // constant basis in covariate-free mode
  Eigen::VectorXd beta;
  bool ridge_stabilized = false;

  double operator()(const Eigen::RowVectorXd& x) const {
    return basis.eval(x).dot(beta);
  }
  double scalar() const { return beta[0]; }
};

// Propensity ratio r_{g,g'}(x) = p_g(x)/p_g'(x), estimated by the convex
// loss E_n[G_g' (psi'b)^2 - 2 G_g (psi'b)] and floored at a small positive
// constant. floor_hits counts sample points where the floor bound.
struct PropensityRatio {
  int g = 0;
  int g_comp = 0;
  SieveBasis basis;
  Eigen::VectorXd beta;
  double floor = 1e-6;
  int k_used = 1;
  long floor_hits = 0;

  double operator()(const Eigen::RowVectorXd& x) const {
    return std::max(basis.eval(x).dot(beta), floor);
  }
};

// Inverse propensity s_g(x) = 1/p_g(x) from the loss E_n[a^2 G_g - 2a].
struct InversePropensity {
  int g = 0;
  SieveBasis basis;
  Eigen::VectorXd beta;
  double floor = 1.0; // s_g >= 1 since p_g <= 1

  double operator()(const Eigen::RowVectorXd& x) const {
    return std::max(basis.eval(x).dot(beta), floor);
  }
};

// --- first-stage fitting operations ------------------------------------

// Within-group sample means of Y_t - Y_t' for the listed (g,t,t') triples.
std::vector<MFunction> fit_cell_means(const PanelDataset& ds,
                                      const std::vector<std::tuple<int, int, int>>& pairs);

// Least-squares sieve projection of Y_t - Y_t' on cohort g's covariates.
// Rank-deficient designs are ridge-stabilized and flagged.
MFunction fit_outcome_regression(const PanelDataset& ds, int g, int t, int t_prime,
                                 const SieveConfig& cfg);

PropensityRatio fit_propensity_ratio(const PanelDataset& ds, int g, int g_comp,
                                     const SieveConfig& cfg, int k);

// Empirical ratio loss at the fitted coefficients, used by the information
// criterion.
double propensity_ratio_loss(const PanelDataset& ds, int g, int g_comp,
                             const PropensityRatio& fit);

// K_hat = argmin over the grid of 2*loss(beta_K) + C_n K / n, ties toward
// smaller K. C_n = 2 for AIC, log n for BIC.
int select_sieve_dim(const PanelDataset& ds, int g, int g_comp,
                     const std::vector<int>& k_grid, double penalty_cn);

InversePropensity fit_inverse_propensity(const PanelDataset& ds, int g_comp,
                                         const SieveConfig& cfg, int k);

// Nadaraya-Watson estimate of Cov(Y_t - Y_ta, Y_t - Y_tb | G=g', X=x) using
// a product Gaussian kernel and residuals from the supplied m-functions.
// Falls back to the unconditional group covariance when the kernel mass at x
// vanishes.
double conditional_covariance(const PanelDataset& ds, const MFunction& m_ta,
                              const MFunction& m_tb, int g_comp, int t, int t_a,
                              int t_b, const Eigen::RowVectorXd& x,
                              const Eigen::VectorXd& h, bool* fell_back = nullptr);

// Within-cohort sample covariance matrix (divisor n_g) of the listed
// differenced outcomes, pair p meaning Y_{p.first} - Y_{p.second}.
Eigen::MatrixXd group_covariance(const PanelDataset& ds, int g_comp,
                                 const std::vector<std::pair<int, int>>& pairs);

// Silverman rule per covariate dimension within cohort g:
// 1.06 * sd_j * n_g^(-1/(4+d)).
Eigen::VectorXd silverman_bandwidth(const PanelDataset& ds, int g);

// --- fitted-bundle facade consumed by the EIF engine -------------------

// All first-stage quantities required to assemble the influence functions of
// a set of targets. Immutable once fitted; evaluators are cached per unit.
class NuisanceFit {
public:
  static NuisanceFit fit(const PanelDataset& ds, const CohortIndex& idx,
                         const std::vector<IfIndex>& targets,
                         const NuisanceConfig& cfg);

  NuisanceMode mode() const { return cfg_.mode; }
  const NuisanceConfig& config() const { return cfg_; }

  // m_{g,t,t'} evaluated at unit i's covariates (scalar in covariate-free
  // mode). Antisymmetry and the zero diagonal are enforced here.
  double m(int g, int t, int t_prime, int i) const;
  // r_{g,g'} at unit i's covariates; g_comp may be kNever.
  double ratio(int g, int g_comp, int i) const;
  // s_g = 1/p_g at unit i's covariates (conditional mode only).
  double inv_propensity(int g, int i) const;
  // Cov(Y_anchor - Y_ta, Y_anchor - Y_tb | G=cohort [, X=X_i]).
  double cov(int cohort, int anchor, int t_a, int t_b, int i) const;

  long ratio_floor_hits() const;
  bool any_ridge_stabilized() const { return ridge_flag_; }
  long nw_fallbacks() const { return nw_fallbacks_; }

private:
  const PanelDataset* ds_ = nullptr;
  const CohortIndex* idx_ = nullptr;
  NuisanceConfig cfg_;
  bool ridge_flag_ = false;
  mutable long nw_fallbacks_ = 0;

  std::map<std::tuple<int, int, int>, MFunction> m_; // canonical t > t'
  std::map<std::pair<int, int>, PropensityRatio> ratio_;
  std::map<int, InversePropensity> s_;
  std::map<int, Eigen::VectorXd> bandwidth_;          // per cohort
  mutable std::map<std::tuple<int, int, int, int>, double> cov_cache_; // uncond
  std::map<std::tuple<int, int, int, int>, Eigen::VectorXd> cov_units_; // cond, per unit

  void require_m(int g, int t, int t_prime);
  void require_cov(int cohort, int anchor, int t_a, int t_b);
};

} // namespace effdid
