#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "effdid/design.hpp"
#include "effdid/nuisance.hpp"
#include "effdid/panel.hpp"

namespace effdid {

// Per-unit generated outcomes for one ATT(g,t): column j holds the value of
// the (comparison cohort, baseline period) transform for IfIndex entry j.
// Entries are linear in outcomes and zero for units outside {g, g'_j, never}.
struct GeneratedOutcomePanel {
  IfIndex index;
  Eigen::MatrixXd ytilde;        // n x J
  Eigen::VectorXd own_over_pi;   // G_g / pi_hat per unit
};

GeneratedOutcomePanel generated_outcomes(const PanelDataset& ds,
                                         const CohortIndex& idx,
                                         const NuisanceFit& fits,
                                         const IfIndex& index);

// Groups of IfIndex entries whose generated-outcome columns are numerically
// collinear (sample correlation > 1 - 1e-10); such duplicates are solved as
// one coordinate and the pooled weight is split equally among members.
struct MergeInfo {
  std::vector<std::vector<int>> groups; // each ascending; singletons included
  std::vector<int> rep;                 // column -> group id

  int merged_size() const { return static_cast<int>(groups.size()); }
};

MergeInfo collinearity_merge(const Eigen::MatrixXd& ytilde);

enum class CovVariant {
  model_star, // five-term model-based Omega* entries
  direct      // sample covariance of the influence-function evaluations
};

// Covariance of the stacked influence functions. In conditional mode the
// model-based variant is evaluated at every sample covariate row; the direct
// variant is always a single unconditional matrix.
struct OmegaMatrix {
  IfIndex index;
  CovVariant variant = CovVariant::model_star;
  bool per_unit = false;
  Eigen::MatrixXd uncond;              // J x J
  std::vector<Eigen::MatrixXd> per_x;  // n matrices, conditional mode
};

OmegaMatrix omega_star(const PanelDataset& ds, const CohortIndex& idx,
                       const NuisanceFit& fits, const IfIndex& index);

OmegaMatrix omega_direct(const PanelDataset& ds, const GeneratedOutcomePanel& gen);

// Efficiency weights w = 1' Omega^{-1} / (1' Omega^{-1} 1) after PSD repair,
// expanded back to the full entry list (collinear groups share their pooled
// weight equally). Weights sum to one exactly; negative weights are valid.
struct WeightVector {
  IfIndex index;
  Eigen::VectorXd mean;        // J, averaged over units in conditional mode
  Eigen::MatrixXd per_unit;    // n x J when per-unit weights apply, else 0x0
  bool repaired = false;

  Eigen::VectorXd at(int i) const {
    return per_unit.size() ? per_unit.row(i).transpose() : mean;
  }
};

WeightVector optimal_weights(const OmegaMatrix& omega, const MergeInfo& merge);

// Per-unit efficient influence function values for ATT(g,t):
// w(X_i)' ytilde_i - (G_g/pi_g) * att_hat. Sample mean is zero by
// construction when att_hat = E_n[w' ytilde].
Eigen::VectorXd eif_att(const GeneratedOutcomePanel& gen, const WeightVector& w,
                        double att_hat);

// Efficient influence function of the cohort share: G_g - pi_hat_g.
Eigen::VectorXd eif_pi(const PanelDataset& ds, const CohortIndex& idx, int g);

// One fully assembled ATT(g,t) estimate: generated outcomes, weights, point,
// and per-unit EIF values.
struct AttAssembly {
  IfIndex index;
  GeneratedOutcomePanel gen;
  MergeInfo merge;
  WeightVector weights;
  double att = 0.0;
  Eigen::VectorXd eif;
  bool omega_repaired = false;
};

AttAssembly assemble_att(const PanelDataset& ds, const CohortIndex& idx,
                         const NuisanceFit& fits, const IfIndex& index,
                         CovVariant variant = CovVariant::model_star);

// Event-study aggregation at horizon e over the supplied per-cohort ATT
// assemblies (keyed by cohort, targets (g, g+e)).
struct EsAssembly {
  int e = 0;
  double es = 0.0;
  Eigen::VectorXd eif;
  std::map<int, double> q; // cohort weights q_{g,e}
};

EsAssembly assemble_es(const PanelDataset& ds, const CohortIndex& idx, int e,
                       const std::map<int, const AttAssembly*>& atts);

// Mean-weight export rows for heatmaps.
struct WeightRow {
  int target_g, target_t, comp_g, base_t;
  double mean_weight;
};

std::vector<WeightRow> weight_table(const AttAssembly& a);

} // namespace effdid
