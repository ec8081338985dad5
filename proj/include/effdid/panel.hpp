#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "effdid/errors.hpp"

namespace effdid {

// Sentinel for the never-treated cohort. It never enters arithmetic; code
// that manipulates event time works only on treated cohort values.
constexpr int kNever = -1;

inline bool is_never(int g) { return g == kNever; }

// Balanced n x T outcome panel with absorbing-treatment cohort labels,
// optional time-invariant covariates, and (IV mode) an observed treatment
// path. Immutable after construction; shared freely across workers.
struct PanelDataset {
  std::vector<std::string> unit_ids;     // n opaque labels
  std::vector<long long> period_labels;  // T original labels, ascending
  Eigen::MatrixXd outcomes;              // n x T, period j = label j+1
  std::vector<int> cohort;               // n, values in {2..T} or kNever
  Eigen::MatrixXd covariates;            // n x d, d >= 0
  std::optional<Eigen::MatrixXd> treatment; // n x T binary (IV mode only)

  int n() const { return static_cast<int>(outcomes.rows()); }
  int T() const { return static_cast<int>(outcomes.cols()); }
  int d() const { return static_cast<int>(covariates.cols()); }
  bool iv_mode() const { return treatment.has_value(); }

  // Outcome of unit i at internal period t (1-based).
  double y(int i, int t) const { return outcomes(i, t - 1); }
  double treat(int i, int t) const { return (*treatment)(i, t - 1); }
};

// Cohort bookkeeping: counts, shares, and per-horizon treated sets.
struct CohortIndex {
  std::vector<int> cohorts_treated; // ascending, excludes kNever
  bool has_never = false;
  int T = 0;
  std::map<int, long long> counts; // keyed by cohort incl. kNever
  std::map<int, double> shares;    // pi_hat, sums to 1 over all cohorts

  double pi(int g) const { return shares.at(g); }
  long long count(int g) const { return counts.at(g); }

  // Treated cohorts with g + e <= T.
  std::vector<int> treated_at_horizon(int e) const;
  // Support of post-treatment event time e >= 0.
  std::vector<int> event_horizons() const;
};

struct ValidationIssue {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> errors;
  std::vector<ValidationIssue> warnings;
  bool ok() const { return errors.empty(); }
};

struct ValidationOptions {
  long long min_cell_size = 2;
  // In efficient mode a cell-size violation is fatal; baseline-only
  // estimators can proceed on a warning.
  bool efficient_mode = true;
};

// Column-name configuration for the long-format loader.
struct CsvSchema {
  std::string unit = "unit";
  std::string period = "period";
  std::string outcome = "outcome";
  std::string cohort = "cohort";
  int n_covariates = 0;                  // columns x1..xd
  std::string covariate_prefix = "x";
  std::string treatment;                 // nonempty enables IV mode, e.g. "d"
};

// Pivot a long CSV (unit,period,outcome,cohort[,x1..xd][,d]) into a balanced
// panel. Period labels are remapped to 1..T by sort order; cohort labels
// "inf"/"never"/"" map to the never-treated sentinel. Fatal problems throw
// Error with codes UNBALANCED_PANEL, DUPLICATE_CELL, SCHEMA, PARSE,
// INVALID_COHORT.
PanelDataset load_long_csv(const std::string& path, const CsvSchema& schema = {});

// Inverse of load_long_csv: writes the panel in the same long format with
// full double precision, so load(save(ds)) round-trips bit-exactly.
void save_long_csv(const PanelDataset& ds, const std::string& path,
                   const CsvSchema& schema = {});

ValidationReport validate(const PanelDataset& ds, const ValidationOptions& opts = {});

// When every unit is eventually treated, drops the periods from the last
// cohort's treatment date onward and relabels that cohort as never-treated.
// If a never-treated cohort already exists the dataset is returned unchanged
// and a warning is recorded (idempotent).
PanelDataset relabel_terminal_cohort(const PanelDataset& ds,
                                     ValidationReport* report = nullptr);

CohortIndex cohort_index(const PanelDataset& ds);

} // namespace effdid
