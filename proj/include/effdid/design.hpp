#pragma once

#include <functional>
#include <map>
#include <vector>

#include "effdid/panel.hpp"

namespace effdid {

// Parallel-trends regime. pt_all admits every untreated comparison cohort and
// baseline period; pt_post pins the analysis to the never-treated comparison
// with baseline g-1.
enum class PtRegime { pt_all, pt_post };

// One (comparison cohort, baseline period) pair contributing an influence
// function to a target ATT(g,t).
struct IfEntry {
  int comp_g = 0;  // comparison cohort g'
  int base_t = 0;  // baseline period t'
  bool own = false; // comp_g == target cohort
  friend bool operator==(const IfEntry& a, const IfEntry& b) {
    return a.comp_g == b.comp_g && a.base_t == b.base_t;
  }
};

// Ordered stack of influence-function coordinates for one ATT(g,t):
// own-cohort block first with t' in {1..g-1}, then cross-cohort blocks by
// ascending g' with t' in {2..g'-1} (the first period is excluded there
// because it would duplicate the own-cohort t'=1 entry).
struct IfIndex {
  int g = 0;
  int t = 0;
  PtRegime regime = PtRegime::pt_all;
  std::vector<IfEntry> entries;

  int size() const { return static_cast<int>(entries.size()); }
};

// Optional hook to restrict the enumeration to entries justified by an
// intermediate parallel-trends assumption.
using EntryFilter = std::function<bool(const IfEntry&)>;

// Enumerates the identification index for ATT(g,t). Requires g treated and
// g <= t <= T; throws POST_TREATMENT_ONLY otherwise.
IfIndex if_index(int g, int t, PtRegime regime, const CohortIndex& idx,
                 const EntryFilter& filter = nullptr);

// Cohort-share weights q_{g,e} over treated cohorts observed e periods after
// treatment. Throws NO_COHORT_AT_HORIZON when the set is empty.
std::map<int, double> es_cohort_weights(int e, const CohortIndex& idx);

} // namespace effdid
