#include "effdid/design.hpp"

#include <algorithm>

namespace effdid {

IfIndex if_index(int g, int t, PtRegime regime, const CohortIndex& idx,
                 const EntryFilter& filter) {
  if (std::find(idx.cohorts_treated.begin(), idx.cohorts_treated.end(), g) ==
      idx.cohorts_treated.end())
    throw Error("UNKNOWN_COHORT", "cohort " + std::to_string(g) + " is not treated");
  if (t < g)
    throw Error("POST_TREATMENT_ONLY",
                "ATT(" + std::to_string(g) + "," + std::to_string(t) +
                    ") requires t >= g");
  if (t > idx.T)
    throw Error("PERIOD_RANGE", "t exceeds the number of periods");

  IfIndex out;
  out.g = g;
  out.t = t;
  out.regime = regime;

  auto push = [&](int comp_g, int base_t) {
    IfEntry e{comp_g, base_t, comp_g == g};
    if (!filter || filter(e)) out.entries.push_back(e);
  };

  if (regime == PtRegime::pt_post) {
    push(g, g - 1);
    return out;
  }
  for (int tp = 1; tp <= g - 1; ++tp) push(g, tp);
  for (int gp : idx.cohorts_treated) {
    if (gp == g) continue;
    for (int tp = 2; tp <= gp - 1; ++tp) push(gp, tp);
  }
  return out;
}

std::map<int, double> es_cohort_weights(int e, const CohortIndex& idx) {
  const auto active = idx.treated_at_horizon(e);
  if (active.empty())
    throw Error("NO_COHORT_AT_HORIZON",
                "no treated cohort observed " + std::to_string(e) +
                    " periods after treatment");
  double total = 0.0;
  for (int g : active) total += idx.pi(g);
  std::map<int, double> w;
  for (int g : active) w[g] = idx.pi(g) / total;
  return w;
}

} // namespace effdid
