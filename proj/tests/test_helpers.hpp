#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "effdid/panel.hpp"
#include "effdid/rng.hpp"

namespace effdid::test {

// Panel from explicit outcome rows and cohort labels.
inline PanelDataset make_panel(const std::vector<std::vector<double>>& rows,
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

// Treated means 1 -> 5, control 2 -> 3; canonical 2x2 with ATT 3.
inline PanelDataset toy_a() {
  return make_panel({{1, 5}, {1, 5}, {2, 3}, {2, 3}}, {2, 2, kNever, kNever});
}

// Random balanced staggered panel with a never-treated cohort and every cell
// of size >= 2. Outcomes are unit FE + noise plus a mild cohort trend.
inline PanelDataset random_staggered(Rng& rng, int n_max = 60, int t_max = 6) {
  const int T = 3 + static_cast<int>(rng.below(t_max - 2)); // 3..t_max
  // treated cohorts: nonempty subset of {2..T}
  std::vector<int> treated;
  for (int g = 2; g <= T; ++g)
    if (rng.bernoulli(0.6)) treated.push_back(g);
  if (treated.empty()) treated.push_back(2 + static_cast<int>(rng.below(T - 1)));
  const int k = static_cast<int>(treated.size()) + 1; // + never
  const int n_min = 2 * k;
  const int n = n_min + static_cast<int>(rng.below(std::max(1, n_max - n_min)));

  std::vector<int> cohorts;
  for (int c = 0; c < k - 1; ++c) { // two guaranteed units per cohort
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
      if (!is_never(cohorts[i]) && t >= cohorts[i])
        y += 0.3 * (t - cohorts[i] + 1);
      rows[i][t - 1] = y;
    }
  }
  return make_panel(rows, cohorts);
}

} // namespace effdid::test
